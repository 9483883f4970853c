"""Shared fixtures and brute-force oracles.

The oracles here deliberately avoid the package's own DP and enumeration
code: feasible paths are found by trying every box combination and checking
edges against the raw similarity matrix.
"""
import itertools

import numpy as np
import pytest

from colocfw import BoxIndexing, InstanceSpec, build_trellis, generate


def brute_force_atoms(indexing, S_t=None, threshold=0.0):
    """Every feasible choice of boxes as a tuple of within-frame indices.

    ``S_t=None`` means every adjacent pair is connected.
    """
    m = indexing.boxes_per_frame
    dense = None if S_t is None else np.asarray(S_t.todense() if hasattr(S_t, "todense") else S_t)
    per_video = []
    for v, n in enumerate(indexing.frames_per_video):
        off = int(indexing.frame_offsets[v])
        paths = []
        for path in itertools.product(range(m), repeat=n):
            ok = True
            if dense is not None:
                for j in range(n - 1):
                    a = (off + j) * m + path[j]
                    b = (off + j + 1) * m + path[j + 1]
                    if not dense[a, b] > threshold:
                        ok = False
                        break
            if ok:
                paths.append(path)
        per_video.append(paths)
    return [tuple(itertools.chain.from_iterable(c)) for c in itertools.product(*per_video)]


def indicator(boxes, m):
    z = np.zeros(len(boxes) * m)
    z[np.arange(len(boxes)) * m + np.asarray(boxes)] = 1.0
    return z


def brute_force_min(cost, atoms, m):
    """(value, boxes) of the cheapest atom; first in enumeration order on ties."""
    best = None
    for a in atoms:
        val = float(np.sum(np.asarray(cost)[np.arange(len(a)) * m + np.asarray(a)]))
        if best is None or val < best[0]:
            best = (val, a)
    return best


def integer_optimum(problem, atoms, m):
    """Exact integer minimum of the quadratic by enumeration."""
    Z = np.array([indicator(a, m) for a in atoms])
    f = np.einsum("ij,ij->i", Z @ problem.Q, Z) + Z @ problem.c
    i = int(np.argmin(f))
    return float(f[i]), atoms[i]


def random_trellis_similarity(rng, indexing, density=0.6):
    """Random symmetric adjacent-frame similarity with some zero entries."""
    m, n_b = indexing.boxes_per_frame, indexing.n_boxes
    S = np.zeros((n_b, n_b))
    for v, n in enumerate(indexing.frames_per_video):
        off = int(indexing.frame_offsets[v])
        for j in range(n - 1):
            a, b = (off + j) * m, (off + j + 1) * m
            block = rng.uniform(0.01, 1.0, size=(m, m)) * (rng.uniform(size=(m, m)) < density)
            S[a:a + m, b:b + m] = block
            S[b:b + m, a:a + m] = block.T
    return S


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_instance():
    """2 videos x 3 frames x 3 boxes: 729 atoms, small enough to enumerate."""
    return generate(InstanceSpec(n_videos=2, frames_per_video=3, boxes_per_frame=3, feature_dim=6, seed=3))


@pytest.fixture(scope="session")
def tiny_built(tiny_instance):
    problem, domain = tiny_instance.build()
    atoms = brute_force_atoms(tiny_instance.indexing, tiny_instance.temporal_similarity(),
                              tiny_instance.spec.edge_threshold)
    f_star, best = integer_optimum(problem, atoms, tiny_instance.indexing.boxes_per_frame)
    return problem, domain, atoms, f_star, best


@pytest.fixture
def small_trellis():
    ix = BoxIndexing((3,), 3)
    return build_trellis(ix)


# -- acceptance report ---------------------------------------------------------------------------
# Tests tagged ``@pytest.mark.acceptance(number, title)`` feed a one-line-per-criterion
# summary printed at the end of the run.  A criterion passes only if all of its tests pass.

_ACCEPTANCE: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    num, title = mark.args
    entry = _ACCEPTANCE.setdefault(num, {"title": title, "ok": True, "notes": []})
    if getattr(rep, "wasxfail", None) is not None and rep.skipped:
        entry["ok"] = False
        entry["notes"].append("known failure: " + rep.wasxfail)
    elif rep.failed:
        entry["ok"] = False
        entry["notes"].append(f"{item.name} failed during {rep.when}")
    elif rep.skipped:
        entry["ok"] = False
        entry["notes"].append(f"{item.name} skipped")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[num]
        line = f"[{'PASS' if e['ok'] else 'FAIL'}] {num:2d}. {e['title']}"
        if e["notes"]:
            line += "  (" + "; ".join(dict.fromkeys(e["notes"])) + ")"
        tr.write_line(line)
