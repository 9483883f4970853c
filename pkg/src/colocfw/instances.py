"""Synthetic co-localization instances and their text file format.

A generated instance stands in for the vision front-end: every frame gets
``m`` candidate boxes, exactly one of which is "planted" (it contains the
common object).  Planted boxes share one feature cluster, move smoothly from
frame to frame and carry higher saliency than the background boxes.

File layout (``COLOC-INSTANCE v1``)::

    COLOC-INSTANCE v1
    COUNTS videos=<n> boxes=<m> dim=<d> planted=1
    FRAMES <l_1> ... <l_n>
    PARAMS noise_level=<x> edge_threshold=<x> seed=<int>
    SECTION features <n_b> <d>
    <d floats per line, one line per box>
    SECTION geometry <n_b> 3
    <center_x center_y area>
    SECTION saliency <n_b>
    <one float per line>
    SECTION truth <n_frames>
    <planted box index per frame>
    CHECKSUM <sha256 hex of every preceding byte>

Floats are written with 17 significant digits so that they read back
exactly.  Lines end with a single ``\\n``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import Atom, BoxIndexing, TrellisDomain, build_trellis
from .objective import BoxGeometry, ModelParams, QuadraticProblem, colocalization_problem, temporal_similarity

MAGIC = "COLOC-INSTANCE"
VERSION = "v1"
FRAME_WIDTH, FRAME_HEIGHT = 640, 480


class InstanceFileError(ValueError):
    """Base class for instance file problems."""


class MalformedInstanceError(InstanceFileError):
    pass


class InstanceVersionError(InstanceFileError):
    pass


class ChecksumError(InstanceFileError):
    pass


@dataclass(frozen=True)
class InstanceSpec:
    """Size, noise and seed of a synthetic instance.

    ``frames_per_video`` may be a single int shared by all videos.
    """

    n_videos: int = 2
    frames_per_video: tuple[int, ...] | int = 5
    boxes_per_frame: int = 4
    feature_dim: int = 8
    n_planted: int = 1
    noise_level: float = 0.05
    edge_threshold: float = 0.0
    seed: int = 0

    def __post_init__(self):
        frames = self.frames_per_video
        if isinstance(frames, (int, np.integer)):
            frames = (int(frames),) * int(self.n_videos)
        frames = tuple(int(f) for f in frames)
        object.__setattr__(self, "frames_per_video", frames)
        if self.n_videos < 1 or len(frames) != self.n_videos:
            raise ValueError("need n_videos >= 1 and one frame count per video")
        if min(frames) < 1 or self.boxes_per_frame < 1 or self.feature_dim < 1:
            raise ValueError("frame, box and feature counts must be >= 1")
        if self.n_planted != 1:
            raise ValueError("exactly one planted box per frame is supported")
        if not self.noise_level >= 0:
            raise ValueError("noise_level must be nonnegative")
        if not self.edge_threshold >= 0:
            raise ValueError("edge_threshold must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def indexing(self) -> BoxIndexing:
        return BoxIndexing(self.frames_per_video, self.boxes_per_frame)


@dataclass(eq=False)
class SyntheticInstance:
    spec: InstanceSpec
    indexing: BoxIndexing
    features: np.ndarray
    geometry: BoxGeometry
    saliency: np.ndarray
    planted_truth: np.ndarray

    @property
    def planted_atom(self) -> Atom:
        return Atom(tuple(self.planted_truth.tolist()), self.indexing.boxes_per_frame)

    def temporal_similarity(self):
        return temporal_similarity(self.geometry, self.indexing)

    def domain(self, threshold: float | None = None) -> TrellisDomain:
        t = self.spec.edge_threshold if threshold is None else threshold
        return build_trellis(self.indexing, self.temporal_similarity(), t)

    def problem(self, params: ModelParams = ModelParams()) -> QuadraticProblem:
        return colocalization_problem(self.indexing, self.features, self.geometry, self.saliency, params)

    def build(self, params: ModelParams = ModelParams(),
              threshold: float | None = None) -> tuple[QuadraticProblem, TrellisDomain]:
        """Assembled objective and trellis sharing one temporal similarity."""
        S_t = self.temporal_similarity()
        t = self.spec.edge_threshold if threshold is None else threshold
        domain = build_trellis(self.indexing, S_t, t)
        problem = colocalization_problem(self.indexing, self.features, self.geometry,
                                         self.saliency, params, S_t=S_t)
        return problem, domain

    def __eq__(self, other):
        if not isinstance(other, SyntheticInstance):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.indexing == other.indexing
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.geometry.centers, other.geometry.centers)
            and np.array_equal(self.geometry.areas, other.geometry.areas)
            and np.array_equal(self.saliency, other.saliency)
            and np.array_equal(self.planted_truth, other.planted_truth)
        )


def generate(spec: InstanceSpec) -> SyntheticInstance:
    """Draw an instance; a pure function of ``spec``.

    Randomness comes from Philox (a counter-based generator) with one
    spawned stream per component, so identical specs give bit-identical
    instances on every platform.
    """
    ix = spec.indexing
    m, d, F, n_b = ix.boxes_per_frame, spec.feature_dim, ix.n_frames, ix.n_boxes
    ss = np.random.SeedSequence(int(spec.seed))
    r_truth, r_feat, r_geom, r_sal = (np.random.Generator(np.random.Philox(s)) for s in ss.spawn(4))

    truth = r_truth.integers(0, m, size=F)
    planted = np.arange(F) * m + truth

    center = r_feat.uniform(0.0, 1.0, size=d)
    X = r_feat.uniform(0.0, 1.0, size=(n_b, d))
    X[planted] = center + spec.noise_level * r_feat.standard_normal((F, d))
    np.maximum(X, 0.0, out=X)

    frame_area = float(FRAME_WIDTH * FRAME_HEIGHT)
    centers = r_geom.uniform(0.0, 1.0, size=(n_b, 2))
    areas = r_geom.uniform(0.01, 0.5, size=n_b) * frame_area
    for v, n in enumerate(ix.frames_per_video):
        off = int(ix.frame_offsets[v])
        c = r_geom.uniform(0.3, 0.7, size=2)
        a = r_geom.uniform(0.05, 0.25) * frame_area
        for j in range(n):
            if j:
                c = np.clip(c + r_geom.uniform(-0.03, 0.03, size=2), 0.05, 0.95)
                a = a * r_geom.uniform(0.95, 1.05)
            centers[planted[off + j]] = c
            areas[planted[off + j]] = a

    sal = r_sal.uniform(0.05, 0.95, size=n_b)
    background = np.ones(n_b, dtype=bool)
    background[planted] = False
    floor = float(np.median(sal[background])) if background.any() else 0.05
    sal[planted] = r_sal.uniform(floor, 1.0, size=F)

    inst = SyntheticInstance(spec, ix, X, BoxGeometry(centers, areas), sal, truth.astype(np.intp))
    _check_truth_path(inst)
    return inst


def _check_truth_path(inst: SyntheticInstance):
    ix = inst.indexing
    m = ix.boxes_per_frame
    S_t = inst.temporal_similarity()
    for v, n in enumerate(ix.frames_per_video):
        off = int(ix.frame_offsets[v])
        for j in range(n - 1):
            a = (off + j) * m + int(inst.planted_truth[off + j])
            b = (off + j + 1) * m + int(inst.planted_truth[off + j + 1])
            if not S_t[a, b] > inst.spec.edge_threshold:
                raise ValueError(
                    f"edge_threshold {inst.spec.edge_threshold} cuts the planted path "
                    f"(similarity {S_t[a, b]:.4f} in video {v}, frame {j})"
                )


def _fmt(x) -> str:
    return format(float(x), ".17g")


def dumps_instance(inst: SyntheticInstance) -> str:
    sp_, ix = inst.spec, inst.indexing
    lines = [
        f"{MAGIC} {VERSION}",
        f"COUNTS videos={ix.n_videos} boxes={ix.boxes_per_frame} dim={sp_.feature_dim} planted={sp_.n_planted}",
        "FRAMES " + " ".join(str(n) for n in ix.frames_per_video),
        f"PARAMS noise_level={_fmt(sp_.noise_level)} edge_threshold={_fmt(sp_.edge_threshold)} seed={int(sp_.seed)}",
        f"SECTION features {ix.n_boxes} {sp_.feature_dim}",
    ]
    lines += [" ".join(_fmt(x) for x in row) for row in inst.features]
    lines.append(f"SECTION geometry {ix.n_boxes} 3")
    lines += [
        f"{_fmt(c[0])} {_fmt(c[1])} {_fmt(a)}"
        for c, a in zip(inst.geometry.centers, inst.geometry.areas)
    ]
    lines.append(f"SECTION saliency {ix.n_boxes}")
    lines += [_fmt(s) for s in inst.saliency]
    lines.append(f"SECTION truth {ix.n_frames}")
    lines += [str(int(t)) for t in inst.planted_truth]
    body = "\n".join(lines) + "\n"
    return body + f"CHECKSUM {checksum(body)}\n"


def checksum(body: str) -> str:
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def save_instance(inst: SyntheticInstance, path) -> str:
    """Write ``inst`` to ``path``; returns the checksum."""
    text = dumps_instance(inst)
    Path(path).write_text(text, encoding="utf-8", newline="\n")
    return text.rsplit("CHECKSUM ", 1)[1].strip()


def _kv(tokens, keys, where):
    out = {}
    for tok in tokens:
        k, sep, val = tok.partition("=")
        if not sep:
            raise MalformedInstanceError(f"bad field {tok!r} in {where}")
        out[k] = val
    missing = set(keys) - set(out)
    if missing:
        raise MalformedInstanceError(f"{where} lacks {sorted(missing)}")
    return out


def loads_instance(text: str) -> SyntheticInstance:
    lines = text.split("\n")
    head = lines[0].split()
    if len(head) != 2 or head[0] != MAGIC:
        raise MalformedInstanceError("missing COLOC-INSTANCE header")
    if head[1] != VERSION:
        raise InstanceVersionError(f"unsupported instance version {head[1]!r}")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    if not lines or not lines[-1].startswith("CHECKSUM "):
        raise MalformedInstanceError("missing CHECKSUM line (truncated file?)")
    body = "\n".join(lines[:-1]) + "\n"
    if checksum(body) != lines[-1][len("CHECKSUM "):].strip():
        raise ChecksumError("checksum does not match file contents")
    try:
        return _parse_body(lines[1:-1])
    except InstanceFileError:
        raise
    except (ValueError, IndexError) as exc:
        raise MalformedInstanceError(str(exc)) from exc


def _parse_body(lines) -> SyntheticInstance:
    it = iter(lines)

    def expect(prefix):
        line = next(it, None)
        if line is None or not line.startswith(prefix + " "):
            raise MalformedInstanceError(f"expected {prefix} line, got {line!r}")
        return line.split()[1:]

    counts = _kv(expect("COUNTS"), ["videos", "boxes", "dim", "planted"], "COUNTS")
    frames = tuple(int(x) for x in expect("FRAMES"))
    params = _kv(expect("PARAMS"), ["noise_level", "edge_threshold", "seed"], "PARAMS")
    spec = InstanceSpec(
        n_videos=int(counts["videos"]), frames_per_video=frames,
        boxes_per_frame=int(counts["boxes"]), feature_dim=int(counts["dim"]),
        n_planted=int(counts["planted"]), noise_level=float(params["noise_level"]),
        edge_threshold=float(params["edge_threshold"]), seed=int(params["seed"]),
    )
    ix = spec.indexing

    def section(name, rows, cols, conv=float):
        got = expect("SECTION")
        shape = [rows] if cols is None else [rows, cols]
        if got[0] != name or [int(x) for x in got[1:]] != shape:
            raise MalformedInstanceError(f"bad header for section {name}: {got}")
        data = []
        for _ in range(rows):
            line = next(it, None)
            if line is None:
                raise MalformedInstanceError(f"section {name} ends early")
            vals = [conv(x) for x in line.split()]
            if len(vals) != (1 if cols is None else cols):
                raise MalformedInstanceError(f"section {name}: wrong number of values")
            data.append(vals if cols is not None else vals[0])
        return data

    X = np.array(section("features", ix.n_boxes, spec.feature_dim), dtype=float).reshape(ix.n_boxes, spec.feature_dim)
    geo = np.array(section("geometry", ix.n_boxes, 3), dtype=float).reshape(ix.n_boxes, 3)
    sal = np.array(section("saliency", ix.n_boxes, None), dtype=float)
    truth = np.array(section("truth", ix.n_frames, None, int), dtype=np.intp)
    if next(it, None) is not None:
        raise MalformedInstanceError("trailing content after truth section")
    return SyntheticInstance(spec, ix, X, BoxGeometry(geo[:, :2], geo[:, 2]), sal, truth)


def load_instance(path) -> SyntheticInstance:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedInstanceError(f"{path}: not a text file") from exc
    if not text:
        raise MalformedInstanceError(f"{path}: empty file")
    return loads_instance(text)
