"""Convex-combination bookkeeping over atoms.

The iterate is kept as ``y = sum_v alpha_v * v`` over a list of distinct
atoms with positive weights summing to one.  Targets of toward/pairwise
steps may be a single atom or a convex combination of atoms given as a
mapping ``{atom: weight}``; the inner procedure of the sliding solvers
returns points of the latter kind.
"""
from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from .domain import Atom

#: weights at or below this are treated as zero and dropped
DROP_TOL = 1e-12


def _as_combination(target) -> dict[Atom, float]:
    if isinstance(target, Atom):
        return {target: 1.0}
    if isinstance(target, Mapping):
        return dict(target)
    raise TypeError("target must be an Atom or a mapping of atoms to weights")


class ActiveSet:
    """Atoms with positive weights representing the current iterate.

    Parameters
    ----------
    atom : Atom
        Starting vertex; it receives weight 1.
    n_boxes : int, optional
        Length of the iterate.  Inferred from the atom if omitted.

    Updates mutate the set in place.  Insertion order is kept and used for
    tie-breaking in :meth:`worst_atom`.
    """

    def __init__(self, atom: Atom, n_boxes: int | None = None):
        self._n = len(atom.boxes) * atom.boxes_per_frame if n_boxes is None else int(n_boxes)
        self._atoms: list[Atom] = [atom]
        self._w = np.ones(1)
        self._pos: dict[Atom, int] = {atom: 0}
        self._supp = atom.support[None, :].copy()  # one row of box indices per atom
        self._y = atom.indicator(self._n)

    # -- read access -----------------------------------------------------

    def __len__(self):
        return len(self._atoms)

    def __contains__(self, atom):
        return atom in self._pos

    def __iter__(self):
        return iter(zip(list(self._atoms), self._w.tolist()))

    @property
    def atoms(self) -> list[Atom]:
        return list(self._atoms)

    @property
    def weights(self) -> np.ndarray:
        return self._w.copy()

    @property
    def iterate(self) -> np.ndarray:
        """Cached ``sum_v alpha_v v`` (read-only view)."""
        view = self._y.view()
        view.setflags(write=False)
        return view

    def weight(self, atom: Atom) -> float:
        i = self._pos.get(atom)
        return 0.0 if i is None else float(self._w[i])

    def as_dict(self) -> dict[Atom, float]:
        return dict(zip(self._atoms, self._w.tolist()))

    def recompute_iterate(self) -> np.ndarray:
        return self._spread(self._supp, self._w)

    def _spread(self, supp, w):
        """``sum_i w_i * indicator(atom_i)`` for atoms given as support rows."""
        return np.bincount(supp.ravel(), weights=np.repeat(w, supp.shape[1]), minlength=self._n)

    def check(self, tol: float = 1e-9):
        """Assert the simplex and cache invariants."""
        assert len(self._pos) == len(self._atoms), "duplicate atoms"
        assert np.all(self._w > 0), "nonpositive weight kept"
        assert abs(self._w.sum() - 1.0) <= tol, f"weights sum to {self._w.sum()!r}"
        err = np.max(np.abs(self.recompute_iterate() - self._y))
        assert err <= tol, f"cached iterate off by {err:g}"

    # -- internals ---------------------------------------------------------

    def _add(self, combo: dict[Atom, float], scale: float):
        """Add ``scale * combo`` to the weights and the cached iterate."""
        atoms = list(combo)
        w = scale * np.fromiter(combo.values(), dtype=float, count=len(atoms))
        new_atoms, new_w = [], []
        for a, wa in zip(atoms, w):
            i = self._pos.get(a)
            if i is None:
                self._pos[a] = len(self._atoms) + len(new_atoms)
                new_atoms.append(a)
                new_w.append(wa)
            else:
                self._w[i] += wa
        if new_atoms:
            self._atoms.extend(new_atoms)
            self._w = np.concatenate([self._w, new_w])
            self._supp = np.concatenate([self._supp, np.stack([a.support for a in new_atoms])])
        if len(atoms) == 1:
            self._y[atoms[0].support] += w[0]
        else:
            # large targets: one pass over the support table beats stacking the target
            self._y = self.recompute_iterate()

    def _prune(self):
        keep = self._w > DROP_TOL
        if keep.all():
            return
        self._atoms = [a for a, k in zip(self._atoms, keep) if k]
        self._w = self._w[keep]
        self._supp = self._supp[keep]
        self._pos = {a: i for i, a in enumerate(self._atoms)}

    def _reset(self, combo: dict[Atom, float]):
        self._atoms, ws = [], []
        for a, w in combo.items():
            if w > DROP_TOL:
                self._atoms.append(a)
                ws.append(w)
        self._w = np.array(ws)
        self._pos = {a: i for i, a in enumerate(self._atoms)}
        self._supp = np.stack([a.support for a in self._atoms])
        self._y = self.recompute_iterate()

    # -- updates -----------------------------------------------------------

    def step_toward(self, target, gamma: float):
        """``y <- (1 - gamma) y + gamma * target``.

        With ``gamma == 1`` the set collapses onto the target's atoms.
        """
        gamma = float(gamma)
        if not 0.0 <= gamma <= 1.0:
            raise ValueError(f"gamma={gamma} outside [0, 1]")
        if gamma == 0.0:
            return
        combo = _as_combination(target)
        if gamma == 1.0:
            self._reset(combo)
            return
        self._w *= 1.0 - gamma
        self._y *= 1.0 - gamma
        self._add(combo, gamma)
        self._prune()

    def away_cap(self, atom: Atom) -> float:
        """Largest feasible away step from ``atom``: ``alpha / (1 - alpha)``."""
        alpha = self.weight(atom)
        if len(self._atoms) == 1 or alpha >= 1.0:
            return np.inf  # a lone atom has weight 1 up to roundoff
        return alpha / (1.0 - alpha)

    def step_away(self, away: Atom, gamma: float) -> bool:
        """``y <- (1 + gamma) y - gamma * away``; returns True on a drop step.

        Other weights scale by ``1 + gamma`` and the away atom's weight becomes
        ``(1 + gamma) alpha - gamma``, which is zero at ``gamma = alpha / (1 - alpha)``.
        """
        if away not in self._pos:
            raise KeyError("away atom is not in the active set")
        gamma = float(gamma)
        cap = self.away_cap(away)
        if gamma < 0 or gamma > cap * (1 + 1e-9):
            raise ValueError(f"gamma={gamma} outside [0, {cap}]")
        if gamma == 0.0:
            return False
        i = self._pos[away]
        drop = gamma >= cap * (1 - 1e-12)
        if drop:
            gamma = cap
        self._w *= 1.0 + gamma
        self._w[i] = 0.0 if drop else self._w[i] - gamma
        self._prune()
        # the (1 + gamma) factor amplifies roundoff; put the weights back on the
        # simplex and rebuild the iterate from them instead of updating in place
        self._w /= self._w.sum()
        self._y = self.recompute_iterate()
        return drop

    def step_pairwise(self, from_atom: Atom, to, gamma: float) -> bool:
        """Move ``gamma`` weight from ``from_atom`` onto ``to``; True on a drop.

        All other weights are left untouched.
        """
        if from_atom not in self._pos:
            raise KeyError("from_atom is not in the active set")
        gamma = float(gamma)
        i = self._pos[from_atom]
        cap = float(self._w[i])
        if gamma < 0 or gamma > cap * (1 + 1e-9):
            raise ValueError(f"gamma={gamma} outside [0, {cap}]")
        if gamma == 0.0:
            return False
        drop = gamma >= cap * (1 - 1e-12)
        if drop:
            gamma = cap
            self._w[i] = 0.0
        else:
            self._w[i] -= gamma
        self._y[from_atom.support] -= gamma
        self._add(_as_combination(to), gamma)
        self._prune()
        return drop and from_atom not in self._pos

    def worst_atom(self, gradient) -> tuple[Atom, float]:
        """Active atom maximizing ``<gradient, v>`` (oldest wins ties)."""
        g = np.asarray(gradient, dtype=float)
        scores = g[self._supp].sum(axis=1)
        i = int(np.argmax(scores))  # first maximum, i.e. the oldest atom
        return self._atoms[i], float(self._w[i])
