"""
Bookkeeping for away and pairwise steps
=======================================

Away-step and pairwise variants need the current iterate written as a convex
combination of atoms.  ``ActiveSet`` keeps those weights and the iterate in
sync through three kinds of moves.
"""
import numpy as np

from colocfw import ActiveSet, Atom

m = 3
A, B, C = Atom((0, 0), m), Atom((1, 2), m), Atom((2, 1), m)

S = ActiveSet(A)
print("start      ", S.as_dict())

# toward step: y <- (1 - g) y + g s
S.step_toward(B, 0.25)
print("toward B   ", {a.boxes: round(w, 4) for a, w in S.as_dict().items()})

# away step: push mass off an atom, scaling the rest up.  The largest step
# removes the atom entirely (a drop step).
cap = S.away_cap(B)
print("away cap   ", cap)
dropped = S.step_away(B, cap)
print("away B     ", {a.boxes: round(w, 4) for a, w in S.as_dict().items()}, "dropped:", dropped)

# pairwise step: move weight straight from one atom to another
S.step_toward(C, 0.5)
S.step_pairwise(A, B, 0.2)
print("pairwise   ", {a.boxes: round(w, 4) for a, w in S.as_dict().items()})

# The iterate is cached, and can always be rebuilt from the weights.
print("iterate    ", S.iterate)
print("consistent ", np.allclose(S.iterate, S.recompute_iterate()))

# worst_atom is the active atom most aligned with the gradient, the one an
# away or pairwise step takes mass from.
g = np.random.default_rng(0).normal(size=2 * m)
print("worst atom ", S.worst_atom(g))
