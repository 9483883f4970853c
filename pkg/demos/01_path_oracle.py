"""
Paths through a box trellis
===========================

Every video contributes one box per frame, and consecutive boxes must be
joined by an edge of the trellis.  The linear minimization oracle is a
shortest path over that layered graph, which is also how a fractional
solution gets rounded back to boxes.
"""
import numpy as np

from colocfw import BoxIndexing, InstanceSpec, build_trellis, generate

# A single video with four frames and three candidate boxes per frame.
ix = BoxIndexing((4,), 3)
print(ix.n_boxes, "boxes,", ix.n_frames, "frames")

# With no similarity matrix every box connects to every box in the next frame,
# so there are 3**4 paths.
full = build_trellis(ix)
print("paths in the complete trellis:", full.n_paths())

# Linear costs, one per box.  The oracle returns the cheapest path.
cost = np.array([3., 1., 2.,
                 0., 5., 5.,
                 2., 2., 0.,
                 1., 0., 4.])
atom = full.lmo(cost)
print("cheapest path:", atom.boxes, "cost", cost[atom.support].sum())

# Cutting edges changes the answer.  Here box 0 of frame 1 only links to box 1
# of frame 2, and everything else stays connected.
S = np.zeros((12, 12))
for j in range(3):
    a, b = j * 3, (j + 1) * 3
    S[a:a + 3, b:b + 3] = 1.0
S[3:6, 6:9][0] = [0.0, 1.0, 0.0]
S = np.maximum(S, S.T)
cut = build_trellis(ix, S, threshold=0.0)
atom = cut.lmo(cost)
print("after cutting:", atom.boxes, "cost", cost[atom.support].sum(), "|", cut.n_paths(), "paths")

# Rounding a fractional point picks the path with the largest overlap.
y = 0.5 * full.lmo(cost).indicator() + 0.5 * full.lmo(-cost).indicator()
print("rounded:", full.round_to_atom(y).boxes)

# On a synthetic instance the trellis comes from box geometry, and the
# planted object track is always one of its paths.
inst = generate(InstanceSpec(n_videos=2, frames_per_video=5, boxes_per_frame=4, seed=1))
dom = inst.domain()
print("planted track feasible:", dom.is_feasible(inst.planted_atom), "|", dom.n_paths(), "paths")
