"""Feasible regions of the co-localization programs.

Every video is a layered graph (a trellis): one layer per frame, one node per
candidate box, edges only between consecutive frames.  A feasible integer
point picks one box per frame such that consecutive picks are joined by an
edge, i.e. a source-to-sink path per video.  A set of images is the special
case of one-frame videos, where the feasible region reduces to a product of
simplices.

Linear minimization over the convex hull of these paths is a node-weighted
shortest path, solved by dynamic programming over the layers.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class TrellisError(ValueError):
    """Raised when a trellis admits no source-to-sink path."""


@dataclass(frozen=True)
class BoxIndexing:
    """Flat indexing of (video, frame, box) triples.

    Boxes are stored video-major, then frame, then box, so that the global
    index of box ``k`` in frame ``j`` of video ``i`` is
    ``(frame_offset[i] + j) * m + k``.
    """

    frames_per_video: tuple[int, ...]
    boxes_per_frame: int

    def __post_init__(self):
        frames = tuple(int(n) for n in self.frames_per_video)
        object.__setattr__(self, "frames_per_video", frames)
        object.__setattr__(self, "boxes_per_frame", int(self.boxes_per_frame))
        if not frames:
            raise ValueError("need at least one video")
        if min(frames) < 1:
            raise ValueError("every video needs at least one frame")
        if self.boxes_per_frame < 1:
            raise ValueError("boxes_per_frame must be >= 1")

    @classmethod
    def images(cls, n_images: int, boxes_per_image: int) -> "BoxIndexing":
        """Indexing for the image model (every 'video' has a single frame)."""
        return cls((1,) * int(n_images), boxes_per_image)

    @property
    def n_videos(self) -> int:
        return len(self.frames_per_video)

    @property
    def n_frames(self) -> int:
        return sum(self.frames_per_video)

    @property
    def n_boxes(self) -> int:
        return self.boxes_per_frame * self.n_frames

    @cached_property
    def frame_offsets(self) -> np.ndarray:
        """Global index of the first frame of each video."""
        return np.concatenate([[0], np.cumsum(self.frames_per_video)[:-1]]).astype(np.intp)

    def index(self, video: int, frame: int, box: int) -> int:
        if not 0 <= video < self.n_videos:
            raise IndexError(f"video {video} out of range")
        if not 0 <= frame < self.frames_per_video[video]:
            raise IndexError(f"frame {frame} out of range for video {video}")
        if not 0 <= box < self.boxes_per_frame:
            raise IndexError(f"box {box} out of range")
        return int((self.frame_offsets[video] + frame) * self.boxes_per_frame + box)

    def locate(self, idx: int) -> tuple[int, int, int]:
        """Inverse of :meth:`index`."""
        if not 0 <= idx < self.n_boxes:
            raise IndexError(f"index {idx} out of range")
        gframe, box = divmod(int(idx), self.boxes_per_frame)
        video = int(np.searchsorted(self.frame_offsets, gframe, side="right") - 1)
        return video, gframe - int(self.frame_offsets[video]), box

    def frame_ids(self) -> np.ndarray:
        """Global frame (image) id of every box."""
        return np.repeat(np.arange(self.n_frames), self.boxes_per_frame)

    def video_ids(self) -> np.ndarray:
        per_frame = np.repeat(np.arange(self.n_videos), self.frames_per_video)
        return np.repeat(per_frame, self.boxes_per_frame)


@dataclass(frozen=True)
class Atom:
    """A vertex of the path polytope: one chosen box per frame.

    ``boxes`` lists the within-frame box index for every frame in global frame
    order.  Atoms compare and hash by content.
    """

    boxes: tuple[int, ...]
    boxes_per_frame: int

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(int(b) for b in self.boxes))
        if any(b < 0 or b >= self.boxes_per_frame for b in self.boxes):
            raise ValueError("box index out of range")
        # atoms are dict keys in hot loops; hashing a long tuple each time is slow
        object.__setattr__(self, "_hash", hash((self.boxes, self.boxes_per_frame)))

    def __hash__(self):
        return self._hash

    @cached_property
    def support(self) -> np.ndarray:
        """Global indices of the selected boxes."""
        n = len(self.boxes)
        idx = np.arange(n, dtype=np.intp) * self.boxes_per_frame + np.asarray(self.boxes, dtype=np.intp)
        idx.setflags(write=False)
        return idx

    def indicator(self, n_boxes: int | None = None) -> np.ndarray:
        n = len(self.boxes) * self.boxes_per_frame if n_boxes is None else n_boxes
        z = np.zeros(n)
        z[self.support] = 1.0
        return z

    def per_video(self, indexing: BoxIndexing) -> list[tuple[int, ...]]:
        """Box choices split by video."""
        return [
            self.boxes[off:off + n]
            for off, n in zip(indexing.frame_offsets, indexing.frames_per_video)
        ]

    def edges(self, indexing: BoxIndexing) -> list[tuple[int, int, int, int]]:
        """Active edge variables as ``(video, frame, parent_box, child_box)``.

        ``frame`` is the parent's frame; these are the edge indicators implied
        by the box choices.
        """
        out = []
        for v, path in enumerate(self.per_video(indexing)):
            for j in range(len(path) - 1):
                out.append((v, j, path[j], path[j + 1]))
        return out


class TrellisDomain:
    """Product of per-video path polytopes.

    Parameters
    ----------
    indexing : BoxIndexing
    adjacency : list of list of ndarray
        ``adjacency[v][j]`` is an ``m x m`` boolean matrix whose ``[p, c]``
        entry says that box ``p`` of frame ``j`` connects to box ``c`` of
        frame ``j + 1`` in video ``v``.
    alive : ndarray of bool, shape (n_frames, m)
        Nodes that lie on at least one full path.

    Use :func:`build_trellis` or :func:`complete_trellis` rather than calling
    this directly.  Instances are treated as immutable.
    """

    def __init__(self, indexing: BoxIndexing, adjacency, alive):
        self.indexing = indexing
        self.adjacency = [[np.array(a, dtype=bool) for a in video] for video in adjacency]
        self.alive = np.array(alive, dtype=bool)
        m = indexing.boxes_per_frame
        if self.alive.shape != (indexing.n_frames, m):
            raise ValueError("alive mask has wrong shape")
        for v, (video, n) in enumerate(zip(self.adjacency, indexing.frames_per_video)):
            if len(video) != n - 1:
                raise ValueError(f"video {v}: expected {n - 1} edge layers")
            for a in video:
                if a.shape != (m, m):
                    raise ValueError("adjacency layer has wrong shape")
        for arr in [self.alive, *itertools.chain.from_iterable(self.adjacency)]:
            arr.setflags(write=False)
        self._groups = self._build_groups()

    @property
    def n_boxes(self) -> int:
        return self.indexing.n_boxes

    def _build_groups(self):
        # Videos of equal length share one vectorized DP pass.
        m = self.indexing.boxes_per_frame
        by_len: dict[int, list[int]] = {}
        for v, n in enumerate(self.indexing.frames_per_video):
            by_len.setdefault(n, []).append(v)
        groups = []
        for n, vids in by_len.items():
            offs = self.indexing.frame_offsets[vids]
            frames = offs[:, None] + np.arange(n)[None, :]  # (G, n)
            start = np.where(self.alive[frames[:, 0]], 0.0, np.inf)
            pens = []
            for j in range(n - 1):
                layer = np.stack([self.adjacency[v][j] for v in vids])
                pens.append(np.where(layer, 0.0, np.inf))
            groups.append((frames, start, pens))
        return groups

    def parents(self, video: int, frame: int, box: int) -> list[int]:
        """Boxes of the previous frame connected to ``box``."""
        if frame == 0:
            return []
        return [int(p) for p in np.flatnonzero(self.adjacency[video][frame - 1][:, box])]

    def children(self, video: int, frame: int, box: int) -> list[int]:
        """Boxes of the next frame connected to ``box``."""
        if frame == self.indexing.frames_per_video[video] - 1:
            return []
        return [int(c) for c in np.flatnonzero(self.adjacency[video][frame][box, :])]

    def n_edges(self) -> int:
        return int(sum(a.sum() for video in self.adjacency for a in video))

    def lmo(self, cost) -> Atom:
        """Atom minimizing ``<cost, z>`` over all feasible atoms.

        Ties are broken towards the lowest box index at every comparison.
        """
        m = self.indexing.boxes_per_frame
        cost = np.asarray(cost, dtype=float)
        if cost.shape != (self.n_boxes,):
            raise ValueError(f"cost must have shape ({self.n_boxes},), got {cost.shape}")
        c2 = cost.reshape(-1, m)
        boxes = np.empty(self.indexing.n_frames, dtype=np.intp)
        for frames, start, pens in self._groups:
            g, n = frames.shape
            cf = c2[frames]  # (G, n, m)
            dp = cf[:, 0] + start
            back = np.empty((g, n, m), dtype=np.intp)
            for j, pen in enumerate(pens, start=1):
                cand = dp[:, :, None] + pen
                back[:, j] = np.argmin(cand, axis=1)  # first minimum: lowest parent index
                dp = cand.min(axis=1) + cf[:, j]
            cur = np.argmin(dp, axis=1)
            rows = np.arange(g)
            boxes[frames[:, n - 1]] = cur
            for j in range(n - 1, 0, -1):
                cur = back[rows, j, cur]
                boxes[frames[:, j - 1]] = cur
        return Atom(tuple(boxes.tolist()), m)

    def round_to_atom(self, y) -> Atom:
        """Feasible atom maximizing ``<z, y>``.

        For binary one-per-frame atoms ``||z||^2`` is constant, so this is
        also the Euclidean projection of ``y`` onto the integer points.
        """
        return self.lmo(-np.asarray(y, dtype=float))

    def as_atom(self, a) -> Atom:
        """Coerce an :class:`Atom` or a 0/1 indicator vector into an atom.

        Raises ``ValueError`` on dimension or structure errors (wrong length,
        non-binary entries, or anything other than one box per frame).
        """
        ix = self.indexing
        m = ix.boxes_per_frame
        if isinstance(a, Atom):
            if a.boxes_per_frame != m or len(a.boxes) != ix.n_frames:
                raise ValueError("atom dimensions do not match the domain")
            return a
        z = np.asarray(a, dtype=float)
        if z.shape != (ix.n_boxes,):
            raise ValueError(f"indicator must have shape ({ix.n_boxes},), got {z.shape}")
        if not np.all((z == 0) | (z == 1)):
            raise ValueError("indicator is not binary")
        z2 = z.reshape(-1, m)
        if not np.all(z2.sum(axis=1) == 1):
            raise ValueError("indicator must select exactly one box per frame")
        return Atom(tuple(np.argmax(z2, axis=1).tolist()), m)

    def is_feasible(self, a) -> bool:
        """True iff every chosen node survives and consecutive picks share an edge."""
        atom = self.as_atom(a)
        boxes = atom.boxes
        if not all(self.alive[f, b] for f, b in enumerate(boxes)):
            return False
        for v, path in enumerate(atom.per_video(self.indexing)):
            for j in range(len(path) - 1):
                if not self.adjacency[v][j][path[j], path[j + 1]]:
                    return False
        return True

    def n_paths(self) -> int:
        """Number of feasible atoms (product over videos of path counts)."""
        total = 1
        for v, n in enumerate(self.indexing.frames_per_video):
            off = self.indexing.frame_offsets[v]
            # python ints: path counts overflow int64 on long videos
            count = [int(x) for x in self.alive[off]]
            for j in range(n - 1):
                adj = self.adjacency[v][j]
                count = [sum(count[p] for p in np.flatnonzero(adj[:, c])) for c in range(len(count))]
            total *= sum(count)
        return total

    def enumerate_atoms(self):
        """Yield every feasible atom.  Only sensible on tiny instances."""
        per_video = []
        for v, n in enumerate(self.indexing.frames_per_video):
            off = self.indexing.frame_offsets[v]
            paths = [(int(b),) for b in np.flatnonzero(self.alive[off])]
            for j in range(n - 1):
                adj = self.adjacency[v][j]
                paths = [p + (int(c),) for p in paths for c in np.flatnonzero(adj[p[-1]])]
            per_video.append(paths)
        m = self.indexing.boxes_per_frame
        for combo in itertools.product(*per_video):
            yield Atom(tuple(itertools.chain.from_iterable(combo)), m)


def _prune(indexing: BoxIndexing, adjacency, alive):
    changed = True
    while changed:
        changed = False
        for v, n in enumerate(indexing.frames_per_video):
            off = int(indexing.frame_offsets[v])
            for j in range(n):
                keep = alive[off + j].copy()
                if j > 0:
                    keep &= (adjacency[v][j - 1] & alive[off + j - 1][:, None]).any(axis=0)
                if j < n - 1:
                    keep &= (adjacency[v][j] & alive[off + j + 1][None, :]).any(axis=1)
                if not np.array_equal(keep, alive[off + j]):
                    alive[off + j] = keep
                    changed = True
    for v, n in enumerate(indexing.frames_per_video):
        off = int(indexing.frame_offsets[v])
        for j in range(n - 1):
            adjacency[v][j] &= alive[off + j][:, None] & alive[off + j + 1][None, :]
    dead = np.flatnonzero(~alive.any(axis=1))
    if dead.size:
        gframe = int(dead[0])
        video = int(np.searchsorted(indexing.frame_offsets, gframe, side="right") - 1)
        raise TrellisError(
            f"no valid path: frame {gframe - int(indexing.frame_offsets[video])} "
            f"of video {video} lost all boxes"
        )
    return adjacency, alive


def build_trellis(indexing: BoxIndexing, temporal_similarity=None, threshold: float = 0.0) -> TrellisDomain:
    """Build the trellis from pairwise temporal similarities.

    An edge joins box ``p`` of frame ``j`` and box ``c`` of frame ``j + 1``
    iff their similarity is strictly greater than ``threshold``.  Nodes that
    cannot reach both ends of their video are pruned until nothing changes.
    With ``temporal_similarity=None`` every adjacent pair is connected.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    m = indexing.boxes_per_frame
    n_b = indexing.n_boxes
    if temporal_similarity is None:
        S = None
    else:
        S = sp.csr_matrix(temporal_similarity)
        if S.shape != (n_b, n_b):
            raise ValueError(f"similarity must be {n_b}x{n_b}, got {S.shape}")
        coo = S.tocoo()
        nz = coo.data != 0
        fr, fc = coo.row[nz] // m, coo.col[nz] // m
        vids = np.repeat(np.arange(indexing.n_videos), indexing.frames_per_video)
        if np.any((np.abs(fr - fc) != 1) | (vids[fr] != vids[fc])):
            raise ValueError("similarity has entries outside adjacent frames of one video")
    adjacency = []
    for v, n in enumerate(indexing.frames_per_video):
        off = int(indexing.frame_offsets[v])
        layers = []
        for j in range(n - 1):
            if S is None:
                layers.append(np.ones((m, m), dtype=bool))
            else:
                a = (off + j) * m
                b = a + m
                block = S[a:b, b:b + m].toarray()
                layers.append(block > threshold)
        adjacency.append(layers)
    alive = np.ones((indexing.n_frames, m), dtype=bool)
    adjacency, alive = _prune(indexing, adjacency, alive)
    return TrellisDomain(indexing, adjacency, alive)


def complete_trellis(indexing: BoxIndexing) -> TrellisDomain:
    """Trellis with every adjacent pair connected (product of simplices for images)."""
    return build_trellis(indexing, None)
