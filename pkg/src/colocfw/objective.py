"""Matrices of the co-localization objective.

The assembled problem is

    f(z) = z^T Q z + c^T z,    Q = L + mu * A + mu_t * U,    c = -lam * log(m_hat)

where ``L`` is the normalized Laplacian of the appearance (chi-squared)
similarity, ``A`` the discriminative clustering matrix obtained from the
closed-form ridge regression, and ``U`` the normalized Laplacian of the
temporal similarity between boxes of adjacent frames.  The gradient
convention is ``grad f(z) = 2 Q z + c`` (no factor 1/2 on the quadratic).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .domain import BoxIndexing


@dataclass(frozen=True)
class BoxGeometry:
    """Box centers normalized to the frame (in [0, 1]^2) and pixel areas."""

    centers: np.ndarray
    areas: np.ndarray

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        areas = np.asarray(self.areas, dtype=float)
        if centers.ndim != 2 or centers.shape[1] != 2:
            raise ValueError("centers must have shape (n_boxes, 2)")
        if areas.shape != (centers.shape[0],):
            raise ValueError("areas must have one entry per box")
        if np.any(areas <= 0):
            raise ValueError("box areas must be positive")
        if np.any((centers < 0) | (centers > 1)):
            raise ValueError("normalized centers must lie in [0, 1]")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "areas", areas)

    def __len__(self):
        return self.areas.shape[0]


@dataclass(frozen=True)
class ModelParams:
    """Trade-off weights and regularizers of the objective.

    Defaults are the video-model values (mu=0.6, mu_t=1.8, lam=0.1).
    ``kappa`` is the ridge parameter and ``prior_floor`` the clamp applied to
    the saliency prior before taking its log (``None`` disables clamping).
    """

    mu: float = 0.6
    mu_t: float = 1.8
    lam: float = 0.1
    kappa: float = 0.01
    prior_floor: float | None = 1e-6

    @classmethod
    def image(cls, **kw) -> "ModelParams":
        """Image-model defaults: mu=0.4 and no temporal term."""
        kw.setdefault("mu", 0.4)
        kw.setdefault("mu_t", 0.0)
        return cls(**kw)


def chi2_similarity(X, image_ids, gamma: float | None = None) -> np.ndarray:
    """Chi-squared appearance similarity between boxes of different images.

    ``S_ij = exp(-gamma * sum_k (x_ik - x_jk)^2 / (x_ik + x_jk))`` with
    ``gamma = (10 d)^(-1/2)``.  Coordinates where both entries are zero
    contribute nothing.  Pairs from the same image (including the diagonal)
    get zero similarity.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d feature matrix")
    if np.any(X < 0):
        raise ValueError("chi-squared similarity needs nonnegative features")
    n, d = X.shape
    ids = np.asarray(image_ids)
    if ids.shape != (n,):
        raise ValueError("need one image id per row of X")
    if gamma is None:
        gamma = (10.0 * d) ** -0.5
    S = np.empty((n, n))
    chunk = max(1, 2_000_000 // max(1, n * d))
    for a in range(0, n, chunk):
        xa = X[a:a + chunk, None, :]
        num = (xa - X[None, :, :]) ** 2
        den = xa + X[None, :, :]
        ratio = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        S[a:a + chunk] = np.exp(-gamma * ratio.sum(axis=2))
    S[ids[:, None] == ids[None, :]] = 0.0
    return S


def normalized_laplacian(S, tol: float = 1e-10) -> np.ndarray:
    """``I - D^{-1/2} S D^{-1/2}`` with ``D`` the row sums of ``S``.

    Isolated nodes (zero degree) get an identity row and column.
    """
    S = S.toarray() if sp.issparse(S) else np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("similarity must be square")
    if np.max(np.abs(S - S.T), initial=0.0) > tol:
        raise ValueError("similarity matrix is not symmetric")
    if np.any(S < 0):
        raise ValueError("similarity must be nonnegative")
    deg = S.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    pos = deg > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(deg[pos])
    L = np.eye(S.shape[0]) - inv_sqrt[:, None] * S * inv_sqrt[None, :]
    return 0.5 * (L + L.T)


def discriminative_term(X, kappa: float = 0.01) -> np.ndarray:
    """Discriminative clustering matrix from closed-form ridge regression.

    ``A = (1/n) P (I - X (X^T P X + n kappa I_d)^{-1} X^T) P`` with ``P`` the
    centering projection.  The ridge identity is ``d x d``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d feature matrix")
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least two boxes")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    Xc = X - X.mean(axis=0)  # P X
    M = Xc.T @ Xc + n * kappa * np.eye(d)
    try:
        W = scipy.linalg.solve(M, Xc.T, assume_a="pos")
    except scipy.linalg.LinAlgError as exc:
        raise ValueError("ridge system is singular") from exc
    P = np.eye(n) - 1.0 / n
    A = (P - Xc @ W) / n
    return 0.5 * (A + A.T)


def temporal_similarity(geometry: BoxGeometry, indexing: BoxIndexing) -> sp.csr_matrix:
    """Similarity of box pairs in adjacent frames of the same video.

    ``s = exp(-||c_i - c_j||_2 - |a_i - a_j| / max(a_i, a_j))``; all other
    pairs are zero.  Returned as a symmetric sparse matrix.
    """
    m = indexing.boxes_per_frame
    if len(geometry) != indexing.n_boxes:
        raise ValueError("geometry must describe every box")
    C, area = geometry.centers, geometry.areas
    rows, cols, vals = [], [], []
    p_idx, c_idx = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    for v, n in enumerate(indexing.frames_per_video):
        off = int(indexing.frame_offsets[v])
        for j in range(n - 1):
            a = (off + j) * m
            b = a + m
            dist = np.linalg.norm(C[a:b, None, :] - C[None, b:b + m, :], axis=2)
            aa, ab = area[a:b, None], area[None, b:b + m]
            s = np.exp(-dist - np.abs(aa - ab) / np.maximum(aa, ab))
            r, c = (a + p_idx).ravel(), (b + c_idx).ravel()
            rows += [r, c]
            cols += [c, r]
            vals += [s.ravel(), s.ravel()]
    n_b = indexing.n_boxes
    if not rows:
        return sp.csr_matrix((n_b, n_b))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_b, n_b)
    )


def saliency_prior_term(m_hat, lam: float = 0.1, floor: float | None = 1e-6) -> np.ndarray:
    """Linear term ``-lam * log(m_hat)``, with ``m_hat`` clamped below at ``floor``."""
    m_hat = np.asarray(m_hat, dtype=float)
    if floor is not None:
        if floor <= 0:
            raise ValueError("floor must be positive")
        m_hat = np.maximum(m_hat, floor)
    if np.any(m_hat <= 0):
        raise ValueError("saliency prior must be positive")
    return -lam * np.log(m_hat)


@dataclass(frozen=True, eq=False)
class QuadraticProblem:
    """``f(z) = z^T Q z + c^T z`` with ``Q`` symmetric PSD."""

    Q: np.ndarray
    c: np.ndarray
    mu: float = 0.0
    mu_t: float = 0.0
    lam: float = 0.0
    m_hat: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be square")
        if c.shape != (Q.shape[0],):
            raise ValueError("c must match Q")
        Q.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def value(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ (self.Q @ z) + self.c @ z)

    def gradient(self, z) -> np.ndarray:
        return 2.0 * (self.Q @ np.asarray(z, dtype=float)) + self.c

    def value_and_gradient(self, z):
        """``(f(z), grad f(z), Qz)`` from a single product with ``Q``."""
        z = np.asarray(z, dtype=float)
        Qz = self.Q @ z
        return float(z @ Qz + self.c @ z), 2.0 * Qz + self.c, Qz

    def atom_product(self, support) -> np.ndarray:
        """``Q @ indicator`` for a 0/1 vector given by its support."""
        return np.asarray(self.Q[support].sum(axis=0)).ravel()  # rows, since Q is symmetric

    def curvature(self, d) -> float:
        """``d^T Q d``; half the second derivative of ``f`` along ``d``."""
        d = np.asarray(d, dtype=float)
        return float(d @ (self.Q @ d))

    def value_grad_curv(self, z, d):
        z = np.asarray(z, dtype=float)
        Qz = self.Q @ z
        return float(z @ Qz + self.c @ z), 2.0 * Qz + self.c, self.curvature(d)

    def lipschitz(self) -> float:
        """Lipschitz constant of the gradient, ``2 * lambda_max(Q)``."""
        if "L" not in self._cache:
            n = self.n
            top = scipy.linalg.eigh(self.Q, eigvals_only=True, subset_by_index=[n - 1, n - 1])
            self._cache["L"] = 2.0 * max(float(top[0]), 0.0)
        return self._cache["L"]


def assemble(L, A, U=None, c=None, mu: float = 0.6, mu_t: float = 1.8, lam: float = 0.1,
             m_hat=None) -> QuadraticProblem:
    """``Q = L + mu * A + mu_t * U`` (symmetrized) together with the linear term ``c``.

    ``lam`` and ``m_hat`` are stored for reference only; ``c`` must already
    contain the prior.  ``U=None`` drops the temporal term, ``c=None`` means
    a zero linear term.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    A = np.asarray(A, dtype=float)
    mats = [L, A]
    if U is not None:
        U = U.toarray() if sp.issparse(U) else np.asarray(U, dtype=float)
        mats.append(U)
    for M in mats:
        if M.shape != (n, n):
            raise ValueError("all matrices must be n_b x n_b")
    Q = L + mu * A
    if U is not None:
        Q = Q + mu_t * U
    Q = 0.5 * (Q + Q.T)
    c = np.zeros(n) if c is None else np.asarray(c, dtype=float)
    if c.shape != (n,):
        raise ValueError("linear term has wrong length")
    return QuadraticProblem(Q, c, mu=mu, mu_t=mu_t if U is not None else 0.0, lam=lam,
                            m_hat=None if m_hat is None else np.asarray(m_hat, dtype=float))


def colocalization_problem(indexing: BoxIndexing, X, geometry: BoxGeometry | None, m_hat,
                           params: ModelParams = ModelParams(), S_t=None) -> QuadraticProblem:
    """Build the full objective from box features, geometry and saliency.

    ``S_t`` may be passed to reuse a precomputed temporal similarity.  The
    temporal term is skipped when ``params.mu_t == 0`` or every video has a
    single frame.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] != indexing.n_boxes:
        raise ValueError("feature matrix must have one row per box")
    L = normalized_laplacian(chi2_similarity(X, indexing.frame_ids()))
    A = discriminative_term(X, params.kappa)
    U = None
    if params.mu_t != 0 and max(indexing.frames_per_video) > 1:
        if S_t is None:
            if geometry is None:
                raise ValueError("geometry needed for the temporal term")
            S_t = temporal_similarity(geometry, indexing)
        U = normalized_laplacian(S_t)
    c = saliency_prior_term(m_hat, params.lam, params.prior_floor)
    return assemble(L, A, U, c, mu=params.mu, mu_t=params.mu_t, lam=params.lam, m_hat=m_hat)
