"""Exact optimal transport between empirical distributions.

The distance between two levels is the Wasserstein distance between the
state-action occupancy samples a fixed policy produces on them. ``emd``
solves the discrete transport problem exactly; ``level_distance`` is the
subsampled W_1 estimator applied to occupancy sample sets. ``sinkhorn`` is
an opt-in entropic approximation for inputs past the exact-solve size cap.

Two exact routes, both vertex solutions of the transport polytope:

* uniform weights with equal atom counts reduce to an assignment problem
  (solved by scipy's Jonker-Volgenant implementation);
* the general case goes through the HiGHS LP solver on the marginal
  equality constraints.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

_MARGINAL_TOL = 1e-7


class TransportSizeError(ValueError):
    """Exact solve refused; subsample (see level_distance) or use sinkhorn."""


class SinkhornDivergedError(RuntimeError):
    """Sinkhorn failed to meet the marginal tolerance within its budget."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"sinkhorn residual {residual:.3e} after {iterations} iterations"
        )
        self.residual = residual


@dataclass
class SampleSet:
    """Weighted point cloud standing in for an occupancy distribution."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.points.ndim != 2 or len(self.points) == 0:
            raise ValueError("points must be a non-empty (n, d) array")
        if self.weights.shape != (len(self.points),):
            raise ValueError("one weight per point required")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1 (got {self.weights.sum()!r})")

    @classmethod
    def uniform(cls, points: np.ndarray) -> "SampleSet":
        points = np.asarray(points, dtype=np.float64)
        n = len(points)
        return cls(points, np.full(n, 1.0 / n))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class CostMatrix:
    matrix: np.ndarray
    metric: str = "euclidean"
    exponent: float = 1.0


@dataclass
class TransportPlan:
    """Coupling whose marginals reproduce the two input weight vectors."""

    plan: np.ndarray
    source_weights: np.ndarray
    target_weights: np.ndarray

    def __post_init__(self):
        row_err = np.abs(self.plan.sum(axis=1) - self.source_weights).max()
        col_err = np.abs(self.plan.sum(axis=0) - self.target_weights).max()
        if max(row_err, col_err) > _MARGINAL_TOL:
            raise ValueError(f"plan marginals off by {max(row_err, col_err):.3e}")


@dataclass
class OtConfig:
    """Knobs for the level-distance estimator."""

    max_samples: int = 64
    size_cap: int = 256
    subsample_seed: int = 0


def ground_cost(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two feature vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def cost_matrix(p: SampleSet, q: SampleSet, exponent: float = 1.0) -> CostMatrix:
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    c = cdist(p.points, q.points)
    if exponent != 1.0:
        c = c**exponent
    return CostMatrix(matrix=c, exponent=exponent)


def _solve_assignment(c: np.ndarray, n: int) -> tuple[float, np.ndarray]:
    rows, cols = linear_sum_assignment(c)
    plan = np.zeros_like(c)
    plan[rows, cols] = 1.0 / n
    return float(c[rows, cols].sum() / n), plan

def _solve_lp(c: np.ndarray, wp: np.ndarray, wq: np.ndarray) -> tuple[float, np.ndarray]:
    n, m = c.shape
    rows = np.concatenate([np.repeat(np.arange(n), m), n + np.tile(np.arange(m), n)])
    cols = np.concatenate([np.arange(n * m), np.arange(n * m)])
    a_eq = sp.csr_matrix((np.ones(2 * n * m), (rows, cols)), shape=(n + m, n * m))
    res = linprog(
        c.ravel(),
        A_eq=a_eq,
        b_eq=np.concatenate([wp, wq]),
        bounds=(0, None),
        method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun), res.x.reshape(n, m)


def _canonical_order(p: SampleSet, q: SampleSet) -> bool:
    """Stable argument ordering so emd(p, q) and emd(q, p) run the solver
    on the bit-identical problem (exact symmetry, not just up to rounding)."""
    kp = (len(p), p.points.tobytes(), p.weights.tobytes())
    kq = (len(q), q.points.tobytes(), q.weights.tobytes())
    return kp <= kq


def emd(
    p: SampleSet, q: SampleSet, exponent: float = 1.0, size_cap: int = 256
) -> tuple[float, TransportPlan]:
    """Exact W_p between two sample sets, with the optimal plan.

    Refuses problems larger than size_cap x size_cap; callers with big
    clouds should subsample (level_distance does) or fall back to sinkhorn.
    """
    if exponent < 1:
        raise ValueError("exponent must be >= 1")
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    if not _canonical_order(p, q):
        distance, plan = emd(q, p, exponent, size_cap)
        return distance, TransportPlan(
            plan=np.ascontiguousarray(plan.plan.T),
            source_weights=p.weights,
            target_weights=q.weights,
        )
    n, m = len(p), len(q)
    if n * m > size_cap * size_cap:
        raise TransportSizeError(
            f"{n}x{m} exceeds the exact-solve cap ({size_cap}x{size_cap}); "
            "subsample the inputs or use sinkhorn()"
        )
    c = cost_matrix(p, q, exponent).matrix

    uniform = (
        np.abs(p.weights - 1.0 / n).max() < 1e-12
        and np.abs(q.weights - 1.0 / m).max() < 1e-12
    )
    if n == 1 or m == 1:
        # Mass flow is forced; no solve needed.
        plan = np.outer(p.weights, q.weights)
        cost = float((plan * c).sum())
    elif uniform and n == m:
        cost, plan = _solve_assignment(c, n)
    else:
        cost, plan = _solve_lp(c, p.weights, q.weights)

    cost = max(cost, 0.0)
    distance = cost ** (1.0 / exponent) if exponent != 1.0 else cost
    return distance, TransportPlan(plan=plan, source_weights=p.weights, target_weights=q.weights)


def _subsample(s: SampleSet, size: int, base_seed: int) -> SampleSet:
    """Uniform subsample without replacement, seeded by set content.

    Content-derived seeding keeps level_distance symmetric in its
    arguments and reproducible across processes.
    """
    if len(s) <= size:
        return s
    digest = zlib.crc32(np.ascontiguousarray(s.points).tobytes())
    rng = np.random.default_rng(np.random.SeedSequence([base_seed, digest, len(s)]))
    idx = rng.choice(len(s), size=size, replace=False)
    return SampleSet.uniform(s.points[np.sort(idx)])


def level_distance(a: SampleSet, b: SampleSet, cfg: OtConfig | None = None) -> float:
    """Empirical W_1 between two levels' occupancy sample sets.

    Both sets are subsampled to a common size (at most cfg.max_samples) so
    the exact solve always runs on uniform equal-count clouds, which is the
    cheap assignment route.
    """
    cfg = cfg or OtConfig()
    size = min(len(a), len(b), cfg.max_samples)
    a_sub = _subsample(a, size, cfg.subsample_seed)
    b_sub = _subsample(b, size, cfg.subsample_seed)
    distance, _ = emd(a_sub, b_sub, exponent=1.0, size_cap=cfg.size_cap)
    return distance


def sinkhorn(
    p: SampleSet,
    q: SampleSet,
    exponent: float = 1.0,
    eps_reg: float = 1e-2,
    iters: int = 10_000,
    marginal_tol: float = 1e-6,
) -> tuple[float, TransportPlan]:
    """Entropically regularized transport cost (log-domain iterations).

    Returns the unregularized cost of the regularized plan, so values are
    directly comparable to emd(); they approach it as eps_reg shrinks.
    Raises SinkhornDivergedError if the marginal residual never reaches
    marginal_tol.
    """
    if eps_reg <= 0:
        raise ValueError("eps_reg must be positive")
    c = cost_matrix(p, q, exponent).matrix
    log_wp = np.log(p.weights)
    log_wq = np.log(q.weights)
    f = np.zeros(len(p))
    g = np.zeros(len(q))

    def _logsumexp(mat: np.ndarray, axis: int) -> np.ndarray:
        mx = mat.max(axis=axis, keepdims=True)
        return (mx + np.log(np.exp(mat - mx).sum(axis=axis, keepdims=True))).squeeze(axis)

    # Anneal the temperature down to eps_reg; warm-started potentials keep
    # the tiny-regularization regime tractable.
    eps0 = max(float(c.max()) if c.size else eps_reg, eps_reg)
    residual = np.inf
    for it in range(1, iters + 1):
        eps_t = max(eps_reg, eps0 * 0.75**it)
        m = (f[:, None] + g[None, :] - c) / eps_t
        f = f + eps_t * (log_wp - _logsumexp(m, axis=1))
        m = (f[:, None] + g[None, :] - c) / eps_t
        g = g + eps_t * (log_wq - _logsumexp(m, axis=0))
        plan = np.exp((f[:, None] + g[None, :] - c) / eps_t)
        residual = max(
            np.abs(plan.sum(axis=1) - p.weights).max(),
            np.abs(plan.sum(axis=0) - q.weights).max(),
        )
        if eps_t <= eps_reg and residual <= marginal_tol:
            plan = _round_to_marginals(plan, p.weights, q.weights)
            cost = float((plan * c).sum())
            distance = cost ** (1.0 / exponent) if exponent != 1.0 else max(cost, 0.0)
            return distance, TransportPlan(plan, p.weights, q.weights)
    raise SinkhornDivergedError(residual, iters)


def _round_to_marginals(plan: np.ndarray, wp: np.ndarray, wq: np.ndarray) -> np.ndarray:
    """Project a near-feasible nonnegative plan onto exact marginals: scale rows
    and columns down where they overshoot, then spread the leftover mass as
    a rank-one correction. Preserves nonnegativity."""
    r = plan.sum(axis=1)
    plan = plan * np.minimum(1.0, wp / np.maximum(r, 1e-300))[:, None]
    s = plan.sum(axis=0)
    plan = plan * np.minimum(1.0, wq / np.maximum(s, 1e-300))[None, :]
    err_p = wp - plan.sum(axis=1)
    err_q = wq - plan.sum(axis=0)
    total = err_p.sum()
    if total > 0:
        plan = plan + np.outer(err_p, err_q) / total
    return plan
