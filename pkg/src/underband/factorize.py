"""Non-negative factorization kernels.

Two solvers share one multiplicative-update core:

* ``nmf_multiplicative`` -- Euclidean NMF, ``S ~ W V``.
* ``nmu_global`` / ``nmu_recursive`` -- non-negative matrix
  underapproximation, NMF with the extra elementwise bound ``W V <= S``,
  handled by Lagrangian relaxation with projected multiplier ascent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS = 1e-12
# feasibility tolerance, relative to max(S)
FEAS_TOL = 1e-2
# slack left by the terminal repair, relative to max(S)
REPAIR_SLACK = FEAS_TOL / 2


@dataclass(frozen=True)
class SolverConfig:
    max_outer_iters: int = 500
    inner_iters: int = 1
    rel_tol: float = 1e-6
    rng_seed: int = 0
    init_scale: float = 1.0
    mu0: float = 1.0

    def __post_init__(self):
        if self.max_outer_iters < 1 or self.inner_iters < 1:
            raise ValueError("iteration counts must be positive")
        if not (self.rel_tol > 0 and self.init_scale > 0 and self.mu0 > 0):
            raise ValueError("rel_tol, init_scale and mu0 must be positive")


@dataclass
class FactorPair:
    """Non-negative factors ``w`` (I x J) and ``v`` (J x K).

    ``history`` holds the objective value after every outer iteration
    (index 0 is the value at the initial point).
    """

    w: np.ndarray
    v: np.ndarray
    history: list[float] = field(default_factory=list, compare=False, repr=False)

    @property
    def rank(self) -> int:
        return self.w.shape[1]

    def product(self) -> np.ndarray:
        return self.w @ self.v


@dataclass
class NmuState:
    factors: FactorPair
    lam: np.ndarray
    outer_iter: int

    def violation(self, s: np.ndarray) -> float:
        """Largest amount by which ``W V`` exceeds ``S`` (0 when feasible)."""
        return max(float(np.max(self.factors.product() - s)), 0.0)


def _check_rank(i: int, k: int, rank: int) -> None:
    if not 1 <= rank < min(i, k):
        raise ValueError(f"rank must satisfy 1 <= rank < min(I, K) = {min(i, k)}, got {rank}")


def _check_target(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("matrix contains non-finite entries")
    if np.any(s < 0):
        raise ValueError("matrix has negative entries")
    return s


def _check_pair(s: np.ndarray, pair: FactorPair) -> None:
    i, k = s.shape
    if pair.w.ndim != 2 or pair.v.ndim != 2:
        raise ValueError("factors must be 2-D")
    if pair.w.shape[0] != i or pair.v.shape[1] != k or pair.w.shape[1] != pair.v.shape[0]:
        raise ValueError(
            f"factor shapes {pair.w.shape} x {pair.v.shape} do not match matrix {s.shape}"
        )


def init_random(i: int, k: int, rank: int, seed: int, scale: float = 1.0) -> FactorPair:
    """Uniform random strictly positive factors on ``(0, scale]``.

    Exact zeros are absorbing under multiplicative updates, so the open
    end of the interval is at zero.
    """
    _check_rank(i, k, rank)
    if scale <= 0:
        raise ValueError("scale must be positive")
    rng = np.random.default_rng(seed)
    # random() draws from [0, 1); 1 - u lies in (0, 1]
    w = scale * (1.0 - rng.random((i, rank)))
    v = scale * (1.0 - rng.random((rank, k)))
    return FactorPair(w, v)


def reconstruction_error(s, pair: FactorPair) -> float:
    """Squared Frobenius norm ``||S - W V||_F^2``."""
    s = np.asarray(s, dtype=float)
    _check_pair(s, pair)
    r = s - pair.product()
    return float(np.vdot(r, r))


def _mu_step(t: np.ndarray, w: np.ndarray, v: np.ndarray, t_neg: np.ndarray | None = None):
    # one sweep of Lee-Seung Euclidean updates towards target t - t_neg,
    # t and t_neg both non-negative; the negative part joins the denominator
    if t_neg is None:
        w = w * (t @ v.T) / np.maximum(w @ (v @ v.T), EPS)
        v = v * (w.T @ t) / np.maximum((w.T @ w) @ v, EPS)
    else:
        w = w * (t @ v.T) / np.maximum(w @ (v @ v.T) + t_neg @ v.T, EPS)
        v = v * (w.T @ t) / np.maximum((w.T @ w) @ v + w.T @ t_neg, EPS)
    return w, v


def nmf_multiplicative(s, init: FactorPair, cfg: SolverConfig = SolverConfig()) -> FactorPair:
    """Euclidean NMF by alternating multiplicative updates.

    Parameters
    ----------
    s : (I, K) array_like
        Non-negative data matrix.
    init : FactorPair
        Strictly positive starting point, e.g. from :func:`init_random`.
    cfg : SolverConfig
        Iteration limits.  The loop stops after ``max_outer_iters`` sweeps
        or once the relative objective decrease drops below ``rel_tol``.

    Returns
    -------
    FactorPair
        Final factors; ``history`` records the objective per sweep and is
        non-increasing.
    """
    s = _check_target(s)
    _check_pair(s, init)
    w = np.array(init.w, dtype=float)
    v = np.array(init.v, dtype=float)
    obj = reconstruction_error(s, FactorPair(w, v))
    history = [obj]
    for _ in range(cfg.max_outer_iters):
        w, v = _mu_step(s, w, v)
        new = reconstruction_error(s, FactorPair(w, v))
        history.append(new)
        done = obj - new < cfg.rel_tol * max(obj, EPS)
        obj = new
        if done:
            break
    return FactorPair(w, v, history)


def repair_feasibility(s: np.ndarray, pair: FactorPair, slack: float) -> FactorPair:
    """Shrink activation columns so that ``W V <= S + slack`` holds exactly.

    Column ``k`` of ``V`` is scaled by ``min_i (S_ik + slack) / (WV)_ik``
    wherever that ratio is below one.  ``W`` is left untouched, so the
    frequency profiles used as filters keep their shape.
    """
    p = pair.product()
    over = p > s + slack
    if not over.any():
        return pair
    ratio = np.ones_like(p)
    ratio[over] = (s[over] + slack) / p[over]
    return FactorPair(pair.w, pair.v * ratio.min(axis=0), pair.history)


def nmu_global(
    s,
    init: FactorPair,
    cfg: SolverConfig = SolverConfig(),
    lam: np.ndarray | None = None,
    start_iter: int = 1,
) -> NmuState:
    """Rank-J underapproximation ``min ||S - WV||_F^2`` s.t. ``WV <= S``.

    Each outer pass runs ``cfg.inner_iters`` multiplicative sweeps on the
    shifted target ``S - lam`` and then takes a projected ascent step
    ``lam <- max(0, lam + mu0 / t * (WV - S))``.  The shifted target can go
    negative; its negative part enters the update denominators, which keeps
    the factors non-negative.  With ``lam = 0`` the first pass is a plain
    NMF sweep.

    The loop stops early once the objective has settled and the constraint
    holds to ``FEAS_TOL * max(S)``.  Whatever violation remains after the
    last pass is removed by :func:`repair_feasibility` with slack
    ``REPAIR_SLACK * max(S)``.  Passing a previous ``lam`` and
    ``start_iter`` resumes a run.
    """
    s = _check_target(s)
    _check_pair(s, init)
    if np.any(init.w <= 0) or np.any(init.v <= 0):
        raise ValueError("initial factors must be strictly positive")
    w = np.array(init.w, dtype=float)
    v = np.array(init.v, dtype=float)
    lam = np.zeros_like(s) if lam is None else np.array(lam, dtype=float)
    if lam.shape != s.shape:
        raise ValueError("multiplier shape does not match matrix")
    smax = float(s.max())
    tol = FEAS_TOL * smax

    obj = reconstruction_error(s, FactorPair(w, v))
    history = [obj]
    pos = np.empty_like(s)
    neg = np.empty_like(s)
    gap = np.empty_like(s)
    t = start_iter
    for t in range(start_iter, start_iter + cfg.max_outer_iters):
        np.subtract(s, lam, out=pos)
        np.negative(pos, out=neg)
        np.maximum(pos, 0.0, out=pos)
        np.maximum(neg, 0.0, out=neg)
        for _ in range(cfg.inner_iters):
            w, v = _mu_step(pos, w, v, neg)
        np.matmul(w, v, out=gap)
        gap -= s
        new = float(np.vdot(gap, gap))
        history.append(new)
        worst = float(gap.max())
        gap *= cfg.mu0 / t
        lam += gap
        np.maximum(lam, 0.0, out=lam)
        settled = abs(obj - new) < cfg.rel_tol * max(obj, EPS)
        obj = new
        if settled and worst <= tol:
            break
    pair = repair_feasibility(s, FactorPair(w, v, history), REPAIR_SLACK * smax)
    return NmuState(pair, lam, t)


def _leading_pair(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u, sv, vt = np.linalg.svd(m, full_matrices=False)
    x, y = np.abs(u[:, 0]) * np.sqrt(sv[0]), np.abs(vt[0]) * np.sqrt(sv[0])
    return x, y


def nmu_rank1(r, cfg: SolverConfig = SolverConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Rank-one underapproximation of ``max(R, 0)``.

    Starts from the leading singular pair of ``max(R, 0)`` and alternates
    exact least-squares updates of ``w`` and ``v`` on ``max(R - lam, 0)``
    with the multiplier ascent ``lam <- max(0, lam + mu0 / t * (w v^T - R))``.
    Returns zero vectors when ``R`` has no positive entry.  The returned
    pair satisfies ``w v^T <= max(R, 0) + REPAIR_SLACK * max(R)``: any larger
    violation left after the last pass is removed by shrinking ``v``.
    """
    r = np.asarray(r, dtype=float)
    if r.ndim != 2 or not np.all(np.isfinite(r)):
        raise ValueError("expected a finite 2-D matrix")
    i, k = r.shape
    rmax = float(r.max())
    if rmax <= 0:
        return np.zeros(i), np.zeros(k)
    tol = FEAS_TOL * rmax
    rp = np.maximum(r, 0.0)
    w, v = _leading_pair(rp)
    lam = np.zeros_like(r)
    obj = np.inf
    for t in range(1, cfg.max_outer_iters + 1):
        target = np.maximum(r - lam, 0.0)
        for _ in range(cfg.inner_iters):
            vv = v @ v
            if vv <= 0:
                return np.zeros(i), np.zeros(k)
            w = target @ v / vv
            ww = w @ w
            if ww <= 0:
                return np.zeros(i), np.zeros(k)
            v = target.T @ w / ww
        gap = np.outer(w, v) - r
        lam = np.maximum(0.0, lam + (cfg.mu0 / t) * gap)
        resid = np.outer(w, v) - rp
        new = float(np.vdot(resid, resid))
        settled = abs(obj - new) < cfg.rel_tol * max(new, EPS)
        obj = new
        if settled and (np.outer(w, v) - rp).max() <= tol:
            break
    # multiplier ascent alone approaches feasibility slowly; finish by
    # shrinking v onto {v : w v^T <= max(R, 0) + slack} for the current w
    pair = repair_feasibility(rp, FactorPair(w[:, None], v[None, :]), REPAIR_SLACK * rmax)
    return w, pair.v[0]


def nmu_recursive(s, rank: int, cfg: SolverConfig = SolverConfig()) -> FactorPair:
    """Rank-J underapproximation by repeated rank-one extraction and deflation."""
    s = _check_target(s)
    i, k = s.shape
    _check_rank(i, k, rank)
    r = s.copy()
    ws, vs = [], []
    for _ in range(rank):
        w, v = nmu_rank1(r, cfg)
        ws.append(w)
        vs.append(v)
        r = r - np.outer(w, v)
        # underapproximation keeps R >= -tol; drop the numerical remainder
        r = np.maximum(r, 0.0)
    return FactorPair(np.column_stack(ws), np.vstack(vs))
