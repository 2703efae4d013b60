"""Photon-number distribution recovery from off-click frequencies.

The estimator is the multiplicative maximum-likelihood iteration for the
linear click model f_k ~ P_off(eta_k) = sum_n A_kn p_n with loss weights
A_kn = (1 - eta_k)^n:

    p_n  <-  p_n * sum_k (A_kn / sum_j A_jn) * (f_k / p_off_k[p]),

where the inner sum over j runs over the efficiency grid, so the update
weights form a convex combination and exact model data is a fixed point.
Each published iterate is renormalized to unit sum; the pre-normalization sum
is kept as a diagnostic of how far the raw update drifts from mass
conservation.

The efficiency grid maps Fock components to off probabilities through a
severely ill-conditioned (Vandermonde-like) matrix, so the plain iteration
crawls through flat likelihood directions.  ``reconstruct_pn`` therefore
supports Anderson extrapolation over the log-iterates: candidate steps are
accepted only when they do not lose log-likelihood against the plain update,
which leaves the fixed points (and the exact-data invariance) untouched while
cutting the iteration count by orders of magnitude.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .detector import OnOffDataset
from .errors import IllConditionedError
from .fock import PhotonDistribution, _freeze

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 100_000

_DIV_FLOOR = 1e-300
_TRUNCATION_CAP = 200
_LOG_FLOOR = -700.0
_ANDERSON_MEMORY = 10
_SAFEGUARD_SLACK = 1e-12


@dataclass(frozen=True)
class EMConfig:
    """Iteration controls.

    ``n_max`` is the reconstruction truncation (None = data-driven default),
    ``tol`` the max-norm stopping threshold on the plain update, ``max_iter``
    the cap on update passes.  With ``accelerate`` every pass also evaluates
    one Anderson candidate (two model evaluations per pass); without it the
    loop is the bare multiplicative iteration.
    """

    n_max: int | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    accelerate: bool = True

    def __post_init__(self):
        if self.n_max is not None and self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if not (self.tol > 0):
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class EMResult:
    """Converged (or capped) reconstruction plus diagnostics.

    ``ll_history[i]`` is the binomial log-likelihood of iterate i (0 = the
    uniform start); ``residual`` is the max-norm plain update at the last
    pass and ``prenorm_sum`` the final pre-normalization mass.
    """

    distribution: PhotonDistribution
    iterations: int
    final_ll: float
    converged: bool
    residual: float
    ll_history: np.ndarray
    prenorm_sum: float
    ll_decreases: int

    def __post_init__(self):
        total = float(self.distribution.probs.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"EM iterate not normalized: sum={total!r}")
        object.__setattr__(self, "ll_history", _freeze(np.asarray(self.ll_history, float)))


def _thinning_matrix(etas: np.ndarray, n_max: int) -> np.ndarray:
    """A_kn = (1 - eta_k)^n, shape (K, n_max + 1)."""
    n = np.arange(n_max + 1)
    return np.power.outer(1.0 - etas, n)


def _binomial_ll(counts: np.ndarray, shots: int, p_off: np.ndarray) -> float:
    """sum_k [c_k ln p_k + (N - c_k) ln(1 - p_k)], degenerate terms dropped.

    A count at the boundary (c = 0 or c = N) drops the factor whose
    multiplier vanishes, so all-off vacuum data scores exactly 0.
    """
    on = shots - counts
    ll = 0.0
    with np.errstate(divide="ignore"):
        off_mask = counts > 0
        if np.any(off_mask):
            ll += float(counts[off_mask] @ np.log(p_off[off_mask]))
        on_mask = on > 0
        if np.any(on_mask):
            ll += float(on[on_mask] @ np.log1p(-p_off[on_mask]))
    return ll


def log_likelihood(p: PhotonDistribution, data: OnOffDataset) -> float:
    """Binomial log-likelihood of the observed off counts under p."""
    A = _thinning_matrix(data.grid.etas, p.n_max)
    return _binomial_ll(data.off_counts, data.shots, A @ p.probs)


def default_truncation(data: OnOffDataset) -> int:
    """Data-driven reconstruction truncation n_max.

    The mean photon number is estimated from the small-efficiency decay of
    the off frequency (-ln f_k / eta_k -> <n> as eta -> 0, since
    dP_off/deta|_0 = -<n>), taking the median over the three smallest grid
    points; the truncation then allows six standard deviations of Poisson
    headroom plus a fixed margin: ceil(m + 6 sqrt(m)) + 5.
    """
    f = np.clip(data.frequencies, 1.0 / (2.0 * data.shots), 1.0)
    k = min(3, data.grid.size)
    est = -np.log(f[:k]) / data.grid.etas[:k]
    mean_est = max(float(np.median(est)), 0.0)
    n_max = math.ceil(mean_est + 6.0 * math.sqrt(mean_est)) + 5
    return min(max(n_max, 1), _TRUNCATION_CAP)


def _model_off(A: np.ndarray, p: np.ndarray) -> np.ndarray:
    p_off = A @ p
    if np.any(p_off < _DIV_FLOOR):
        raise IllConditionedError(
            f"model off probability underflowed ({p_off.min():.3e}); "
            "iteration abandoned"
        )
    return p_off


def em_step(p: PhotonDistribution, data: OnOffDataset) -> PhotonDistribution:
    """Apply one multiplicative update to p and renormalize.

    Zeros of p are absorbing under the update, so the iterate should be
    strictly positive wherever mass may be needed.
    """
    A = _thinning_matrix(data.grid.etas, p.n_max)
    W = A / A.sum(axis=0, keepdims=True)
    p_off = _model_off(A, p.probs)
    p_new = p.probs * ((data.frequencies / p_off) @ W)
    total = float(p_new.sum())
    if not (total > 0 and math.isfinite(total)):
        raise IllConditionedError(f"update produced non-finite mass {total!r}")
    return PhotonDistribution(p_new / total)


def reconstruct_pn(data: OnOffDataset, config: EMConfig | None = None) -> EMResult:
    """Iterate from the uniform distribution until the update stalls.

    Stops when the max-norm plain update falls below ``config.tol`` or after
    ``config.max_iter`` passes; non-convergence is flagged in the result,
    never silent.  The binomial log-likelihood of every published iterate is
    recorded; it is expected (not guaranteed) to be non-decreasing, and
    decreases are counted and logged.
    """
    cfg = config or EMConfig()
    if data.grid.size < 2:
        raise ValueError("need at least 2 efficiencies")
    n_max = cfg.n_max if cfg.n_max is not None else default_truncation(data)
    A = _thinning_matrix(data.grid.etas, n_max)
    W = A / A.sum(axis=0, keepdims=True)
    freqs = data.frequencies
    counts = data.off_counts
    shots = data.shots

    p = np.full(n_max + 1, 1.0 / (n_max + 1))
    p_off = _model_off(A, p)
    ll_hist = [_binomial_ll(counts, shots, p_off)]
    log_p = np.log(p)
    prev_log_p = prev_r = None
    dx_hist: list[np.ndarray] = []
    dr_hist: list[np.ndarray] = []
    residual = math.inf
    prenorm = float("nan")
    converged = False
    iterations = 0

    for _ in range(cfg.max_iter):
        ratio = freqs / p_off
        bracket = ratio @ W
        r = np.log(np.clip(bracket, _DIV_FLOOR, None))
        if cfg.accelerate and prev_log_p is not None:
            dx_hist.append(log_p - prev_log_p)
            dr_hist.append(r - prev_r)
            if len(dx_hist) > _ANDERSON_MEMORY:
                dx_hist.pop(0)
                dr_hist.pop(0)
        prev_log_p, prev_r = log_p, r

        plain = p * bracket
        prenorm = float(plain.sum())
        if not (prenorm > 0 and math.isfinite(prenorm)):
            raise IllConditionedError(f"update produced non-finite mass {prenorm!r}")
        plain /= prenorm
        residual = float(np.max(np.abs(plain - p)))
        plain = np.clip(plain, _DIV_FLOOR, None)
        plain /= plain.sum()
        plain_off = _model_off(A, plain)
        plain_ll = _binomial_ll(counts, shots, plain_off)

        accepted = False
        if cfg.accelerate and dx_hist:
            dX = np.stack(dx_hist, axis=1)
            dR = np.stack(dr_hist, axis=1)
            gamma, *_ = np.linalg.lstsq(dR, r, rcond=None)
            x_cand = np.clip(log_p + r - (dX + dR) @ gamma, _LOG_FLOOR, 50.0)
            cand = np.exp(x_cand - x_cand.max())
            cand /= cand.sum()
            cand = np.clip(cand, _DIV_FLOOR, None)
            cand /= cand.sum()
            cand_off = _model_off(A, cand)
            cand_ll = _binomial_ll(counts, shots, cand_off)
            if cand_ll >= plain_ll - _SAFEGUARD_SLACK * max(1.0, abs(plain_ll)):
                p, p_off = cand, cand_off
                ll_hist.append(cand_ll)
                accepted = True
        if not accepted:
            p, p_off = plain, plain_off
            ll_hist.append(plain_ll)
        log_p = np.log(p)
        iterations += 1
        if residual < cfg.tol:
            converged = True
            break

    if not converged:
        logger.info(
            "EM hit max_iter=%d with residual %.3e (tol %.1e)",
            cfg.max_iter,
            residual,
            cfg.tol,
        )
    ll = np.asarray(ll_hist)
    drops = np.diff(ll) < -1e-12 * np.maximum(1.0, np.abs(ll[:-1]))
    n_drops = int(drops.sum())
    if n_drops:
        logger.debug(
            "log-likelihood decreased on %d/%d steps (worst %.3e)",
            n_drops,
            ll.size - 1,
            float(np.diff(ll)[drops].min()),
        )
    return EMResult(
        distribution=PhotonDistribution(p),
        iterations=iterations,
        final_ll=float(ll[-1]),
        converged=converged,
        residual=residual,
        ll_history=ll,
        prenorm_sum=prenorm,
        ll_decreases=n_drops,
    )
