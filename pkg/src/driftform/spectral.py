"""Resolvents and semigroups of the chain generators.

The resolvent solves ``(alpha I - L) u = f`` directly; in weighted-inner-
product terms this is exactly the characterizing identity
``A_alpha(u, v) = (f, v)_mu`` for every test vector ``v``, and the residual
of that identity is attached to every solve.

Semigroups are computed by uniformization: with ``Lam`` the largest holding
rate, ``P = I + L / Lam`` is a stochastic matrix and ``exp(tL) f`` is the
Poisson-weighted sum of ``P^k f``.  The method is positivity preserving by
construction for validated generators, so the Markov-property checks probe
the model rather than the numerics.  The Poisson tail is truncated below
``POISSON_TAIL``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu
from scipy.stats import poisson

from .markov import GeneratorMatrix, RateValidationError, _philox, validate_rates
from .resistance import DENSE_CUTOFF

POISSON_TAIL = 1e-12
RESIDUAL_TOL = 1e-9


@dataclass
class ResolventSolve:
    alpha: float
    input: np.ndarray
    output: np.ndarray
    residual: float


@dataclass
class SemigroupApply:
    t: float
    input: np.ndarray
    output: np.ndarray
    truncation_order: int
    uniformization_rate: float


def resolvent_solve(gen: GeneratorMatrix, alpha: float, f) -> ResolventSolve:
    """Solve ``(alpha I - L) u = f`` and record the weighted residual
    ``max_x |A_alpha(u, 1_x) - (f, 1_x)_mu|``."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    fv = np.asarray(f, dtype=float)
    if fv.shape != (gen.n,):
        raise ValueError(f"input has shape {fv.shape}, expected ({gen.n},)")
    system = (alpha * sparse.identity(gen.n) - gen.L).tocsr()
    if gen.n < DENSE_CUTOFF:
        u = np.linalg.solve(system.toarray(), fv)
    else:
        u = splu(system.tocsc()).solve(fv)
    residual = float(np.max(np.abs(gen.mu * (system @ u - fv))))
    if residual > RESIDUAL_TOL * max(1.0, float(np.max(np.abs(fv)))):
        raise ArithmeticError(
            f"resolvent solve residual {residual:.3g} exceeds tolerance"
        )
    return ResolventSolve(alpha, fv, u, residual)


def resolvent(gen: GeneratorMatrix, alpha: float, f) -> np.ndarray:
    """Resolvent applied to ``f``; see :func:`resolvent_solve`."""
    return resolvent_solve(gen, alpha, f).output


def _uniformization(gen: GeneratorMatrix) -> tuple[sparse.csr_matrix, float]:
    if not gen.rates_valid():
        report = validate_rates(gen)
        raise RateValidationError(
            f"invalid rates on {len(report.violations)} edges; "
            "semigroup evaluation refused"
        )
    lam_max = float(np.max(gen.q)) if gen.n else 0.0
    if lam_max <= 0:
        return sparse.identity(gen.n, format="csr"), 0.0
    P = (sparse.identity(gen.n) + gen.L / lam_max).tocsr()
    return P, lam_max


def _poisson_series(P, mu_t: float, f: np.ndarray) -> tuple[np.ndarray, int]:
    if mu_t == 0.0:
        return f.copy(), 0
    order = int(poisson.isf(POISSON_TAIL / 10.0, mu_t)) + 1
    weights = poisson.pmf(np.arange(order + 1), mu_t)
    acc = weights[0] * f
    v = f
    for k in range(1, order + 1):
        v = P @ v
        acc = acc + weights[k] * v
    return acc, order


def semigroup_solve(gen: GeneratorMatrix, t: float, f) -> SemigroupApply:
    """Evaluate ``exp(tL) f`` by uniformization with certified truncation."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    fv = np.asarray(f, dtype=float)
    if fv.shape != (gen.n,):
        raise ValueError(f"input has shape {fv.shape}, expected ({gen.n},)")
    P, lam_max = _uniformization(gen)
    out, order = _poisson_series(P, lam_max * t, fv)
    return SemigroupApply(t, fv, out, order, lam_max)


def semigroup_apply(gen: GeneratorMatrix, t: float, f) -> np.ndarray:
    """Semigroup applied to ``f``; see :func:`semigroup_solve`."""
    return semigroup_solve(gen, t, f).output


def _semigroup_apply_transpose(gen: GeneratorMatrix, t: float, f: np.ndarray) -> np.ndarray:
    P, lam_max = _uniformization(gen)
    out, _ = _poisson_series(P.T.tocsr(), lam_max * t, np.asarray(f, dtype=float))
    return out


@dataclass
class MarkovCheckReport:
    t: float
    trials: int
    seed: int
    min_value: float
    max_value: float
    positivity_min: float
    ok: bool


def markov_check(
    gen: GeneratorMatrix, t: float, trials: int = 100, seed: int = 7, tol: float = 1e-10
) -> MarkovCheckReport:
    """For random ``0 <= f <= 1`` assert ``0 <= T_t f <= 1`` (within round-off),
    and positivity ``f >= 0 => T_t f >= 0``."""
    rng = _philox(seed, 2)
    lo, hi, pos = np.inf, -np.inf, np.inf
    for _ in range(trials):
        f = rng.random(gen.n)
        out = semigroup_apply(gen, t, f)
        lo = min(lo, float(out.min()))
        hi = max(hi, float(out.max()))
        pos = min(pos, float(semigroup_apply(gen, t, rng.exponential(1.0, gen.n)).min()))
    ok = lo >= -tol and hi <= 1.0 + tol and pos >= -tol
    return MarkovCheckReport(t, trials, seed, lo, hi, pos, bool(ok))


@dataclass
class GrowthCheckPoint:
    t: float
    norm_estimate: float
    bound: float
    ok: bool


def contraction_growth_check(
    gen: GeneratorMatrix,
    lam: float,
    t_grid,
    iters: int = 50,
    seed: int = 11,
    tol: float = 1e-8,
) -> list[GrowthCheckPoint]:
    """Estimate the weighted operator norm of the semigroup by power
    iteration and compare against ``exp(lam * t)``.

    The estimate is a reproducible lower bound on the true norm, adequate
    for checking an upper bound.
    """
    mu = gen.mu
    out = []
    for t in t_grid:
        rng = _philox(seed, 3)
        v = rng.standard_normal(gen.n)
        v /= np.sqrt(np.sum(mu * v * v))
        estimate = 0.0
        for _ in range(iters):
            u = semigroup_apply(gen, t, v)
            estimate = float(np.sqrt(np.sum(mu * u * u)))
            if estimate == 0.0:
                break
            w = _semigroup_apply_transpose(gen, t, mu * u) / mu
            nw = np.sqrt(np.sum(mu * w * w))
            if nw == 0.0:
                break
            v = w / nw
        bound = float(np.exp(lam * t))
        out.append(GrowthCheckPoint(float(t), estimate, bound, bool(estimate <= bound * (1 + tol))))
    return out
