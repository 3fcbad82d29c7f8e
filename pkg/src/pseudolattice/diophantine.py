"""Diophantine frequency tests, good-value sets and bad-set measure.

The non-resonance condition on a frequency vector ``omega`` is
``|<omega, k>| >= alpha / |k|^(1+d)`` for all nonzero integer ``k`` with
``|k| <= k_max`` (a truncated decision: beyond the truncation radius the
test is necessary-only).  The sweep is reduced exactly to O(k_max)
candidates: for each value of one component of ``k`` only the integers
nearest the resonance line can violate the bound (anything two or more
steps away exceeds the axis margin, which is checked first).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import ActionChart, ModelSystem, frequency


@dataclass
class DiophantineParams:
    alpha: float
    d: float = 1.0
    k_max: int = 10_000

    def __post_init__(self):
        if self.alpha <= 0 or self.d <= 0:
            raise ValueError("alpha and d must be positive")
        if self.k_max < 100:
            raise ValueError("k_max must be at least 100")


def diophantine_margin(omega, params: DiophantineParams):
    """Worst margin ``min_k |<omega,k>| * |k|^(1+d)`` over the truncated sweep.

    Returns ``(margin, k_witness)``; the frequency passes the test iff
    ``margin >= alpha``.
    """
    omega = np.asarray(omega, dtype=float)
    if np.all(omega == 0.0):
        raise ValueError("omega must be nonzero")
    margin, witness = _margins(omega[None, :], params)
    return float(margin[0]), tuple(int(x) for x in witness[0])


def _margins(omegas, params: DiophantineParams):
    """Vectorized worst margins for a batch of frequency vectors."""
    omegas = np.asarray(omegas, dtype=float)
    n = omegas.shape[0]
    km = params.k_max
    power = 1.0 + params.d

    best = np.full(n, np.inf)
    best_k = np.zeros((n, 2), dtype=np.int64)

    def consider(val, k1, k2):
        nonlocal best, best_k
        normk = np.sqrt(k1.astype(float) ** 2 + k2.astype(float) ** 2)
        inside = (normk > 0) & (normk <= km)
        m = np.where(inside, np.abs(val) * normk**power, np.inf)
        upd = m < best
        best = np.where(upd, m, best)
        best_k[upd, 0] = k1[upd] if k1.shape else k1
        best_k[upd, 1] = k2[upd] if k2.shape else k2

    # axis vectors
    for k1, k2 in ((1, 0), (0, 1)):
        kk1 = np.full(n, k1, dtype=np.int64)
        kk2 = np.full(n, k2, dtype=np.int64)
        consider(omegas[:, 0] * k1 + omegas[:, 1] * k2, kk1, kk2)

    # mixed vectors: solve for the component with the larger coefficient so
    # that the non-candidate integers are >= 1.5*max|omega| away in value
    swap = np.abs(omegas[:, 1]) < np.abs(omegas[:, 0])
    wa = np.where(swap, omegas[:, 1], omegas[:, 0])  # coefficient of the swept index
    wb = np.where(swap, omegas[:, 0], omegas[:, 1])  # larger coefficient, solved index
    ks = np.arange(1, km + 1, dtype=np.int64)
    # process in chunks to bound memory
    chunk = max(1, int(2e6 // max(n, 1)))
    for start in range(0, km, chunk):
        kc = ks[start : start + chunk]
        ratio = -(wa[:, None] * kc[None, :]) / wb[:, None]
        base = np.floor(ratio)
        for off in (0.0, 1.0):
            kb = (base + off).astype(np.int64)
            val = wa[:, None] * kc[None, :] + wb[:, None] * kb
            ka_full = np.broadcast_to(kc[None, :], kb.shape)
            k1 = np.where(swap[:, None], kb, ka_full)
            k2 = np.where(swap[:, None], ka_full, kb)
            normk = np.sqrt(k1.astype(float) ** 2 + k2.astype(float) ** 2)
            inside = (normk > 0) & (normk <= km)
            m = np.where(inside, np.abs(val) * normk**power, np.inf)
            idx = np.argmin(m, axis=1)
            rows = np.arange(n)
            mv = m[rows, idx]
            upd = mv < best
            best = np.where(upd, mv, best)
            best_k[upd, 0] = k1[rows, idx][upd]
            best_k[upd, 1] = k2[rows, idx][upd]
    return best, best_k


def is_diophantine(omega, params: DiophantineParams) -> bool:
    """Truncated (alpha, d)-non-resonance decision for a frequency vector."""
    margin, _ = diophantine_margin(omega, params)
    return bool(margin >= params.alpha)


def are_diophantine(omegas, params: DiophantineParams) -> np.ndarray:
    """Vectorized version of :func:`is_diophantine` for an (n, 2) batch."""
    margins, _ = _margins(np.asarray(omegas, dtype=float), params)
    return margins >= params.alpha


@dataclass
class GoodValueSet:
    """Grid of candidate values with the four exclusion flags per node."""

    grid: np.ndarray  # (n, 2) values a = (E, G)
    diophantine_ok: np.ndarray
    dq_ok: np.ndarray
    omega_prime_ok: np.ndarray
    singular_ok: np.ndarray
    params: DiophantineParams = field(default=None)

    @property
    def good(self) -> np.ndarray:
        return self.diophantine_ok & self.dq_ok & self.omega_prime_ok & self.singular_ok

    @property
    def good_fraction(self) -> float:
        return float(np.mean(self.good))

    def to_text(self) -> str:
        lines = ["# E\tG\tdiophantine\tdq\tomega_prime\tsingular\tgood"]
        for a, f1, f2, f3, f4, g in zip(
            self.grid, self.diophantine_ok, self.dq_ok, self.omega_prime_ok, self.singular_ok, self.good
        ):
            lines.append(
                f"{float(a[0])!r}\t{float(a[1])!r}\t{int(f1)}\t{int(f2)}\t{int(f3)}\t{int(f4)}"
                f"\t{int(g)}"
            )
        return "\n".join(lines) + "\n"


def good_values(
    model: ModelSystem,
    chart: ActionChart,
    params: DiophantineParams,
    grid_spec,
) -> GoodValueSet:
    """Evaluate the four exclusion clauses on a grid of candidate values.

    ``grid_spec`` is either an integer n (an n x n grid over the chart
    domain) or an (m, 2) array of values inside the chart domain.  On the
    tori that pass the non-resonance test the flow is ergodic, so the
    admissible vertical position reduces to the torus average itself.
    """
    if np.isscalar(grid_spec):
        grid = chart.domain.grid(int(grid_spec))
    else:
        grid = np.atleast_2d(np.asarray(grid_spec, dtype=float))
    if grid.size == 0:
        raise ValueError("empty grid")
    if not np.all(chart.contains_value(grid, margin=1e-9)):
        raise ValueError("grid_spec must lie inside the chart domain")

    xis = chart.xi_of_c(grid)
    freqs = [frequency(chart, xi) for xi in xis]
    omegas = np.array([f.omega for f in freqs])
    dio = are_diophantine(omegas, params)
    dq = np.array([np.linalg.norm(f.d_avg_q) for f in freqs]) >= params.alpha
    wp = np.array([f.omega_prime_norm for f in freqs]) >= params.alpha
    sing = np.asarray(model.dist_to_singular(grid)) >= params.alpha
    return GoodValueSet(
        grid=grid,
        diophantine_ok=dio,
        dq_ok=dq,
        omega_prime_ok=np.asarray(wp),
        singular_ok=np.atleast_1d(sing),
        params=params,
    )


def is_good_value(model, chart, a, params: DiophantineParams) -> bool:
    """Single-value version of the good-value test."""
    gv = good_values(model, chart, params, np.atleast_2d(np.asarray(a, dtype=float)))
    return bool(gv.good[0])


def bad_measure_estimate(
    model: ModelSystem,
    chart: ActionChart,
    d: float,
    alpha_list,
    samples: int = 10_000,
    rng=None,
    k_max: int = 500,
):
    """Monte-Carlo fraction of bad values per alpha (for the O(alpha) check).

    Common random nodes are used across the alpha list, so monotonicity in
    alpha is exact rather than up to sampling noise.
    """
    alpha_list = list(alpha_list)
    if any(a2 >= a1 for a1, a2 in zip(alpha_list, alpha_list[1:])):
        raise ValueError("alpha_list must be strictly decreasing")
    if samples < 10_000:
        raise ValueError("need at least 1e4 Monte-Carlo nodes")
    rng = np.random.default_rng(rng)
    lo = chart.domain.center - chart.domain.half
    hi = chart.domain.center + chart.domain.half
    pts = lo + (hi - lo) * rng.random((samples, 2))
    xis = chart.xi_of_c(pts)
    # frequencies in bulk via the chart Jacobian
    J = chart.d_xi(pts)
    dphi = np.linalg.inv(J)
    omegas = dphi[:, 0, :]
    dq = np.linalg.norm(dphi[:, 1, :], axis=-1)
    sing = np.asarray(model.dist_to_singular(pts))
    wprime = _omega_prime_sv(chart, xis)
    params0 = DiophantineParams(alpha=min(alpha_list), d=d, k_max=k_max)
    margins, _ = _margins(omegas, params0)
    out = []
    for alpha in alpha_list:
        bad = (margins < alpha) | (dq < alpha) | (sing < alpha) | (wprime < alpha)
        out.append((float(alpha), float(np.mean(bad))))
    return out


def _omega_prime_sv(chart: ActionChart, xis) -> np.ndarray:
    """Smallest singular value of d(omega)/d(xi), vectorized over points."""
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    h2 = 3e-4 * (1.0 + np.linalg.norm(xis, axis=-1, keepdims=True))
    offs = np.array(
        [[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [1, -1], [-1, 1], [-1, -1], [0, 0]],
        dtype=float,
    )
    p = np.stack([chart.p(xis + h2 * o) for o in offs], axis=0)
    s = h2[..., 0] ** 2
    hxx = (p[0] - 2 * p[8] + p[1]) / s
    hyy = (p[2] - 2 * p[8] + p[3]) / s
    hxy = (p[4] - p[5] - p[6] + p[7]) / (4 * s)
    hess = np.empty(xis.shape[:-1] + (2, 2))
    hess[..., 0, 0] = hxx
    hess[..., 0, 1] = hxy
    hess[..., 1, 0] = hxy
    hess[..., 1, 1] = hyy
    return np.linalg.svd(hess, compute_uv=False)[..., -1]
