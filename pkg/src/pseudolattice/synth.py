"""Synthesize eigenvalue clouds inside good rectangles.

In a local action chart the eigenvalues near a good value form a deformed
lattice: ``mu_k = P(xi_k)`` with ``xi_k = h*(k - eta/4) - tau_c`` for integer
vectors ``k``, where ``P`` has leading term ``p(xi) + i*eps*<q>(xi)`` plus a
finite table of higher corrections and a seeded ``O(h^N)`` perturbation.
The cloud is restricted to a rectangle of size ``(h^delta/C0) x
(eps*h^delta/C0)`` around the chosen value, matching the vertical-to-
horizontal aspect ratio ``eps`` of the deformed lattice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .averaging import torus_average
from .models import ActionChart, ModelSystem

RESOLUTION_GUARD = 10.0  # smallest allowed eps/h separation of scales


@dataclass
class SemiclassicalParams:
    """Semiclassical parameter block: h, the coupling exponent and noise."""

    h: float
    delta: float
    noise_order: int = 3
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.h <= 0.1):
            raise ValueError("h must be in (0, 0.1]")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must be in (0, 1)")
        if self.noise_order < 1:
            raise ValueError("noise_order must be a positive integer")
        if self.epsilon / self.h < RESOLUTION_GUARD:
            raise ValueError(
                f"scales not separated: eps/h = {self.epsilon / self.h:.3g} < {RESOLUTION_GUARD}"
            )

    @property
    def epsilon(self) -> float:
        return self.h**self.delta


@dataclass
class GoodRectangle:
    """Spectral window centered at ``E + i*eps*G`` for a good value (E, G)."""

    center: complex
    half_width: float
    half_height: float
    C0: float

    def contains(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=complex)
        return (np.abs(mu.real - self.center.real) <= self.half_width) & (
            np.abs(mu.imag - self.center.imag) <= self.half_height
        )

    def corners(self) -> np.ndarray:
        w, s = self.half_width, self.half_height
        return self.center + np.array([-w - 1j * s, w - 1j * s, w + 1j * s, -w + 1j * s])


def good_rectangle(a, params: SemiclassicalParams, C0: float = 1.0, good: bool = True) -> GoodRectangle:
    """Rectangle of half-sizes ``h^delta/C0`` by ``eps*h^delta/C0`` at ``a``.

    The caller is responsible for the goodness of ``a`` (the flag is
    typically the output of the frequency exclusion tests).
    """
    if C0 < 1.0:
        raise ValueError("C0 must be >= 1")
    if not good:
        raise ValueError(f"{tuple(a)} is not a good value")
    a = np.asarray(a, dtype=float)
    eps = params.epsilon
    hw = params.h**params.delta / C0
    return GoodRectangle(
        center=complex(a[0], eps * a[1]),
        half_width=hw,
        half_height=eps * hw,
        C0=float(C0),
    )


def default_higher_coeffs(scale: float = 0.02) -> dict:
    """Deterministic table of correction coefficients C_{(a1,a2),j,k}.

    Keys are ``(a1, a2, j, k)`` with ``a1+a2+j+k <= 3`` and either ``j >= 2``
    or ``k >= 1`` (so the leading term in the separated-scale regime stays
    exactly ``p + i*eps*<q>``); entries with ``j == 0`` are real so the
    unperturbed symbol is real-valued.
    """
    table = {}
    idx = 0
    for a1 in range(4):
        for a2 in range(4):
            for j in range(4):
                for k in range(4):
                    if a1 + a2 + j + k > 3:
                        continue
                    if j < 2 and k < 1:
                        continue
                    idx += 1
                    mag = scale * (0.5 + 0.5 * np.cos(1.7 * idx))
                    if j == 0:
                        table[(a1, a2, j, k)] = complex(mag, 0.0)
                    else:
                        table[(a1, a2, j, k)] = mag * np.exp(0.9j * idx)
    return table


def _validate_coeffs(table: dict):
    for key, c in table.items():
        a1, a2, j, k = key
        if min(key) < 0 or a1 + a2 + j + k > 3:
            raise ValueError(f"coefficient index {key} out of range (total degree <= 3)")
        if j < 2 and k < 1:
            raise ValueError(f"coefficient {key} would pollute the leading term (need j>=2 or k>=1)")
        if j == 0 and abs(complex(c).imag) > 0:
            raise ValueError(f"coefficient {key} must be real (symbol is real at eps=0)")


@dataclass
class NormalFormSymbol:
    """Polynomial symbol with leading term ``p(xi) + i*eps*<q>(xi)``."""

    chart: ActionChart
    higher_coeffs: dict = field(default_factory=dict)
    noise_order: int = 3

    def __post_init__(self):
        _validate_coeffs(self.higher_coeffs)

    def leading(self, xi, eps: float) -> np.ndarray:
        a = self.chart.phi(np.asarray(xi, dtype=float))
        return a[..., 0] + 1j * eps * a[..., 1]

    def correction(self, xi, eps: float, h: float) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1], dtype=complex)
        for (a1, a2, j, k), c in self.higher_coeffs.items():
            out = out + c * xi[..., 0] ** a1 * xi[..., 1] ** a2 * eps**j * h**k
        return out

    def __call__(self, xi, eps: float, h: float) -> np.ndarray:
        return self.leading(xi, eps) + self.correction(xi, eps, h)

    def imag_correction_bound(self, eps: float, h: float) -> float:
        """Upper bound on |Im corrections| over the chart's action box."""
        box = self.chart.xi_box
        hi = np.abs(box.center) + box.half
        bound = 0.0
        for (a1, a2, j, k), c in self.higher_coeffs.items():
            bound += abs(c) * hi[0] ** a1 * hi[1] ** a2 * eps**j * h**k
        return float(bound)


@dataclass
class SpectrumCloud:
    """Synthesized eigenvalues in one good rectangle."""

    points: np.ndarray  # complex
    k_true: np.ndarray | None  # (n, 2) integers, or None in blind mode
    params: SemiclassicalParams
    rectangle: GoodRectangle

    def __len__(self):
        return len(self.points)

    def without_labels(self) -> "SpectrumCloud":
        return SpectrumCloud(self.points, None, self.params, self.rectangle)

    def to_text(self, include_k: bool = True) -> str:
        r = self.rectangle
        lines = [
            "[spectrum]",
            f"h = {self.params.h!r}",
            f"delta = {self.params.delta!r}",
            f"epsilon = {self.params.epsilon!r}",
            f"center = {r.center.real!r} {r.center.imag!r}",
            f"half = {r.half_width!r} {r.half_height!r}",
        ]
        with_k = include_k and self.k_true is not None
        lines.append("# re_mu\tim_mu" + ("\tk1\tk2" if with_k else ""))
        for i, mu in enumerate(self.points):
            row = f"{float(mu.real)!r}\t{float(mu.imag)!r}"
            if with_k:
                row += f"\t{int(self.k_true[i, 0])}\t{int(self.k_true[i, 1])}"
            lines.append(row)
        return "\n".join(lines) + "\n"


def _rect_seed(params: SemiclassicalParams, rect: GoodRectangle):
    # decorrelate rectangles while keeping runs bit-reproducible
    center_bits = np.frombuffer(
        np.array([rect.center.real, rect.center.imag], dtype="<f8").tobytes(), dtype="<u8"
    )
    return [np.uint64(params.seed), center_bits[0], center_bits[1]]


def synth_spectrum(
    symbol: NormalFormSymbol,
    a,
    params: SemiclassicalParams,
    C0: float = 1.0,
    rectangle: GoodRectangle | None = None,
    noise: bool = True,
) -> SpectrumCloud:
    """Enumerate the quantization lattice and keep points in the rectangle.

    ``xi_k = h*(k - eta/4) - tau_c``; ``mu_k = symbol(xi_k)`` plus seeded
    uniform complex noise of magnitude ``h^noise_order``.
    """
    chart = symbol.chart
    a = np.asarray(a, dtype=float)
    h, eps = params.h, params.epsilon
    rect = rectangle if rectangle is not None else good_rectangle(a, params, C0)

    # preimage of the rectangle in the value plane, sampled on a grid
    hw, hh = rect.half_width, rect.half_height
    ares = np.stack(
        np.meshgrid(
            rect.center.real + hw * np.linspace(-1, 1, 7),
            rect.center.imag / eps + (hh / eps) * np.linspace(-1, 1, 7),
            indexing="ij",
        ),
        axis=-1,
    ).reshape(-1, 2)
    if not np.all(chart.contains_value(ares, margin=1e-12)):
        raise ValueError("chart domain too small to cover the rectangle preimage")
    xis = chart.xi_of_c(ares)

    # integer bounding box, dilated so no boundary point can be missed
    kf = xis / h + chart.eta / 4.0 + chart.tau_c / h
    kmin = np.floor(kf.min(axis=0)).astype(int) - 2
    kmax = np.ceil(kf.max(axis=0)).astype(int) + 2
    k1, k2 = np.meshgrid(
        np.arange(kmin[0], kmax[0] + 1), np.arange(kmin[1], kmax[1] + 1), indexing="ij"
    )
    k = np.stack([k1.ravel(), k2.ravel()], axis=-1)
    xi_k = h * (k - chart.eta / 4.0) - chart.tau_c

    inside_chart = chart.contains_xi(xi_k, margin=2.0 * h)
    k = k[inside_chart]
    xi_k = xi_k[inside_chart]
    mu = symbol(xi_k, eps, h)

    keep = rect.contains(mu)
    k, mu = k[keep], mu[keep]

    # canonical order before applying noise: reproducibility is independent
    # of the enumeration sharding
    order = np.lexsort((k[:, 1], k[:, 0]))
    k, mu = k[order], mu[order]

    if noise and len(mu) > 0:
        rng = np.random.default_rng(_rect_seed(params, rect))
        amp = h**symbol.noise_order
        mu = mu + amp * (rng.uniform(-1, 1, len(mu)) + 1j * rng.uniform(-1, 1, len(mu)))
        keep = rect.contains(mu)
        k, mu = k[keep], mu[keep]

    return SpectrumCloud(points=mu, k_true=k, params=params, rectangle=rect)


def spectral_band(
    model: ModelSystem,
    chart: ActionChart,
    E: float,
    delta_E: float,
    params: SemiclassicalParams | None = None,
    symbol: NormalFormSymbol | None = None,
    n: int = 40,
):
    """Interval containing Im(mu) for eigenvalues with |Re(mu) - E| <= delta_E.

    The torus averages are swept over the energy leaves inside the chart's
    action box; the o(1) widening is taken from the symbol's correction
    table (plus the noise amplitude) when available.
    """
    box = chart.xi_box
    xs = np.linspace(box.center[0] - box.half[0], box.center[0] + box.half[0], n)
    ys = np.linspace(box.center[1] - box.half[1], box.center[1] + box.half[1], n)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    xis = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    p = chart.p(xis)
    on_leaf = np.abs(p - E) <= delta_E
    if not np.any(on_leaf):
        raise ValueError("no leaves intersect the requested energy window")
    avgs = np.array([torus_average(model, chart, xi) for xi in xis[on_leaf]])

    eps = params.epsilon if params is not None else 0.0
    margin = 0.0
    if symbol is not None and params is not None:
        margin = symbol.imag_correction_bound(eps, params.h) + params.h**symbol.noise_order
    if params is None:
        # dimensionless fallback: band in units of eps
        return (float(avgs.min()), float(avgs.max()))
    return (float(eps * avgs.min() - margin), float(eps * avgs.max() + margin))
