"""Reference integrable systems and their local action-angle charts.

Two 2-degree-of-freedom models are provided:

* a *flat* model, defined directly in angle-action variables, with global
  action coordinates (trivial monodromy);
* a *champagne-bottle* model ``H = (p_r^2 + p_theta^2/r^2)/2 + r^4 - b r^2``
  whose momentum map has an isolated focus-focus critical value at the
  origin of the value plane (nontrivial monodromy).

A chart maps between the value plane ``a = (E, G)`` -- energy and torus
average of the perturbation -- and local action variables ``xi``.  For the
champagne model the radial action is computed by Gauss-Legendre quadrature
with turning-point substitutions and cached on a bivariate spline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import RectBivariateSpline

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0

# finite-difference step for frequencies: balances truncation vs rounding
FD_STEP = 1e-5


class ModelError(ValueError):
    """Raised for invalid model parameters or values outside the model range."""


@dataclass
class Rect:
    """Axis-aligned rectangle given by center and half-sizes."""

    center: np.ndarray
    half: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.half = np.asarray(self.half, dtype=float)

    def contains(self, pts, margin: float = 0.0) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        d = np.abs(pts - self.center) - (self.half + margin)
        return np.all(d <= 0.0, axis=-1)

    def corners(self) -> np.ndarray:
        sx, sy = self.half
        cx, cy = self.center
        return np.array(
            [[cx - sx, cy - sy], [cx + sx, cy - sy], [cx + sx, cy + sy], [cx - sx, cy + sy]]
        )

    def grid(self, n: int) -> np.ndarray:
        xs = np.linspace(self.center[0] - self.half[0], self.center[0] + self.half[0], n)
        ys = np.linspace(self.center[1] - self.half[1], self.center[1] + self.half[1], n)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=-1)


class AnglePolynomial:
    """Trigonometric polynomial in the angles with action-dependent coefficients.

    ``q(x, xi) = sum_m coeff_m(xi) * cos(m1*x1 + m2*x2)``.  The ``(0, 0)``
    coefficient is the torus average.
    """

    def __init__(self, terms):
        # terms: list of ((m1, m2), coeff) with coeff a float or callable(xi)
        self.terms = [
            (tuple(m), c if callable(c) else (lambda xi, _c=float(c): np.full(np.shape(xi)[:-1], _c)))
            for m, c in terms
        ]

    def __call__(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(np.broadcast_shapes(x.shape[:-1], xi.shape[:-1]))
        for m, coeff in self.terms:
            phase = m[0] * x[..., 0] + m[1] * x[..., 1]
            out = out + coeff(xi) * np.cos(phase)
        return out

    def mean(self, xi):
        """Exact torus average: the constant-in-angle coefficient."""
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(np.shape(xi)[:-1])
        for m, coeff in self.terms:
            if m == (0, 0):
                out = out + coeff(xi)
        return out


# ---------------------------------------------------------------------------
# model base
# ---------------------------------------------------------------------------


class ModelSystem:
    """Base class for integrable reference systems.

    Subclasses provide the Hamiltonian in action variables, the perturbation
    symbol, Maslov indices and the geometry of the momentum-map critical set,
    plus closed-form (or quadrature-backed) maps between the value plane and
    action variables.
    """

    name: str
    q_symbol: AnglePolynomial
    maslov_eta: np.ndarray
    regular_region: Rect

    def p_of_xi(self, xi):
        raise NotImplementedError

    def avg_q(self, xi):
        return self.q_symbol.mean(xi)

    def dist_to_singular(self, a) -> np.ndarray:
        raise NotImplementedError

    def is_regular(self, a) -> np.ndarray:
        raise NotImplementedError

    def xi_from_value(self, a, shear: int = 0):
        raise NotImplementedError

    def value_from_xi(self, xi, shear: int = 0):
        raise NotImplementedError

    def omega(self, xi):
        """Frequency d p/d xi by central differences."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        h = FD_STEP * (1.0 + np.linalg.norm(xi, axis=-1, keepdims=True))
        out = np.empty_like(xi)
        for j in range(2):
            e = np.zeros(2)
            e[j] = 1.0
            out[..., j] = (self.p_of_xi(xi + h * e) - self.p_of_xi(xi - h * e)) / (2.0 * h[..., 0])
        return out if out.shape[0] > 1 else out[0]


class FlatModel(ModelSystem):
    """Globally chart-able model ``p(xi) = <omega_star, xi> + |xi|^2 / 2``."""

    def __init__(self, omega_star, q_choice: str):
        omega_star = np.asarray(omega_star, dtype=float)
        if np.allclose(omega_star, 0.0):
            raise ModelError("omega_star must be nonzero")
        self.name = "flat"
        self.omega_star = omega_star
        self.q_choice = q_choice
        self.q_symbol = _flat_q(q_choice)
        self.maslov_eta = np.array([0, 0])
        self.singular_values = []  # empty critical-value set
        self.regular_region = Rect(np.zeros(2), np.array([0.5, 0.5]))

    def p_of_xi(self, xi):
        xi = np.asarray(xi, dtype=float)
        return xi @ self.omega_star + 0.5 * np.sum(xi * xi, axis=-1)

    def dist_to_singular(self, a):
        a = np.asarray(a, dtype=float)
        return np.full(np.shape(a)[:-1], np.inf)

    def is_regular(self, a):
        a = np.asarray(a, dtype=float)
        E, G = a[..., 0], a[..., 1]
        w1, w2 = self.omega_star
        disc = w1 * w1 + 2.0 * E - 2.0 * w2 * G - G * G
        return disc > 1e-8

    def xi_from_value(self, a, shear: int = 0):
        # G = <q>(xi) = xi_2 ; E = p(xi) solved for xi_1 (branch with xi_1 > -w1)
        a = np.asarray(a, dtype=float)
        E, G = a[..., 0], a[..., 1]
        w1, w2 = self.omega_star
        disc = w1 * w1 + 2.0 * E - 2.0 * w2 * G - G * G
        if np.any(disc <= 0):
            raise ModelError("value outside the flat model's regular range")
        xi1 = -w1 + np.sqrt(disc)
        return np.stack([xi1, G], axis=-1)

    def value_from_xi(self, xi, shear: int = 0):
        xi = np.asarray(xi, dtype=float)
        return np.stack([self.p_of_xi(xi), xi[..., 1]], axis=-1)


def _flat_q(q_choice: str) -> AnglePolynomial:
    if q_choice == "cos_x1":
        return AnglePolynomial([((1, 0), 1.0)])
    if q_choice == "cos_x2":
        return AnglePolynomial([((0, 1), 1.0)])
    if q_choice == "xi_weighted":
        return AnglePolynomial([((0, 0), lambda xi: xi[..., 1]), ((1, 0), 0.1)])
    if q_choice == "const3":
        return AnglePolynomial([((0, 0), 3.0)])
    raise ModelError(f"unknown q_choice {q_choice!r}")


def make_flat_model(omega_star, q_choice: str = "xi_weighted") -> FlatModel:
    """Flat reference model; trivial classical monodromy by construction."""
    return FlatModel(omega_star, q_choice)


# ---------------------------------------------------------------------------
# champagne-bottle model
# ---------------------------------------------------------------------------

_GL_NODES = {}


def _gauss_legendre(n: int):
    if n not in _GL_NODES:
        x, w = leggauss(n)
        # map from (-1, 1) to (0, pi/2)
        _GL_NODES[n] = (0.25 * math.pi * (x + 1.0), 0.25 * math.pi * w)
    return _GL_NODES[n]


def _radial_roots(E, l, b):
    """Roots of u^3 - b u^2 - E u + l^2/2 (u = r^2), sorted ascending.

    Returns (u3, um, up): for regular values u3 <= 0 <= um < up and the
    motion takes place on [um, up].  NaN triple where no real motion exists.
    """
    E = np.asarray(E, dtype=float)
    l = np.asarray(l, dtype=float)
    E, l = np.broadcast_arrays(E, l)
    a2, a1, a0 = -b * np.ones_like(E), -E, 0.5 * l * l
    # depressed cubic t^3 + p t + q, u = t - a2/3
    p = a1 - a2 * a2 / 3.0
    q = 2.0 * a2**3 / 27.0 - a2 * a1 / 3.0 + a0
    disc = -(4.0 * p**3 + 27.0 * q * q)
    roots = np.full(E.shape + (3,), np.nan)
    ok = disc > 0
    if np.any(ok):
        pm = p[ok]
        qm = q[ok]
        m = 2.0 * np.sqrt(-pm / 3.0)
        arg = np.clip(3.0 * qm / (pm * m), -1.0, 1.0)
        theta = np.arccos(arg) / 3.0
        shift = -a2[ok] / 3.0
        for k in range(3):
            roots[ok, k] = m * np.cos(theta - 2.0 * math.pi * k / 3.0) + shift
    roots = np.sort(roots, axis=-1)
    # l == 0, E > 0: double structure u=0 is a root; treat analytically
    deg = (np.abs(l) < 1e-14) & (E > 0)
    if np.any(deg):
        up = 0.5 * (b + np.sqrt(b * b + 4.0 * E[deg]))
        u3 = 0.5 * (b - np.sqrt(b * b + 4.0 * E[deg]))  # negative for E > 0
        roots[deg, 0] = u3
        roots[deg, 1] = 0.0
        roots[deg, 2] = up
    return roots[..., 0], roots[..., 1], roots[..., 2]


def _radial_action_quad(E, l, b, n: int = 100):
    """Radial action I_r = (1/pi) * integral of p_r dr between turning radii.

    Vectorized Gauss-Legendre quadrature.  A ``sin^2`` substitution removes
    the square-root turning-point singularities; when the inner turning
    radius is small relative to the outer one (near the focus-focus cut) a
    ``cosh`` substitution resolves the inner boundary layer.
    """
    E = np.atleast_1d(np.asarray(E, dtype=float))
    l = np.atleast_1d(np.asarray(l, dtype=float))
    E, l = np.broadcast_arrays(E, l)
    u3, um, up = _radial_roots(E, l, b)
    out = np.full(E.shape, np.nan)
    good = np.isfinite(up) & (up > um) & (um >= -1e-12)
    if not np.any(good):
        return out
    u3g, umg, upg = u3[good], np.maximum(um[good], 0.0), up[good]
    rm, rp = np.sqrt(umg), np.sqrt(upg)
    theta, w = _gauss_legendre(n)
    vals = np.empty(rm.shape)

    layer = rm < 0.05 * rp  # includes rm == 0
    if np.any(layer):
        rmL = rm[layer]
        rpL = rp[layer]
        u3L = u3g[layer]
        smooth_zero = rmL < 1e-300
        rmL = np.where(smooth_zero, 0.0, rmL)
        # cosh substitution r = rm*cosh(T sin(phi)); for rm == 0 fall back to
        # r = rp*sin^2(phi) (integrand is then regular at the origin)
        resL = np.empty(rmL.shape)
        if np.any(~smooth_zero):
            rm2, rp2, u32 = rmL[~smooth_zero], rpL[~smooth_zero], u3L[~smooth_zero]
            T = np.arccosh(rp2 / rm2)
            t = T[:, None] * np.sin(theta)[None, :]
            r = rm2[:, None] * np.cosh(t)
            u = r * r
            # rp - r = rm*(cosh T - cosh t), in a cancellation-free form
            dtop = rm2[:, None] * 2.0 * np.sinh(0.5 * (T[:, None] + t)) * np.sinh(0.5 * (T[:, None] - t))
            integ = (
                np.sqrt(2.0 * (u - u32[:, None]) * dtop * (rp2[:, None] + r))
                * (rm2[:, None] * np.sinh(t)) ** 2
                * (T[:, None] * np.cos(theta)[None, :])
                / r
            )
            resL[~smooth_zero] = integ @ w / math.pi
        if np.any(smooth_zero):
            rp0 = rpL[smooth_zero]
            u30 = u3L[smooth_zero]
            s2 = np.sin(theta) ** 2
            r = rp0[:, None] * s2[None, :]
            u = r * r
            # u - um = u, up - u = (rp - r)(rp + r)
            pr_dr = (
                np.sqrt(2.0 * (u - u30[:, None]) * (rp0[:, None] - r) * (rp0[:, None] + r))
                * 2.0
                * rp0[:, None]
                * np.sin(theta)[None, :]
                * np.cos(theta)[None, :]
            )
            # sqrt(u - um)/r = 1 here (um = 0): pr = sqrt(2(u-u3)(up-u))*r/r... use g/u form
            resL[smooth_zero] = pr_dr @ w / math.pi
        vals[layer] = resL
    if np.any(~layer):
        rmS, rpS, u3S, umS, upS = (
            rm[~layer],
            rp[~layer],
            u3g[~layer],
            umg[~layer],
            upg[~layer],
        )
        s, c = np.sin(theta), np.cos(theta)
        r = rmS[:, None] + (rpS[:, None] - rmS[:, None]) * (s * s)[None, :]
        u = r * r
        # exact factorizations: u-um=(r-rm)(r+rm), up-u=(rp-r)(rp+r)
        amp = (rpS - rmS)[:, None] * (s * c)[None, :]
        pr_dr = (
            np.sqrt(2.0 * (u - u3S[:, None]) * (r + rmS[:, None]) * (rpS[:, None] + r))
            * amp
            / r
            * 2.0
            * amp
        )
        vals[~layer] = pr_dr @ w / math.pi
    out[good] = vals
    return out


class ChampagneModel(ModelSystem):
    """Champagne-bottle system with a focus-focus value at the origin.

    Action variables: ``xi_1 = l`` (angular momentum) and ``xi_2 = I_r``
    (radial action).  The symmetric branch ``I_r(E, |l|)`` is continuous
    everywhere but has a derivative jump across ``{l = 0, E > 0}``; charts
    whose domain straddles that ray use the smooth continuation
    ``I_r + max(l, 0)`` (the ``shear`` flag), which is exactly where the
    classical monodromy shows up.
    """

    _spline_cache = {}

    def __init__(self, well_depth: float):
        if well_depth <= 0:
            raise ModelError("well_depth must be positive")
        self.name = "champagne"
        self.b = float(well_depth)
        b = self.b
        self.q_symbol = AnglePolynomial([((0, 0), lambda xi: xi[..., 0]), ((0, 1), 0.1)])
        self.maslov_eta = np.array([0, 2])
        self.singular_values = [("focus_focus_point", (0.0, 0.0)), ("minimum_energy_curve", None)]
        self.regular_region = Rect(np.array([0.3, 0.0]), np.array([0.55, 0.6]))
        self._curve = self._boundary_curve_samples()
        self._spl = None

    # -- critical set -----------------------------------------------------

    def min_energy(self, l):
        """Lower boundary E_min(l) of the momentum-map image."""
        l = np.asarray(l, dtype=float)
        b = self.b
        # positive root of 4u^3 - 2b u^2 - l^2 = 0 (Newton, monotone for u>b/3)
        u = np.maximum(b / 2.0, np.cbrt(l * l / 4.0))
        for _ in range(60):
            f = 4.0 * u**3 - 2.0 * b * u * u - l * l
            df = 12.0 * u * u - 4.0 * b * u
            u = u - f / df
        return 0.5 * l * l / u + u * u - b * u

    def _boundary_curve_samples(self, n: int = 600):
        ls = np.linspace(-0.8, 0.8, n)
        return np.stack([self.min_energy(ls), ls], axis=-1)

    def dist_to_singular(self, a):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        d_ff = np.linalg.norm(a, axis=-1)
        d_curve = np.min(
            np.linalg.norm(a[:, None, :] - self._curve[None, :, :], axis=-1), axis=-1
        )
        d = np.minimum(d_ff, d_curve)
        return d if d.shape[0] > 1 else d[0]

    def is_regular(self, a):
        a = np.asarray(a, dtype=float)
        E, l = a[..., 0], a[..., 1]
        reg = E > self.min_energy(l) + 1e-10
        at_ff = (np.abs(E) < 1e-12) & (np.abs(l) < 1e-12)
        return reg & ~at_ff

    # -- actions ----------------------------------------------------------

    def radial_action(self, E, l, n: int = 100):
        """Radial action by direct quadrature (symmetric in l)."""
        out = _radial_action_quad(E, np.abs(l), self.b, n=n)
        return out if (np.ndim(E) or np.ndim(l)) else out[0]

    def turning_radii(self, E, l):
        u3, um, up = _radial_roots(E, l, self.b)
        if not (np.all(np.isfinite(up)) and np.all(up > np.maximum(um, 0.0))):
            raise ModelError("no real radial motion at this value")
        return np.sqrt(np.maximum(um, 0.0)), np.sqrt(up)

    def _spline(self):
        key = self.b
        if key not in ChampagneModel._spline_cache:
            Es = np.linspace(-0.26, 0.95, 220)
            ls = np.linspace(0.0, 0.72, 160)
            gE, gl = np.meshgrid(Es, ls, indexing="ij")
            vals = _radial_action_quad(gE.ravel(), gl.ravel(), self.b).reshape(gE.shape)
            vals[~np.isfinite(vals)] = 0.0  # below the boundary curve
            ChampagneModel._spline_cache[key] = RectBivariateSpline(Es, ls, vals, kx=3, ky=3)
        return ChampagneModel._spline_cache[key]

    def action_xi2(self, E, l, shear: int = 0, dE: int = 0):
        """Spline-backed xi_2(E, l); ``dE=1`` gives the E-derivative."""
        spl = self._spline()
        E = np.asarray(E, dtype=float)
        l = np.asarray(l, dtype=float)
        base = spl.ev(E, np.abs(l), dx=dE)
        if dE == 0 and shear:
            base = base + shear * np.maximum(l, 0.0)
        return base

    def xi_from_value(self, a, shear: int = 0):
        a = np.asarray(a, dtype=float)
        E, l = a[..., 0], a[..., 1]
        return np.stack([l, self.action_xi2(E, l, shear=shear)], axis=-1)

    def value_from_xi(self, xi, shear: int = 0, seed_E=None):
        """Invert the action map: solve I_r(E, l) = xi_2 for E (Newton)."""
        xi = np.asarray(xi, dtype=float)
        l = xi[..., 0]
        target = xi[..., 1] - (shear * np.maximum(l, 0.0) if shear else 0.0)
        E = np.full(np.shape(l), 0.3) if seed_E is None else np.broadcast_to(seed_E, np.shape(l)).copy()
        E = np.asarray(E, dtype=float).copy()
        lo = self.min_energy(l) + 1e-6
        for _ in range(60):
            f = self.action_xi2(E, l) - target
            df = self.action_xi2(E, l, dE=1)
            step = f / np.maximum(df, 1e-12)
            step = np.clip(step, -0.2, 0.2)
            E = np.clip(E - step, lo, 0.95)
            if np.max(np.abs(f)) < 1e-14:
                break
        return np.stack([E, l], axis=-1)

    def p_of_xi(self, xi):
        return self.value_from_xi(xi)[..., 0]


def make_champagne_model(well_depth: float = 1.0) -> ChampagneModel:
    """Champagne-bottle reference model; parabolic classical monodromy."""
    return ChampagneModel(well_depth)


# ---------------------------------------------------------------------------
# charts
# ---------------------------------------------------------------------------


@dataclass
class FrequencyData:
    """Frequency, rotation number and perturbation-average gradient at xi."""

    omega: np.ndarray
    rho: float  # projective class of omega, as an angle in [0, pi)
    d_avg_q: np.ndarray
    omega_prime_norm: float


@dataclass
class ActionChart:
    """One local action-angle chart around a regular value ``c``.

    ``xi_of_c`` maps values ``a=(E, G)`` to actions; ``phi`` is its inverse.
    ``S`` holds the action integrals of the fundamental cycles at ``c`` and
    ``tau_c = S/(2 pi) - xi_c`` (constant over the chart).
    """

    model: ModelSystem
    c: np.ndarray
    domain: Rect
    S: np.ndarray
    eta: np.ndarray
    tau_c: np.ndarray
    shear: int = 0
    grid_xi: np.ndarray = field(default=None, repr=False)
    grid_values: np.ndarray = field(default=None, repr=False)
    xi_box: Rect = field(default=None, repr=False)

    def xi_of_c(self, a):
        return self.model.xi_from_value(a, shear=self.shear)

    def phi(self, xi):
        if isinstance(self.model, ChampagneModel):
            return self.model.value_from_xi(xi, shear=self.shear, seed_E=self.c[0])
        return self.model.value_from_xi(xi, shear=self.shear)

    def p(self, xi):
        return self.phi(xi)[..., 0]

    def avg_q_of_xi(self, xi):
        return self.phi(xi)[..., 1]

    def d_xi(self, a):
        """Jacobian d(xi)/d(a) by central differences (vectorized over a)."""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        h = FD_STEP * (1.0 + np.linalg.norm(a, axis=-1))
        J = np.empty(a.shape[:-1] + (2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = 1.0
            d = (self.xi_of_c(a + h[..., None] * e) - self.xi_of_c(a - h[..., None] * e)) / (
                2.0 * h[..., None]
            )
            J[..., :, j] = d
        return J if a.shape[0] > 1 else J[0]

    def dphi(self, xi):
        """Jacobian d(phi)/d(xi), from the inverse Jacobian at phi(xi)."""
        a = self.phi(np.atleast_2d(np.asarray(xi, dtype=float)))
        J = np.linalg.inv(self.d_xi(a))
        return J if J.ndim > 2 else J

    def contains_value(self, a, margin: float = 0.0):
        return self.domain.contains(a, margin=margin)

    def contains_xi(self, xi, margin: float = 0.0):
        return self.xi_box.contains(xi, margin=margin)


def _chart_radius(model: ModelSystem, c) -> float:
    # 0.1 * distance to the critical-value set, capped for models with an
    # empty critical set
    d = float(np.min(model.dist_to_singular(np.atleast_2d(c))))
    return min(0.1, 0.1 * d)


def action_coords(model: ModelSystem, c, radius: float | None = None) -> ActionChart:
    """Build the local action chart at a regular value ``c``.

    Raises :class:`ModelError` if ``c`` is singular, too close to the
    critical-value set, or if the chart map degenerates on the domain.
    """
    c = np.asarray(c, dtype=float)
    if not np.all(model.is_regular(np.atleast_2d(c))):
        raise ModelError(f"{c} is not a regular value of {model.name}")
    d = float(np.min(model.dist_to_singular(np.atleast_2d(c))))
    if d < 1e-3:
        raise ModelError("chart center too close to the singular set")
    if radius is None:
        radius = _chart_radius(model, c)
    domain = Rect(c, np.array([radius, radius]))

    shear = 0
    if isinstance(model, ChampagneModel):
        # domain straddles the nonsmooth ray {l = 0, E > 0} of the symmetric
        # action branch: switch to the smooth continuation on l > 0
        if abs(c[1]) < radius and c[0] + radius > 0:
            shear = 1

    grid_values = domain.grid(9)
    if not np.all(model.is_regular(grid_values)):
        raise ModelError("chart domain touches the singular set")
    grid_xi = model.xi_from_value(grid_values, shear=shear)

    # invertibility of the chart map on the grid
    chart = ActionChart(
        model=model,
        c=c,
        domain=domain,
        S=np.zeros(2),
        eta=np.asarray(model.maslov_eta),
        tau_c=np.zeros(2),
        shear=shear,
        grid_xi=grid_xi,
        grid_values=grid_values,
    )
    dets = np.linalg.det(chart.d_xi(grid_values))
    if np.any(np.abs(dets) < 1e-10):
        raise ModelError("chart map is degenerate on the requested domain")

    lo = grid_xi.min(axis=0)
    hi = grid_xi.max(axis=0)
    chart.xi_box = Rect(0.5 * (lo + hi), 0.5 * (hi - lo) + 1e-12)

    xi_c = model.xi_from_value(c, shear=shear)
    if isinstance(model, ChampagneModel):
        # direct quadrature for the action integrals (independent of the
        # spline used by xi_of_c)
        I_r = float(np.ravel(model.radial_action(c[0], c[1], n=140))[0])
        S2 = 2.0 * math.pi * (I_r + shear * max(c[1], 0.0))
        S = np.array([2.0 * math.pi * c[1], S2])
    else:
        S = 2.0 * math.pi * xi_c
    chart.S = S
    chart.tau_c = S / (2.0 * math.pi) - xi_c

    # round-trip sanity on the grid
    back = chart.phi(grid_xi)
    err = np.max(np.abs(back - grid_values))
    if err > 1e-6 * (1.0 + np.max(np.abs(grid_values))):
        raise ModelError(f"chart inversion failed to converge (max error {err:.2e})")
    return chart


def frequency(chart: ActionChart, xi) -> FrequencyData:
    """Frequency data at ``xi`` in the chart's action coordinates."""
    xi = np.asarray(xi, dtype=float)
    if not np.all(chart.contains_xi(np.atleast_2d(xi), margin=1e-9)):
        raise ModelError("xi outside chart domain")
    h = FD_STEP * (1.0 + float(np.linalg.norm(xi)))
    stencil = np.array([[h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]])
    vals = chart.phi(xi + stencil)
    omega = np.array(
        [(vals[0, 0] - vals[1, 0]) / (2 * h), (vals[2, 0] - vals[3, 0]) / (2 * h)]
    )
    d_avg = np.array(
        [(vals[0, 1] - vals[1, 1]) / (2 * h), (vals[2, 1] - vals[3, 1]) / (2 * h)]
    )
    rho = math.atan2(omega[1], omega[0]) % math.pi
    # Hessian of p by second differences with a larger step
    h2 = 3e-4 * (1.0 + float(np.linalg.norm(xi)))
    pts = np.array(
        [
            [h2, 0.0], [-h2, 0.0], [0.0, h2], [0.0, -h2],
            [h2, h2], [h2, -h2], [-h2, h2], [-h2, -h2], [0.0, 0.0],
        ]
    )
    p = chart.p(xi + pts)
    hxx = (p[0] - 2 * p[8] + p[1]) / h2**2
    hyy = (p[2] - 2 * p[8] + p[3]) / h2**2
    hxy = (p[4] - p[5] - p[6] + p[7]) / (4 * h2**2)
    hess = np.array([[hxx, hxy], [hxy, hyy]])
    sigma = np.linalg.svd(hess, compute_uv=False)
    return FrequencyData(omega=omega, rho=rho, d_avg_q=d_avg, omega_prime_norm=float(sigma[-1]))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def chart_to_text(chart: ActionChart) -> str:
    """Serialize a chart to the structured-text format used by the CLI."""
    lines = [
        "[action-chart]",
        f"model = {chart.model.name}",
        f"c = {float(chart.c[0])!r} {float(chart.c[1])!r}",
        f"S = {float(chart.S[0])!r} {float(chart.S[1])!r}",
        f"eta = {int(chart.eta[0])} {int(chart.eta[1])}",
        f"tau_c = {float(chart.tau_c[0])!r} {float(chart.tau_c[1])!r}",
        f"shear = {chart.shear}",
        "[grid]",
        "# xi1\txi2\tE\tG",
    ]
    for xi, a in zip(chart.grid_xi, chart.grid_values):
        lines.append(f"{float(xi[0])!r}\t{float(xi[1])!r}\t{float(a[0])!r}\t{float(a[1])!r}")
    return "\n".join(lines) + "\n"
