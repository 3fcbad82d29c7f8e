"""End-to-end drivers: loop coverings of fitted spectral charts.

For each chart center along a user loop the driver picks a good value,
synthesizes the eigenvalue cloud in its rectangle, runs blind lattice
detection, and wraps the fitted chart map into an atlas element.  The
rectangles of consecutive centers overlap, so transition matrices and the
loop monodromy can be computed exactly as for the classical action atlas.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .detect import HChart, fit_hchart
from .diophantine import DiophantineParams, is_good_value
from .models import ActionChart, ModelSystem, Rect, _chart_radius, action_coords
from .monodromy import (
    AtlasChart,
    MonodromyClass,
    MonodromyError,
    PseudoChartAtlas,
    cover_loop,
    loop_monodromy,
)
from .synth import (
    NormalFormSymbol,
    SemiclassicalParams,
    SpectrumCloud,
    good_rectangle,
    synth_spectrum,
)


def rect_half_width(params: SemiclassicalParams, C0: float, chart_radius: float) -> tuple:
    """Rectangle half-width and the effective C0 keeping it inside the chart."""
    hw = params.h**params.delta / C0
    cap = 0.8 * chart_radius
    if hw > cap:
        C0 = params.h**params.delta / cap
        hw = cap
    return hw, C0


def find_good_value(
    model: ModelSystem,
    chart: ActionChart,
    c,
    dio: DiophantineParams,
    search_radius: float,
) -> np.ndarray:
    """The center itself if good, else the nearest good node of a small grid."""
    c = np.asarray(c, dtype=float)
    if is_good_value(model, chart, c, dio):
        return c
    offs = search_radius * np.array([-1.0, -0.5, 0.5, 1.0])
    cands = np.stack(np.meshgrid(c[0] + offs, c[1] + offs, indexing="ij"), axis=-1).reshape(-1, 2)
    order = np.argsort(np.linalg.norm(cands - c, axis=1))
    for a in cands[order]:
        if is_good_value(model, chart, a, dio):
            return a
    raise MonodromyError(f"no good value found near {tuple(c)}")


@dataclass
class SpectralChart:
    """Everything produced for one covering element."""

    center: np.ndarray
    a: np.ndarray  # good value actually used
    action_chart: ActionChart
    cloud: SpectrumCloud
    hchart: HChart


def spectral_chart_at(
    model: ModelSystem,
    c,
    params: SemiclassicalParams,
    dio: DiophantineParams,
    C0: float = 2.0,
    higher_coeffs: dict | None = None,
    chart_hint: bool = False,
) -> SpectralChart:
    """Synthesize and blind-detect the spectrum of one good rectangle."""
    c = np.asarray(c, dtype=float)
    radius = _chart_radius(model, c)
    ac = action_coords(model, c)
    hw, C0_eff = rect_half_width(params, C0, radius)
    a = find_good_value(model, ac, c, dio, search_radius=0.25 * hw)
    rect = good_rectangle(a, params, C0_eff, good=True)
    sym = NormalFormSymbol(ac, dict(higher_coeffs or {}), params.noise_order)
    cloud = synth_spectrum(sym, a, params, rectangle=rect)
    hc = fit_hchart(cloud.without_labels(), a, chart_hint=ac if chart_hint else None)
    return SpectralChart(center=c, a=a, action_chart=ac, cloud=cloud, hchart=hc)


def spectral_loop_atlas(
    model: ModelSystem,
    vertices,
    params: SemiclassicalParams,
    dio: DiophantineParams,
    C0: float = 2.0,
    higher_coeffs: dict | None = None,
    spacing_factor: float = 0.4,
    jobs: int = 1,
):
    """Covering of fitted spectral charts along a polygonal loop.

    Chart centers are spaced by a fraction of the local rectangle
    half-width, so consecutive rectangles overlap with margin and
    transitions are well-sampled.  Per-center jobs are independent; with
    ``jobs > 1`` they run on a thread pool and results keep loop order.
    """

    def rect_radius(c):
        return rect_half_width(params, C0, _chart_radius(model, c))[0]

    def one(c):
        return spectral_chart_at(model, c, params, dio, C0=C0, higher_coeffs=higher_coeffs)

    centers = cover_loop(model, vertices, spacing_factor=spacing_factor, radius_fn=rect_radius)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            elements = list(pool.map(one, centers))
    else:
        elements = [one(c) for c in centers]
    charts = []
    for el in elements:
        r = el.cloud.rectangle
        domain = Rect(
            np.array([r.center.real, r.center.imag / params.epsilon]),
            np.array([r.half_width, r.half_height / params.epsilon]),
        )
        charts.append(AtlasChart(domain=domain, f0=el.hchart.f, df0=el.hchart.df, payload=el))
    return PseudoChartAtlas(charts=charts), elements


def spectral_monodromy(
    model: ModelSystem,
    vertices,
    params: SemiclassicalParams,
    dio: DiophantineParams,
    C0: float = 2.0,
    higher_coeffs: dict | None = None,
    spacing_factor: float = 0.4,
    jobs: int = 1,
) -> tuple:
    """Loop monodromy of the blind-fitted spectral charts.

    Returns ``(MonodromyClass, atlas, elements)``.
    """
    atlas, elements = spectral_loop_atlas(
        model,
        vertices,
        params,
        dio,
        C0=C0,
        higher_coeffs=higher_coeffs,
        spacing_factor=spacing_factor,
        jobs=jobs,
    )
    cls = loop_monodromy(atlas, list(range(len(atlas))))
    return cls, atlas, elements
