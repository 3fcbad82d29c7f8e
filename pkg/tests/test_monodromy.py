import numpy as np
import pytest

from pseudolattice.models import Rect, make_champagne_model, make_flat_model
from pseudolattice.monodromy import (
    AtlasChart,
    MonodromyError,
    PseudoChartAtlas,
    _normal_form,
    action_atlas,
    classical_monodromy,
    cocycle_check,
    compare_monodromies,
    cover_loop,
    loop_monodromy,
    monodromy_report,
    transition_matrix,
)


def _linear_chart(center, A, half=0.3):
    """Chart whose map is u -> A u, on a square domain around center."""
    A = np.asarray(A, dtype=float)

    def f0(u):
        return np.asarray(u, dtype=float) @ A.T

    def df0(u):
        u = np.atleast_2d(u)
        return np.broadcast_to(A, (len(u), 2, 2)).copy()

    return AtlasChart(domain=Rect(np.asarray(center, float), np.array([half, half])), f0=f0, df0=df0)


def _grid_atlas(mats, spacing=0.35, half=0.3):
    """Charts on a row of overlapping squares, one matrix per chart."""
    charts = [
        _linear_chart((i * spacing, 0.0), M, half=half) for i, M in enumerate(mats)
    ]
    return PseudoChartAtlas(charts=charts)


UNIMODULAR = [
    np.eye(2),
    np.array([[1.0, 1.0], [0.0, 1.0]]),
    np.array([[2.0, 1.0], [1.0, 1.0]]),
    np.array([[0.0, -1.0], [1.0, 0.0]]),
]


def test_self_transition_is_identity():
    atlas = _grid_atlas(UNIMODULAR[:2])
    t = transition_matrix(atlas, 0, 0)
    assert np.array_equal(t.M, np.eye(2, dtype=np.int64))
    assert t.rounding_error == 0.0


def test_transition_antisymmetry():
    atlas = _grid_atlas(UNIMODULAR)
    for i in range(3):
        a = transition_matrix(atlas, i, i + 1).M
        b = transition_matrix(atlas, i + 1, i).M
        assert np.array_equal(a @ b, np.eye(2, dtype=np.int64))


def test_transition_exact_for_linear_charts():
    atlas = _grid_atlas(UNIMODULAR)
    t = transition_matrix(atlas, 0, 1)
    expected = np.rint(UNIMODULAR[0] @ np.linalg.inv(UNIMODULAR[1])).astype(np.int64)
    assert np.array_equal(t.M, expected)
    assert t.rounding_error < 1e-12


def test_transition_requires_overlap():
    atlas = _grid_atlas(UNIMODULAR, spacing=2.0)
    with pytest.raises(MonodromyError):
        transition_matrix(atlas, 0, 1)


def test_transition_rejects_non_integral():
    bad = np.array([[1.4, 0.0], [0.0, 1.0]])
    atlas = _grid_atlas([np.eye(2), bad])
    with pytest.raises(MonodromyError):
        transition_matrix(atlas, 0, 1)


def test_transition_rejects_bad_determinant():
    atlas = _grid_atlas([np.eye(2), 0.5 * np.eye(2)])
    with pytest.raises(MonodromyError):
        transition_matrix(atlas, 0, 1)


def test_cocycle_clean_covering():
    # 2x3 block of overlapping squares, all charts sharing one linear map
    charts = []
    for i in range(3):
        for j in range(2):
            charts.append(_linear_chart((0.35 * i, 0.35 * j), UNIMODULAR[2]))
    atlas = PseudoChartAtlas(charts=charts)
    rep = cocycle_check(atlas)
    assert rep.ok
    assert rep.triples_checked > 0
    assert len(rep.pairs) >= 6


def test_cocycle_single_chart_vacuous():
    atlas = PseudoChartAtlas(charts=[_linear_chart((0.0, 0.0), np.eye(2))])
    rep = cocycle_check(atlas)
    assert rep.ok
    assert rep.triples_checked == 0
    assert rep.pairs == []


def test_cocycle_detects_corrupted_chart():
    # middle chart reports different Jacobians depending on where it is
    # sampled; each pairwise overlap sees one consistent Jacobian (so all
    # transitions round cleanly) but M_02 != M_01 M_12 on the triple overlap
    U = np.array([[1.0, 1.0], [0.0, 1.0]])

    def df_split(u):
        u = np.atleast_2d(u)
        out = np.broadcast_to(np.eye(2), (len(u), 2, 2)).copy()
        out[u[:, 0] >= 0.29] = U
        return out

    charts = [
        _linear_chart((0.0, 0.0), np.eye(2), half=0.3),
        AtlasChart(
            domain=Rect(np.array([0.29, 0.29]), np.array([0.65, 0.65])),
            f0=lambda u: np.asarray(u, float),
            df0=df_split,
        ),
        _linear_chart((0.58, 0.58), np.eye(2), half=0.3),
    ]
    rep = cocycle_check(PseudoChartAtlas(charts=charts))
    assert not rep.ok
    assert len(rep.violations) > 0


def test_normal_form_identity():
    nf, inv, m = _normal_form(np.eye(2, dtype=int))
    assert np.array_equal(nf, np.eye(2, dtype=int))
    assert inv == (2, 1)
    assert m == 0


def test_normal_form_parabolic():
    nf, inv, m = _normal_form(np.array([[1, 3], [0, 1]]))
    assert m == 3
    assert np.array_equal(nf, np.array([[1, 3], [0, 1]]))
    # a conjugate of the same parabolic class has the same |m|
    S = np.array([[2, 1], [1, 1]])
    Sinv = np.rint(np.linalg.inv(S)).astype(int)
    P = S @ np.array([[1, 2], [0, 1]]) @ Sinv
    nf2, inv2, m2 = _normal_form(P)
    assert inv2 == (2, 1)
    assert m2 == 2


def test_normal_form_non_parabolic():
    P = np.array([[2, 1], [1, 1]])  # hyperbolic, trace 3
    nf, inv, m = _normal_form(P)
    assert inv == (3, 1)
    assert m is None
    assert np.array_equal(nf, P)


def test_loop_monodromy_product_and_reverse():
    atlas = _grid_atlas(UNIMODULAR)
    # fold the row into a cycle by making the last chart overlap the first
    atlas.charts[-1].domain = Rect(np.array([0.0, 0.0]), np.array([1.5, 0.3]))
    loop = [0, 1, 2, 3]
    fwd = loop_monodromy(atlas, loop)
    rev = loop_monodromy(atlas, loop[::-1])
    assert np.array_equal(fwd.product @ rev.product, np.eye(2, dtype=np.int64))
    if fwd.parabolic_m is not None:
        assert rev.parabolic_m == fwd.parabolic_m


def test_loop_monodromy_empty_and_gap():
    atlas = _grid_atlas(UNIMODULAR, spacing=2.0)
    with pytest.raises(MonodromyError):
        loop_monodromy(atlas, [])
    with pytest.raises(MonodromyError):
        loop_monodromy(atlas, [0, 1])


def test_cover_loop_spacing_and_budget():
    m = make_flat_model((1.0, 0.7), "xi_weighted")
    verts = [(0.3, 0.1), (0.5, 0.1), (0.5, 0.3), (0.3, 0.3)]
    centers = cover_loop(m, verts)
    assert len(centers) >= 10
    # consecutive gaps never exceed 0.4 of the local chart radius
    from pseudolattice.models import _chart_radius

    for a, b in zip(centers[:-1], centers[1:]):
        assert np.linalg.norm(b - a) <= 0.4 * _chart_radius(m, a) + 1e-9
    with pytest.raises(MonodromyError):
        cover_loop(m, verts, max_charts=3)


def test_classical_flat_loop_is_identity():
    m = make_flat_model((1.0, 0.7), "xi_weighted")
    cls = classical_monodromy(m, [(0.3, 0.1), (0.5, 0.1), (0.5, 0.3), (0.3, 0.3)])
    assert np.array_equal(cls.product, np.eye(2, dtype=np.int64))
    assert cls.parabolic_m == 0


OCTAGON = [
    (
        0.15 + 0.3 * np.cos(2 * np.pi * t / 8),
        0.3 * np.sin(2 * np.pi * t / 8),
    )
    for t in range(8)
]


def test_classical_champagne_loop():
    m = make_champagne_model(1.0)
    cls = classical_monodromy(m, OCTAGON)
    assert cls.invariants == (2, 1)
    assert cls.parabolic_m == 1


def test_classical_champagne_contractible_loop():
    # a small loop away from the critical value is trivial
    m = make_champagne_model(1.0)
    verts = [(0.35, 0.1), (0.45, 0.1), (0.45, 0.2), (0.35, 0.2)]
    cls = classical_monodromy(m, verts)
    assert cls.parabolic_m == 0


def test_classical_double_winding():
    m = make_champagne_model(1.0)
    cls = classical_monodromy(m, OCTAGON + OCTAGON)
    assert cls.parabolic_m == 2


def test_compare_monodromies_cases():
    def mk(P):
        nf, inv, m = _normal_form(np.asarray(P, dtype=np.int64))
        from pseudolattice.monodromy import MonodromyClass

        return MonodromyClass(loop=[0], product=np.asarray(P, np.int64), normal_form=nf, invariants=inv, parabolic_m=m)

    ident = mk(np.eye(2, dtype=int))
    p1 = mk([[1, 1], [0, 1]])
    p1t = mk([[1, 0], [1, 1]])
    p2 = mk([[1, 2], [0, 1]])
    hyp = mk([[2, 1], [1, 1]])
    assert compare_monodromies(ident, ident)
    assert compare_monodromies(p1, p1t)  # transpose convention
    assert compare_monodromies(p1, p1)  # |m| blind to transpose
    assert not compare_monodromies(p1, p2)
    assert not compare_monodromies(p1, ident)
    assert not compare_monodromies(hyp, p1)


def test_monodromy_report_text():
    m = make_champagne_model(1.0)
    cls = classical_monodromy(m, OCTAGON)
    text = monodromy_report(cls, classical=cls)
    assert text.startswith("[monodromy]")
    assert "normal_form = [[1, 1], [0, 1]]" in text
    # classical vs itself: products are transposes of each other only up to
    # conjugacy, which the parabolic invariant certifies
    assert "conjugate = true" in text
