import math

import numpy as np
import pytest

from memcapneuron import CircuitState, ModelParams, vector_field, DC, FixedResistor
from memcapneuron.phase import (
    DegenerateFixedPoint,
    FixedPointKind,
    analytic_v1prime,
    classify,
    detect_limit_cycle,
    find_fixed_points,
    fixed_point_folds,
    phase_portrait,
    scan_resistance,
)
from memcapneuron.tables import TYPE_I_ROWS, TYPE_II_ROWS

# extrema of G(x) from tests/oracles/derive.py (dense grid scan, independent of the package)
REF_FOLDS_I = {"V0": 3.4152906, "V1_prime": 7.9580591, "lower_V2": 15.1240886, "upper": 16.0318175}
REF_FOLD_II = 9.1739139


def _G(x, p, r):
    """DC voltage holding a fixed point at displacement x, with q = sqrt(U')."""
    dU = p.k * x + 4 * (12 * (p.d - x) ** -13 - 6 * (p.d - x) ** -7)
    if p.memristance == "type1":
        R = np.arctan(p.beta * (p.x_c - x)) / np.pi + 0.5 + p.rho0 * (p.d - x)
    else:
        R = p.rho0 * (p.d - x) * (9 * (np.arctan(p.beta2 * (p.x_c - x)) / np.pi + 0.5) + 1)
    return np.sqrt(np.maximum(dU, 0)) * (p.d - x) * (1 + r / R)


def _oracle_count(p, V, r):
    x = np.concatenate([np.linspace(1e-9, 6.3, 200001), np.linspace(6.3, p.d - 0.3, 2000001)[1:]])
    s = np.sign(_G(x, p, r) - V)
    return int(np.count_nonzero(s[1:] != s[:-1]))


# -- classification -------------------------------------------------------------


@pytest.mark.parametrize(
    "det, tr, delta, kind",
    [
        (-8.2951e7, 1436, 3.3387e8, FixedPointKind.SADDLE),
        (2.4507e8, -2.8346e4, -1.7681e8, FixedPointKind.SINK_SPIRAL),
        (1.0, 3.0, -1.0, FixedPointKind.SPIRAL_SOURCE),
        (5.3386e7, -1.4675e4, 1.7994e6, FixedPointKind.SINK_NODE),
        (1.0, 3.0, 5.0, FixedPointKind.SOURCE_NODE),
    ],
)
def test_classify(det, tr, delta, kind):
    assert classify(det, tr, delta) is kind


@pytest.mark.parametrize("det, tr", [(0.0, -1.0), (1.0, 0.0)])
def test_classify_degenerate(det, tr):
    with pytest.raises(DegenerateFixedPoint):
        classify(det, tr, tr * tr - 4 * det)


def test_table_kinds_consistent_with_scalars():
    for row in TYPE_I_ROWS + TYPE_II_ROWS:
        _, _, _, det, tr, delta, kind = row
        assert classify(det, tr, delta) is kind


# -- fixed points -----------------------------------------------------------------


def test_fixed_points_v4(p):
    fps = find_fixed_points(p, 4.0)
    got = sorted((f.x, f.q, f.kind) for f in fps)
    want = [(0.3253, 0.5207, FixedPointKind.SINK_NODE), (6.1776, 2.1927, FixedPointKind.SADDLE),
            (6.4011, 2.1315, FixedPointKind.SPIRAL_SOURCE)]
    assert len(got) == 3
    for (x, q, k), (xw, qw, kw) in zip(got, want):
        assert abs(x - xw) < 1e-3 and abs(q - qw) < 1e-3 and k is kw


def test_single_sink_at_zero(p):
    fps = find_fixed_points(p, 0.0)
    assert len(fps) == 1 and fps[0].kind.stable
    assert fps[0].x == pytest.approx(1.3732970400697908e-05, abs=1e-10)
    assert fps[0].q == pytest.approx(0.0, abs=1e-12)


def test_single_sink_at_17_5(p):
    fps = find_fixed_points(p, 17.5)
    assert len(fps) == 1 and fps[0].kind.stable
    assert fps[0].x == pytest.approx(6.8444, abs=1e-3)
    assert fps[0].q == pytest.approx(2.0750, abs=1e-3)


def test_fixed_points_are_roots(p):
    for V in (4.0, 7.0, 15.5):
        for f in find_fixed_points(p, V):
            fx, fq = vector_field(p, DC(V), FixedResistor(), f.state)
            assert f.residual < 1e-6
            assert abs(fx) < 1e-6 * 1e4 and abs(fq) < 1e-6 * 1e4


@pytest.mark.parametrize("kind", ["type1", "type2"])
@pytest.mark.parametrize("V", [0.0, 2.0, 3.0, 4.0, 7.0, 8.0, 9.0, 10.0, 14.7, 15.5, 16.5, 17.5])
def test_fixed_point_count_matches_graph_oracle(kind, V):
    p = ModelParams(memristance=kind)
    assert len(find_fixed_points(p, V)) == _oracle_count(p, V, 1e-3)


@pytest.mark.parametrize("r", [1e-4, 1e-2, 3e-2])
def test_fixed_point_count_other_resistances(p, r):
    for V in (4.0, 7.9674, 12.0):
        assert len(find_fixed_points(p, V, r=r)) == _oracle_count(p, V, r)


def test_fixed_point_symmetry(p):
    a = find_fixed_points(p, 7.0)
    b = find_fixed_points(p, -7.0)
    assert sorted((f.x, f.q) for f in a) == pytest.approx(sorted((f.x, -f.q) for f in b), abs=1e-9)


# -- folds and V1' ------------------------------------------------------------------


def test_folds_type1(p):
    folds, counts = fixed_point_folds(p, (0.0, 18.0), 0.05, 1e-4)
    Vs = [f[0] for f in folds]
    assert [f[1:] for f in folds] == [(1, 3), (3, 1), (1, 3), (3, 1)]
    ref = [REF_FOLDS_I["V0"], REF_FOLDS_I["V1_prime"], REF_FOLDS_I["lower_V2"], REF_FOLDS_I["upper"]]
    assert Vs == pytest.approx(ref, abs=2e-4)
    assert all(c in (1, 3) for _, c in counts)


def test_fold_type2(p2):
    folds, _ = fixed_point_folds(p2, (0.0, 18.0), 0.05, 1e-4)
    down = [f[0] for f in folds if f[1] > f[2]]
    assert down[0] == pytest.approx(REF_FOLD_II, abs=2e-4)


def test_analytic_v1prime(p, p2):
    assert analytic_v1prime(p) == pytest.approx(7.9582, abs=1e-3)
    assert analytic_v1prime(p, r=0.0) == pytest.approx(2 * math.sqrt((5 / 6) * (8 / 3) ** 3), rel=1e-12)
    assert analytic_v1prime(p, r=0.0) == pytest.approx(7.9505, abs=1e-4)
    # type II: the normal-regime resistance is ~10 rho0 (d - x)
    assert analytic_v1prime(p2, rho0_eff=10 * p2.rho0) == pytest.approx(REF_FOLD_II, abs=2e-3)
    # the tabulated 7.1053 is not reproduced by either reading
    assert abs(analytic_v1prime(p2) - 7.1053) > 1.0


# -- limit cycles ---------------------------------------------------------------------


def test_limit_cycle_7_9674(p):
    lc = detect_limit_cycle(p, 7.9674, CircuitState(6.6, 2.0207))
    assert lc is not None
    assert lc.x_range[1] > p.x_c
    assert lc.closure_error < 1e-2


def test_no_cycle_static(p):
    assert detect_limit_cycle(p, 7.852, CircuitState(0.0, 0.0)) is None


def test_bistability_7_0437(p):
    assert detect_limit_cycle(p, 7.0437, CircuitState(0.0, 0.0)) is None
    assert detect_limit_cycle(p, 7.0437, CircuitState(6.6, 2.0207)) is not None


def test_resistance_window(p):
    s = scan_resistance(p, 7.9674, [2e-4, 1e-3, 1e-2, 0.1], T=0.5)
    assert s.has_cycle.tolist() == [False, True, True, False]
    assert s.r2 == 1e-3 and s.r1 == 1e-2
    for r, n in zip(s.r, s.n_fixed):
        assert n == _oracle_count(p, 7.9674, r)


# -- portraits --------------------------------------------------------------------------


def test_portrait_field_normalised(p):
    pp = phase_portrait(p, 15.5, n_edge=2, t_evolve=0.02, n_grid=9)
    n = np.hypot(pp.U, pp.W)
    assert np.all((np.abs(n - 1) < 1e-12) | (n == 0))
    assert pp.X.shape == (9, 9)
    assert all(t.ok for t in pp.trajectories)


def test_portrait_rejects_singular_window(p):
    with pytest.raises(ValueError):
        phase_portrait(p, 4.0, window=((0, 8.0), (0, 3)))
