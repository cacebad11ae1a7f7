import numpy as np
import pytest
from scipy.integrate import solve_ivp
from hypothesis import given, settings, strategies as st

from oracles import piecewise_zeta
from tdho_scatter import SigmaKind, SigmaModel, ZetaSolution, extract_asymptotics, m2_deviation, solve_zeta
from tdho_scatter.errors import InvalidModel

MODEL = SigmaModel.piecewise(1.0, 3 / 16, 1.0)


@pytest.fixture(scope="module")
def zeta():
    return solve_zeta(MODEL, 2000.0)


def test_zero_model_is_exact():
    z = solve_zeta(SigmaModel.zero(), 50.0)
    for t in (-30.0, -1.0, 0.0, 0.7, 42.0):
        assert z.evaluate(t) == (1.0, 0.0, t, 1.0)


def test_exponent_closed_form():
    for s1 in (0.0, 0.05, 3 / 16, 0.24):
        lam = SigmaModel.piecewise(1.0, s1, 1.0).exponent()
        assert lam == pytest.approx((1 - np.sqrt(1 - 4 * s1)) / 2, abs=1e-15)


def test_matches_piecewise_oracle(zeta):
    ts = np.concatenate([np.linspace(-3, 3, 121), np.geomspace(3, 2000, 60), -np.geomspace(3, 2000, 60)])
    ref, *_ = piecewise_zeta(ts, 1.0, 3 / 16, 1.0)
    got = np.array([zeta.evaluate(t) for t in ts]).T
    scale = np.maximum(1.0, np.abs(ref))
    assert np.max(np.abs(got - ref) / scale) < 1e-9


def test_asymptotics(zeta):
    p = extract_asymptotics(zeta, 1)
    _, lam, b1, b2 = piecewise_zeta([1.0], 1.0, 3 / 16, 1.0)
    assert p.lam == pytest.approx(0.25, abs=1e-12)
    assert p.a1 == pytest.approx(b1[0], abs=1e-8)
    assert p.a2 == pytest.approx(b2[0], abs=1e-8)
    assert p.a1_minus == pytest.approx(p.a1, abs=1e-8)
    assert p.a2_minus == pytest.approx(-p.a2, abs=1e-8)
    assert p.p_c == pytest.approx(8 / 3)
    assert p.r0 == 1.0


def test_wronskian(zeta):
    ts = np.linspace(-2000, 2000, 5001)
    assert np.max(np.abs(zeta.wronskian(ts) - 1)) < 1e-8


def test_csv_round_trip(zeta, tmp_path):
    path = zeta.to_csv(tmp_path / "z.csv")
    again = ZetaSolution.from_csv(path, MODEL)
    for t in (-100.0, -0.3, 0.0, 2.5, 1500.0):
        assert np.allclose(again.evaluate(t), zeta.evaluate(t), rtol=1e-13, atol=1e-13)
    path2 = again.to_csv(tmp_path / "z2.csv")
    assert path.read_bytes() == path2.read_bytes()


def test_table_model_against_direct_integration():
    smooth = lambda t: 0.15 / (1 + t * t)
    ts = np.linspace(-60, 60, 601)
    tab = SigmaModel.from_table(ts, smooth(ts))
    assert tab.kind == SigmaKind.TABLE
    zt = solve_zeta(tab, 50.0)
    rhs = lambda t, y: [y[1], -smooth(t) * y[0], y[3], -smooth(t) * y[2]]
    ref = solve_ivp(rhs, (0, 45), [1, 0, 0, 1], method="DOP853", rtol=1e-12, atol=1e-12, dense_output=True)
    for t in (0.5, 10.0, 45.0):
        assert np.allclose(zt.evaluate(t), ref.sol(t), rtol=1e-3, atol=1e-3)


def test_table_outside_range_rejected():
    tab = SigmaModel.from_table([-1.0, 0.0, 1.0], [0.0, 0.0, 0.0])
    with pytest.raises(Exception):
        solve_zeta(tab, 10.0)


def test_invalid_parameters():
    with pytest.raises(InvalidModel):
        SigmaModel.piecewise(1.0, 0.3, 1.0)  # 4 sigma1 > 1


def test_m2_deviation_decays(zeta):
    p = extract_asymptotics(zeta, 1)
    x = np.array([[1.0]])
    dev = [abs(m2_deviation(zeta, p, t, x)[0]) for t in (10.0, 100.0, 1000.0)]
    assert dev[0] > dev[1] > dev[2]


def _piece_step():
    """(t, t2) inside one smooth piece of MODEL."""
    inner = st.tuples(st.floats(-1.0, 0.99), st.floats(0.001, 1.0)).map(
        lambda p: (p[0], min(1.0, p[0] + p[1])))
    outer = st.tuples(st.floats(1.0, 50.0), st.floats(0.01, 5.0), st.sampled_from((1.0, -1.0))).map(
        lambda p: (p[2] * p[0], p[2] * (p[0] + p[1])))
    return st.one_of(inner, outer)


@settings(max_examples=60, deadline=None)
@given(_piece_step())
def test_step_matrix_transports_zeta(pair):
    z = ZETA_SMALL
    t, t2 = pair
    p11, p12, p21, p22, om11, om22 = MODEL.step_matrix(t, t2)
    a = np.array(z.evaluate(t))
    b = np.array(z.evaluate(t2))
    for k in (0, 2):
        moved = (p11 * a[k] + p12 * a[k + 1], p21 * a[k] + p22 * a[k + 1])
        assert np.allclose(moved, b[k:k + 2], rtol=1e-8, atol=1e-8)
    assert p11 * p22 - p12 * p21 == pytest.approx(1.0, abs=1e-10)
    assert om11 == pytest.approx(1 - p11, abs=1e-12)
    assert om22 == pytest.approx(1 - p22, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.249), st.floats(0.1, 3.0), st.floats(0.5, 3.0))
def test_wronskian_property(s1, s0, r1):
    z = solve_zeta(SigmaModel.piecewise(s0, s1, r1), 30.0, 2e-2)
    ts = np.linspace(-30, 30, 301)
    assert np.max(np.abs(z.wronskian(ts) - 1)) < 1e-8


ZETA_SMALL = solve_zeta(MODEL, 80.0)
