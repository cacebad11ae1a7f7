import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdho_scatter import Field, Grid, SigmaModel, apply_U, bridge, evolve, evolve_profile
from tdho_scatter.errors import BlowupDetected, CFLViolation, OutsideValidity
from tdho_scatter.propagator import PropagatorContext, from_lens, to_lens
from tdho_scatter.solver import (EvolveConfig, LensStepper, PotentialMode, Scheme, check_cfl,
                                 coupling_integral, step_times)
from tdho_scatter.spectral import Gauge

MODEL = SigmaModel.piecewise(1.0, 3 / 16, 1.0)
GRID = Grid(1, 1024, 40.0)
CTX = PropagatorContext.build(MODEL, GRID, 500.0)


def gauss(amp=0.5, w=1.0, t=0.0):
    return Field(GRID, amp * np.exp(-GRID.axis ** 2 / (2 * w * w)) + 0j, t)


def test_step_times_hit_marks():
    ts = step_times(-2.0, 2.0, 0.1, breakpoints=(-1.0, 1.0), samples=(0.37,))
    for m in (-1.0, 0.0, 0.37, 1.0, 2.0):
        assert np.min(np.abs(ts - m)) < 1e-12
    assert np.all(np.diff(ts) > 0)
    back = step_times(3.0, 1.0, 0.1)
    assert back[0] == 3.0 and back[-1] == 1.0 and np.all(np.diff(back) < 0)


def test_step_times_growth():
    ts = step_times(1.0, 1000.0, 0.01, refine=False, growth=0.01)
    assert ts[-1] == 1000.0
    assert np.max(np.diff(ts)) <= 0.01 * 1000.0 + 1e-9
    assert len(ts) < 2000


def test_linear_exact_mode_matches_factorisation():
    u2 = apply_U(CTX, gauss(1.0), 0.0, 2.0)
    cfg = EvolveConfig(eta=0.0, dt=0.5, t_begin=2.0, t_end=8.0, potential_mode=PotentialMode.EXACT_QUADRATIC)
    got = evolve(CTX, cfg, u2).final
    ref = apply_U(CTX, u2, 2.0, 8.0, mode="factorized")
    # the residual sits at the box edge, where the splitting sees periodic images
    assert np.max(np.abs(got.values - ref.values)) < 1e-9


def test_strang_second_order_lie_first_order():
    u2 = apply_U(CTX, gauss(1.0), 0.0, 2.0)
    ref = apply_U(CTX, u2, 2.0, 4.0, mode="factorized")
    out = {}
    for scheme in (Scheme.STRANG, Scheme.LIE):
        errs = []
        for dt in (0.1, 0.05, 0.025):
            cfg = EvolveConfig(eta=0.0, dt=dt, t_begin=2.0, t_end=4.0, scheme=scheme)
            errs.append(np.max(np.abs(evolve(CTX, cfg, u2).final.values - ref.values)))
        out[scheme] = math.log2(errs[1] / errs[2])
    assert out[Scheme.STRANG] > 1.8
    assert 0.8 < out[Scheme.LIE] < 1.5


def test_cfl_rule():
    big = Grid(1, 64, 100.0)
    with pytest.raises(CFLViolation):
        check_cfl(big, MODEL, 0.0, 0.5, 0.1)
    check_cfl(GRID, MODEL, 0.0, 0.5, 0.01)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 2 * np.pi), st.floats(0.1, 0.6))
def test_gauge_covariance_and_mass(gamma, amp):
    u0 = gauss(amp)
    cfg = EvolveConfig(eta=1.0, dt=0.02, t_begin=0.0, t_end=1.5, potential_mode=PotentialMode.EXACT_QUADRATIC)
    a = evolve(CTX, cfg, u0.with_values(u0.values * np.exp(1j * gamma))).final
    b = evolve(CTX, cfg, u0).final
    assert np.max(np.abs(a.values - np.exp(1j * gamma) * b.values)) < 1e-13
    assert b.mass() == pytest.approx(u0.mass(), rel=1e-12)


def test_blowup_guard_trips_on_focusing_growth():
    g = Grid(1, 512, 10.0)
    u0 = Field(g, 3.0 * np.exp(-g.axis ** 2 / 0.5) + 0j, 0.0)
    cfg = EvolveConfig(eta=-1.0, dt=1e-3, t_begin=0.0, t_end=1.0, p_c=6.0, blowup_factor=1.5,
                       potential_mode=PotentialMode.EXACT_QUADRATIC)
    with pytest.raises(BlowupDetected):
        evolve(CTX, cfg, u0)


def test_observables_recorded():
    cfg = EvolveConfig(eta=1.0, dt=0.05, t_begin=1.0, t_end=3.0, beta=0.75,
                       potential_mode=PotentialMode.EXACT_QUADRATIC)
    tr = evolve(CTX, cfg, apply_U(CTX, gauss(), 0.0, 1.0), sample_times=(1.5, 2.0, 2.5))
    assert tr.observables["t"] == [1.0, 1.5, 2.0, 2.5, 3.0]
    assert all(np.isfinite(tr.observables["weighted_beta"]))


def test_coupling_integral_zero_sigma():
    ctx0 = PropagatorContext.build(SigmaModel.zero(), GRID, 100.0)
    ts = np.geomspace(2.0, 5.0, 20)
    total = sum(coupling_integral(ctx0, a, b) for a, b in zip(ts[:-1], ts[1:]))
    assert total == pytest.approx(math.log(2.5), rel=1e-12)


def test_lens_frame_matches_physical_frame():
    u1 = apply_U(CTX, gauss(0.5), 0.0, 1.0)
    cfg = EvolveConfig(eta=1.0, dt=0.005, t_begin=1.0, t_end=6.0, potential_mode=PotentialMode.EXACT_QUADRATIC)
    phys = evolve(CTX, cfg, u1).final
    q1 = to_lens(CTX, u1, 1.0, Grid(1, 1024, 20.0))
    lcfg = EvolveConfig(eta=1.0, dt=0.005, t_begin=1.0, t_end=6.0)
    lens = from_lens(CTX, evolve_profile(CTX, lcfg, q1).final, 6.0, GRID)
    assert np.max(np.abs(lens.values - phys.values)) < 1e-6


def test_lens_stepper_unitary():
    lg = Grid(1, 256, 10.0)
    st_ = LensStepper(CTX, lg, 1.0)
    phi = 0.5 * np.exp(-lg.axis ** 2) + 0j
    out = st_.step(phi, 2.0, 3.0)
    assert np.sum(np.abs(out) ** 2) == pytest.approx(np.sum(np.abs(phi) ** 2), rel=1e-12)


def test_bridge_window():
    cfg = EvolveConfig(eta=1.0, dt=0.01, potential_mode=PotentialMode.EXACT_QUADRATIC)
    u = apply_U(CTX, gauss(0.3), 0.0, -1.0)
    b = bridge(CTX, cfg, u, -1.0, 0.0, 0.75)
    assert b.field.time == 0.0 and b.A0 > 0
    with pytest.raises(OutsideValidity):
        bridge(CTX, cfg, u, -2.0, 0.0, 0.75)
