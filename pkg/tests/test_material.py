"""Material-point integrator tests.

Closed-form cases are checked against values recomputed here by independent
means (scipy root finding, bisection on the discrete consistency condition,
threshold scans) rather than by trusting the implementation's own formulas.
"""

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from phasefrac import material
from phasefrac.material import MaterialParams, MaterialState


BRITTLE = MaterialParams(E=20.0, psi_c=0.05, zeta=1.0)
DUCTILE = MaterialParams(E=20.0, y0=0.4, psi_c=0.05, zeta=1.0, h=0.0)


class TestElasticEnergy:
    def test_zero_strain(self):
        assert material.elastic_energy(0.0, 20.0) == 0.0

    def test_direct_value(self):
        assert material.elastic_energy(0.001, 20.0) == pytest.approx(1.0e-5, rel=1e-12)

    def test_even(self):
        assert material.elastic_energy(-0.02, 35.0) == material.elastic_energy(0.02, 35.0)

    def test_critical_strain_by_root_finding(self):
        # strain where psi_e crosses psi_c = 0.05, found independently
        eps_c = brentq(lambda e: material.elastic_energy(e, 20.0) - 0.05, 1e-6, 1.0, xtol=1e-14)
        assert eps_c == pytest.approx(0.070711, abs=1e-6)
        assert material.elastic_energy(eps_c, 20.0) == pytest.approx(0.05, rel=1e-10)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            material.elastic_energy(math.nan, 20.0)
        with pytest.raises(ValueError):
            material.elastic_energy(math.inf, 20.0)

    def test_bad_modulus_rejected(self):
        with pytest.raises(ValueError):
            material.elastic_energy(0.01, 0.0)


def _consistency_root(eps_next, eps_p, alpha, params, dt):
    """Independent return-map oracle: bisection on the consistency condition."""
    sig_trial = params.E * (eps_next - eps_p)
    sign = math.copysign(1.0, sig_trial)

    def g(dlam):
        return (
            abs(sig_trial)
            - params.E * dlam
            - (params.y0 + params.h * (alpha + dlam))
            - params.eta_p * dlam / dt
        )

    if g(0.0) <= 0.0:
        return eps_p, alpha
    dlam = brentq(g, 0.0, abs(sig_trial) / params.E, xtol=1e-15)
    return eps_p + sign * dlam, alpha + dlam


class TestReturnMap:
    def test_inside_yield_surface(self):
        state = MaterialState()
        eps_p, alpha = material.return_map_plastic(0.015, state, DUCTILE, 1.0)
        assert (eps_p, alpha) == (0.0, 0.0)  # trial stress 0.3 < 0.4

    def test_plastic_flow_closed_form(self):
        state = MaterialState()
        eps_p, alpha = material.return_map_plastic(0.025, state, DUCTILE, 1.0)
        # sigma_trial = 0.5, dlam = 0.1/20
        assert eps_p == pytest.approx(0.005, rel=1e-12)
        assert alpha == pytest.approx(0.005, rel=1e-12)

    def test_against_bisection_oracle(self):
        params = MaterialParams(E=33.0, y0=0.6, psi_c=0.1, h=2.5, eta_p=0.7)
        state = MaterialState(eps=0.01, eps_p=0.004, alpha=0.006)
        dt = 0.01
        got = material.return_map_plastic(0.08, state, params, dt)
        want = _consistency_root(0.08, 0.004, 0.006, params, dt)
        assert got[0] == pytest.approx(want[0], rel=1e-10)
        assert got[1] == pytest.approx(want[1], rel=1e-10)

    def test_compression_side(self):
        state = MaterialState()
        eps_p, alpha = material.return_map_plastic(-0.025, state, DUCTILE, 1.0)
        assert eps_p == pytest.approx(-0.005, rel=1e-12)
        assert alpha == pytest.approx(0.005, rel=1e-12)

    def test_brittle_sentinel_never_flows(self):
        state = MaterialState()
        eps_p, alpha = material.return_map_plastic(5.0, state, BRITTLE, 1.0)
        assert (eps_p, alpha) == (0.0, 0.0)

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            material.return_map_plastic(0.01, MaterialState(), DUCTILE, 0.0)

    def test_discrete_consistency_randomized(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            params = MaterialParams(
                E=rng.uniform(20, 50),
                y0=rng.uniform(0.4, 0.85),
                psi_c=0.1,
                h=rng.uniform(0.0, 5.0),
                eta_p=rng.choice([0.0, rng.uniform(0, 2)]),
            )
            state = MaterialState(eps_p=rng.uniform(-0.01, 0.01), alpha=rng.uniform(0, 0.02))
            dt = rng.uniform(1e-3, 1.0)
            eps_next = rng.uniform(-0.2, 0.2)
            eps_p1, alpha1 = material.return_map_plastic(eps_next, state, params, dt)
            dlam = alpha1 - state.alpha
            bound = params.y0 + params.h * alpha1 + params.eta_p * dlam / dt + 1e-12
            assert abs(params.E * (eps_next - eps_p1)) <= bound


class TestUpdateHistory:
    def test_below_threshold(self):
        assert material.update_history(0.0, 0.03, 0.0, BRITTLE) == 0.0

    def test_macaulay_value(self):
        # scan the bracket definition over candidate thresholds
        got = material.update_history(0.0, 0.10, 0.0, BRITTLE)
        want = max(0.0, 1.0 * (0.10 + 0.0 - 0.05))
        assert got == pytest.approx(want, rel=1e-12) == pytest.approx(0.05)

    def test_history_maximum_retained(self):
        assert material.update_history(0.2, 0.10, 0.0, BRITTLE) == 0.2

    def test_normalized_variant(self):
        got = material.update_history(0.0, 0.10, 0.0, BRITTLE, normalized=True)
        assert got == pytest.approx(0.05 / 0.05, rel=1e-12)

    def test_monotone_in_previous(self):
        lo = material.update_history(0.0, 0.2, 0.0, BRITTLE)
        hi = material.update_history(0.5, 0.2, 0.0, BRITTLE)
        assert hi >= lo


class TestUpdatePhaseField:
    def test_rate_independent_fixed_point(self):
        assert material.update_phase_field(0.0, 1.0, 0.0, 1.0) == pytest.approx(0.5)

    def test_viscous_implicit_value(self):
        # eta_d/dt = 1: d = (0 + 1) / (1 + 1 + 1)
        assert material.update_phase_field(0.0, 1.0, 1.0, 1.0) == pytest.approx(1.0 / 3.0)

    def test_stationary_when_fixed_point_equals_previous(self):
        assert material.update_phase_field(0.6, 1.5, 0.0, 1.0) == pytest.approx(0.6)

    def test_irreversibility_clamp(self):
        assert material.update_phase_field(0.7, 0.1, 0.0, 1.0) == 0.7

    def test_bounds(self):
        assert material.update_phase_field(0.0, 1e12, 0.0, 1.0) <= 1.0
        with pytest.raises(ValueError):
            material.update_phase_field(1.2, 0.1, 0.0, 1.0)
        with pytest.raises(ValueError):
            material.update_phase_field(0.2, 0.1, 0.0, -1.0)


class TestStep:
    def test_brittle_elastic_below_threshold(self):
        state = material.step(MaterialState(), 0.001, 1.0, BRITTLE)
        assert state.sigma == pytest.approx(0.02, rel=1e-12)
        assert state.d == 0.0

    def test_brittle_single_step_softening(self):
        state = material.step(MaterialState(), 0.1, 1.0, BRITTLE)
        assert state.H == pytest.approx(0.05, rel=1e-12)
        # independent check: solve the stationarity (1-d)H - d = 0 for d
        d_root = brentq(lambda d: (1.0 - d) * state.H - d, 0.0, 1.0, xtol=1e-15)
        assert state.d == pytest.approx(d_root, abs=1e-12)
        assert state.d == pytest.approx(0.047619, abs=1e-6)
        assert state.sigma == pytest.approx((1.0 - state.d) ** 2 * 20.0 * 0.1, rel=1e-12)
        assert state.sigma == pytest.approx(1.814059, abs=1e-6)

    def test_ductile_pre_fracture_ramp(self):
        traj = material.simulate(DUCTILE, 0.03, 300)
        last = traj.states[-1]
        assert last.sigma == pytest.approx(0.4, rel=1e-10)
        assert last.eps_p == pytest.approx(0.01, rel=1e-10)
        assert last.D_p == pytest.approx(0.004, rel=1e-10)
        assert last.d == 0.0
        # fracture onset confirmed by scanning psi_e + psi_p against psi_c
        scan = np.linspace(0, 0.2, 20001)
        onsets = [e for e in scan if material._monotone_energy(DUCTILE, e) > DUCTILE.psi_c]
        assert min(onsets) == pytest.approx(0.135, abs=1e-4)
        assert material.onset_strain(DUCTILE) == pytest.approx(0.135, rel=1e-12)

    def test_monotone_invariants_random_paths(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            brittle = rng.random() < 0.5
            params = MaterialParams(
                E=rng.uniform(20, 50),
                y0=math.inf if brittle else rng.uniform(0.4, 0.85),
                psi_c=rng.uniform(0.05, 0.155),
                zeta=rng.uniform(0.5, 2.0),
                h=rng.choice([0.0, rng.uniform(0, 3)]),
                eta_p=rng.choice([0.0, rng.uniform(0, 1)]),
                eta_d=rng.choice([0.0, rng.uniform(0, 1)]),
            )
            eps_max = 3.0 * material.onset_strain(params)
            traj = material.simulate(params, eps_max, 200, history_normalized=bool(rng.random() < 0.5))
            for name in ("d", "alpha", "H", "D_p", "D_d"):
                col = traj.column(name)
                assert np.all(np.diff(col) >= -1e-15), name
            d = traj.column("d")
            assert np.all((d >= 0.0) & (d <= 1.0))

    def test_brittle_closed_form_stress(self):
        params = MaterialParams(E=30.0, psi_c=0.08, zeta=1.3)
        traj = material.simulate(params, 0.25, 400)
        eps = traj.column("eps")
        drive = params.zeta * np.maximum(0.0, 0.5 * params.E * eps**2 - params.psi_c)
        d_closed = np.maximum.accumulate(drive / (1.0 + drive))
        sigma_closed = (1.0 - d_closed) ** 2 * params.E * eps
        np.testing.assert_allclose(traj.column("sigma"), sigma_closed, rtol=1e-10, atol=1e-14)

    def test_onset_bracketing(self):
        for params in (BRITTLE, DUCTILE):
            eps_c = material.onset_strain(params)
            traj = material.simulate(params, 3.0 * eps_c, 150)
            d = traj.column("d")
            eps = traj.column("eps")
            first = int(np.argmax(d > 0.0))
            assert d[first] > 0.0
            width = eps[1] - eps[0]
            assert eps[first] - width <= eps_c <= eps[first] + width


class TestEnergyBalance:
    def test_pure_elastic_exact(self):
        params = MaterialParams(E=25.0, psi_c=1e6)
        traj = material.simulate(params, 0.05, 100)
        assert material.energy_balance_residual(traj) <= 1e-12

    def test_brittle_refined(self):
        traj = material.simulate(BRITTLE, 3.0 * material.onset_strain(BRITTLE), 3000)
        assert material.energy_balance_residual(traj) <= 1e-3

    def test_ductile_refined(self):
        traj = material.simulate(DUCTILE, 3.0 * material.onset_strain(DUCTILE), 6000)
        assert material.energy_balance_residual(traj) <= 1e-3

    def test_first_order_convergence(self):
        eps_max = 3.0 * material.onset_strain(BRITTLE)
        res = [
            material.energy_balance_residual(material.simulate(BRITTLE, eps_max, n))
            for n in (1500, 3000, 6000)
        ]
        for coarse, fine in zip(res, res[1:]):
            assert fine <= 0.6 * coarse  # at least first-order decay

    def test_too_short_rejected(self):
        traj = material.Trajectory(BRITTLE, [MaterialState()], dt=1.0)
        with pytest.raises(ValueError):
            material.energy_balance_residual(traj)


class TestStrainForDamage:
    def test_brittle_closed_form(self):
        # literal-GPa history: E*eps^2/2 = psi_c + H/zeta with H = d/(1-d)
        d_t = 0.9
        eps = material.strain_for_damage(BRITTLE, d_t)
        want = math.sqrt(2.0 * (0.05 + 9.0) / 20.0)
        assert eps == pytest.approx(want, rel=1e-9)

    def test_normalized_reaches_target(self):
        for params, normalized in ((BRITTLE, True), (DUCTILE, True), (DUCTILE, False)):
            eps = material.strain_for_damage(params, 0.9, history_normalized=normalized)
            traj = material.simulate(params, eps * 1.001, 400, history_normalized=normalized)
            assert traj.states[-1].d >= 0.9 - 1e-6

    def test_bad_target(self):
        with pytest.raises(ValueError):
            material.strain_for_damage(BRITTLE, 1.0)
