import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lindthermo.lindblad import exponential_protocol, generator_apply, linear_protocol
from lindthermo.models import QBMModel, gibbs_state
from lindthermo.moments import (
    MomentState,
    chebyshev_diff_matrix,
    chebyshev_grid,
    classical_equilibrium,
    classical_moment_generator,
    classical_work_moments,
    evolve_gamma,
    free_energy_change,
    gamma_equilibrium,
    moment_generator,
    perturbative_expansion,
    summary_json,
    work_functionals,
)

pos = st.floats(0.05, 20.0)


@given(pos, st.floats(0.01, 10.0), st.floats(0.2, 5.0), st.floats(0.05, 5.0))
def test_equilibrium_is_stationary(omega, beta, m, kappa):
    g = gamma_equilibrium(omega, beta, m).as_array()
    gen = moment_generator(omega, beta, m, kappa)
    scale = np.abs(gen.L).max() * np.abs(g).max()
    assert np.abs(gen(g)).max() <= 1e-12 * scale


@given(pos, st.floats(0.01, 50.0), st.floats(0.2, 5.0))
def test_equilibrium_obeys_uncertainty(omega, beta, m):
    assert gamma_equilibrium(omega, beta, m).validate().uncertainty >= 0.25 - 1e-10


def test_validate_rejects_unphysical_moments():
    with pytest.raises(ValueError):
        MomentState(0.1, 0.0, 0.1).validate()
    with pytest.raises(ValueError):
        moment_generator(1.0, -1.0)


def test_moment_equations_close_on_fock_states():
    # d<O>/dt from the full generator on a non-equilibrium (squeezed thermal) state
    model = QBMModel(1.0, 0.8, 2.0, 60, 1.0)
    rho, _ = gibbs_state(model.hamiltonian(1.3), 0.8)
    drho = generator_apply(model, 0.9, rho)
    obs = model.observables()
    gam = np.array([np.trace(obs[k] @ rho).real for k in ("x2", "xp", "p2")])
    rate = np.array([np.trace(obs[k] @ drho).real for k in ("x2", "xp", "p2")])
    assert np.allclose(rate, moment_generator(0.9, 2.0, kappa=0.8)(gam), atol=1e-12)


def test_classical_generator_is_high_temperature_limit():
    beta, w = 1e-4, 1.7
    q, c = moment_generator(w, beta, 1.3, 0.6), classical_moment_generator(w, beta, 1.3, 0.6)
    assert np.allclose(q.L, c.L, atol=1e-6)
    assert q.f[2] == pytest.approx(c.f[2], rel=1e-6)
    assert q.f[0] <= 1e-4 * q.f[2]
    assert np.allclose(gamma_equilibrium(w, beta, 1.3).as_array(),
                       classical_equilibrium(w, beta, 1.3).as_array(), rtol=1e-7)


def test_quasistatic_work_is_free_energy():
    proto = exponential_protocol(1.0, 2.0, 2000.0)
    traj = evolve_gamma(proto, gamma_equilibrium(1.0, 1.0), 1.0, n_samples=2001)
    W, W_eq, W_ex = work_functionals(traj, proto)
    assert W_eq == pytest.approx(np.log(np.sinh(1.0) / np.sinh(0.5)), rel=1e-14)
    assert 0 <= W_ex <= 1e-3


def test_work_quadrature_is_grid_converged():
    proto = exponential_protocol(0.2, 5.0, 10.0)
    g0 = gamma_equilibrium(0.2, 1.0)
    w1 = work_functionals(evolve_gamma(proto, g0, 1.0, n_samples=1001), proto)[0]
    w2 = work_functionals(evolve_gamma(proto, g0, 1.0, n_samples=2001), proto)[0]
    assert abs(w1 - w2) <= 1e-6 * abs(w2)
    with pytest.raises(ValueError):
        work_functionals(evolve_gamma(proto, g0, 1.0, n_samples=1000), proto)


@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.01, 5.0), st.floats(0.5, 50.0))
def test_excess_work_and_uncertainty_along_trajectories(w0, w1, beta, tau):
    proto = linear_protocol(w0, w1, tau)
    traj = evolve_gamma(proto, gamma_equilibrium(w0, beta), beta, n_samples=401)
    assert work_functionals(traj, proto)[2] >= -1e-6
    g = traj.gamma
    assert np.min(g[:, 0] * g[:, 2] - g[:, 1] ** 2) >= 0.25 - 1e-10


def test_free_energy_matches_level_sum():
    n = np.arange(3000)

    def log_z(w):
        return np.log(np.sum(np.exp(-(n + 0.5) * w)))

    assert free_energy_change(1.0, 2.0, 1.0) == pytest.approx(-(log_z(2.0) - log_z(1.0)), rel=1e-13)


def test_chebyshev_differentiation_is_exact_on_polynomials():
    s = chebyshev_grid(12)
    D = chebyshev_diff_matrix(12)
    assert s[0] == 0 and s[-1] == pytest.approx(1.0)
    assert np.allclose(D @ (s**5 - 2 * s**2), 5 * s**4 - 4 * s, atol=1e-10)


def test_zeroth_order_is_instantaneous_equilibrium():
    proto = exponential_protocol(0.2, 5.0, 100.0)
    exp = perturbative_expansion(proto, 1.0, order=0)
    w = [proto.schedule(x) for x in exp.s]
    ref = np.array([gamma_equilibrium(x, 1.0).as_array() for x in w])
    assert np.allclose(exp.orders[0], ref, rtol=1e-14)


def _order1_error(tau):
    proto = exponential_protocol(1.0, 2.0, tau)
    exp = perturbative_expansion(proto, 1.0, order=1)
    approx = exp.interpolant(1)
    traj = evolve_gamma(proto, approx(0.0), 1.0, n_samples=401)
    return np.max(np.abs(traj.gamma - approx(traj.s)))


def test_first_order_error_scales_as_inverse_square():
    ratio = _order1_error(100.0) / _order1_error(200.0)
    assert 3.5 <= ratio <= 4.5


def test_wide_compression_is_not_yet_slow_at_tau_100():
    # at omega = 0.2 the position relaxes on the driving time scale, so the
    # 1/tau^2 regime only sets in for much longer protocols
    errs = []
    for tau in (400.0, 800.0, 1600.0):
        proto = exponential_protocol(0.2, 5.0, tau)
        exp = perturbative_expansion(proto, 1.0, order=1)
        traj = evolve_gamma(proto, exp.interpolant(1)(0.0), 1.0, n_samples=401)
        errs.append(np.max(np.abs(traj.gamma - exp.interpolant(1)(traj.s))))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert 2.5 < ratios[0] < ratios[1] < 4.0


def test_first_order_beats_zeroth_order():
    proto = exponential_protocol(1.0, 2.0, 100.0)
    exp = perturbative_expansion(proto, 1.0, order=1)
    traj = evolve_gamma(proto, exp.interpolant(1)(0.0), 1.0, n_samples=401)
    e0 = np.max(np.abs(traj.gamma - exp.interpolant(0)(traj.s)))
    e1 = np.max(np.abs(traj.gamma - exp.interpolant(1)(traj.s)))
    assert e1 < 0.05 * e0


def test_coarse_grid_is_reported():
    with pytest.raises(ValueError, match="coarse"):
        perturbative_expansion(exponential_protocol(0.2, 5.0, 1.0), 1.0, order=3, n_grid=8)


def test_classical_work_variance_is_nonnegative():
    proto = exponential_protocol(1.0, 2.0, 10.0)
    mean, second = classical_work_moments(proto, 0.5, n_grid=801)
    traj = evolve_gamma(proto, classical_equilibrium(1.0, 0.5), 0.5, n_samples=801, classical=True)
    assert mean == pytest.approx(work_functionals(traj, proto)[0], rel=1e-12)
    assert second - mean**2 >= 0


def test_outputs(tmp_path):
    proto = exponential_protocol(1.0, 2.0, 5.0)
    traj = evolve_gamma(proto, gamma_equilibrium(1.0, 1.0), 1.0, n_samples=11)
    traj.to_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "s,omega,G_x2,G_xp,G_p2,Wdot_ex"
    out = summary_json(traj, proto, tmp_path / "w.json")
    data = json.loads((tmp_path / "w.json").read_text())
    assert data == out and data["W"] == pytest.approx(data["W_eq"] + data["W_ex"])
