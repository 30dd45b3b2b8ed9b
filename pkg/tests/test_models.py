import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from lindthermo import hyperbolic as hyp
from lindthermo.lindblad import detailed_balance_residual, jump_choi_min_eig, stationarity_residual
from lindthermo.models import (
    ModelSpec,
    QBMModel,
    QBMParams,
    QubitModel,
    gibbs_state,
    qbm_coefficients,
    qbm_dissipator_ops,
    qbm_hamiltonian,
    qubit_occupation,
    reference_frequency,
    suggest_dim,
)
from lindthermo.opcore import BasisSpec, fock_operators


def test_coefficients_zero_temperature_limit():
    k, ax, ap = qbm_coefficients(2.0, 1e4, 1.5)
    assert k == 0.0
    assert ax == pytest.approx(np.sqrt(3.0), rel=1e-14)
    assert ap == pytest.approx(1 / np.sqrt(3.0), rel=1e-14)


def test_coefficients_finite_at_extremes():
    for beta, omega in [(1e-12, 1e-3), (1e6, 1e3)]:
        assert all(np.isfinite(qbm_coefficients(omega, beta, 1.0)))


@given(st.floats(0.05, 20), st.floats(0.01, 30), st.floats(0.2, 5))
def test_ladder_jump_equals_quadrature_form(omega, beta, w_ref):
    basis = BasisSpec(10, 1.3, w_ref)
    _, A = qbm_dissipator_ops(QBMParams(1.3, 1.0, beta, omega), basis)
    _, ax, ap = qbm_coefficients(omega, beta, 1.3)
    ops = fock_operators(basis)
    direct = ax * ops.x + 1j * ap * ops.p
    assert np.allclose(A, direct, rtol=1e-10, atol=1e-10 * np.abs(direct).max())


def test_hamiltonian_diagonal_at_reference():
    H = qbm_hamiltonian(QBMParams(omega=0.7), BasisSpec(20, 1.0, 0.7))
    assert np.allclose(H, np.diag(0.7 * (np.arange(20) + 0.5)), atol=1e-13)


def test_hamiltonian_derivative_finite_difference():
    model = QBMModel(1.0, 1.0, 1.0, 30, 0.8)
    h = 1e-5
    fd = (model.hamiltonian(1.3 + h) - model.hamiltonian(1.3 - h)) / (2 * h)
    assert np.linalg.norm(fd - model.hamiltonian_derivative(1.3), 2) <= 1e-8 * np.linalg.norm(fd, 2)


def test_mass_mismatch_rejected():
    with pytest.raises(ValueError):
        qbm_hamiltonian(QBMParams(m=2.0), BasisSpec(8, 1.0, 1.0))


def test_free_energy_change_fock_sum():
    model = QBMModel(1.0, 1.0, 1.0, 80, 1.4)
    from lindthermo.fcs import free_energy_change

    dF = free_energy_change(model, 1.0, 2.0, 1.0)
    # independent oracle: the Fock sum of exp(-beta omega (n + 1/2)) in closed form
    exact = np.log(np.sinh(1.0) / np.sinh(0.5))
    assert exact == pytest.approx(0.8132616875182227, abs=1e-15)
    assert dF == pytest.approx(0.8132616875182227, abs=1e-9)


@pytest.mark.parametrize("beta", [0.01, 1.0, 2.0, 10.0])
@pytest.mark.parametrize("omega", [0.2, 1.0, 5.0])
def test_local_detailed_balance_grid(beta, omega):
    dim = suggest_dim([omega], beta, omega, maximum=120)
    if beta * omega > 40:
        dim = 8
    model = QBMModel(1.0, 1.0, beta, dim, omega)
    (d,) = model.dissipators(omega)
    rho, _ = gibbs_state(model.hamiltonian(omega), beta)
    assert detailed_balance_residual(d, rho) <= 1e-8
    assert stationarity_residual(d, rho) <= 1e-8


def test_detailed_balance_detects_wrong_temperature():
    model = QBMModel(1.0, 1.0, 1.0, 20, 1.0)
    (d,) = model.dissipators(1.0)
    rho, _ = gibbs_state(model.hamiltonian(1.0), 1.5)
    assert detailed_balance_residual(d, rho) > 1e-3


class _Numeric(ModelSpec):
    """Same oscillator but with the generic eigenbasis work kernel and dressing."""

    def __init__(self, inner):
        self.inner, self.dim, self.n_baths = inner, inner.dim, 1

    def hamiltonian(self, lam):
        return self.inner.hamiltonian(lam)

    def hamiltonian_derivative(self, lam):
        return self.inner.hamiltonian_derivative(lam)

    def dissipators(self, lam):
        return self.inner.dissipators(lam)

    def bath_betas(self):
        return self.inner.bath_betas()


@pytest.mark.parametrize("u", [-2.0, -0.3, 0.4])
def test_analytic_work_kernel_matches_eigenbasis_route(u):
    model = QBMModel(1.0, 0.7, 1.0, 24, 1.3)
    B, Bt = model.work_kernel(1.3, 0.25, u)
    Bn, Btn = _Numeric(model).work_kernel(1.3, 0.25, u)
    scale = np.abs(Bn).max()
    assert np.abs(B - Bn).max() <= 1e-11 * scale
    assert np.abs(Bt - Btn).max() <= 1e-11 * scale


def test_work_kernel_finite_difference():
    model = QBMModel(1.0, 1.0, 1.0, 10, 1.0)
    u, w, wdot, h = -0.8, 1.0, 0.3, 1e-6
    e = lambda lam: expm(0.5 * u * model.hamiltonian(lam))
    fd = (e(w + h) - e(w - h)) / (2 * h) * wdot @ expm(-0.5 * u * model.hamiltonian(w))
    B, _ = _Numeric(model).work_kernel(w, wdot, u)
    assert np.abs(B - fd).max() <= 1e-7 * np.abs(fd).max()


@pytest.mark.parametrize("v", [-1.0, 0.5])
def test_analytic_dressing_matches_eigenbasis_route(v):
    model = QBMModel(1.0, 0.7, 2.0, 20, 0.9)
    (a,) = model.tilted_dissipators(0.9, [v])
    (b,) = _Numeric(model).tilted_dissipators(0.9, [v])
    for name in ("KL", "KR", "AL", "AR", "NL", "NR"):
        x, y = getattr(a, name), getattr(b, name)
        assert np.abs(x - y).max() <= 1e-10 * max(1.0, np.abs(y).max()), name


def test_qubit_structure():
    model = QubitModel([1.0, 0.5], [1.0, 2.0])
    assert model.hamiltonian(2.0)[1, 1] == pytest.approx(1.0)
    ds = model.dissipators(2.0)
    assert len(ds) == 4
    n = qubit_occupation(2.0, 2.0)
    assert ds[2].rate == pytest.approx(0.5 * (n + 1)) and ds[3].rate == pytest.approx(0.5 * n)
    assert jump_choi_min_eig(model, 2.0) >= -1e-12


def test_reference_frequency_balances_spread():
    w = reference_frequency([0.2, 5.0], 1.0)
    c = hyp.coth(np.array([0.1, 2.5]))
    assert c[0] * w / 0.2 == pytest.approx(c[1] * 5.0 / w, rel=1e-12)


def test_suggest_dim_tail():
    omega, beta = 1.0, 1.0
    n = suggest_dim([omega], beta, omega)
    pops = np.exp(-beta * omega * np.arange(n + 40))
    pops /= pops.sum()
    assert pops[n:].sum() < 1e-11
    assert suggest_dim([1.0], 100.0, 1.0) == 8
