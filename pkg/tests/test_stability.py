from pathlib import Path

import numpy as np
import pytest

import metriplectic as mp

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

PARAM_GRID = [
    mp.RigidBodyParams(3.0, 2.0, 1.0, 1.0),
    mp.RigidBodyParams(5.0, 3.0, 2.0, 2.0),
    mp.RigidBodyParams(4.0, 2.5, 1.5, 0.5),
    mp.RigidBodyParams(10.0, 4.0, 1.0, -1.0),
    mp.RigidBodyParams(2.5, 2.0, 1.5, 1.5),
]


def analytic_hessian_eigs(p: mp.RigidBodyParams) -> np.ndarray:
    return np.sort([1 / p.I2 - 1 / p.I1, 1 / p.I3 - 1 / p.I1, 2 * p.M0 * p.M0])


@pytest.fixture(scope="module")
def rigid():
    return mp.rigid_body_system()


# ---------------------------------------------------------------------------
# augmented_energy

def test_augmented_energy_at_equilibrium(rigid):
    field = mp.augmented_energy(rigid)
    assert field.value_at([1.0, 0.0, 0.0]) == pytest.approx(0.0, abs=1e-15)


def test_augmented_energy_generic_point(rigid):
    field = mp.augmented_energy(rigid)
    assert field.value_at([1.0, 1.0, 1.0]) == pytest.approx(17 / 12, rel=1e-14)


def test_augmented_energy_without_entropy_equals_hamiltonian():
    sys_def = mp.SystemDefinition(
        poisson=mp.PoissonStructure.from_strings([["0", "-x3", "x2"], ["x3", "0", "-x1"], ["-x2", "x1", "0"]]),
        hamiltonian=mp.ScalarField.from_string("x1^2 + x2^2 + x3^2", 3),
        verification=mp.VerificationPolicy(samples=20),
    )
    field = mp.augmented_energy(sys_def)
    rng = np.random.default_rng(30)
    for _ in range(20):
        p = rng.uniform(-2, 2, 3)
        assert field.value_at(p) == sys_def.hamiltonian.value_at(p)


# ---------------------------------------------------------------------------
# hessian

def test_hessian_of_square():
    field = mp.ScalarField.from_string("x1^2", 3)
    assert mp.hessian(field, [0.3, -1.0, 2.0]) == pytest.approx(np.diag([2.0, 0.0, 0.0]), abs=1e-8)


def test_hessian_of_cross_term():
    field = mp.ScalarField.from_string("x1*x2", 3)
    expected = np.zeros((3, 3))
    expected[0, 1] = expected[1, 0] = 1.0
    assert mp.hessian(field, [0.0, 0.0, 0.0]) == pytest.approx(expected, abs=1e-8)


def test_hessian_of_augmented_energy(rigid):
    field = mp.augmented_energy(rigid)
    out = mp.hessian(field, [1.0, 0.0, 0.0])
    assert out == pytest.approx(np.diag([2.0, 1 / 6, 2 / 3]), abs=1e-6)


def test_hessian_is_exactly_symmetric(rigid):
    out = mp.hessian(mp.augmented_energy(rigid), [0.3, -0.2, 0.9])
    assert np.array_equal(out, out.T)


def test_hessian_argument_checks(rigid):
    field = mp.augmented_energy(rigid)
    with pytest.raises(ValueError):
        mp.hessian(field, [1.0, 0.0])
    with pytest.raises(ValueError):
        mp.hessian(field, [1.0, 0.0, 0.0], h=0.0)


# ---------------------------------------------------------------------------
# lyapunov_report

def test_report_at_stable_equilibrium(rigid):
    report = mp.lyapunov_report(rigid, [1.0, 0.0, 0.0])
    assert report.grad_norm <= 1e-10
    assert report.eigenvalues == pytest.approx([1 / 6, 2 / 3, 2.0], abs=1e-6)
    assert report.positive_definite
    assert report.lyapunov_offset == pytest.approx(0.0, abs=1e-15)


def test_report_warns_off_equilibrium(rigid):
    with pytest.warns(UserWarning, match="not an equilibrium"):
        report = mp.lyapunov_report(rigid, [1.0, 1.0, 1.0])
    # grad H_phi(1,1,1) = (2, 13/6, 8/3); sup norm is 8/3
    assert report.grad_norm == pytest.approx(8 / 3, rel=1e-14)
    assert not report.positive_definite is None


def test_report_quadratic_hamiltonian_no_entropy():
    sys_def = mp.SystemDefinition(
        poisson=mp.PoissonStructure.from_strings([["0", "-x3", "x2"], ["x3", "0", "-x1"], ["-x2", "x1", "0"]]),
        hamiltonian=mp.ScalarField.from_string("x1^2 + x2^2 + x3^2", 3),
        verification=mp.VerificationPolicy(samples=20),
    )
    report = mp.lyapunov_report(sys_def, [0.0, 0.0, 0.0])
    assert report.grad_norm == 0.0
    assert report.eigenvalues == pytest.approx([2.0, 2.0, 2.0], abs=1e-8)
    assert report.positive_definite


def test_grid_of_parameters_matches_analytic_hessian():
    for params in PARAM_GRID:
        sys_def = mp.rigid_body_system(params)
        x_e = [params.M0, 0.0, 0.0]
        report = mp.lyapunov_report(sys_def, x_e)
        assert report.grad_norm <= 1e-8
        assert report.eigenvalues == pytest.approx(analytic_hessian_eigs(params), abs=1e-6)
        assert report.positive_definite


def test_x3_axis_candidate_entropy_fails_definiteness():
    # the mirrored entropy shaper (1/I3 in place of 1/I1) still makes
    # (0, 0, M0) critical, but its Hessian there is indefinite
    sys_def = mp.load_system_file(CONFIG_DIR / "rigid_body_x3_axis.json")
    report = mp.lyapunov_report(sys_def, [0.0, 0.0, 1.0])
    assert report.grad_norm <= 1e-8
    assert report.eigenvalues == pytest.approx([-2 / 3, -1 / 2, 2.0], abs=1e-6)
    assert not report.positive_definite


# ---------------------------------------------------------------------------
# lasalle_diagnostics

def test_single_point_trajectory(rigid):
    traj = mp.Trajectory(times=np.array([0.0]), states=np.array([[1.0, 0.0, 0.0]]))
    report = mp.lasalle_diagnostics(traj, rigid, [1.0, 0.0, 0.0])
    assert report.monotone_violations == 0
    assert report.worst_increase == 0.0
    assert report.tail_max_defect == mp.dependence_defect(rigid, [1.0, 0.0, 0.0]) == 0.0
    assert report.converged_to_E


def test_conservative_run_keeps_lyapunov_constant(rigid):
    field = mp.field_function(rigid, "conservative")
    diag = mp.diagnostics_function(rigid)
    traj = mp.integrate(field, [1.0, 1.0, 1.0], (0.0, 10.0), mp.StepControl(h=1e-3), diagnostics=diag)
    report = mp.lasalle_diagnostics(traj, rigid, [1.0, 0.0, 0.0])
    lyap = traj.column("H") + traj.column("phi_c")
    assert np.max(np.abs(lyap - lyap[0])) <= 1e-8
    assert not report.converged_to_E  # generic orbit stays away from the axes


def test_metriplectic_run_descends_and_converges(rigid):
    field = mp.field_function(rigid, "metriplectic")
    diag = mp.diagnostics_function(rigid)
    traj = mp.integrate(field, [1.01, 0.05, -0.03], (0.0, 150.0), mp.StepControl(h=1e-3), diagnostics=diag)
    report = mp.lasalle_diagnostics(traj, rigid, [1.0, 0.0, 0.0], defect_tol=1e-6)
    assert report.monotone_violations == 0
    assert report.converged_to_E
    assert report.tail_max_defect <= 1e-6
    assert report.tail_spread.shape == (3,)


def test_diagnostics_computed_when_missing(rigid):
    field = mp.field_function(rigid, "metriplectic")
    with_diag = mp.integrate(
        field, [1.01, 0.05, -0.03], (0.0, 5.0), mp.StepControl(h=1e-2),
        diagnostics=mp.diagnostics_function(rigid),
    )
    without = mp.integrate(field, [1.01, 0.05, -0.03], (0.0, 5.0), mp.StepControl(h=1e-2))
    a = mp.lasalle_diagnostics(with_diag, rigid, [1.0, 0.0, 0.0])
    b = mp.lasalle_diagnostics(without, rigid, [1.0, 0.0, 0.0])
    assert a.tail_max_defect == pytest.approx(b.tail_max_defect, rel=1e-12, abs=1e-300)
    assert a.monotone_violations == b.monotone_violations


def test_lasalle_argument_checks(rigid):
    traj = mp.Trajectory(times=np.array([0.0]), states=np.array([[1.0, 0.0, 0.0]]))
    with pytest.raises(ValueError):
        mp.lasalle_diagnostics(traj, rigid, [1.0, 0.0, 0.0], tail_fraction=0.0)
    bad = mp.Trajectory(times=np.array([0.0]), states=np.array([[1.0, 0.0]]))
    with pytest.raises(ValueError):
        mp.lasalle_diagnostics(bad, rigid, [1.0, 0.0, 0.0])
