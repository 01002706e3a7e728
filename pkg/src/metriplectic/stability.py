"""Energy-Casimir stability tests and trajectory convergence diagnostics.

An equilibrium x_e is certified by the augmented energy
``H_phi = H + phi(C_1, ..., C_k)``: if its gradient vanishes and its
Hessian is positive definite at x_e, then ``L = H_phi - H_phi(x_e)`` is
a Lyapunov function for the dissipative dynamics and trajectories
started nearby approach the set where grad H and grad phi(C) are
linearly dependent.  The convergence half is checked a posteriori on a
computed trajectory: L must be nonincreasing step to step (within
slack), and the trajectory tail, the computable stand-in for the
omega-limit set, must sit at a small dependence defect.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import expressions as ex
from .dynamics import conservative_field, diagnostics_function
from .geometry import ScalarField, SystemDefinition, compose_entropy
from .integrators import Trajectory

__all__ = [
    "LyapunovReport",
    "LaSalleReport",
    "PD_TOL",
    "HESSIAN_ASYMMETRY_TOL",
    "augmented_energy",
    "hessian",
    "lyapunov_report",
    "lasalle_diagnostics",
]

PD_TOL = 1e-8
HESSIAN_ASYMMETRY_TOL = 1e-8
DEFAULT_FD_SCALE = 1e-4


def augmented_energy(sys: SystemDefinition) -> ScalarField:
    """``H + phi(C_1, ..., C_k)`` with the chain-rule gradient."""
    entropy = compose_entropy(sys)
    h = sys.hamiltonian
    value = ex.add(h.value, entropy.value)
    gradient = [ex.add(h.gradient[i], entropy.gradient[i]) for i in range(sys.n)]
    return ScalarField(sys.n, value, gradient)


def hessian(field: ScalarField, x: Sequence[float], h: Optional[float] = None) -> np.ndarray:
    """Symmetrized central finite differences of the symbolic gradient.

    ``M[i][j] = (d_j f(x + h e_i) - d_j f(x - h e_i)) / (2h)`` followed by
    ``(M + M^T)/2``.  The default step ``1e-4 * (1 + ||x||_inf)`` balances
    truncation against rounding for exact gradients in double precision.
    """
    point = np.asarray(x, dtype=float)
    if point.shape != (field.arity,):
        raise ValueError(f"point has shape {point.shape}, expected ({field.arity},)")
    if h is not None and h <= 0:
        raise ValueError("finite-difference step must be > 0")
    raw = _raw_hessian(field, point, h)
    return (raw + raw.T) / 2.0


@dataclass(frozen=True)
class LyapunovReport:
    """Energy-Casimir test of an equilibrium candidate."""

    point: np.ndarray
    grad_norm: float  # ||grad H_phi(x_e)||_inf; ~0 is the critical-point condition
    hessian: np.ndarray
    eigenvalues: np.ndarray  # ascending
    positive_definite: bool
    lyapunov_offset: float  # H_phi(x_e); the Lyapunov candidate is H_phi - offset
    pd_tol: float = PD_TOL


def lyapunov_report(
    sys: SystemDefinition,
    x_e: Sequence[float],
    pd_tol: float = PD_TOL,
    fd_step: Optional[float] = None,
) -> LyapunovReport:
    """Evaluate both energy-Casimir conditions at ``x_e``.

    Warns (without failing) when ``x_e`` is not an equilibrium of the
    conservative field, since the test is then vacuous.
    """
    point = np.asarray(x_e, dtype=float)
    field = augmented_energy(sys)
    xi_pi = conservative_field(sys, point)
    if float(np.max(np.abs(xi_pi))) > 1e-9 * (1.0 + float(np.max(np.abs(point)))):
        warnings.warn(
            f"point {point.tolist()} is not an equilibrium of the conservative field "
            f"(|Pi grad H|_inf = {float(np.max(np.abs(xi_pi))):.3e})",
            stacklevel=2,
        )
    grad_norm = float(np.max(np.abs(field.gradient_at(point))))
    raw = _raw_hessian(field, point, fd_step)
    asym = float(np.max(np.abs(raw - raw.T)))
    if asym > HESSIAN_ASYMMETRY_TOL:
        raise ValueError(
            f"finite-difference Hessian asymmetry {asym:.3e} exceeds "
            f"{HESSIAN_ASYMMETRY_TOL:g}; the gradient looks inconsistent"
        )
    sym = (raw + raw.T) / 2.0
    eigenvalues = np.linalg.eigvalsh(sym)
    return LyapunovReport(
        point=point,
        grad_norm=grad_norm,
        hessian=sym,
        eigenvalues=eigenvalues,
        positive_definite=bool(eigenvalues[0] > pd_tol),
        lyapunov_offset=float(field.value_at(point)),
        pd_tol=pd_tol,
    )


def _raw_hessian(field: ScalarField, point: np.ndarray, h: Optional[float]) -> np.ndarray:
    if h is None:
        h = DEFAULT_FD_SCALE * (1.0 + float(np.max(np.abs(point))))
    n = field.arity
    mat = np.empty((n, n))
    for i in range(n):
        hi = point.copy()
        lo = point.copy()
        hi[i] += h
        lo[i] -= h
        for j in range(n):
            mat[i, j] = (ex.evaluate(field.gradient[j], hi) - ex.evaluate(field.gradient[j], lo)) / (2.0 * h)
    return mat


@dataclass(frozen=True)
class LaSalleReport:
    """A posteriori convergence evidence from a trajectory."""

    monotone_violations: int  # per-step increases of L above slack
    worst_increase: float  # most positive per-step change of L (can be <= 0)
    tail_states: np.ndarray  # final tail_fraction of the samples
    tail_max_defect: float  # max dependence defect over the tail
    tail_spread: np.ndarray  # per-coordinate peak-to-peak extent of the tail
    converged_to_E: bool


def lasalle_diagnostics(
    traj: Trajectory,
    sys: SystemDefinition,
    x_e: Sequence[float],
    tail_fraction: float = 0.1,
    defect_tol: float = 1e-6,
    slack_scale: float = 1e-10,
) -> LaSalleReport:
    """Scan ``L = H_phi(x(t)) - H_phi(x_e)`` and the trajectory tail.

    A per-step increase counts as a violation when it exceeds
    ``slack_scale * (1 + |L|)``.  The tail (last ``tail_fraction`` of the
    samples) approximates the omega-limit set; convergence to the
    linear-dependence set is declared when its worst defect is within
    ``defect_tol``.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must be in (0, 1]")
    if traj.states.shape[1] != sys.n:
        raise ValueError(f"trajectory dimension {traj.states.shape[1]} != system dimension {sys.n}")
    offset = float(augmented_energy(sys).value_at(np.asarray(x_e, dtype=float)))

    if traj.diagnostics is not None:
        energy = traj.column("H")
        entropy = traj.column("phi_c")
        defects = traj.column("dependence_defect")
    else:
        diag = diagnostics_function(sys)
        records = np.array([diag(s) for s in traj.states])
        energy, entropy, defects = records[:, 0], records[:, 1], records[:, 3]

    lyap = energy + entropy - offset
    increases = np.diff(lyap)
    if len(increases):
        slack = slack_scale * (1.0 + np.abs(lyap[:-1]))
        violations = int(np.sum(increases > slack))
        worst = float(np.max(increases))
    else:
        violations = 0
        worst = 0.0

    m_tail = max(1, int(np.ceil(tail_fraction * len(traj))))
    tail_states = traj.states[-m_tail:]
    tail_max_defect = float(np.max(defects[-m_tail:]))
    return LaSalleReport(
        monotone_violations=violations,
        worst_increase=worst,
        tail_states=tail_states,
        tail_max_defect=tail_max_defect,
        tail_spread=np.ptp(tail_states, axis=0),
        converged_to_E=bool(tail_max_defect <= defect_tol),
    )
