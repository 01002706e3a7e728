"""The two canonical vector fields and equilibrium/dependence analysis.

For a system (Pi, H, C_1..C_k, phi) the conservative field is
``xi_pi = Pi grad H`` and the full field adds the dissipative term,

    xi = Pi grad H + (g . u) g - ||g||^2 u,
    g = grad H,  u = grad phi(C_1, ..., C_k),

which is the matrix-free application of the dissipation matrix built
from g.  Points where g and u are linearly dependent are equilibria of
both fields; the normalized Gram defect

    (||g||^2 ||u||^2 - (g . u)^2) / (||g||^2 ||u||^2)   in [0, 1]

is the scale-invariant proxy used to measure distance from that set.

Field evaluation is compiled: the component formulas are assembled once
per system into plain Python arithmetic (shared subterms hoisted into
locals) so that long integrations stay cheap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import expressions as ex
from .geometry import ScalarField, SystemDefinition, compose_entropy

__all__ = [
    "DependenceReport",
    "EquilibriumReport",
    "DEFAULT_DEPENDENCE_TOL",
    "DEFAULT_EQUILIBRIUM_TOL",
    "PROP_21_SLACK",
    "conservative_field",
    "metriplectic_field",
    "field_function",
    "diagnostics_function",
    "linear_dependence",
    "dependence_defect",
    "classify_equilibrium",
]

DEFAULT_DEPENDENCE_TOL = 1e-10
DEFAULT_EQUILIBRIUM_TOL = 1e-9
PROP_21_SLACK = 10.0

_RUNTIME_ERRORS = (ZeroDivisionError, ValueError, OverflowError)


# ---------------------------------------------------------------------------
# Code generation

def _emit_gradient(lines, prefix, fields: Sequence[ex.Expression], names):
    for i, g in enumerate(fields):
        lines.append(f"    {prefix}{i + 1} = {ex.to_source(g, names)}")


def _xi_pi_sources(sys: SystemDefinition, names) -> list[str]:
    """Per-component source of Pi(x) grad H(x); zero entries are dropped."""
    rows = []
    for i in range(sys.n):
        terms = []
        for j in range(sys.n):
            entry = sys.poisson.entries[i][j]
            if isinstance(entry, ex.Num) and entry.value == 0.0:
                continue
            terms.append(f"{ex.to_source(entry, names)}*g{j + 1}")
        rows.append(" + ".join(terms) if terms else "0.0")
    return rows


def _entropy_gradient_lines(sys: SystemDefinition, names) -> list[str]:
    """Lines computing u = grad phi(C) via hoisted c_l and phi-partials f_l."""
    lines = []
    cnames = [f"c{l + 1}" for l in range(sys.k)]
    for l, c in enumerate(sys.casimirs):
        lines.append(f"    c{l + 1} = {ex.to_source(c.value, names)}")
    for l in range(sys.k):
        partial = ex.differentiate(sys.phi, l + 1)
        lines.append(f"    f{l + 1} = {ex.to_source(partial, cnames)}")
    for i in range(sys.n):
        terms = []
        for l, c in enumerate(sys.casimirs):
            gsrc = ex.to_source(c.gradient[i], names)
            terms.append(f"f{l + 1}*{gsrc}")
        lines.append(f"    u{i + 1} = " + " + ".join(terms))
    return lines


def _generate(sys: SystemDefinition) -> str:
    n, k = sys.n, sys.k
    names = [f"x{i + 1}" for i in range(n)]
    unpack = [f"    x{i + 1} = xs[{i}]" for i in range(n)]
    xi_pi = _xi_pi_sources(sys, names)
    dot = lambda a, b: " + ".join(f"{a}{i + 1}*{b}{i + 1}" for i in range(n))

    lines = ["def conservative(xs):"]
    lines += unpack
    _emit_gradient(lines, "g", sys.hamiltonian.gradient, names)
    lines.append("    return (" + ", ".join(xi_pi) + ("," if n == 1 else "") + ")")
    lines.append("")

    if k == 0:
        lines.append("metriplectic = conservative")
    else:
        lines.append("def metriplectic(xs):")
        lines += unpack
        _emit_gradient(lines, "g", sys.hamiltonian.gradient, names)
        lines += _entropy_gradient_lines(sys, names)
        lines.append(f"    hu = {dot('g', 'u')}")
        lines.append(f"    hh = {dot('g', 'g')}")
        comps = [f"{xi_pi[i]} + hu*g{i + 1} - hh*u{i + 1}" for i in range(n)]
        lines.append("    return (" + ", ".join(comps) + ("," if n == 1 else "") + ")")
    lines.append("")

    lines.append("def gradients(xs):")
    lines += unpack
    _emit_gradient(lines, "g", sys.hamiltonian.gradient, names)
    if k == 0:
        lines += [f"    u{i + 1} = 0.0" for i in range(n)]
    else:
        lines += _entropy_gradient_lines(sys, names)
    gtuple = ", ".join(f"g{i + 1}" for i in range(n))
    utuple = ", ".join(f"u{i + 1}" for i in range(n))
    lines.append(f"    return (({gtuple},), ({utuple},))")
    lines.append("")

    lines.append("def diagnostics(xs):")
    lines += unpack
    lines.append(f"    hval = {ex.to_source(sys.hamiltonian.value, names)}")
    if k == 0:
        lines.append("    return (hval, 0.0, 0.0, 0.0)")
    else:
        _emit_gradient(lines, "g", sys.hamiltonian.gradient, names)
        lines += _entropy_gradient_lines(sys, names)
        cnames = [f"c{l + 1}" for l in range(k)]
        lines.append(f"    phival = {ex.to_source(sys.phi, cnames)}")
        lines.append(f"    hu = {dot('g', 'u')}")
        lines.append(f"    hh = {dot('g', 'g')}")
        lines.append(f"    uu = {dot('u', 'u')}")
        lines.append("    sdot = hu*hu - hh*uu")
        lines.append("    denom = hh*uu")
        lines.append("    if denom > 0.0:")
        lines.append("        defect = (denom - hu*hu)/denom")
        lines.append("        if defect < 0.0:")
        lines.append("            defect = 0.0")
        lines.append("        elif defect > 1.0:")
        lines.append("            defect = 1.0")
        lines.append("    else:")
        lines.append("        defect = 0.0")
        lines.append("    return (hval, phival, sdot, defect)")
    lines.append("")
    return "\n".join(lines)


def _compiled(sys: SystemDefinition) -> dict:
    cache = sys._compiled
    if cache is None:
        # touching compose_entropy first runs its construction-time checks
        compose_entropy(sys)
        namespace = dict(ex.SOURCE_ENV)
        exec(compile(_generate(sys), f"<{sys.name or 'system'}-dynamics>", "exec"), namespace)
        cache = {
            "conservative": namespace["conservative"],
            "metriplectic": namespace["metriplectic"],
            "gradients": namespace["gradients"],
            "diagnostics": namespace["diagnostics"],
        }
        sys._compiled = cache
    return cache


def _call(fn, xs):
    try:
        return fn(xs)
    except ex.EvaluationError:
        raise
    except _RUNTIME_ERRORS as exc:
        raise ex.EvaluationError(f"{exc} at x={xs}") from exc


def _as_state(sys: SystemDefinition, x: Sequence[float]) -> list:
    xs = np.asarray(x, dtype=float)
    if xs.shape != (sys.n,):
        raise ValueError(f"state has shape {xs.shape}, expected ({sys.n},)")
    return xs.tolist()


def field_function(sys: SystemDefinition, kind: str) -> Callable[[np.ndarray], np.ndarray]:
    """Fast state -> derivative callable for ``kind`` in {conservative, metriplectic}."""
    if kind not in ("conservative", "metriplectic"):
        raise ValueError(f"unknown field kind {kind!r}")
    fn = _compiled(sys)[kind]
    n = sys.n

    def field(x):
        xs = np.asarray(x, dtype=float).tolist()
        if len(xs) != n:
            raise ValueError(f"state has length {len(xs)}, expected {n}")
        return np.array(_call(fn, xs))

    return field


def diagnostics_function(sys: SystemDefinition) -> Callable[[np.ndarray], tuple]:
    """Per-state record ``(H, phi(C), entropy production, dependence defect)``."""
    fn = _compiled(sys)["diagnostics"]
    n = sys.n

    def diag(x):
        xs = np.asarray(x, dtype=float).tolist()
        if len(xs) != n:
            raise ValueError(f"state has length {len(xs)}, expected {n}")
        return _call(fn, xs)

    return diag


def conservative_field(sys: SystemDefinition, x: Sequence[float]) -> np.ndarray:
    """``Pi(x) grad H(x)``."""
    return np.array(_call(_compiled(sys)["conservative"], _as_state(sys, x)))


def metriplectic_field(sys: SystemDefinition, x: Sequence[float]) -> np.ndarray:
    """``Pi grad H + G grad phi(C)`` with the dissipation applied matrix-free."""
    return np.array(_call(_compiled(sys)["metriplectic"], _as_state(sys, x)))


def _gradient_pair(sys: SystemDefinition, x: Sequence[float]):
    g, u = _call(_compiled(sys)["gradients"], _as_state(sys, x))
    return np.array(g), np.array(u)


# ---------------------------------------------------------------------------
# Linear dependence and equilibria

@dataclass(frozen=True)
class DependenceReport:
    """Whether two gradients are (numerically) linearly dependent.

    ``lam`` is the coefficient with ``u = lam * v`` when it is defined;
    it is absent when v vanishes (degenerate dependence).
    """

    dependent: bool
    lam: Optional[float]
    gram_defect: float
    normalized_defect: float


def linear_dependence(
    u: Sequence[float],
    v: Sequence[float],
    tol: float = DEFAULT_DEPENDENCE_TOL,
) -> DependenceReport:
    """Scale-invariant dependence test via the normalized Gram defect."""
    uu_vec = np.asarray(u, dtype=float)
    vv_vec = np.asarray(v, dtype=float)
    if uu_vec.shape != vv_vec.shape or uu_vec.ndim != 1:
        raise ValueError(f"shape mismatch: {uu_vec.shape} vs {vv_vec.shape}")
    if tol <= 0:
        raise ValueError("tolerance must be > 0")
    uu = float(np.dot(uu_vec, uu_vec))
    vv = float(np.dot(vv_vec, vv_vec))
    uv = float(np.dot(uu_vec, vv_vec))
    gram = max(0.0, uu * vv - uv * uv)
    normalized = gram / (uu * vv) if (uu > 0.0 and vv > 0.0) else 0.0
    dependent = normalized <= tol
    lam = uv / vv if (dependent and vv > 0.0) else None
    return DependenceReport(
        dependent=dependent, lam=lam, gram_defect=gram, normalized_defect=normalized
    )


def dependence_defect(sys: SystemDefinition, x: Sequence[float]) -> float:
    """Normalized Gram defect of (grad H, grad phi(C)) at ``x``.

    Continuous in the state, zero exactly on the linear-dependence set.
    """
    return _call(_compiled(sys)["diagnostics"], _as_state(sys, x))[3]


@dataclass(frozen=True)
class EquilibriumReport:
    point: np.ndarray
    is_xi_pi_equilibrium: bool
    is_xi_equilibrium: bool
    dependence: DependenceReport
    xi_pi_norm: float
    xi_norm: float
    threshold: float


def classify_equilibrium(
    sys: SystemDefinition,
    x: Sequence[float],
    tol: float = DEFAULT_EQUILIBRIUM_TOL,
) -> EquilibriumReport:
    """Test ``x`` against both fields with threshold ``tol * (1 + ||x||_inf)``.

    A full-field equilibrium must also be a conservative-field one; that
    implication is asserted (with slack ``PROP_21_SLACK``) on every call.
    """
    if tol <= 0:
        raise ValueError("tolerance must be > 0")
    point = np.asarray(x, dtype=float)
    xi_pi = conservative_field(sys, point)
    xi = metriplectic_field(sys, point)
    g, u = _gradient_pair(sys, point)
    thr = tol * (1.0 + float(np.max(np.abs(point))))
    xi_pi_norm = float(np.max(np.abs(xi_pi)))
    xi_norm = float(np.max(np.abs(xi)))
    is_xi = xi_norm <= thr
    is_xi_pi = xi_pi_norm <= thr
    assert not is_xi or xi_pi_norm <= PROP_21_SLACK * thr, (
        f"full-field equilibrium at {point.tolist()} is not a conservative one: "
        f"|xi_pi| = {xi_pi_norm:.3e} vs threshold {thr:.3e}"
    )
    return EquilibriumReport(
        point=point,
        is_xi_pi_equilibrium=is_xi_pi,
        is_xi_equilibrium=is_xi,
        dependence=linear_dependence(g, u),
        xi_pi_norm=xi_pi_norm,
        xi_norm=xi_norm,
        threshold=thr,
    )
