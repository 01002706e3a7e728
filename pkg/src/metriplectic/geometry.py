"""Poisson structures, scalar fields, and whole-system definitions.

A system couples an antisymmetric state-dependent matrix Pi(x) with a
Hamiltonian H and k Casimir functions C_1..C_k (Pi grad C_i = 0), plus an
entropy shaper phi: R^k -> R.  Casimir-ness cannot be proved from the
expression trees, so it is certified by sampling: the residual
``max_x ||Pi(x) grad C(x)||_inf`` over a box of random points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import expressions as ex

__all__ = [
    "PoissonStructure",
    "ScalarField",
    "SystemDefinition",
    "VerificationPolicy",
    "CasimirReport",
    "CasimirError",
    "AntisymmetryError",
    "poisson_matrix",
    "verify_casimir",
    "compose_entropy",
    "sample_box",
]

ANTISYMMETRY_TOL = 1e-12


class AntisymmetryError(ValueError):
    """Pi(x) failed the antisymmetry check at some evaluation point."""


class CasimirError(ValueError):
    """A declared Casimir failed the residual check."""

    def __init__(self, index: int, residual: float, point: np.ndarray, tol: float):
        super().__init__(
            f"casimir {index}: residual {residual:.3e} at point "
            f"{np.asarray(point).tolist()} exceeds tolerance {tol:.3e}"
        )
        self.index = index
        self.residual = residual
        self.point = np.asarray(point, dtype=float)
        self.tol = tol


@dataclass(frozen=True)
class VerificationPolicy:
    """Sampling plan used to certify structure conditions numerically."""

    box: tuple[float, float] = (-2.0, 2.0)
    samples: int = 1000
    tolerance: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.box[0] >= self.box[1]:
            raise ValueError(f"empty sampling box {self.box}")
        if self.samples < 0:
            raise ValueError("sample count must be >= 0")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")


def sample_box(n: int, box: tuple[float, float], samples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo, hi = box
    return rng.uniform(lo, hi, size=(samples, n))


class PoissonStructure:
    """n x n grid of expressions, entry (i, j) giving the bracket {x_i, x_j}."""

    def __init__(self, n: int, entries: Sequence[Sequence[ex.Expression]]):
        if n < 1:
            raise ValueError(f"dimension must be >= 1, got {n}")
        if len(entries) != n or any(len(row) != n for row in entries):
            raise ValueError(f"entry grid must be {n}x{n}")
        self.n = n
        self.entries = tuple(tuple(row) for row in entries)

    @classmethod
    def from_strings(cls, rows: Sequence[Sequence[str]]) -> "PoissonStructure":
        n = len(rows)
        entries = [[ex.parse(cell, n) for cell in row] for row in rows]
        return cls(n, entries)


def poisson_matrix(structure: PoissonStructure, x: Sequence[float]) -> np.ndarray:
    """Numeric Pi(x); raises :class:`AntisymmetryError` if Pi^T != -Pi.

    Antisymmetry is checked on every evaluation (to 1e-12 absolute)
    because the entries are state-dependent.
    """
    n = structure.n
    if len(x) != n:
        raise ValueError(f"point has length {len(x)}, expected {n}")
    point = [float(v) for v in x]
    mat = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            mat[i, j] = ex.evaluate(structure.entries[i][j], point)
    worst = float(np.max(np.abs(mat + mat.T)))
    if worst > ANTISYMMETRY_TOL:
        raise AntisymmetryError(
            f"Pi(x) + Pi(x)^T has max entry {worst:.3e} at x={point} "
            f"(tolerance {ANTISYMMETRY_TOL})"
        )
    return mat


class ScalarField:
    """Expression plus its symbolic gradient, all of a fixed arity.

    The gradient is cross-checked against central finite differences of
    the value at a few sample points when the field is built, so a
    hand-assembled gradient (e.g. a chain rule) cannot silently disagree
    with the value expression.
    """

    _CHECK_POINTS = 8
    _CHECK_STEP = 1e-5
    _CHECK_TOL = 1e-4

    def __init__(self, arity: int, value: ex.Expression, gradient: Sequence[ex.Expression]):
        if arity < 1:
            raise ValueError(f"arity must be >= 1, got {arity}")
        if len(gradient) != arity:
            raise ValueError(f"gradient has {len(gradient)} components, expected {arity}")
        used = max(ex.max_var_index(value), *(ex.max_var_index(g) for g in gradient), 0)
        if used > arity:
            raise ValueError(f"field uses variable {used} beyond arity {arity}")
        self.arity = arity
        self.value = value
        self.gradient = tuple(gradient)
        self._check_gradient()

    @classmethod
    def from_expression(cls, value: ex.Expression, arity: int) -> "ScalarField":
        grads = [ex.differentiate(value, i) for i in range(1, arity + 1)]
        return cls(arity, value, grads)

    @classmethod
    def from_string(cls, text: str, arity: int) -> "ScalarField":
        return cls.from_expression(ex.parse(text, arity), arity)

    def value_at(self, x: Sequence[float]) -> float:
        return ex.evaluate(self.value, x)

    def gradient_at(self, x: Sequence[float]) -> np.ndarray:
        point = [float(v) for v in x]
        return np.array([ex.evaluate(g, point) for g in self.gradient])

    def _check_gradient(self) -> None:
        rng = np.random.default_rng(12345)
        pts = rng.uniform(-1.5, 1.5, size=(self._CHECK_POINTS, self.arity))
        h = self._CHECK_STEP
        for p in pts:
            for i in range(self.arity):
                stencil_hi = p.copy()
                stencil_lo = p.copy()
                stencil_hi[i] += h
                stencil_lo[i] -= h
                try:
                    sym = ex.evaluate(self.gradient[i], p)
                    fd = (ex.evaluate(self.value, stencil_hi) - ex.evaluate(self.value, stencil_lo)) / (2 * h)
                except ex.EvaluationError:
                    continue  # outside the domain; nothing to compare
                if abs(sym) > 1e6 or abs(fd) > 1e6:
                    continue  # too ill-conditioned for a finite-difference check
                if abs(fd - sym) > self._CHECK_TOL * max(1.0, abs(sym)):
                    raise ValueError(
                        f"gradient component {i + 1} disagrees with finite differences "
                        f"at {p.tolist()}: symbolic {sym!r}, central difference {fd!r}"
                    )


@dataclass(frozen=True)
class CasimirReport:
    max_residual: float
    passed: bool
    worst_point: Optional[np.ndarray] = field(default=None, compare=False)


def verify_casimir(
    structure: PoissonStructure,
    c: ScalarField,
    points: Sequence[Sequence[float]],
    tol: float,
) -> CasimirReport:
    """Certify ``Pi(x) grad c(x) = 0`` by sampling.

    Returns the worst sup-norm residual over the points; passes iff it
    is <= ``tol``.  Evaluation failures are re-raised with the offending
    point attached.
    """
    if len(points) == 0:
        raise ValueError("at least one sample point is required")
    if tol <= 0:
        raise ValueError("tolerance must be > 0")
    if c.arity != structure.n:
        raise ValueError(f"field arity {c.arity} does not match dimension {structure.n}")
    worst = 0.0
    worst_point = np.asarray(points[0], dtype=float)
    for p in points:
        try:
            residual = float(np.max(np.abs(poisson_matrix(structure, p) @ c.gradient_at(p))))
        except ex.EvaluationError as exc:
            raise ex.EvaluationError(
                f"casimir residual evaluation failed at {np.asarray(p).tolist()}: {exc}"
            ) from exc
        if residual > worst:
            worst = residual
            worst_point = np.asarray(p, dtype=float)
    return CasimirReport(max_residual=worst, passed=worst <= tol, worst_point=worst_point)


class SystemDefinition:
    """A Hamilton-Poisson system plus the entropy data for its dissipative part.

    Construction validates the pieces against each other (arities, phi
    arity = k) and certifies each declared Casimir by sampling, per the
    given :class:`VerificationPolicy`.  ``VerificationPolicy(samples=0)``
    skips the sampling (used when a caller wants to inspect a broken
    system deliberately).  Instances are immutable; derived artifacts are
    cached lazily.
    """

    def __init__(
        self,
        poisson: PoissonStructure,
        hamiltonian: ScalarField,
        casimirs: Sequence[ScalarField] = (),
        phi: Optional[ex.Expression] = None,
        name: str = "",
        verification: VerificationPolicy = VerificationPolicy(),
    ):
        n = poisson.n
        if hamiltonian.arity != n:
            raise ValueError(f"hamiltonian arity {hamiltonian.arity} != dimension {n}")
        for idx, c in enumerate(casimirs):
            if c.arity != n:
                raise ValueError(f"casimir {idx} arity {c.arity} != dimension {n}")
        k = len(casimirs)
        if k > 0:
            if phi is None:
                raise ValueError("phi is required when casimirs are declared")
            used = ex.max_var_index(phi)
            if used > k:
                raise ValueError(f"phi uses s{used} but only {k} casimirs are declared")
        elif phi is not None:
            raise ValueError("phi given but no casimirs declared")

        self.n = n
        self.k = k
        self.poisson = poisson
        self.hamiltonian = hamiltonian
        self.casimirs = tuple(casimirs)
        self.phi = phi
        self.name = name
        self.verification = verification
        self._entropy_field: Optional[ScalarField] = None
        self._compiled = None  # filled by dynamics on first use

        if verification.samples > 0:
            pts = sample_box(n, verification.box, verification.samples, verification.seed)
            if k == 0:
                for p in pts[: min(len(pts), 50)]:
                    poisson_matrix(poisson, p)  # antisymmetry check only
            for idx, c in enumerate(self.casimirs):
                report = verify_casimir(poisson, c, pts, verification.tolerance)
                if not report.passed:
                    raise CasimirError(idx, report.max_residual, report.worst_point, verification.tolerance)


def compose_entropy(sys: SystemDefinition) -> ScalarField:
    """The entropy function x -> phi(C_1(x), ..., C_k(x)) as a ScalarField.

    The gradient is assembled by the chain rule,
    ``sum_i (d phi / d s_i)(C(x)) * grad C_i(x)``.  Since each C_i is a
    Casimir, the composition is one as well.  For k = 0 the zero field is
    returned (the dynamics then has no dissipative part).
    """
    if sys._entropy_field is not None:
        return sys._entropy_field
    n = sys.n
    if sys.k == 0:
        zero = ex.Num(0.0)
        out = ScalarField(n, zero, [zero] * n)
    else:
        mapping = {i + 1: c.value for i, c in enumerate(sys.casimirs)}
        value = ex.substitute(sys.phi, mapping)
        partials = [
            ex.substitute(ex.differentiate(sys.phi, l + 1), mapping) for l in range(sys.k)
        ]
        gradient = []
        for i in range(n):
            total = ex.Num(0.0)
            for l in range(sys.k):
                total = ex.add(total, ex.mul(partials[l], sys.casimirs[l].gradient[i]))
            gradient.append(total)
        out = ScalarField(n, value, gradient)
    sys._entropy_field = out
    return out
