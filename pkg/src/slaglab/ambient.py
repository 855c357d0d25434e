"""Flat ambient models on R^{2n} or torus quotients.

Coordinates are ordered (x1, y1, x2, y2, ...), so index 2j is the j-th real
axis and 2j+1 the j-th imaginary axis.  All structure tensors are constant;
the conformal weight rho may be supplied as an expression but must agree with
the top-form normalization pointwise, which with constant coefficients pins it
to a constant.

A model validates

    (-1)^{n(n-1)/2} (i/2)^n  Omega ^ conj(Omega)  =  rho^2 omega^n / n!

and exposes the unit-length normalization Omega / rho used by the calibration
residuals and the dual flux integrand, together with the conformal metric
rho^{-2/n} g that makes calibrated submanifolds minimal.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ArityMismatchError, NormalizationFailureError, NotKaehlerError
from .expressions import ScalarExpression

_NORMALIZATION_TOL = 1e-12


class ConstantForm:
    """Constant-coefficient alternating k-form on R^dim.

    Coefficients are stored against strictly increasing index tuples; values
    may be real or complex.
    """

    def __init__(self, dim: int, degree: int, coeffs: dict):
        self.dim = dim
        self.degree = degree
        self.coeffs = {}
        for idx, val in coeffs.items():
            key, sign = _sort_index(tuple(idx))
            if key is None or val == 0:
                continue
            self.coeffs[key] = self.coeffs.get(key, 0) + sign * val
        self.coeffs = {k: v for k, v in self.coeffs.items() if v != 0}

    def __call__(self, vectors: np.ndarray):
        """Evaluate on k vectors: array (..., k, dim) or a sequence of k vectors."""
        vectors = np.asarray(vectors, dtype=float)
        if vectors.ndim == 1 and self.degree == 1:
            vectors = vectors[None, :]
        if vectors.shape[-2] != self.degree or vectors.shape[-1] != self.dim:
            raise ArityMismatchError(
                f"need {self.degree} vectors in R^{self.dim}, got shape {vectors.shape}"
            )
        out = np.zeros(vectors.shape[:-2], dtype=complex)
        for idx, val in self.coeffs.items():
            sub = vectors[..., :, idx]
            out = out + val * np.linalg.det(sub)
        if np.iscomplexobj(np.array(list(self.coeffs.values()))):
            return out
        return out.real

    def scaled(self, factor) -> "ConstantForm":
        return ConstantForm(self.dim, self.degree, {k: factor * v for k, v in self.coeffs.items()})

    def real(self) -> "ConstantForm":
        return ConstantForm(self.dim, self.degree, {k: np.real(v) for k, v in self.coeffs.items()})

    def imag(self) -> "ConstantForm":
        return ConstantForm(self.dim, self.degree, {k: np.imag(v) for k, v in self.coeffs.items()})

    def conjugate(self) -> "ConstantForm":
        return ConstantForm(self.dim, self.degree, {k: np.conj(v) for k, v in self.coeffs.items()})

    def wedge(self, other: "ConstantForm") -> "ConstantForm":
        out: dict = {}
        for ia, va in self.coeffs.items():
            for ib, vb in other.coeffs.items():
                key, sign = _sort_index(ia + ib)
                if key is None:
                    continue
                out[key] = out.get(key, 0) + sign * va * vb
        return ConstantForm(self.dim, self.degree + other.degree, out)

    def contract(self, vector: np.ndarray) -> "ConstantForm":
        """Interior product into the first slot with a constant vector."""
        vector = np.asarray(vector, dtype=float)
        out: dict = {}
        for idx, val in self.coeffs.items():
            for pos, i in enumerate(idx):
                rest = idx[:pos] + idx[pos + 1 :]
                out[rest] = out.get(rest, 0) + ((-1) ** pos) * val * vector[i]
        return ConstantForm(self.dim, self.degree - 1, out)

    def as_matrix(self) -> np.ndarray:
        """Degree-2 form as the antisymmetric matrix A with form(u, v) = u^T A v."""
        if self.degree != 2:
            raise ArityMismatchError("as_matrix needs a 2-form")
        mat = np.zeros((self.dim, self.dim))
        for (i, j), val in self.coeffs.items():
            mat[i, j] = val
            mat[j, i] = -val
        return mat


def _sort_index(idx):
    """Sort an index tuple, returning (sorted tuple, permutation sign) or (None, 0)."""
    if len(set(idx)) != len(idx):
        return None, 0
    lst = list(idx)
    sign = 1
    for i in range(len(lst)):
        for j in range(i + 1, len(lst)):
            if lst[j] < lst[i]:
                lst[i], lst[j] = lst[j], lst[i]
                sign = -sign
    return tuple(lst), sign


def standard_symplectic(n: int) -> ConstantForm:
    return ConstantForm(2 * n, 2, {(2 * j, 2 * j + 1): 1.0 for j in range(n)})


def standard_complex_structure(n: int) -> np.ndarray:
    J = np.zeros((2 * n, 2 * n))
    for j in range(n):
        J[2 * j + 1, 2 * j] = 1.0
        J[2 * j, 2 * j + 1] = -1.0
    return J


def standard_top_form(n: int, scale=1.0) -> ConstantForm:
    """dz_1 ^ ... ^ dz_n with dz_j = dx_j + i dy_j, times an overall scale."""
    coeffs: dict = {(): complex(scale)}
    form = ConstantForm(2 * n, 0, coeffs)
    for j in range(n):
        dz = ConstantForm(2 * n, 1, {(2 * j,): 1.0, (2 * j + 1,): 1j})
        form = form.wedge(dz)
    return form


@dataclass(frozen=True)
class BoundaryLagrangian:
    """Affine subspace or sub-torus constraining one boundary component."""

    index: int
    basepoint: np.ndarray
    span: np.ndarray  # (n, 2n), rows are spanning directions

    def distances(self, points: np.ndarray, lattice: np.ndarray | None) -> np.ndarray:
        """Distance from each point to the subspace, lattice-aware on a torus."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rel = points - self.basepoint
        if lattice is not None:
            coords = np.linalg.solve(lattice.T, rel.T).T
            rel = rel - np.round(coords) @ lattice
        q, _ = np.linalg.qr(self.span.T)
        perp = rel - (rel @ q) @ q.T
        return np.linalg.norm(perp, axis=1)


class AmbientModel:
    """Validated flat (almost) Calabi-Yau background."""

    def __init__(self, n, topology, lattice, omega, J, Omega, rho_expr=None):
        self.n = n
        self.topology = topology
        self.lattice = lattice
        self.omega = omega
        self.J = J
        self.Omega = Omega
        self.rho = ScalarExpression(rho_expr, 2 * n) if rho_expr is not None else None
        self._validate_kaehler()
        self.rho_value, self.normalization_residual = self._validate_normalization()
        self.metric = self.omega.as_matrix() @ self.J  # g = omega(. , J .)
        self.omega_hat = Omega.scaled(1.0 / self.rho_value)
        self.re_omega_hat = self.omega_hat.real()
        self.im_omega_hat = self.omega_hat.imag()
        self.re_omega = Omega.real()
        self.im_omega = Omega.imag()

    # -- validation ----------------------------------------------------------

    def _validate_kaehler(self):
        n2 = 2 * self.n
        J = self.J
        if not np.allclose(J @ J, -np.eye(n2), atol=1e-12):
            raise NotKaehlerError("J^2 != -Id")
        omega_mat = self.omega.as_matrix()
        if abs(np.linalg.det(omega_mat)) < 1e-12:
            raise NotKaehlerError("omega is degenerate")
        if not np.allclose(J.T @ omega_mat @ J, omega_mat, atol=1e-12):
            raise NotKaehlerError("omega is not J-invariant")
        g = omega_mat @ J
        if not np.allclose(g, g.T, atol=1e-12):
            raise NotKaehlerError("omega(., J.) is not symmetric")
        if np.linalg.eigvalsh(0.5 * (g + g.T)).min() <= 0:
            raise NotKaehlerError("omega(., J.) is not positive definite")

    def _sample_points(self) -> np.ndarray:
        n2 = 2 * self.n
        grid = np.linspace(0.0, 1.0, 4, endpoint=False)
        pts = np.stack(np.meshgrid(*([grid] * min(n2, 2)), indexing="ij"), axis=-1)
        pts = pts.reshape(-1, min(n2, 2))
        full = np.zeros((pts.shape[0], n2))
        full[:, : pts.shape[1]] = pts
        if self.lattice is not None:
            full = full @ self.lattice
        return full

    def _validate_normalization(self):
        n = self.n
        lhs_form = self.Omega.wedge(self.Omega.conjugate()).scaled(
            (-1) ** (n * (n - 1) // 2) * (1j / 2) ** n
        )
        top_key = tuple(range(2 * n))
        lhs = complex(lhs_form.coeffs.get(top_key, 0.0))
        if abs(lhs.imag) > _NORMALIZATION_TOL * max(1.0, abs(lhs)):
            raise NormalizationFailureError("Omega ^ conj(Omega) has an imaginary part")
        omega_n = self.omega
        for _ in range(n - 1):
            omega_n = omega_n.wedge(self.omega)
        rhs = float(np.real(omega_n.coeffs.get(top_key, 0.0))) / float(math.factorial(n))
        points = self._sample_points()
        rho = self.rho(points) if self.rho is not None else np.ones(len(points))
        if np.any(rho <= 0):
            raise NormalizationFailureError("rho must be positive")
        residuals = np.abs(lhs.real - rho**2 * rhs)
        residual = float(residuals.max())
        scale = max(abs(lhs.real), abs(rhs), 1.0)
        if residual > _NORMALIZATION_TOL * scale:
            hint = "" if self.rho is not None else " (no rho supplied)"
            raise NormalizationFailureError(
                f"normalization residual {residual:.3e}{hint}"
            )
        return float(np.sqrt(np.median(rho**2))), residual

    # -- queries ---------------------------------------------------------------

    @property
    def is_conformal(self) -> bool:
        return abs(self.rho_value - 1.0) > 1e-14

    def conformal_factor(self) -> float:
        """Scale relating the minimal-surface metric to g."""
        return float(self.rho_value ** (-2.0 / self.n))

    def metric_matrix(self, conformal: bool | None = None) -> np.ndarray:
        use = self.is_conformal if conformal is None else conformal
        return self.conformal_factor() * self.metric if use else self.metric.copy()

    def eval_form(self, which: str, point, vectors) -> float:
        vectors = np.asarray(vectors, dtype=float)
        if which in ("g", "gtilde"):
            if vectors.shape != (2, 2 * self.n):
                raise ArityMismatchError("metric evaluation needs exactly two vectors")
            g = self.metric_matrix(conformal=(which == "gtilde"))
            return float(vectors[0] @ g @ vectors[1])
        forms = {
            "omega": self.omega,
            "ReOmega": self.re_omega,
            "ImOmega": self.im_omega,
            "ReOmegaHat": self.re_omega_hat,
            "ImOmegaHat": self.im_omega_hat,
        }
        if which not in forms:
            raise KeyError(f"unknown form {which!r}")
        return float(forms[which](vectors))

    def wrap_displacement(self, disp: np.ndarray) -> np.ndarray:
        """Minimal-image representative of a displacement, identity on R^{2n}."""
        if self.lattice is None:
            return disp
        coords = np.linalg.solve(self.lattice.T, np.atleast_2d(disp).T).T
        wrapped = np.atleast_2d(disp) - np.round(coords) @ self.lattice
        return wrapped.reshape(np.shape(disp))

    def reduce_points(self, points: np.ndarray) -> np.ndarray:
        if self.lattice is None:
            return points
        coords = np.linalg.solve(self.lattice.T, np.atleast_2d(points).T).T
        return (coords - np.floor(coords)) @ self.lattice

    def lagrangian_residual(self, lagrangian: BoundaryLagrangian) -> float:
        span = lagrangian.span
        worst = 0.0
        for i in range(span.shape[0]):
            for j in range(i + 1, span.shape[0]):
                worst = max(worst, abs(float(self.omega(np.stack([span[i], span[j]])))))
        return worst

    def check_disjoint(self, lagrangians, tol=1e-9) -> None:
        offsets = [np.zeros(2 * self.n)]
        if self.lattice is not None:
            rng = [-1, 0, 1]
            offsets = [
                np.array(c) @ self.lattice
                for c in itertools.product(rng, repeat=2 * self.n)
            ]
        for a in range(len(lagrangians)):
            for b in range(a + 1, len(lagrangians)):
                la, lb = lagrangians[a], lagrangians[b]
                basis = np.vstack([la.span, -lb.span]).T
                for off in offsets:
                    rhs = lb.basepoint + off - la.basepoint
                    sol, res, *_ = np.linalg.lstsq(basis, rhs, rcond=None)
                    gap = np.linalg.norm(basis @ sol - rhs)
                    if gap < tol:
                        raise NotKaehlerError(
                            f"boundary Lagrangians {la.index} and {lb.index} intersect"
                        )


def make_model(
    n: int,
    topology: str = "euclidean",
    lattice=None,
    omega=None,
    J=None,
    Omega=None,
    Omega_scale: complex = 1.0,
    rho_expr=None,
) -> AmbientModel:
    """Build and validate an ambient model; defaults give the standard flat structure."""
    if topology not in ("euclidean", "torus"):
        raise NotKaehlerError(f"unknown topology {topology!r}")
    lat = None
    if topology == "torus":
        lat = np.eye(2 * n) if lattice is None else np.asarray(lattice, dtype=float)
        if lat.shape != (2 * n, 2 * n) or abs(np.linalg.det(lat)) < 1e-12:
            raise NotKaehlerError("lattice basis must be an invertible 2n x 2n matrix")
    if omega is None:
        omega_form = standard_symplectic(n)
    elif isinstance(omega, ConstantForm):
        omega_form = omega
    else:
        mat = np.asarray(omega, dtype=float)
        coeffs = {(i, j): mat[i, j] for i in range(2 * n) for j in range(i + 1, 2 * n)}
        omega_form = ConstantForm(2 * n, 2, coeffs)
    Jmat = standard_complex_structure(n) if J is None else np.asarray(J, dtype=float)
    if Omega is None:
        top = standard_top_form(n, scale=Omega_scale)
    elif isinstance(Omega, ConstantForm):
        top = Omega if Omega_scale == 1.0 else Omega.scaled(Omega_scale)
    else:
        top = ConstantForm(2 * n, n, {tuple(k): v for k, v in dict(Omega).items()})
        if Omega_scale != 1.0:
            top = top.scaled(Omega_scale)
    return AmbientModel(n, topology, lat, omega_form, Jmat, top, rho_expr=rho_expr)


def lagrangian_check(model: AmbientModel, lagrangian: BoundaryLagrangian) -> float:
    """Max |omega(u, v)| over pairs of spanning directions."""
    return model.lagrangian_residual(lagrangian)
