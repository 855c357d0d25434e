"""Flux chart maps, affine transition fits, and the embedding diagnostics.

Writing R(u) and S(u) for the period vectors of the two fluxes along the
straight parameter path from the basepoint to u, the chart data of a family
is the pair (R, S).  The duality matrix P pairs the cohomology bases dual to
the chosen cycle bases; with P normalized to the identity the product space
carries the coordinate forms

    B = sum du_j dv_j      (indefinite symmetric)
    W = sum du_j ^ dv_j    (symplectic)

with v = P S.  Pulled back along (R, S), B reproduces the L^2 Gram matrix of
the tangent one-forms, W vanishes, and v is the gradient of a scalar
potential of u, fitted here by least squares.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .ambient import AmbientModel
from .dec import Cochain, HodgeStructure, harmonic_fields, hodge_star, period_matrix
from .errors import (
    AsymmetricJacobianError,
    InsufficientSamplesError,
    SingularJacobianError,
    SlagError,
)
from .flux import ImmersionPath, relative_flux, special_flux
from .immersion import ImmersionFamily
from .meshes import AbsoluteCycleBasis, Chain, RelativeCycleBasis


@dataclass
class ChartSample:
    u: np.ndarray
    R: np.ndarray
    S: np.ndarray
    basepoint_label: str = ""


@dataclass
class PairingStructure:
    """Integer duality pairing of the cycle-dual cohomology bases.

    P[j, k] is the integral over the fundamental class of a_j ^ b_k, where a_j
    has unit period over relative cycle j and b_k unit period over absolute
    cycle k.  Computed from closed Whitney representatives, the value is a
    topological integer up to roundoff; it is certified and rounded.
    """

    P: np.ndarray
    certification_residual: float

    @property
    def m(self) -> int:
        return len(self.P)

    @property
    def is_signed_permutation(self) -> bool:
        P = self.P
        return (
            np.abs(np.abs(P).sum(axis=0) - 1).max() == 0
            and np.abs(np.abs(P).sum(axis=1) - 1).max() == 0
        )

    def dual_coordinates(self, S: np.ndarray) -> np.ndarray:
        return self.P @ S

    def B(self, tau1, tau2) -> float:
        r1, s1 = tau1
        r2, s2 = tau2
        return 0.5 * float(r1 @ self.P @ s2 + r2 @ self.P @ s1)

    def W(self, tau1, tau2) -> float:
        r1, s1 = tau1
        r2, s2 = tau2
        return float(r1 @ self.P @ s2 - r2 @ self.P @ s1)


def pairing_structure(
    structure: HodgeStructure,
    rel_cycles: RelativeCycleBasis,
    abs_cycles: AbsoluteCycleBasis,
    dirichlet=None,
    neumann=None,
) -> PairingStructure:
    dirichlet = dirichlet or harmonic_fields(structure, "dirichlet", cycles=rel_cycles)
    neumann = neumann or harmonic_fields(structure, "neumann", cycles=abs_cycles)
    mesh = structure.mesh
    A = np.stack([c.values for c in dirichlet], axis=1)
    Bv = np.stack([c.values for c in neumann], axis=1)
    A = A @ np.linalg.inv(period_matrix(dirichlet, rel_cycles))
    Bv = Bv @ np.linalg.inv(period_matrix(neumann, abs_cycles))
    wedge = structure.wedge_matrix(1 if mesh.dim >= 1 else 0)
    raw = A.T @ (wedge @ Bv) if mesh.dim >= 2 else A.T @ (wedge @ Bv)
    P = np.round(raw)
    residual = float(np.abs(raw - P).max())
    if residual > 1e-6:
        raise SlagError(f"duality pairing failed integer certification ({residual:.2e})")
    if abs(np.linalg.det(P)) < 0.5:
        raise SlagError("duality pairing is singular; cycle bases do not pair")
    return PairingStructure(P.astype(float), residual)


def normalize_cycles_to_identity(
    pairing: PairingStructure, abs_cycles: AbsoluteCycleBasis
):
    """Reorder/flip absolute cycles so the pairing becomes the identity.

    Only applies when P is a signed permutation; returns (new basis, identity
    pairing).  Otherwise the original data is returned unchanged.
    """
    if not pairing.is_signed_permutation:
        return abs_cycles, pairing
    P = pairing.P
    m = pairing.m
    new_cycles: list[Chain] = [None] * m  # type: ignore[list-item]
    for k in range(m):
        j = int(np.nonzero(P[:, k])[0][0])
        sign = int(P[j, k])
        chain = abs_cycles.cycles[k]
        new_cycles[j] = chain if sign > 0 else -chain
    basis = AbsoluteCycleBasis(tuple(new_cycles), degree=abs_cycles.degree)
    return basis, PairingStructure(np.eye(m), pairing.certification_residual)


# -- chart evaluation ------------------------------------------------------------------


def evaluate_chart(
    model: AmbientModel,
    family: ImmersionFamily,
    u,
    rel_cycles: RelativeCycleBasis,
    abs_cycles: AbsoluteCycleBasis,
    n_samples: int = 33,
    base_shift=None,
) -> ChartSample:
    """Both flux period vectors along the straight parameter path 0 -> u.

    base_shift moves the chart basepoint: the path runs from base_shift to
    base_shift + u through the same family.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if base_shift is None:
        base_shift = np.zeros_like(u)
    base_shift = np.atleast_1d(np.asarray(base_shift, dtype=float))
    if not np.any(np.abs(u) > 0):
        m = rel_cycles.m
        return ChartSample(u, np.zeros(m), np.zeros(m), family.label)
    path = ImmersionPath(
        family,
        lambda t: base_shift + t * u,
        derivative=lambda t: u,
        n_samples=n_samples,
    )
    rf = relative_flux(model, path, rel_cycles)
    sf = special_flux(model, path, abs_cycles)
    return ChartSample(u, rf.period_vector, sf.period_vector, family.label)


def tangent_cochains(model: AmbientModel, family: ImmersionFamily, at=None,
                     directions=None) -> list[Cochain]:
    """Tangent one-form cochains of the coordinate directions at a parameter point."""
    m = family.n_params
    at = np.zeros(m) if at is None else np.atleast_1d(np.asarray(at, dtype=float))
    dirs = np.eye(m) if directions is None else np.asarray(directions, dtype=float)
    out = []
    for i in range(dirs.shape[0]):
        path = ImmersionPath(
            family,
            lambda t, d=dirs[i]: at + t * d,
            derivative=lambda t, d=dirs[i]: d,
            n_samples=3,
        )
        from .flux import tangent_one_form

        out.append(tangent_one_form(model, path, 0))
    return out


@dataclass
class JacobianReport:
    dR: np.ndarray
    dS: np.ndarray
    dR_expected: np.ndarray
    dS_expected: np.ndarray
    dR_error: float
    dS_error: float


def chart_jacobian(
    model: AmbientModel,
    family: ImmersionFamily,
    structure: HodgeStructure,
    rel_cycles: RelativeCycleBasis,
    abs_cycles: AbsoluteCycleBasis,
    step: float = 1e-3,
    n_samples: int = 17,
    cond_limit: float = 1e12,
    richardson: bool = True,
) -> JacobianReport:
    """Central-difference Jacobians of (R, S) at 0 against their period-matrix predictions.

    dR columns should be the periods of the coordinate tangent one-forms over
    the relative cycles; dS columns the periods of their discrete stars over
    the absolute cycles.  With `richardson` the step is halved once and the
    fourth-order extrapolation (4 J_{h/2} - J_h) / 3 is returned.
    """

    def central(h):
        dR = np.zeros((rel_cycles.m, family.n_params))
        dS = np.zeros((abs_cycles.m, family.n_params))
        for i in range(family.n_params):
            e = np.zeros(family.n_params)
            e[i] = h
            plus = evaluate_chart(model, family, e, rel_cycles, abs_cycles, n_samples)
            minus = evaluate_chart(model, family, -e, rel_cycles, abs_cycles, n_samples)
            dR[:, i] = (plus.R - minus.R) / (2 * h)
            dS[:, i] = (plus.S - minus.S) / (2 * h)
        return dR, dS

    dR, dS = central(step)
    if richardson:
        dR2, dS2 = central(step / 2)
        dR = (4 * dR2 - dR) / 3
        dS = (4 * dS2 - dS) / 3
    thetas = tangent_cochains(model, family)
    dR_expected = period_matrix(thetas, rel_cycles)
    stars = [hodge_star(structure, th) for th in thetas]
    dS_expected = period_matrix(stars, abs_cycles)
    svals = np.linalg.svd(dR, compute_uv=False)
    if dR.shape[0] != dR.shape[1] or svals[-1] <= svals[0] / cond_limit:
        raise SingularJacobianError(
            f"chart derivative is singular (shape {dR.shape}, "
            f"singular values {svals}); family directions do not span the tangent space"
        )
    return JacobianReport(
        dR, dS, dR_expected, dS_expected,
        dR_error=float(np.abs(dR - dR_expected).max()),
        dS_error=float(np.abs(dS - dS_expected).max()),
    )


# -- affine transition fits ---------------------------------------------------------------


@dataclass
class AffineFit:
    A: np.ndarray
    b: np.ndarray
    residual: float      # rms residual / rms spread of the target data
    det: np.ndarray

    @property
    def volume_defect(self) -> float:
        return abs(float(self.det) - 1.0)


def transition_affine_fit(samples_1, samples_2, coordinate: str = "R") -> AffineFit:
    """Least-squares affine map from chart-1 to chart-2 coordinates.

    Needs at least m+1 affinely independent shared parameter points.
    """
    x = np.stack([getattr(s, coordinate) for s in samples_1])
    y = np.stack([getattr(s, coordinate) for s in samples_2])
    npts, m = x.shape
    if npts < m + 1:
        raise InsufficientSamplesError(f"need at least {m + 1} samples, got {npts}")
    design = np.hstack([x, np.ones((npts, 1))])
    if np.linalg.matrix_rank(design, tol=1e-10 * max(1.0, np.abs(design).max())) < m + 1:
        raise InsufficientSamplesError("samples are affinely dependent")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    A = coef[:m].T
    b = coef[m]
    pred = design @ coef
    spread = np.linalg.norm(y - y.mean(axis=0))
    residual = float(np.linalg.norm(pred - y) / max(spread, 1e-30))
    return AffineFit(A, b, residual, np.linalg.det(A))


# -- grid-based embedding diagnostics --------------------------------------------------------


@dataclass
class GridSamples:
    """Chart samples over a regular parameter grid, used for finite differences."""

    shape: tuple
    spacing: np.ndarray
    u: np.ndarray  # (*shape, m)
    R: np.ndarray  # (*shape, m)
    S: np.ndarray  # (*shape, m)


def sample_grid(
    model: AmbientModel,
    family: ImmersionFamily,
    rel_cycles: RelativeCycleBasis,
    abs_cycles: AbsoluteCycleBasis,
    radius: float = 0.1,
    points_per_axis: int = 5,
    n_samples: int = 17,
) -> GridSamples:
    m = family.n_params
    axis = np.linspace(-radius, radius, points_per_axis)
    spacing = np.full(m, axis[1] - axis[0])
    shape = (points_per_axis,) * m
    u = np.zeros(shape + (m,))
    R = np.zeros(shape + (rel_cycles.m,))
    S = np.zeros(shape + (abs_cycles.m,))
    for idx in itertools.product(range(points_per_axis), repeat=m):
        uu = np.array([axis[i] for i in idx])
        sample = evaluate_chart(model, family, uu, rel_cycles, abs_cycles, n_samples)
        u[idx] = uu
        R[idx] = sample.R
        S[idx] = sample.S
    return GridSamples(shape, spacing, u, R, S)


def _central_differences(values: np.ndarray, spacing: np.ndarray):
    """d(values)/d(param_i) at interior grid points: (*inner_shape, m_out, m)."""
    m = len(spacing)
    inner = tuple(slice(1, -1) for _ in range(m))
    out = []
    for i in range(m):
        up = tuple(
            slice(2, None) if j == i else slice(1, -1) for j in range(m)
        )
        dn = tuple(
            slice(None, -2) if j == i else slice(1, -1) for j in range(m)
        )
        out.append((values[up] - values[dn]) / (2 * spacing[i]))
    return np.stack(out, axis=-1), inner


@dataclass
class EmbeddingReport:
    B_gram: np.ndarray          # parameter-coordinate B Gram at the grid center
    W_max: float                # max |W| over all interior points and pairs
    B_gram_field: np.ndarray
    l2_gram: np.ndarray | None = None
    l2_relative_error: float | None = None


def pullback_BW(grid: GridSamples, pairing: PairingStructure) -> EmbeddingReport:
    """Evaluate B and W on the grid tangents (R', S') by central differences."""
    dR, inner = _central_differences(grid.R, grid.spacing)
    dS, _ = _central_differences(grid.S, grid.spacing)
    inner_shape = dR.shape[:-2]
    m = grid.u.shape[-1]
    B_field = np.zeros(inner_shape + (m, m))
    W_max = 0.0
    P = pairing.P
    for idx in itertools.product(*(range(s) for s in inner_shape)):
        r = dR[idx]
        s = dS[idx]
        B_field[idx] = 0.5 * (r.T @ P @ s + (r.T @ P @ s).T)
        W = r.T @ P @ s - (r.T @ P @ s).T
        W_max = max(W_max, float(np.abs(W).max()))
    center = tuple(s // 2 for s in inner_shape)
    return EmbeddingReport(B_field[center], W_max, B_field)


def l2_gram(structure: HodgeStructure, tangents) -> np.ndarray:
    """Gram matrix of tangent one-forms in the mass inner product."""
    vals = np.stack([t.values for t in tangents], axis=1)
    return vals.T @ (structure.mass_matrix(1) @ vals)


# -- hessian potential ------------------------------------------------------------------------


@dataclass
class HessianFit:
    coefficients: np.ndarray
    monomials: list[tuple]
    symmetry_residual: float
    gradient_residual: float
    hessian: np.ndarray
    hessian_vs_B: float


def _monomials(m: int, degree: int):
    out = []
    for total in range(1, degree + 1):
        for alpha in itertools.combinations_with_replacement(range(m), total):
            counts = tuple(alpha.count(i) for i in range(m))
            out.append(counts)
    return out


def hessian_fit(
    grid: GridSamples,
    pairing: PairingStructure,
    degree: int = 4,
    symmetry_tol: float = 1e-6,
) -> HessianFit:
    """Gradient-graph check and least-squares potential for v(u)-coordinates.

    The dual coordinates v = P S must be the gradient of a potential in the
    chart coordinates u = R; the direct check is symmetry of dv/du, and the
    fitted potential's Hessian is compared against the B Gram in u-coordinates.
    Raises AsymmetricJacobianError when the symmetry defect exceeds tolerance.
    """
    dR, inner = _central_differences(grid.R, grid.spacing)
    dS, _ = _central_differences(grid.S, grid.spacing)
    inner_shape = dR.shape[:-2]
    m = grid.u.shape[-1]
    sym_residual = 0.0
    dvdu_center = None
    center = tuple(s // 2 for s in inner_shape)
    for idx in itertools.product(*(range(s) for s in inner_shape)):
        Ju = dR[idx]
        Jv = pairing.P @ dS[idx]
        if np.linalg.cond(Ju) > 1e12:
            raise SingularJacobianError("chart coordinates degenerate on the grid")
        dvdu = Jv @ np.linalg.inv(Ju)
        defect = float(np.abs(dvdu - dvdu.T).max()) / max(float(np.abs(dvdu).max()), 1e-30)
        sym_residual = max(sym_residual, defect)
        if idx == center:
            dvdu_center = dvdu
    if sym_residual > symmetry_tol:
        raise AsymmetricJacobianError(
            f"dv/du asymmetric by {sym_residual:.3e} (tolerance {symmetry_tol:.1e})"
        )

    monos = _monomials(m, degree)
    us = grid.R[inner + (slice(None),)].reshape(-1, m)
    vs = (grid.S[inner + (slice(None),)] @ pairing.P.T).reshape(-1, m)
    rows = []
    rhs = []
    for u, v in zip(us, vs):
        for comp in range(m):
            row = []
            for alpha in monos:
                if alpha[comp] == 0:
                    row.append(0.0)
                else:
                    val = alpha[comp]
                    for i, a in enumerate(alpha):
                        power = a - 1 if i == comp else a
                        val *= u[i] ** power
                    row.append(val)
            rows.append(row)
            rhs.append(v[comp])
    design = np.array(rows)
    rhs = np.array(rhs)
    coef, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    grad_residual = float(
        np.linalg.norm(design @ coef - rhs) / max(np.linalg.norm(rhs), 1e-30)
    )

    u0 = us.mean(axis=0)
    hess = np.zeros((m, m))
    for alpha, c in zip(monos, coef):
        for i in range(m):
            for j in range(m):
                a = list(alpha)
                factor = a[i]
                if factor == 0:
                    continue
                a[i] -= 1
                factor *= a[j]
                if factor == 0:
                    continue
                a[j] -= 1
                term = c * factor
                for k, p in enumerate(a):
                    term *= u0[k] ** p
                hess[i, j] += term
    hess_vs_B = float(np.abs(hess - 0.5 * (dvdu_center + dvdu_center.T)).max())
    return HessianFit(coef, monos, sym_residual, grad_residual, hess, hess_vs_B)


@dataclass
class AtlasReport:
    """Aggregated chart diagnostics for emission.

    transition_fits: mapping pair-label -> AffineFit; per-chart data holds the
    L2 Gram, the B Gram, the worst W value and the fitted potential.
    """

    transition_fits: dict
    l2_gram: np.ndarray
    b_gram: np.ndarray
    w_max: float
    hessian: HessianFit

    def to_dict(self) -> dict:
        return {
            "transitions": {
                label: {
                    "A": fit.A.tolist(),
                    "b": fit.b.tolist(),
                    "residual": fit.residual,
                    "det": float(fit.det),
                }
                for label, fit in sorted(self.transition_fits.items())
            },
            "l2_gram": self.l2_gram.tolist(),
            "b_gram": self.b_gram.tolist(),
            "w_max": self.w_max,
            "hessian": {
                "coefficients": self.hessian.coefficients.tolist(),
                "monomials": [list(m) for m in self.hessian.monomials],
                "symmetry_residual": self.hessian.symmetry_residual,
                "gradient_residual": self.hessian.gradient_residual,
                "matrix": self.hessian.hessian.tolist(),
            },
        }

    def to_csv_rows(self) -> list:
        rows = ["record,label,value"]
        for label, fit in sorted(self.transition_fits.items()):
            rows.append(f"transition_residual,{label},{fit.residual!r}")
            rows.append(f"transition_det,{label},{float(fit.det)!r}")
        rows.append(f"w_max,,{self.w_max!r}")
        rows.append(f"hessian_symmetry,,{self.hessian.symmetry_residual!r}")
        return rows


def synthetic_grid(u_axis, v_of_u) -> GridSamples:
    """Grid with prescribed v(u) map and identity pairing; for negative controls."""
    m = 2
    pts = len(u_axis)
    shape = (pts,) * m
    u = np.zeros(shape + (m,))
    R = np.zeros(shape + (m,))
    S = np.zeros(shape + (m,))
    for idx in itertools.product(range(pts), repeat=m):
        uu = np.array([u_axis[i] for i in idx])
        u[idx] = uu
        R[idx] = uu
        S[idx] = v_of_u(uu)
    spacing = np.full(m, u_axis[1] - u_axis[0])
    return GridSamples(shape, spacing, u, R, S)
