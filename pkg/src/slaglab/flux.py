"""Tangent forms along paths of immersions and the two flux functionals.

For a path f_t the tangent one-form contracts the velocity into the ambient
symplectic form and pulls back; the dual (n-1)-form does the same with the
imaginary part of the unit-length top form.  Both are integrated exactly per
simplex (the integrand is affine in barycentric coordinates when the velocity
is piecewise linear), and in time by composite Simpson quadrature.

The class of the time integral is represented by its period vector against a
fixed cycle basis.  Swept-surface oracles recompute the same periods as plain
surface integrals of the constant ambient forms over the piecewise-linear
surface traced by a cycle, giving an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ambient import AmbientModel, ConstantForm
from .dec import Cochain, period_matrix
from .errors import (
    EndpointMismatchError,
    NonLagrangianSampleError,
    NonSpecialSampleError,
    SlagError,
    VelocityUnavailableError,
)
from .immersion import Immersion, ImmersionFamily
from .meshes import AbsoluteCycleBasis, Chain, RelativeCycleBasis

_LAGRANGIAN_TOL = 1e-9
_SPECIAL_TOL = 1e-9


class ImmersionPath:
    """Family restricted to a parameter curve over a uniform time grid.

    parameter_curve(t) -> point of U; derivative supplies exact velocities when
    the family has them, otherwise second-order finite differences on the grid
    are used (central inside, one-sided at the ends).
    """

    def __init__(self, family: ImmersionFamily, parameter_curve, derivative=None,
                 n_samples: int = 33, velocity_mode: str | None = None):
        if n_samples < 2:
            raise VelocityUnavailableError("need at least two time samples")
        self.family = family
        self.curve = parameter_curve
        self.curve_derivative = derivative
        self.times = np.linspace(0.0, 1.0, n_samples)
        if velocity_mode is None:
            velocity_mode = (
                "analytic" if (derivative is not None and family.has_velocity) else "fd"
            )
        if velocity_mode == "fd" and n_samples < 3:
            raise VelocityUnavailableError("finite differences need at least 3 samples")
        self.velocity_mode = velocity_mode
        self._positions = [family.positions(self.curve(t)) for t in self.times]

    @classmethod
    def straight(cls, family: ImmersionFamily, target, n_samples: int = 33,
                 profile=None) -> "ImmersionPath":
        """Path along the straight parameter segment 0 -> target, optionally reprofiled.

        profile: (p, dp) with p(0) = 0, p(1) = 1 reparametrizing the segment.
        """
        target = np.atleast_1d(np.asarray(target, dtype=float))
        if profile is None:
            p, dp = (lambda s: s), (lambda s: 1.0)
        else:
            p, dp = profile
        return cls(
            family,
            lambda t: p(t) * target,
            derivative=lambda t: dp(t) * target,
            n_samples=n_samples,
        )

    @property
    def n_samples(self) -> int:
        return len(self.times)

    def immersion_at(self, j: int) -> Immersion:
        return Immersion(self.family.mesh, self._positions[j], label=self.family.label)

    def velocity_at(self, j: int) -> np.ndarray:
        if self.velocity_mode == "analytic":
            t = self.times[j]
            return self.family.velocity(self.curve(t), self.curve_derivative(t))
        h = self.times[1] - self.times[0]
        pos = self._positions
        if 0 < j < len(pos) - 1:
            return (pos[j + 1] - pos[j - 1]) / (2 * h)
        if j == 0:
            return (-3 * pos[0] + 4 * pos[1] - pos[2]) / (2 * h)
        return (3 * pos[-1] - 4 * pos[-2] + pos[-3]) / (2 * h)

    def endpoint_positions(self):
        return self._positions[0], self._positions[-1]


@dataclass
class FluxClass:
    """Time-integrated tangent cochain with its period representation."""

    space: str                     # "relative-1" or "absolute-(n-1)"
    period_vector: np.ndarray
    raw_cochain: Cochain
    diagnostics: dict = field(default_factory=dict)


def _contract_pullback(model: AmbientModel, immersion: Immersion, velocity: np.ndarray,
                       form: ConstantForm, degree: int) -> Cochain:
    """Exact per-simplex integral of the pullback of (velocity -| form).

    The velocity is affine over each simplex, so the integrand is affine in
    barycentric coordinates and the integral is the centroid value times the
    simplex volume fraction 1/degree!.
    """
    mesh = immersion.mesh
    simp = mesh.simplices[degree]
    frames = immersion.simplex_frames(model, degree)
    vmean = velocity[simp].mean(axis=1)
    stacked = np.concatenate([vmean[:, None, :], frames], axis=1)
    vals = form(stacked) / math.factorial(degree)
    return Cochain(mesh, degree, vals)


def tangent_one_form(model: AmbientModel, path: ImmersionPath, j: int) -> Cochain:
    """Edge cochain of the velocity contracted into the symplectic form at sample j."""
    return _contract_pullback(model, path.immersion_at(j), path.velocity_at(j),
                              model.omega, 1)


def dual_form(model: AmbientModel, path: ImmersionPath, j: int) -> Cochain:
    """(n-1)-cochain of the velocity contracted into the imaginary calibration form."""
    n = model.n
    return _contract_pullback(model, path.immersion_at(j), path.velocity_at(j),
                              model.im_omega_hat, n - 1)


def _quadrature_weights(n_samples: int):
    h = 1.0 / (n_samples - 1)
    if n_samples % 2 == 1:
        w = np.ones(n_samples)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w * h / 3.0, "simpson"
    w = np.ones(n_samples)
    w[0] = w[-1] = 0.5
    return w * h, "trapezoid"


def _sample_residuals(model: AmbientModel, immersion: Immersion):
    """Sup norms of the symplectic and calibration pullbacks, volume normalized."""
    mesh = immersion.mesh
    n = mesh.dim
    frames = immersion.simplex_frames(model, n)
    vols = np.sqrt(np.abs(np.linalg.det(
        np.einsum("tia,ab,tjb->tij", frames, model.metric_matrix(), frames)
    ))) / math.factorial(n)
    vols = np.maximum(vols, 1e-300)
    special = float(np.max(np.abs(model.im_omega_hat(frames)) / math.factorial(n) / vols))
    if n >= 2:
        f2 = immersion.simplex_frames(model, 2)
        a2 = np.sqrt(np.abs(np.linalg.det(
            np.einsum("tia,ab,tjb->tij", f2, model.metric_matrix(), f2)
        ))) / 2.0
        lagrangian = float(np.max(np.abs(model.omega(f2)) / 2.0 / np.maximum(a2, 1e-300)))
    else:
        lagrangian = 0.0
    return lagrangian, special


def _integrate_path(model, path, cycles, integrand, check, tol, space):
    mesh = path.family.mesh
    weights, rule = _quadrature_weights(path.n_samples)
    degree = 1 if space.startswith("relative") else mesh.dim - 1
    raw = np.zeros(mesh.n_simplices(degree))
    max_lag = max_special = 0.0
    closedness = boundary_sup = 0.0
    d_op = mesh.coboundary_operator(degree) if degree < mesh.dim else None
    boundary_mask = mesh.in_boundary(degree)
    for j in range(path.n_samples):
        immersion = path.immersion_at(j)
        lag, special = _sample_residuals(model, immersion)
        max_lag, max_special = max(max_lag, lag), max(max_special, special)
        check(lag, special, j)
        coch = integrand(model, path, j)
        raw += weights[j] * coch.values
        if d_op is not None:
            closedness = max(closedness, float(np.abs(d_op @ coch.values).max()))
        if boundary_mask.any():
            vals = np.abs(coch.values[boundary_mask])
            boundary_sup = max(boundary_sup, float(vals.max()) if vals.size else 0.0)
    raw_cochain = Cochain(mesh, degree, raw)
    periods = period_matrix([raw_cochain], cycles)[:, 0]
    diag = {
        "rule": rule,
        "max_lagrangian_residual": max_lag,
        "max_special_residual": max_special,
        "max_sample_closedness": closedness,
        "max_sample_boundary_value": boundary_sup,
        "raw_closedness": float(np.abs(d_op @ raw).max()) if d_op is not None else 0.0,
        "raw_boundary_value": (
            float(np.abs(raw[boundary_mask]).max()) if boundary_mask.any() else 0.0
        ),
    }
    if path.n_samples % 4 == 1 and path.n_samples >= 5:
        halves, _ = _quadrature_weights((path.n_samples + 1) // 2)
        coarse = np.zeros_like(raw)
        for jj, w in enumerate(halves):
            coarse += w * integrand(model, path, 2 * jj).values
        coarse_periods = period_matrix([Cochain(mesh, degree, coarse)], cycles)[:, 0]
        diag["richardson_error"] = float(np.abs(periods - coarse_periods).max() / 15.0)
    return FluxClass(space, periods, raw_cochain, diag)


def relative_flux(model: AmbientModel, path: ImmersionPath, cycles: RelativeCycleBasis,
                  lagrangian_tol: float = _LAGRANGIAN_TOL) -> FluxClass:
    """Time quadrature of the tangent one-form, projected to periods over relative cycles."""

    def check(lag, special, j):
        if lag > lagrangian_tol:
            raise NonLagrangianSampleError(
                f"sample {j} has symplectic residual {lag:.3e} > {lagrangian_tol:.1e}; "
                "closedness of the tangent form is not guaranteed"
            )

    return _integrate_path(model, path, cycles, tangent_one_form, check,
                           lagrangian_tol, "relative-1")


def special_flux(model: AmbientModel, path: ImmersionPath, cycles: AbsoluteCycleBasis,
                 special_tol: float = _SPECIAL_TOL,
                 lagrangian_tol: float = _LAGRANGIAN_TOL) -> FluxClass:
    """Time quadrature of the dual (n-1)-form, projected to periods over absolute cycles."""

    def check(lag, special, j):
        if special > special_tol:
            raise NonSpecialSampleError(
                f"sample {j} has calibration residual {special:.3e} > {special_tol:.1e}"
            )

    return _integrate_path(model, path, cycles, dual_form, check,
                           special_tol, f"absolute-{model.n - 1}")


# -- swept-surface oracles -----------------------------------------------------------


def _chain_trajectories(path: ImmersionPath, vertex_ids, n_steps: int) -> np.ndarray:
    """(n_steps + 1, len(vertex_ids), 2n) positions along the path time grid."""
    times = np.linspace(0.0, 1.0, n_steps + 1)
    ids = np.asarray(vertex_ids, dtype=int)
    return np.stack([path.family.positions(path.curve(t))[ids] for t in times])


def _swept_edge_integral(model: AmbientModel, form: ConstantForm,
                         pa: np.ndarray, pb: np.ndarray) -> float:
    """Integral of a constant 2-form over the PL surface swept by one edge.

    Each time slab contributes a quadrilateral, split into two affine
    triangles; corners are lifted coherently around each quad and the square
    is oriented dt ^ ds.
    """
    w = model.wrap_displacement(pb - pa)
    q0 = pa[:-1]
    e_t = pa[1:] - pa[:-1]          # q3 - q0
    e_d = e_t + w[1:]               # q2 - q0
    e_s = w[:-1]                    # q1 - q0
    tri1 = np.stack([e_t, e_d], axis=1)
    tri2 = np.stack([e_d, e_s], axis=1)
    return 0.5 * float(np.sum(form(tri1)) + np.sum(form(tri2)))


def swept_rf_oracle(model: AmbientModel, path: ImmersionPath, gamma: Chain,
                    n_steps: int = 256) -> float:
    """Integral of the symplectic form over the surface swept by a relative 1-chain."""
    if gamma.degree != 1:
        raise SlagError("relative sweep oracle needs a 1-chain")
    return _swept_chain_integral(model, path, gamma, model.omega, n_steps)


def _swept_chain_integral(model, path, chain, form, n_steps):
    edges = path.family.mesh.simplices[1]
    items = sorted(chain.coeffs.items())
    vertex_ids = sorted({int(v) for eid, _ in items for v in edges[eid]})
    vpos = {v: i for i, v in enumerate(vertex_ids)}
    traj = _chain_trajectories(path, vertex_ids, n_steps)
    total = 0.0
    for eid, coeff in items:
        a, b = int(edges[eid][0]), int(edges[eid][1])
        total += coeff * _swept_edge_integral(model, form, traj[:, vpos[a]], traj[:, vpos[b]])
    return total


def swept_sf_oracle(model: AmbientModel, path: ImmersionPath, sigma: Chain,
                    n_steps: int = 256) -> float:
    """Integral of the imaginary calibration form over the cylinder swept by a cycle."""
    mesh = path.family.mesh
    form = model.im_omega_hat
    if mesh.dim == 1:
        if sigma.degree != 0:
            raise SlagError("sweep oracle needs a 0-chain on a 1-complex")
        items = sorted(sigma.coeffs.items())
        traj = _chain_trajectories(path, [vid for vid, _ in items], n_steps)
        total = 0.0
        for col, (vid, coeff) in enumerate(items):
            steps = traj[1:, col] - traj[:-1, col]
            total += coeff * float(form(steps[:, None, :]).sum())
        return total
    if mesh.dim == 2:
        if sigma.degree != 1:
            raise SlagError("sweep oracle needs a 1-chain on a 2-complex")
        return _swept_chain_integral(model, path, sigma, form, n_steps)
    raise SlagError("sweep oracle implemented for dim <= 2")


# -- homotopy harness ------------------------------------------------------------------


@dataclass
class HomotopyReport:
    rf_a: FluxClass
    rf_b: FluxClass
    sf_a: FluxClass
    sf_b: FluxClass
    rf_discrepancy: float
    sf_discrepancy: float
    sweep_curve: np.ndarray | None = None
    sweep_deviation: float | None = None


def homotopy_invariance_harness(
    model: AmbientModel,
    path_a: ImmersionPath,
    path_b: ImmersionPath,
    rel_cycles: RelativeCycleBasis,
    abs_cycles: AbsoluteCycleBasis,
    homotopy=None,
    n_u: int = 9,
    endpoint_tol: float = 1e-12,
) -> HomotopyReport:
    """Fluxes of two end-point sharing paths plus an optional u-sweep of the oracle.

    homotopy: optional callable u -> ImmersionPath interpolating path_a (u=0)
    to path_b (u=1) with fixed endpoints; the report then includes the swept
    integral over the first relative cycle as a function of u.
    """
    a0, a1 = path_a.endpoint_positions()
    b0, b1 = path_b.endpoint_positions()
    gap = max(
        float(np.abs(model.wrap_displacement(a0 - b0)).max()),
        float(np.abs(model.wrap_displacement(a1 - b1)).max()),
    )
    if gap > endpoint_tol:
        raise EndpointMismatchError(f"paths differ at endpoints by {gap:.3e}")
    rf_a = relative_flux(model, path_a, rel_cycles)
    rf_b = relative_flux(model, path_b, rel_cycles)
    sf_a = special_flux(model, path_a, abs_cycles)
    sf_b = special_flux(model, path_b, abs_cycles)
    report = HomotopyReport(
        rf_a, rf_b, sf_a, sf_b,
        rf_discrepancy=float(np.abs(rf_a.period_vector - rf_b.period_vector).max()),
        sf_discrepancy=float(np.abs(sf_a.period_vector - sf_b.period_vector).max()),
    )
    if homotopy is not None:
        gamma = rel_cycles.cycles[0]
        us = np.linspace(0.0, 1.0, n_u)
        curve = np.array([
            swept_rf_oracle(model, homotopy(u), gamma) for u in us
        ])
        report.sweep_curve = curve
        report.sweep_deviation = float(curve.max() - curve.min())
    return report
