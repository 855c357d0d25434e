"""Piecewise-linear immersions with constrained boundary components.

Vertex positions are stored as continuous lifts in R^{2n}; on a torus target
the per-simplex edge frame is built with the minimal-image convention, which
is exact as long as every simplex is smaller than half the lattice spacing
(validated).  All form pullbacks are exact integrals of constant forms over
affine simplices, so the verification chain carries no quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ambient import AmbientModel, ConstantForm
from .dec import Cochain, MetricField
from .errors import (
    DegenerateSimplexError,
    DegreeMismatchError,
    LabelViolationError,
    NotAutomorphismError,
    SlagError,
)
from .expressions import CoordinateMap
from .meshes import SimplicialMesh


@dataclass
class Immersion:
    mesh: SimplicialMesh
    positions: np.ndarray  # (V, 2n) continuous lifts
    label: str = ""

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.shape[0] != self.mesh.n_vertices:
            raise SlagError("positions do not match vertex count")

    def simplex_frames(self, model: AmbientModel, k: int) -> np.ndarray:
        """(N_k, k, 2n) lifted edge vectors of every canonical k-simplex."""
        simp = self.mesh.simplices[k]
        disp = self.positions[simp[:, 1:]] - self.positions[simp[:, :1]]
        return _wrap_frames(model, disp)

    def vertex_frame_of(self, model: AmbientModel, vertices) -> np.ndarray:
        verts = np.asarray(vertices)
        disp = self.positions[verts[1:]] - self.positions[verts[0]]
        return _wrap_frames(model, disp[None, :, :])[0]


def _wrap_frames(model: AmbientModel, disp: np.ndarray) -> np.ndarray:
    if model.lattice is None:
        return disp
    shape = disp.shape
    flat = disp.reshape(-1, shape[-1])
    wrapped = model.wrap_displacement(flat)
    widths = np.linalg.norm(model.lattice, axis=1)
    if wrapped.size and np.linalg.norm(wrapped, axis=1).max() > 0.5 * widths.min():
        raise DegenerateSimplexError(
            "simplex too large for minimal-image lifting on the torus"
        )
    return wrapped.reshape(shape)


# -- pullbacks -----------------------------------------------------------------------


def pullback_metric(model: AmbientModel, immersion: Immersion, conformal=None) -> MetricField:
    """Per-top-simplex Gram matrix of image edge vectors under g (or its conformal scaling)."""
    frames = immersion.simplex_frames(model, immersion.mesh.dim)
    g = model.metric_matrix(conformal=conformal)
    gram = np.einsum("tia,ab,tjb->tij", frames, g, frames)
    try:
        return MetricField(immersion.mesh, gram)
    except Exception as exc:
        raise DegenerateSimplexError(f"pullback metric degenerate: {exc}") from exc


def pullback_form(model: AmbientModel, immersion: Immersion, form: ConstantForm,
                  degree: int) -> Cochain:
    """Exact integral of a constant degree-k form over every image k-simplex."""
    mesh = immersion.mesh
    if not 0 < degree <= mesh.dim:
        raise DegreeMismatchError(
            f"cannot pull a {degree}-form back to a {mesh.dim}-complex"
        )
    if form.degree != degree:
        raise DegreeMismatchError(f"form degree {form.degree} != requested {degree}")
    frames = immersion.simplex_frames(model, degree)
    vals = form(frames) / math.factorial(degree)
    return Cochain(mesh, degree, vals)


def pullback_two_form(model: AmbientModel, immersion: Immersion, which: str = "omega") -> Cochain:
    forms = {"omega": model.omega, "ImOmega": model.im_omega_hat}
    return pullback_form(model, immersion, forms[which], 2)


def pullback_n_form(model: AmbientModel, immersion: Immersion, which: str = "ImOmega") -> Cochain:
    forms = {
        "omega": model.omega,
        "ImOmega": model.im_omega_hat,
        "ReOmega": model.re_omega_hat,
    }
    return pullback_form(model, immersion, forms[which], model.n)


# -- validation ------------------------------------------------------------------------


@dataclass
class ValidationReport:
    immersion_margin: float          # smallest singular value of any top frame
    boundary_distance: float         # worst containment distance f(C_i) -> Lambda_i
    transversality_margin: float     # smallest (n+1)-th singular value at the boundary
    lagrangian_residual: float       # max |omega over 2-simplex| / metric volume
    special_residual: float          # max |Im Omega-hat over top simplex| / metric volume
    per_component_distance: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        tol = self.tolerances
        return (
            self.immersion_margin > tol.get("immersion", 1e-10)
            and self.boundary_distance <= tol.get("placement", 1e-10)
            and self.transversality_margin > tol.get("transversality", 1e-10)
            and self.lagrangian_residual <= tol.get("lagrangian", 1e-10)
        )

    @property
    def special_ok(self) -> bool:
        return self.ok and self.special_residual <= self.tolerances.get("special", 1e-10)


def validate(model: AmbientModel, immersion: Immersion, lagrangians, tolerances=None) -> ValidationReport:
    """Residual report for the immersion, boundary, transversality and calibration conditions."""
    mesh = immersion.mesh
    n = mesh.dim
    tol = {"immersion": 1e-10, "placement": 1e-10, "transversality": 1e-10,
           "lagrangian": 1e-10, "special": 1e-10}
    tol.update(tolerances or {})

    frames = immersion.simplex_frames(model, n)
    svals = np.linalg.svd(frames, compute_uv=False)
    immersion_margin = float(svals[:, -1].min())

    metric_vols = np.sqrt(np.abs(np.linalg.det(
        np.einsum("tia,ab,tjb->tij", frames, model.metric_matrix(), frames)
    ))) / math.factorial(n)
    metric_vols = np.maximum(metric_vols, 1e-300)

    if n >= 2:
        f2 = immersion.simplex_frames(model, 2)
        areas2 = np.sqrt(np.abs(np.linalg.det(
            np.einsum("tia,ab,tjb->tij", f2, model.metric_matrix(), f2)
        ))) / 2.0
        lag = float(np.max(np.abs(model.omega(f2)) / 2.0 / np.maximum(areas2, 1e-300)))
    else:
        lag = 0.0
    special = float(np.max(
        np.abs(model.im_omega_hat(frames)) / math.factorial(n) / metric_vols
    ))

    by_comp = {lam.index: 0.0 for lam in lagrangians}
    lam_by_index = {lam.index: lam for lam in lagrangians}
    comp_of_vertex = mesh.boundary_component_of_vertex()
    for comp in range(1, mesh.n_components + 1):
        verts = np.nonzero(comp_of_vertex == comp)[0]
        lam = lam_by_index.get(comp)
        if lam is None:
            raise SlagError(f"no boundary Lagrangian supplied for component {comp}")
        dists = lam.distances(immersion.positions[verts], model.lattice)
        by_comp[comp] = float(dists.max()) if dists.size else 0.0
    boundary_distance = max(by_comp.values()) if by_comp else 0.0

    trans = math.inf
    if n >= 1 and mesh.n_components:
        faces = mesh.simplices[n - 1]
        labels = mesh.boundary_labels
        coface_of = _boundary_coface_table(mesh)
        for fid in mesh.boundary_face_ids():
            top = coface_of[int(fid)]
            frame = frames[top]
            lam = lam_by_index[int(labels[fid])]
            stacked = np.vstack([frame, lam.span])
            s = np.linalg.svd(stacked, compute_uv=False)
            trans = min(trans, float(s[n]) if len(s) > n else 0.0)
    if trans is math.inf:
        trans = float("nan")

    return ValidationReport(
        immersion_margin=immersion_margin,
        boundary_distance=boundary_distance,
        transversality_margin=trans,
        lagrangian_residual=lag,
        special_residual=special,
        per_component_distance=by_comp,
        tolerances=tol,
    )


def _boundary_coface_table(mesh: SimplicialMesh) -> dict[int, int]:
    """Boundary (n-1)-face id -> the unique adjacent top simplex id."""
    out: dict[int, int] = {}
    table = mesh.face_table(mesh.dim - 1)
    is_boundary = mesh.boundary_labels > 0
    for t in range(table.shape[0]):
        for fid in table[t]:
            if is_boundary[fid]:
                out[int(fid)] = t
    return out


# -- reparametrization ---------------------------------------------------------------


def check_automorphism(mesh: SimplicialMesh, psi: np.ndarray) -> None:
    psi = np.asarray(psi, dtype=int)
    if psi.shape != (mesh.n_vertices,) or sorted(psi.tolist()) != list(range(mesh.n_vertices)):
        raise NotAutomorphismError("psi must be a permutation of the vertex ids")
    top_set = {tuple(row) for row in mesh.simplices[mesh.dim]}
    for row in mesh.simplices[mesh.dim]:
        if tuple(sorted(psi[row])) not in top_set:
            raise NotAutomorphismError(f"psi does not map simplex {tuple(row)} to a simplex")
    if mesh.dim >= 1:
        faces = mesh.simplices[mesh.dim - 1]
        index = {tuple(f): i for i, f in enumerate(faces)}
        for fid in mesh.boundary_face_ids():
            image = tuple(sorted(psi[faces[fid]]))
            jid = index.get(image)
            if jid is None or mesh.boundary_labels[jid] != mesh.boundary_labels[fid]:
                raise LabelViolationError(
                    f"psi moves a boundary face of component {int(mesh.boundary_labels[fid])} "
                    "off its component"
                )


def reparametrize(immersion: Immersion, psi) -> Immersion:
    """Compose with a simplicial automorphism: new position at v is the old one at psi(v)."""
    psi = np.asarray(psi, dtype=int)
    check_automorphism(immersion.mesh, psi)
    return Immersion(immersion.mesh, immersion.positions[psi], label=immersion.label)


def permutation_on_cochains(mesh: SimplicialMesh, psi: np.ndarray, degree: int):
    """Signed permutation implementing the cochain pullback along psi.

    Returns (indices, signs) with (psi^* a)[s] = signs[s] * a[indices[s]].
    """
    psi = np.asarray(psi, dtype=int)
    simp = mesh.simplices[degree]
    index = {tuple(row): i for i, row in enumerate(simp)}
    idx = np.empty(len(simp), dtype=int)
    sgn = np.empty(len(simp), dtype=float)
    for i, row in enumerate(simp):
        image = psi[row]
        order = np.argsort(image)
        idx[i] = index[tuple(image[order])]
        sgn[i] = _perm_sign(order)
    return idx, sgn


def _perm_sign(order: np.ndarray) -> float:
    seen = np.zeros(len(order), dtype=bool)
    sign = 1.0
    for start in range(len(order)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = int(order[j])
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


# -- families ----------------------------------------------------------------------------


class ImmersionFamily:
    """Parameter-dependent vertex positions with exact directional velocities.

    Wraps either Python callables or a closed-form CoordinateMap applied to a
    base immersion.  `positions(u)` returns the (V, 2n) lift at parameter u in
    R^m; `velocity(u, w)` is the derivative along direction w.
    """

    def __init__(self, mesh: SimplicialMesh, n_params: int, positions_fn, velocity_fn=None,
                 label: str = ""):
        self.mesh = mesh
        self.n_params = n_params
        self._positions = positions_fn
        self._velocity = velocity_fn
        self.label = label

    @classmethod
    def from_expressions(cls, base: Immersion, n: int, exprs: dict, parameters,
                         constants=None, label: str = "") -> "ImmersionFamily":
        cmap = CoordinateMap(exprs, n, list(parameters), constants)
        base_pos = base.positions

        def pos(u):
            return cmap.positions(base_pos, u)

        def vel(u, w):
            return cmap.velocity(base_pos, u, w)

        return cls(base.mesh, len(cmap.parameters), pos, vel, label=label)

    @classmethod
    def translation(cls, base: Immersion, directions, profiles=None, label: str = "") -> "ImmersionFamily":
        """Rigid motions: positions + sum_i p_i(u_i) * direction_i.

        profiles: optional list of (profile, derivative) callables, default the identity.
        """
        directions = [np.asarray(d, dtype=float) for d in directions]
        if profiles is None:
            profiles = [(lambda s: s, lambda s: 1.0)] * len(directions)
        base_pos = base.positions
        m = len(directions)

        def check(u):
            u = np.atleast_1d(np.asarray(u, dtype=float))
            if u.shape != (m,):
                raise SlagError(f"family expects {m} parameters, got shape {u.shape}")
            return u

        def pos(u):
            out = base_pos.copy()
            for ui, d, (p, _) in zip(check(u), directions, profiles):
                out = out + p(ui) * d
            return out

        def vel(u, w):
            out = np.zeros_like(base_pos)
            for ui, wi, d, (_, dp) in zip(check(u), check(w), directions, profiles):
                out = out + wi * dp(ui) * d
            return out

        return cls(base.mesh, m, pos, vel, label=label)

    def positions(self, u) -> np.ndarray:
        return self._positions(np.atleast_1d(np.asarray(u, dtype=float)))

    def immersion(self, u, label=None) -> Immersion:
        return Immersion(self.mesh, self.positions(u), label=label or self.label)

    @property
    def has_velocity(self) -> bool:
        return self._velocity is not None

    def velocity(self, u, direction) -> np.ndarray:
        if self._velocity is None:
            raise SlagError("family has no analytic velocity; use a finite-difference path")
        return self._velocity(
            np.atleast_1d(np.asarray(u, dtype=float)),
            np.atleast_1d(np.asarray(direction, dtype=float)),
        )
