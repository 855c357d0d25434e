r"""Discrete exterior calculus with boundary conditions on Whitney forms.

Cochains in degree k assign one real number per canonical k-simplex, read as
the integral of a k-form over that simplex.  The Galerkin mass matrix of
piecewise-linear (Whitney) k-forms under a per-top-simplex constant metric is

    M_k[s, t] = sum_T (k!)^2 sum_{i,j} (-1)^{i+j}
                \int_T lam_{s_i} lam_{t_j}  < d lam_{s \ i}, d lam_{t \ j} >_G dV,

where the bracket is the Gram determinant of barycentric-gradient inner
products.  The wedge pairing matrix

    P_k[s, t] = \int_L W_s^(k) ^ W_t^(n-k)

is metric independent; the L^2-projection Hodge star is then the mass solve
star(a) = M_{n-k}^{-1} P_k^T a.  Dirichlet harmonic 1-fields are the kernel of
{closedness on interior edges} + {M_1-orthogonality to differentials of
interior-vertex functions}; Neumann (n-1)-fields test against all functions.
Both kernels have exactly the corresponding Betti dimensions at the discrete
level, so a dimension mismatch signals solver failure, not discretization.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    DegenerateMetricError,
    DegreeMismatchError,
    DegreeOutOfRangeError,
    DimensionMismatchError,
    RankDeficientError,
    SolverFailureError,
)
from .meshes import Chain, SimplicialMesh

_KERNEL_GAP = 1e-8
_SOLVER_TOL = 1e-12


@dataclass
class Cochain:
    """Degree-k real cochain on canonical simplices."""

    mesh: SimplicialMesh
    degree: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_simplices(self.degree),):
            raise DegreeMismatchError(
                f"degree-{self.degree} cochain needs "
                f"{self.mesh.n_simplices(self.degree)} values, got {self.values.shape}"
            )

    @classmethod
    def zeros(cls, mesh: SimplicialMesh, degree: int) -> "Cochain":
        return cls(mesh, degree, np.zeros(mesh.n_simplices(degree)))

    def copy(self) -> "Cochain":
        return Cochain(self.mesh, self.degree, self.values.copy())


class MetricField:
    """Per-top-simplex SPD Gram matrix of the edge-vector frame."""

    def __init__(self, mesh: SimplicialMesh, gram: np.ndarray, tol: float = 1e-12):
        gram = np.asarray(gram, dtype=float)
        n = mesh.dim
        if gram.shape != (mesh.n_simplices(n), n, n):
            raise DegenerateMetricError(f"gram field has wrong shape {gram.shape}")
        sym_defect = np.abs(gram - gram.transpose(0, 2, 1)).max()
        if sym_defect > 1e-10:
            raise DegenerateMetricError(f"gram matrices asymmetric by {sym_defect:.2e}")
        eigs = np.linalg.eigvalsh(0.5 * (gram + gram.transpose(0, 2, 1)))
        if eigs.min() <= tol * max(eigs.max(), 1.0):
            raise DegenerateMetricError(
                f"gram eigenvalue {eigs.min():.3e} below degeneracy tolerance"
            )
        self.mesh = mesh
        self.gram = gram

    @classmethod
    def from_vertex_positions(cls, mesh: SimplicialMesh, positions: np.ndarray,
                              ambient_metric: np.ndarray | None = None) -> "MetricField":
        """Pullback of a constant ambient metric along straight simplices."""
        positions = np.asarray(positions, dtype=float)
        tops = mesh.simplices[mesh.dim]
        edges = positions[tops[:, 1:]] - positions[tops[:, :1]]
        g = np.eye(positions.shape[1]) if ambient_metric is None else ambient_metric
        gram = np.einsum("tia,ab,tjb->tij", edges, g, edges)
        return cls(mesh, gram)


class HodgeStructure:
    """Mass matrices, wedge pairings, harmonic bases and solver caches."""

    def __init__(self, mesh: SimplicialMesh, metric: MetricField):
        if metric.mesh is not mesh:
            raise DegreeMismatchError("metric belongs to a different mesh")
        self.mesh = mesh
        self.metric = metric
        n = mesh.dim
        gram = metric.gram
        det = np.linalg.det(gram)
        self._volumes = np.sqrt(det) / math.factorial(n)
        ginv = np.linalg.inv(gram)
        # inner products of all n+1 barycentric gradients, d lam_0 = -sum d lam_i
        H = np.empty((len(gram), n + 1, n + 1))
        H[:, 1:, 1:] = ginv
        H[:, 0, 1:] = -ginv.sum(axis=1)
        H[:, 1:, 0] = -ginv.sum(axis=2)
        H[:, 0, 0] = ginv.sum(axis=(1, 2))
        self._grad_products = H
        self._mass: dict[int, sp.csr_matrix] = {}
        self._wedge: dict[int, sp.csr_matrix] = {}
        self._factors: dict[int, object] = {}
        self.diagnostics: dict = {}

    # -- assembly ------------------------------------------------------------

    def mass_matrix(self, k: int) -> sp.csr_matrix:
        if not 0 <= k <= self.mesh.dim:
            raise DegreeOutOfRangeError(f"no degree-{k} forms on a {self.mesh.dim}-mesh")
        if k not in self._mass:
            self._mass[k] = self._assemble_mass(k)
        return self._mass[k]

    def wedge_matrix(self, k: int) -> sp.csr_matrix:
        """P_k with P[s, t] = integral over L of W_s^(k) ^ W_t^(n-k)."""
        if not 0 <= k <= self.mesh.dim:
            raise DegreeOutOfRangeError(f"no degree-{k} forms on a {self.mesh.dim}-mesh")
        if k not in self._wedge:
            self._wedge[k] = self._assemble_wedge(k)
        return self._wedge[k]

    def factorized_mass(self, k: int):
        if k not in self._factors:
            try:
                self._factors[k] = spla.splu(self.mass_matrix(k).tocsc())
            except RuntimeError as exc:
                raise SolverFailureError(f"mass factorization failed in degree {k}") from exc
        return self._factors[k]

    def stiffness_matrix(self, k: int) -> sp.csr_matrix:
        """Weak form of d* d on degree-k cochains: d_k^T M_{k+1} d_k."""
        if not 0 <= k < self.mesh.dim:
            raise DegreeOutOfRangeError(f"no stiffness in degree {k}")
        d = self.mesh.coboundary_operator(k).astype(float)
        return (d.T @ self.mass_matrix(k + 1) @ d).tocsr()

    def _assemble_mass(self, k: int) -> sp.csr_matrix:
        mesh, n = self.mesh, self.mesh.dim
        faces = list(itertools.combinations(range(n + 1), k + 1))
        table = mesh.face_table(k)
        n_top = mesh.n_simplices(n)
        H = self._grad_products
        vol = self._volumes
        pair_weight = vol / ((n + 1) * (n + 2))
        kfact2 = math.factorial(k) ** 2
        rows, cols, vals = [], [], []
        for a, fa in enumerate(faces):
            for b, fb in enumerate(faces):
                acc = np.zeros(n_top)
                for i, vi in enumerate(fa):
                    ra = [v for v in fa if v != vi]
                    for j, vj in enumerate(fb):
                        rb = [v for v in fb if v != vj]
                        minors = H[:, ra, :][:, :, rb]
                        det = np.linalg.det(minors) if k else np.ones(n_top)
                        acc += ((-1) ** (i + j)) * (1 + (vi == vj)) * pair_weight * det
                rows.append(table[:, a])
                cols.append(table[:, b])
                vals.append(kfact2 * acc)
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(mesh.n_simplices(k), mesh.n_simplices(k)),
        ).tocsr()
        mat.sum_duplicates()
        return mat

    def _assemble_wedge(self, k: int) -> sp.csr_matrix:
        mesh, n = self.mesh, self.mesh.dim
        kc = n - k
        faces_k = list(itertools.combinations(range(n + 1), k + 1))
        faces_c = list(itertools.combinations(range(n + 1), kc + 1))
        table_k = mesh.face_table(k)
        table_c = mesh.face_table(kc)
        flags = mesh.top_orientation.astype(float)
        # gradient vectors in the (d lam_1 .. d lam_n) basis
        vecs = np.vstack([-np.ones(n), np.eye(n)])
        scale = math.factorial(k) * math.factorial(kc) / math.factorial(n + 2)
        rows, cols, vals = [], [], []
        for a, fa in enumerate(faces_k):
            for b, fb in enumerate(faces_c):
                coeff = 0.0
                for i, vi in enumerate(fa):
                    ra = [v for v in fa if v != vi]
                    for j, vj in enumerate(fb):
                        rb = [v for v in fb if v != vj]
                        block = vecs[ra + rb]
                        if block.shape[0] != n:
                            continue
                        wdet = np.linalg.det(block) if n else 1.0
                        coeff += ((-1) ** (i + j)) * (1 + (vi == vj)) * wdet
                if coeff == 0.0:
                    continue
                rows.append(table_k[:, a])
                cols.append(table_c[:, b])
                vals.append(scale * coeff * flags)
        if not rows:
            return sp.csr_matrix((mesh.n_simplices(k), mesh.n_simplices(kc)))
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(mesh.n_simplices(k), mesh.n_simplices(kc)),
        ).tocsr()
        mat.sum_duplicates()
        return mat

    # -- inner products -------------------------------------------------------

    def inner(self, a: Cochain, b: Cochain) -> float:
        if a.degree != b.degree:
            raise DegreeMismatchError("inner product needs equal degrees")
        return float(a.values @ (self.mass_matrix(a.degree) @ b.values))

    def norm(self, a: Cochain) -> float:
        return math.sqrt(max(self.inner(a, a), 0.0))


def dump_diagnostics(structure: HodgeStructure, path) -> None:
    """CSV dump of solver diagnostics (kernel spectra, pairing conditions)."""
    lines = ["key,index,value"]
    for key in sorted(structure.diagnostics):
        value = structure.diagnostics[key]
        if np.ndim(value) == 0:
            lines.append(f"{key},0,{float(value)!r}")
        else:
            for i, v in enumerate(np.asarray(value).ravel()):
                lines.append(f"{key},{i},{float(v)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def exterior_derivative(mesh: SimplicialMesh, k: int) -> sp.csr_matrix:
    """Signed coboundary C^k -> C^{k+1}; composition of two of these vanishes."""
    if not 0 <= k < mesh.dim:
        raise DegreeOutOfRangeError(f"no coboundary from degree {k} on a {mesh.dim}-mesh")
    return mesh.coboundary_operator(k).astype(float)


def apply_d(cochain: Cochain) -> Cochain:
    mesh = cochain.mesh
    op = exterior_derivative(mesh, cochain.degree)
    return Cochain(mesh, cochain.degree + 1, op @ cochain.values)


def mass_matrix(mesh: SimplicialMesh, metric: MetricField, k: int) -> sp.csr_matrix:
    return HodgeStructure(mesh, metric).mass_matrix(k)


def hodge_star(structure: HodgeStructure, cochain: Cochain) -> Cochain:
    """L^2-projection star: best Whitney (n-k)-form approximating the pointwise star."""
    mesh = structure.mesh
    k = cochain.degree
    rhs = structure.wedge_matrix(k).T @ cochain.values
    lu = structure.factorized_mass(mesh.dim - k)
    out = lu.solve(rhs)
    if not np.all(np.isfinite(out)):
        raise SolverFailureError("hodge star solve produced non-finite values")
    return Cochain(mesh, mesh.dim - k, out)


def codifferential(structure: HodgeStructure, cochain: Cochain) -> Cochain:
    """M-adjoint of d: delta = M_{k-1}^{-1} d^T M_k."""
    mesh = structure.mesh
    k = cochain.degree
    if k == 0:
        raise DegreeOutOfRangeError("no codifferential on 0-forms")
    rhs = exterior_derivative(mesh, k - 1).T @ (structure.mass_matrix(k) @ cochain.values)
    return Cochain(mesh, k - 1, structure.factorized_mass(k - 1).solve(rhs))


def period_matrix(cochains, cycles) -> np.ndarray:
    """Entry (j, k): value of cochain k summed over chain j."""
    chains = cycles.cycles if hasattr(cycles, "cycles") else list(cycles)
    out = np.zeros((len(chains), len(cochains)))
    for kk, coch in enumerate(cochains):
        for j, chain in enumerate(chains):
            if chain.degree != coch.degree:
                raise DegreeMismatchError(
                    f"chain degree {chain.degree} vs cochain degree {coch.degree}"
                )
            out[j, kk] = sum(c * coch.values[i] for i, c in chain.coeffs.items())
    return out


def chain_period(cochain: Cochain, chain: Chain) -> float:
    return float(period_matrix([cochain], [chain])[0, 0])


# -- harmonic fields -----------------------------------------------------------------


def harmonic_fields(
    structure: HodgeStructure,
    flavor: str,
    cycles=None,
    expected_dim: int | None = None,
    kernel_gap: float = _KERNEL_GAP,
):
    """Basis of the constrained harmonic space.

    flavor "dirichlet": degree-1 fields vanishing on boundary edges, closed,
    and M_1-orthogonal to differentials of interior-vertex functions.
    flavor "neumann": degree-(n-1) closed fields M-orthogonal to differentials
    of all (n-2)-cochains.

    The returned basis is M-orthonormal and deterministic: eigenvectors of the
    constraint normal matrix are period-normalized against `cycles` (when
    given) before Gram-Schmidt, and signs are fixed by the first nonzero
    period.  Raises DimensionMismatchError when the numerical kernel dimension
    disagrees with the Betti prediction.
    """
    mesh = structure.mesh
    n = mesh.dim
    profile = mesh.betti_profile() if expected_dim is None else None
    if flavor == "dirichlet":
        degree = 1
        col_ids = mesh.interior_simplex_ids(1)
        blocks = []
        if n >= 2:
            blocks.append(exterior_derivative(mesh, 1)[:, col_ids])
        rows = mesh.interior_simplex_ids(0)
        weak = (exterior_derivative(mesh, 0).T @ structure.mass_matrix(1))[rows][:, col_ids]
        blocks.append(weak)
        m_expected = profile.b_rel_1 if expected_dim is None else expected_dim
    elif flavor == "neumann":
        degree = n - 1
        if degree < 0:
            raise DegreeOutOfRangeError("neumann fields need dim >= 1")
        col_ids = np.arange(mesh.n_simplices(degree))
        blocks = [exterior_derivative(mesh, degree)]
        if degree >= 1:
            blocks.append(exterior_derivative(mesh, degree - 1).T @ structure.mass_matrix(degree))
        m_expected = (
            profile.betti[degree] if expected_dim is None else expected_dim
        )
    else:
        raise DegreeMismatchError(f"unknown flavor {flavor!r}")

    dim = len(col_ids)
    normal = sp.csr_matrix((dim, dim))
    for block in blocks:
        block = sp.csr_matrix(block)
        scale = abs(block).max() if block.nnz else 1.0
        block = block / max(scale, 1e-300)
        normal = normal + block.T @ block
    lam, vecs = _small_eigenpairs(normal, m_expected)
    kernel_dim = _kernel_dimension(lam, m_expected, kernel_gap)
    if kernel_dim != m_expected:
        raise DimensionMismatchError(
            f"{flavor} kernel dimension {kernel_dim} != expected {m_expected}; "
            f"eigenvalues {lam[: m_expected + 2]}"
        )
    structure.diagnostics[f"{flavor}_spectrum"] = lam
    basis = np.zeros((mesh.n_simplices(degree), m_expected))
    basis[col_ids] = vecs[:, :m_expected]
    cochains = [Cochain(mesh, degree, basis[:, j]) for j in range(m_expected)]
    if m_expected == 0:
        return []
    if cycles is not None:
        pm = period_matrix(cochains, cycles)
        cond = np.linalg.cond(pm)
        structure.diagnostics[f"{flavor}_period_condition"] = float(cond)
        if not np.isfinite(cond) or cond > 1e10:
            raise RankDeficientError(
                f"period pairing of {flavor} fields nearly singular (cond {cond:.2e})"
            )
        dual = basis @ np.linalg.inv(pm)
        cochains = [Cochain(mesh, degree, dual[:, j]) for j in range(m_expected)]
    ortho = _gram_schmidt(structure, cochains)
    if cycles is not None:
        for coch in ortho:
            periods = period_matrix([coch], cycles)[:, 0]
            lead = periods[np.abs(periods) > 1e-10]
            if lead.size and lead[0] < 0:
                coch.values *= -1.0
    return ortho


def _small_eigenpairs(normal: sp.csr_matrix, m_expected: int):
    dim = normal.shape[0]
    want = min(dim, max(m_expected + 4, 6))
    if dim <= 600 or want >= dim - 1:
        dense = normal.toarray()
        lam, vecs = np.linalg.eigh(dense)
        return lam, vecs
    v0 = np.ones(dim) / math.sqrt(dim)
    sigma = -1e-6 * max(abs(normal).max(), 1.0)
    try:
        lam, vecs = spla.eigsh(normal, k=want, sigma=sigma, which="LM", v0=v0)
    except Exception as exc:
        raise SolverFailureError(f"kernel eigensolve failed: {exc}") from exc
    order = np.argsort(lam)
    return lam[order], vecs[:, order]


def _kernel_dimension(lam: np.ndarray, m_expected: int, kernel_gap: float = _KERNEL_GAP) -> int:
    lam = np.maximum(lam, 0.0)
    if len(lam) <= m_expected:
        return len(lam) if (len(lam) == 0 or lam.max() <= 1e-10) else -1
    gap_ref = lam[m_expected]
    if gap_ref <= 0:
        return -1
    count = int(np.sum(lam < kernel_gap * gap_ref))
    return count


def _gram_schmidt(structure: HodgeStructure, cochains):
    out = []
    for coch in cochains:
        v = coch.copy()
        for e in out:
            v.values -= structure.inner(v, e) * e.values
        nrm = structure.norm(v)
        if nrm < 1e-14:
            raise RankDeficientError("harmonic basis became degenerate during orthonormalization")
        v.values /= nrm
        out.append(v)
    return out


# -- decomposition --------------------------------------------------------------------


@dataclass
class Decomposition:
    exact: Cochain
    coexact: Cochain
    harmonic: Cochain
    diagnostics: dict = field(default_factory=dict)

    def parts(self):
        return self.exact, self.coexact, self.harmonic


def hodge_decompose(
    structure: HodgeStructure,
    cochain: Cochain,
    harmonic_span=None,
    cycles_rel=None,
    cycles_abs=None,
    solver_tol: float = _SOLVER_TOL,
) -> Decomposition:
    """Split a cochain into (exact, remainder, harmonic) M-orthogonal parts.

    The exact part is d of a least-squares potential supported on interior
    (k-1)-simplices; the harmonic part is the M-projection onto the span of
    the flavor bases matching the degree (Dirichlet in degree 1, Neumann in
    degree n-1, both when these coincide); the remainder collects what is
    M-orthogonal to both, which for consistent inputs is the coexact part.
    """
    mesh = structure.mesh
    k = cochain.degree
    if harmonic_span is None:
        harmonic_span = []
        if k == 1:
            harmonic_span += harmonic_fields(structure, "dirichlet", cycles=cycles_rel)
        if k == mesh.dim - 1 and mesh.dim >= 1:
            harmonic_span += harmonic_fields(structure, "neumann", cycles=cycles_abs)
    mass = structure.mass_matrix(k)
    if harmonic_span:
        basis = np.stack([c.values for c in harmonic_span], axis=1)
        gram = basis.T @ (mass @ basis)
        lam, U = np.linalg.eigh(gram)
        keep = lam > 1e-12 * max(lam.max(), 1.0)
        ortho = basis @ (U[:, keep] / np.sqrt(lam[keep]))
        h_vals = ortho @ (ortho.T @ (mass @ cochain.values))
    else:
        h_vals = np.zeros_like(cochain.values)
    harmonic = Cochain(mesh, k, h_vals)

    remainder = cochain.values - h_vals
    if k >= 1:
        cols = mesh.interior_simplex_ids(k - 1)
        A = exterior_derivative(mesh, k - 1)[:, cols]
        AtM = A.T @ mass

        def op(x):
            return AtM @ (A @ x)

        linop = spla.LinearOperator((len(cols), len(cols)), matvec=op)
        rhs = AtM @ remainder
        scale = np.linalg.norm(rhs)
        if scale == 0:
            x = np.zeros(len(cols))
        else:
            x, info = spla.cg(linop, rhs, rtol=solver_tol * 1e-2,
                              atol=solver_tol * 1e-4 * scale, maxiter=5000)
            if info > 0:
                raise SolverFailureError(f"potential solve stalled (cg info {info})")
        exact_vals = A @ x
    else:
        exact_vals = np.zeros_like(remainder)
    exact = Cochain(mesh, k, exact_vals)
    coexact = Cochain(mesh, k, cochain.values - h_vals - exact_vals)

    scale = max(float(np.linalg.norm(mass @ cochain.values, ord=np.inf)), 1e-300)
    diag = {
        "resum_residual": 0.0,
        "ortho_exact_coexact": abs(float(exact.values @ (mass @ coexact.values))) / scale,
        "ortho_exact_harmonic": abs(float(exact.values @ (mass @ harmonic.values))) / scale,
        "ortho_coexact_harmonic": abs(float(coexact.values @ (mass @ harmonic.values))) / scale,
    }
    return Decomposition(exact, coexact, harmonic, diag)
