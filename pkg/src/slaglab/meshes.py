"""Oriented simplicial complexes with labeled boundary and homology cycle bases.

Simplices of every degree are stored as rows of sorted vertex ids, ordered
lexicographically, so each simplex has a canonical orientation.  Top simplices
additionally carry an orientation flag (+1/-1) relative to their canonical
order; boundary operators act on canonical simplices and therefore satisfy
boundary-of-boundary = 0 in exact integer arithmetic.

Homology ranks are computed over GF(p) for a large prime p, which agrees with
the rank over the rationals for the torsion-free desk-scale complexes used
here; the test suite cross-checks against a Smith-normal-form oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (
    NonManifoldError,
    NonOrientableError,
    RankDeficientError,
    SlagError,
    UnlabeledBoundaryError,
)

_PRIME = 2_147_483_647


@dataclass(frozen=True)
class Chain:
    """Formal integer combination of canonical k-simplices, keyed by simplex id."""

    degree: int
    coeffs: dict[int, int]

    def support(self) -> list[int]:
        return sorted(self.coeffs)

    def __neg__(self) -> "Chain":
        return Chain(self.degree, {i: -c for i, c in self.coeffs.items()})


@dataclass(frozen=True)
class RelativeCycleBasis:
    """1-chains whose boundary is supported on boundary vertices."""

    cycles: tuple[Chain, ...]

    @property
    def m(self) -> int:
        return len(self.cycles)

    @property
    def degree(self) -> int:
        return 1


@dataclass(frozen=True)
class AbsoluteCycleBasis:
    """Closed (n-1)-chains."""

    cycles: tuple[Chain, ...]
    degree: int = 0

    @property
    def m(self) -> int:
        return len(self.cycles)


@dataclass(frozen=True)
class BettiProfile:
    betti: tuple[int, ...]
    b_rel_1: int

    @property
    def b_top_minus_1(self) -> int:
        return self.betti[-2] if len(self.betti) >= 2 else self.betti[0]

    @property
    def duality_holds(self) -> bool:
        return self.b_rel_1 == self.b_top_minus_1


class SimplicialMesh:
    """Validated oriented simplicial n-complex with labeled boundary components.

    Immutable after construction; all derived operators are cached on first use.
    """

    def __init__(self, dim, n_vertices, simplices, top_orientation, boundary_labels):
        self.dim = dim
        self.n_vertices = n_vertices
        self.simplices = simplices          # tuple over k of (N_k, k+1) int arrays
        self.top_orientation = top_orientation  # (N_n,) of +-1
        self.boundary_labels = boundary_labels  # (N_{n-1},) int, 0 = interior
        self._index = [
            {tuple(row): i for i, row in enumerate(simp)} for simp in simplices
        ]
        self._boundary_ops: dict[int, sp.csr_matrix] = {}
        self._betti: BettiProfile | None = None
        self._face_tables: dict[int, np.ndarray] = {}
        # simplices entirely contained in the boundary, per degree
        self._in_boundary = self._mark_boundary_simplices()

    # -- basic queries -------------------------------------------------------

    def n_simplices(self, k: int) -> int:
        return len(self.simplices[k])

    def simplex_id(self, k: int, vertices) -> int:
        return self._index[k][tuple(sorted(vertices))]

    @property
    def n_components(self) -> int:
        labels = self.boundary_labels
        return int(labels.max()) if labels.size else 0

    def boundary_face_ids(self) -> np.ndarray:
        return np.nonzero(self.boundary_labels > 0)[0]

    def boundary_vertex_ids(self) -> np.ndarray:
        return np.nonzero(self._in_boundary[0])[0]

    def interior_simplex_ids(self, k: int) -> np.ndarray:
        return np.nonzero(~self._in_boundary[k])[0]

    def in_boundary(self, k: int) -> np.ndarray:
        """Boolean mask: k-simplices contained in the boundary."""
        return self._in_boundary[k]

    def boundary_component_of_vertex(self) -> np.ndarray:
        """Per-vertex component label, 0 for interior vertices."""
        out = np.zeros(self.n_vertices, dtype=int)
        if self.dim == 0:
            return out
        faces = self.simplices[self.dim - 1]
        for fid in self.boundary_face_ids():
            out[faces[fid]] = self.boundary_labels[fid]
        return out

    def _mark_boundary_simplices(self) -> list[np.ndarray]:
        masks = [np.zeros(self.n_simplices(k), dtype=bool) for k in range(self.dim + 1)]
        if self.dim == 0:
            return masks
        faces = self.simplices[self.dim - 1]
        for fid in np.nonzero(self.boundary_labels > 0)[0]:
            fverts = tuple(faces[fid])
            masks[self.dim - 1][fid] = True
            for k in range(self.dim - 1):
                for sub in itertools.combinations(fverts, k + 1):
                    masks[k][self._index[k][sub]] = True
        return masks

    # -- chain complex ---------------------------------------------------------

    def boundary_operator(self, k: int) -> sp.csr_matrix:
        """Signed incidence matrix C_k -> C_{k-1} on canonical simplices (int64)."""
        if not 1 <= k <= self.dim:
            raise SlagError(f"no boundary operator in degree {k}")
        if k not in self._boundary_ops:
            rows, cols, vals = [], [], []
            lower = self._index[k - 1]
            for j, simplex in enumerate(self.simplices[k]):
                for i in range(k + 1):
                    face = tuple(np.delete(simplex, i))
                    rows.append(lower[face])
                    cols.append(j)
                    vals.append((-1) ** i)
            mat = sp.csr_matrix(
                (np.array(vals, dtype=np.int64), (rows, cols)),
                shape=(self.n_simplices(k - 1), self.n_simplices(k)),
            )
            self._boundary_ops[k] = mat
        return self._boundary_ops[k]

    def coboundary_operator(self, k: int) -> sp.csr_matrix:
        """d_k: C^k -> C^{k+1}, the transpose of the degree-(k+1) boundary."""
        return self.boundary_operator(k + 1).T.tocsr()

    def face_table(self, k: int) -> np.ndarray:
        """(N_top, C(n+1, k+1)) global ids of the k-faces of each top simplex.

        Column order matches itertools.combinations over local vertex slots.
        """
        if k not in self._face_tables:
            combos = list(itertools.combinations(range(self.dim + 1), k + 1))
            table = np.empty((self.n_simplices(self.dim), len(combos)), dtype=np.int64)
            index = self._index[k]
            for t, simplex in enumerate(self.simplices[self.dim]):
                for c, combo in enumerate(combos):
                    table[t, c] = index[tuple(simplex[list(combo)])]
            self._face_tables[k] = table
        return self._face_tables[k]

    def chain_boundary(self, chain: Chain) -> Chain:
        if chain.degree == 0:
            return Chain(-1, {})
        op = self.boundary_operator(chain.degree)
        out: dict[int, int] = {}
        for j, c in chain.coeffs.items():
            col = op.getcol(j).tocoo()
            for i, v in zip(col.row, col.data):
                i = int(i)
                out[i] = out.get(i, 0) + c * int(v)
        return Chain(chain.degree - 1, {i: v for i, v in out.items() if v})

    # -- homology ------------------------------------------------------------------

    def betti_profile(self) -> BettiProfile:
        if self._betti is None:
            n = self.dim
            ranks = [0] * (n + 2)
            for k in range(1, n + 1):
                ranks[k] = _rank_mod_p(_matrix_columns(self.boundary_operator(k)))
            betti = tuple(
                self.n_simplices(k) - ranks[k] - ranks[k + 1] for k in range(n + 1)
            )
            self._betti = BettiProfile(betti, self._relative_b1())
        return self._betti

    def _relative_b1(self) -> int:
        if self.dim == 0:
            return 0
        keep = [~self._in_boundary[k] for k in range(self.dim + 1)]
        n1 = int(keep[1].sum())
        rank1 = _rank_mod_p(
            _matrix_columns(self.boundary_operator(1), row_mask=keep[0], col_mask=keep[1])
        )
        if self.dim >= 2:
            rank2 = _rank_mod_p(
                _matrix_columns(self.boundary_operator(2), row_mask=keep[1], col_mask=keep[2])
            )
        else:
            rank2 = 0
        return n1 - rank1 - rank2


# -- construction ---------------------------------------------------------------


def build_mesh(n_vertices, top_simplices, boundary_labels, dim=None, orient="auto"):
    """Validate raw vertex/simplex/label data and build a SimplicialMesh.

    top_simplices: iterable of (n+1)-tuples of vertex ids; tuple order defines
        the input orientation.
    boundary_labels: mapping from boundary (n-1)-simplices (any vertex order)
        to component labels 1..d.
    orient: "auto" propagates a consistent orientation from the lowest-id top
        simplex of each component (input orientation used as the seed);
        "strict" requires the input orientations to be consistent as given.
    """
    tops = [tuple(s) for s in top_simplices]
    if not tops:
        raise SlagError("empty complex")
    if dim is None:
        dim = len(tops[0]) - 1
    for s in tops:
        if len(s) != dim + 1 or len(set(s)) != dim + 1:
            raise SlagError(f"bad top simplex {s}")
        for v in s:
            if not 0 <= v < n_vertices:
                raise SlagError(f"simplex {s} references unknown vertex {v}")

    # canonical simplex lists per degree
    simplices: list[np.ndarray] = []
    for k in range(dim + 1):
        faces = sorted({tuple(sorted(c)) for s in tops for c in itertools.combinations(s, k + 1)})
        simplices.append(np.array(faces, dtype=np.int64).reshape(len(faces), k + 1))
    if len(simplices[0]) != n_vertices:
        # isolated vertices are not part of the complex
        raise SlagError("every vertex must belong to some top simplex")

    input_orient = np.array([_parity(s) for s in tops], dtype=np.int64)
    top_sorted = [tuple(sorted(s)) for s in tops]
    order = sorted(range(len(tops)), key=lambda i: top_sorted[i])
    tops_canon = [top_sorted[i] for i in order]
    if len(set(tops_canon)) != len(tops_canon):
        raise SlagError("duplicate top simplices")
    input_orient = input_orient[order]
    simplices[dim] = np.array(tops_canon, dtype=np.int64)

    # face -> adjacent top simplices
    coface: dict[tuple, list[tuple[int, int]]] = {}
    for t, s in enumerate(tops_canon):
        for i in range(dim + 1):
            face = s[:i] + s[i + 1 :]
            coface.setdefault(face, []).append((t, (-1) ** i))
    for face, adj in coface.items():
        if len(adj) > 2:
            raise NonManifoldError(f"face {face} shared by {len(adj)} top simplices")

    orientation = _orient_complex(len(tops_canon), coface, input_orient, orient)

    # boundary faces and labels
    face_index = {tuple(row): i for i, row in enumerate(simplices[dim - 1])} if dim else {}
    labels = np.zeros(len(simplices[dim - 1]) if dim else 0, dtype=np.int64)
    boundary_faces = {f for f, adj in coface.items() if len(adj) == 1}
    given = {tuple(sorted(f)): int(v) for f, v in dict(boundary_labels).items()}
    unknown = set(given) - boundary_faces
    if unknown:
        raise UnlabeledBoundaryError(f"labels given for non-boundary faces: {sorted(unknown)[:3]}")
    missing = boundary_faces - set(given)
    if missing:
        raise UnlabeledBoundaryError(f"unlabeled boundary faces: {sorted(missing)[:3]}")
    for f, v in given.items():
        if v < 1:
            raise UnlabeledBoundaryError(f"label for {f} must be >= 1, got {v}")
        labels[face_index[f]] = v

    mesh = SimplicialMesh(dim, n_vertices, tuple(simplices), orientation, labels)
    _validate_boundary_components(mesh)
    return mesh


def _parity(simplex) -> int:
    """Sign of the permutation sorting the vertex tuple."""
    s = list(simplex)
    sign = 1
    for i in range(len(s)):
        for j in range(i + 1, len(s)):
            if s[j] < s[i]:
                s[i], s[j] = s[j], s[i]
                sign = -sign
    return sign


def _orient_complex(n_top, coface, input_orient, mode):
    """Orientation flags making induced orientations on interior faces cancel."""
    flags = np.zeros(n_top, dtype=np.int64)
    adjacency: dict[int, list[tuple[int, int]]] = {t: [] for t in range(n_top)}
    for adj in coface.values():
        if len(adj) == 2:
            (t1, s1), (t2, s2) = adj
            adjacency[t1].append((t2, s1 * s2))
            adjacency[t2].append((t1, s1 * s2))
    for seed in range(n_top):
        if flags[seed]:
            continue
        flags[seed] = input_orient[seed]
        stack = [seed]
        while stack:
            t = stack.pop()
            for t2, rel in adjacency[t]:
                want = -rel * flags[t]
                if flags[t2] == 0:
                    flags[t2] = want
                    stack.append(t2)
                elif flags[t2] != want:
                    raise NonOrientableError("no consistent orientation exists")
    if mode == "strict" and not np.array_equal(flags, input_orient):
        raise NonOrientableError("input orientations are not globally consistent")
    return flags


def _validate_boundary_components(mesh: SimplicialMesh) -> None:
    if mesh.dim == 0:
        return
    face_ids = mesh.boundary_face_ids()
    labels = mesh.boundary_labels
    d = mesh.n_components
    used = sorted(set(int(labels[i]) for i in face_ids))
    if used != list(range(1, d + 1)):
        raise UnlabeledBoundaryError(f"labels must be exactly 1..d, got {used}")
    # connected components of the boundary complex via shared (n-2)-faces
    parent = {int(i): int(i) for i in face_ids}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    faces = mesh.simplices[mesh.dim - 1]
    subface_map: dict[tuple, int] = {}
    for fid in face_ids:
        fid = int(fid)
        fverts = tuple(faces[fid])
        # boundary faces are points when dim == 1: each is its own component
        keys = [fverts[:i] + fverts[i + 1 :] for i in range(len(fverts))] if mesh.dim >= 2 else []
        for key in keys:
            if key in subface_map:
                ra, rb = find(subface_map[key]), find(fid)
                if ra != rb:
                    parent[ra] = rb
            else:
                subface_map[key] = fid
    comps: dict[int, set[int]] = {}
    for fid in face_ids:
        comps.setdefault(find(int(fid)), set()).add(int(labels[fid]))
    if len(comps) != d:
        raise UnlabeledBoundaryError(
            f"boundary has {len(comps)} connected components but {d} labels"
        )
    for members in comps.values():
        if len(members) != 1:
            raise UnlabeledBoundaryError(f"one boundary component carries labels {sorted(members)}")


# -- betti numbers over GF(p) -------------------------------------------------------


def _matrix_columns(mat: sp.csr_matrix, row_mask=None, col_mask=None):
    """Columns of an integer sparse matrix as dicts, with optional submatrix masks."""
    csc = mat.tocsc()
    if row_mask is not None:
        row_keep = row_mask
    else:
        row_keep = np.ones(mat.shape[0], dtype=bool)
    cols = range(mat.shape[1]) if col_mask is None else np.nonzero(col_mask)[0]
    out = []
    for j in cols:
        start, end = csc.indptr[j], csc.indptr[j + 1]
        col = {
            int(i): int(v)
            for i, v in zip(csc.indices[start:end], csc.data[start:end])
            if row_keep[i]
        }
        out.append(col)
    return out


class _ModReducer:
    """Incremental column reduction over GF(p) with lowest-row pivoting."""

    def __init__(self, p: int = _PRIME):
        self.p = p
        self.pivots: dict[int, dict[int, int]] = {}
        self.rank = 0

    def add(self, column: dict[int, int]) -> bool:
        """Reduce a column against current pivots; True if it increases rank."""
        p = self.p
        col = {r: v % p for r, v in column.items() if v % p}
        while col:
            r = min(col)
            piv = self.pivots.get(r)
            if piv is None:
                inv = pow(col[r], p - 2, p)
                self.pivots[r] = {rr: (vv * inv) % p for rr, vv in col.items()}
                self.rank += 1
                return True
            c = col[r]
            for rr, vv in piv.items():
                nv = (col.get(rr, 0) - c * vv) % p
                if nv:
                    col[rr] = nv
                else:
                    col.pop(rr, None)
        return False


def _rank_mod_p(columns, p: int = _PRIME) -> int:
    red = _ModReducer(p)
    for col in columns:
        red.add(col)
    return red.rank


def betti_profile(mesh: SimplicialMesh) -> BettiProfile:
    """Homology ranks over the reals plus the relative rank b_rel_1.

    Field-coefficient cohomology ranks coincide with these, so the profile
    doubles as a cohomology report.
    """
    return mesh.betti_profile()


# -- cycle bases --------------------------------------------------------------------


def relative_cycle_basis(mesh: SimplicialMesh) -> RelativeCycleBasis:
    """Independent relative 1-cycles: 1-chains with boundary on boundary vertices.

    Construction: merge all boundary vertices into one virtual node, take the
    fundamental cycles of a breadth-first spanning forest (lowest simplex id
    first), and keep those that stay independent modulo interior 2-boundaries.
    """
    m = mesh.betti_profile().b_rel_1
    edges = mesh.simplices[1]
    interior_edge_ids = mesh.interior_simplex_ids(1)
    on_boundary = mesh._in_boundary[0]
    star = mesh.n_vertices  # virtual merged node

    def node(v):
        return star if on_boundary[v] else int(v)

    candidates = _fundamental_cycles(
        [(int(e), node(edges[e][0]), node(edges[e][1])) for e in interior_edge_ids],
        n_nodes=mesh.n_vertices + 1,
        roots=[star],
    )
    reducer = _ModReducer()
    if mesh.dim >= 2:
        keep1 = ~mesh._in_boundary[1]
        for col in _matrix_columns(mesh.boundary_operator(2), row_mask=keep1,
                                   col_mask=~mesh._in_boundary[2]):
            reducer.add(col)
    chosen = []
    for chain in candidates:
        if reducer.add(dict(chain)):
            chosen.append(Chain(1, dict(chain)))
            if len(chosen) == m:
                break
    if len(chosen) != m:
        raise RankDeficientError(f"found {len(chosen)} relative cycles, expected {m}")
    return RelativeCycleBasis(tuple(chosen))


def absolute_cycle_basis(mesh: SimplicialMesh) -> AbsoluteCycleBasis:
    """Closed (n-1)-chains spanning the top-but-one homology (dim <= 2)."""
    profile = mesh.betti_profile()
    m = profile.betti[mesh.dim - 1] if mesh.dim >= 1 else profile.betti[0]
    if mesh.dim == 1:
        # one interior vertex per connected component, lowest id first
        comp = _vertex_components(mesh)
        chosen: list[Chain] = []
        for root in sorted(set(comp)):
            members = np.nonzero(comp == root)[0]
            interior = [int(v) for v in members if not mesh._in_boundary[0][v]]
            pick = interior[0] if interior else int(members[0])
            chosen.append(Chain(0, {pick: 1}))
        if len(chosen) != m:
            raise RankDeficientError(f"found {len(chosen)} 0-cycles, expected {m}")
        return AbsoluteCycleBasis(tuple(chosen), degree=0)
    if mesh.dim != 2:
        raise SlagError("absolute cycle basis implemented for dim <= 2")
    edges = mesh.simplices[1]
    candidates = _fundamental_cycles(
        [(i, int(e[0]), int(e[1])) for i, e in enumerate(edges)],
        n_nodes=mesh.n_vertices,
        roots=[],
    )
    reducer = _ModReducer()
    for col in _matrix_columns(mesh.boundary_operator(2)):
        reducer.add(col)
    chosen = []
    for chain in candidates:
        if reducer.add(dict(chain)):
            chosen.append(Chain(1, dict(chain)))
            if len(chosen) == m:
                break
    if len(chosen) != m:
        raise RankDeficientError(f"found {len(chosen)} cycles, expected {m}")
    return AbsoluteCycleBasis(tuple(chosen), degree=1)


def _vertex_components(mesh: SimplicialMesh) -> np.ndarray:
    parent = np.arange(mesh.n_vertices)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in mesh.simplices[1]:
        ru, rv = find(int(u)), find(int(v))
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    return np.array([find(int(v)) for v in range(mesh.n_vertices)])


def _fundamental_cycles(edge_list, n_nodes, roots):
    """Fundamental cycles of a BFS spanning forest of a multigraph.

    edge_list: (edge_id, node_a, node_b) with node ids < n_nodes; the chain
    convention is +1 for traversal a -> b of edge_id.  Forest roots are taken
    from `roots` first, then lowest remaining node id; neighbors are visited in
    ascending edge id.  Candidate cycles come out ordered by non-tree edge id.
    """
    adjacency: dict[int, list[tuple[int, int, int]]] = {}
    for eid, a, b in edge_list:
        adjacency.setdefault(a, []).append((eid, b, +1))
        adjacency.setdefault(b, []).append((eid, a, -1))
    for lst in adjacency.values():
        lst.sort()

    parent_edge: dict[int, tuple[int, int, int] | None] = {}
    order = list(roots) + sorted(set(adjacency) - set(roots))
    tree_edges = set()
    for root in order:
        if root in parent_edge or root not in adjacency:
            continue
        parent_edge[root] = None
        queue = [root]
        while queue:
            nxt = []
            for a in queue:
                for eid, b, sgn in adjacency[a]:
                    if b not in parent_edge:
                        parent_edge[b] = (eid, a, sgn)
                        tree_edges.add(eid)
                        nxt.append(b)
            queue = nxt

    def path_to_root(v):
        out = {}
        while parent_edge.get(v) is not None:
            eid, up, sgn = parent_edge[v]
            out[eid] = out.get(eid, 0) - sgn  # traverse v -> up = reverse of up -> v
            v = up
        return out, v

    cycles = []
    for eid, a, b in sorted(edge_list):
        if eid in tree_edges:
            continue
        chain = {eid: 1}
        up_b, root_b = path_to_root(b)
        down_a, root_a = path_to_root(a)
        if root_a != root_b:
            continue  # connects two forest components: not a cycle
        for k, v in up_b.items():
            chain[k] = chain.get(k, 0) + v
        for k, v in down_a.items():
            chain[k] = chain.get(k, 0) - v
        chain = {k: v for k, v in chain.items() if v}
        if chain:
            cycles.append(chain)
    return cycles


# -- serialization --------------------------------------------------------------------


def mesh_to_dict(mesh: SimplicialMesh) -> dict:
    faces = mesh.simplices[mesh.dim - 1] if mesh.dim else np.empty((0, 0))
    labels = [
        [faces[i].tolist(), int(mesh.boundary_labels[i])]
        for i in mesh.boundary_face_ids()
    ]
    tops = []
    for row, flag in zip(mesh.simplices[mesh.dim], mesh.top_orientation):
        t = row.tolist()
        if flag < 0:
            t[0], t[1] = t[1], t[0]
        tops.append(t)
    return {
        "dim": mesh.dim,
        "vertices": mesh.n_vertices,
        "simplices": tops,
        "boundary_labels": labels,
    }


def mesh_from_dict(data: dict) -> SimplicialMesh:
    try:
        n_vertices = data["vertices"]
        tops = data["simplices"]
        labels = {tuple(face): lab for face, lab in data["boundary_labels"]}
    except KeyError as exc:
        raise SlagError(f"mesh dict missing field {exc}") from exc
    if isinstance(n_vertices, list):
        n_vertices = len(n_vertices)
    return build_mesh(n_vertices, tops, labels, dim=data.get("dim"))
