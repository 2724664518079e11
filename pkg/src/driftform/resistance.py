"""Finite resistance networks and their energy calculus.

A :class:`ConductanceNetwork` is a vertex list with symmetric nonnegative
edge conductances.  The module provides the quadratic energy form, boundary
traces via Schur complements of the graph Laplacian, harmonic (energy
minimizing) extension of boundary data, effective resistance, and assembly
of the self-similar energies on refinement levels of a structure.

Solves factor the interior block directly; dense linear algebra is used for
networks below ``DENSE_CUTOFF`` vertices and sparse LU above.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu

from .pcf import LevelComplex

DENSE_CUTOFF = 500
SCHUR_CLAMP = 1e-14


class NetworkError(ValueError):
    """Invalid network data or an operation on an unusable network."""


class ConductanceNetwork:
    """Symmetric nonnegative conductances over an ordered vertex list.

    Parameters
    ----------
    vertices : sequence of int
        Vertex ids, in the order used by all array-valued operations.
    conductances : (n, n) array or sparse matrix
        Symmetric, nonnegative, zero diagonal.
    """

    def __init__(self, vertices: Sequence[int], conductances, *, validate: bool = True):
        self.vertices = np.asarray(list(vertices), dtype=np.int64)
        self.index = {int(v): k for k, v in enumerate(self.vertices)}
        c = sparse.csr_matrix(conductances, dtype=float)
        if c.shape != (self.n, self.n):
            raise NetworkError(
                f"conductance matrix shape {c.shape} does not match {self.n} vertices"
            )
        c.eliminate_zeros()
        self.c = c
        if validate:
            self._validate()

    @property
    def n(self) -> int:
        return len(self.vertices)

    def _validate(self) -> None:
        if len(self.index) != self.n:
            raise NetworkError("duplicate vertex ids")
        gap = abs(self.c - self.c.T).max() if self.c.nnz else 0.0
        if gap > 0:
            raise NetworkError(f"conductances are not symmetric (gap {gap:.3g})")
        if self.c.nnz and self.c.data.min() < 0:
            raise NetworkError("negative conductance")
        if np.any(self.c.diagonal() != 0):
            raise NetworkError("conductance diagonal must be zero")

    @classmethod
    def from_edges(
        cls,
        edges: Sequence[tuple[int, int, float]],
        vertices: Sequence[int] | None = None,
    ) -> "ConductanceNetwork":
        """Build from ``(x, y, c)`` triples; parallel entries accumulate."""
        if vertices is None:
            vertices = sorted({v for x, y, _ in edges for v in (x, y)})
        index = {int(v): k for k, v in enumerate(vertices)}
        rows, cols, vals = [], [], []
        for x, y, c in edges:
            if x == y:
                raise NetworkError(f"self loop at vertex {x}")
            i, j = index[int(x)], index[int(y)]
            rows += [i, j]
            cols += [j, i]
            vals += [float(c), float(c)]
        mat = sparse.coo_matrix(
            (vals, (rows, cols)), shape=(len(vertices), len(vertices))
        ).tocsr()
        return cls(vertices, mat)

    def conductance(self, x: int, y: int) -> float:
        return float(self.c[self.index[int(x)], self.index[int(y)]])

    def edge_list(self) -> list[tuple[int, int, float]]:
        coo = sparse.triu(self.c, k=1).tocoo()
        triples = [
            (int(self.vertices[i]), int(self.vertices[j]), float(v))
            for i, j, v in zip(coo.row, coo.col, coo.data)
        ]
        return sorted(triples)

    def laplacian(self, dense: bool | None = None):
        deg = np.asarray(self.c.sum(axis=1)).ravel()
        lap = sparse.diags(deg) - self.c
        if dense is None:
            dense = self.n < DENSE_CUTOFF
        return lap.toarray() if dense else lap.tocsr()

    def is_connected(self) -> bool:
        ncomp, _ = csgraph.connected_components(self.c, directed=False)
        return ncomp == 1

    def positions(self, ids: Sequence[int]) -> np.ndarray:
        try:
            return np.array([self.index[int(v)] for v in ids], dtype=np.intp)
        except KeyError as exc:
            raise NetworkError(f"unknown vertex id {exc.args[0]}") from exc


def as_values(net: ConductanceNetwork, f) -> np.ndarray:
    """Coerce a vertex function (mapping or array) to the network's order."""
    if isinstance(f, Mapping):
        missing = [v for v in net.vertices if int(v) not in f]
        if missing or len(f) != net.n:
            raise NetworkError("vertex function domain does not match network")
        return np.array([float(f[int(v)]) for v in net.vertices])
    arr = np.asarray(f, dtype=float)
    if arr.shape != (net.n,):
        raise NetworkError(
            f"vertex function has shape {arr.shape}, expected ({net.n},)"
        )
    return arr


def energy(net: ConductanceNetwork, f, g=None) -> float:
    """Quadratic energy ``1/2 * sum c_xy (f(x)-f(y)) (g(x)-g(y))``.

    Symmetric and bilinear; equals ``f . L g`` for the graph Laplacian ``L``.
    """
    fv = as_values(net, f)
    gv = fv if g is None else as_values(net, g)
    return float(fv @ (net.laplacian(dense=False) @ gv))


def _interior_solver(net: ConductanceNetwork, ipos: np.ndarray, bpos: np.ndarray):
    """Return ``solve`` for the interior Laplacian block.

    Interior components that do not touch the boundary make the block
    singular; they are rejected up front.
    """
    ncomp, labels = csgraph.connected_components(net.c, directed=False)
    boundary_labels = set(labels[bpos])
    stranded = [lbl for lbl in set(labels[ipos]) if lbl not in boundary_labels]
    if stranded:
        raise NetworkError(
            "interior component does not touch the boundary; "
            "the interior block is singular"
        )
    lap = net.laplacian(dense=net.n < DENSE_CUTOFF)
    if sparse.issparse(lap):
        lii = lap[np.ix_(ipos, ipos)].tocsc()
        lib = lap[np.ix_(ipos, bpos)]
        lu = splu(lii)
        return lambda rhs: lu.solve(rhs), lib
    lii = lap[np.ix_(ipos, ipos)]
    lib = lap[np.ix_(ipos, bpos)]
    return lambda rhs: np.linalg.solve(lii, rhs), lib


def trace(
    net: ConductanceNetwork,
    boundary: Sequence[int],
    *,
    clamp: float = SCHUR_CLAMP,
) -> ConductanceNetwork:
    """Trace the energy onto a boundary subset by eliminating the interior.

    The result is the network on ``boundary`` whose energy of any boundary
    data equals the minimum energy over all extensions to the full vertex
    set (the Schur complement of the Laplacian).  Tracing onto the full
    vertex set returns the network unchanged.  Conductances below ``clamp``
    are dropped to keep round-off fill-in out of the sparsity pattern.
    """
    bset = {int(v) for v in boundary}
    if not bset:
        raise NetworkError("boundary must be nonempty")
    if not bset.issubset(int(v) for v in net.vertices):
        raise NetworkError("boundary contains unknown vertex ids")
    keep = np.array([int(v) in bset for v in net.vertices])
    bpos = np.flatnonzero(keep)
    ipos = np.flatnonzero(~keep)
    kept_ids = [int(v) for v in net.vertices[bpos]]
    if len(ipos) == 0:
        return ConductanceNetwork(kept_ids, net.c[np.ix_(bpos, bpos)])

    solve, lib = _interior_solver(net, ipos, bpos)
    lap = net.laplacian(dense=net.n < DENSE_CUTOFF)
    if sparse.issparse(lap):
        lbb = lap[np.ix_(bpos, bpos)].toarray()
        x = solve(lib.toarray())
        schur = lbb - lap[np.ix_(bpos, ipos)].toarray() @ x
    else:
        lbb = lap[np.ix_(bpos, bpos)]
        schur = lbb - lap[np.ix_(bpos, ipos)] @ solve(lib)

    cond = -schur
    np.fill_diagonal(cond, 0.0)
    cond = 0.5 * (cond + cond.T)  # kill asymmetric round-off
    cond[np.abs(cond) < clamp] = 0.0
    if cond.min() < 0:
        raise NetworkError(
            f"Schur complement produced a negative conductance ({cond.min():.3g})"
        )
    return ConductanceNetwork(kept_ids, sparse.csr_matrix(cond))


def harmonic_extension(net: ConductanceNetwork, boundary_values: Mapping[int, float]) -> np.ndarray:
    """Energy-minimizing extension of boundary data.

    Returns values over all vertices (network order); the extension agrees
    with ``boundary_values`` on its domain and the Laplacian vanishes at
    every other vertex.
    """
    if not boundary_values:
        raise NetworkError("boundary data must be nonempty")
    bids = sorted(int(v) for v in boundary_values)
    bpos = net.positions(bids)
    fb = np.array([float(boundary_values[v]) for v in bids])
    keep = np.zeros(net.n, dtype=bool)
    keep[bpos] = True
    ipos = np.flatnonzero(~keep)
    values = np.empty(net.n)
    values[bpos] = fb
    if len(ipos) == 0:
        return values
    solve, lib = _interior_solver(net, ipos, bpos)
    rhs = -(lib @ fb)
    values[ipos] = solve(rhs)
    return values


def effective_resistance(net: ConductanceNetwork, x: int, y: int) -> float:
    """Resistance between two vertices: ``1 / E(f)`` for the unit Dirichlet
    problem ``f(x) = 1, f(y) = 0`` solved harmonically elsewhere.

    Returns 0 for ``x == y`` so the resistance is a (total) metric.
    """
    if int(x) == int(y):
        net.positions([x])
        return 0.0
    f = harmonic_extension(net, {int(x): 1.0, int(y): 0.0})
    e = energy(net, f)
    if e <= 0:
        raise NetworkError(f"vertices {x} and {y} are not resistively connected")
    return 1.0 / e


def resistance_matrix(net: ConductanceNetwork) -> np.ndarray:
    """All-pairs effective resistances via the Laplacian pseudo-inverse."""
    if not net.is_connected():
        raise NetworkError("network is disconnected")
    lap = net.laplacian(dense=True)
    pinv = np.linalg.pinv(lap, hermitian=True)
    d = np.diag(pinv)
    r = d[:, None] + d[None, :] - 2.0 * pinv
    np.fill_diagonal(r, 0.0)
    return r


def resistance_diameter(net: ConductanceNetwork) -> float:
    """Largest effective resistance over all vertex pairs."""
    return float(resistance_matrix(net).max())


def assemble_self_similar(
    net0: ConductanceNetwork,
    r: Sequence[float],
    complex_: LevelComplex,
) -> ConductanceNetwork:
    """Self-similar energy on a refinement level.

    Every cell contributes the base conductances scaled by the reciprocal of
    the product of per-symbol factors along its word; contributions of cells
    sharing an edge accumulate.  At level 0 the base network is returned
    unchanged.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or np.any(r >= 1):
        raise NetworkError("scale factors must lie in (0, 1)")
    nb = net0.n
    base_ids = sorted(int(v) for v in net0.vertices)
    if base_ids != list(range(nb)):
        raise NetworkError("base network must live on boundary ids 0..|V0|-1")
    sample_cell = complex_.cells[0][1]
    if len(sample_cell) != nb:
        raise NetworkError(
            f"base network has {nb} vertices but cells have {len(sample_cell)} corners"
        )
    c0 = net0.c.toarray()[np.ix_(net0.positions(range(nb)), net0.positions(range(nb)))]

    acc: dict[tuple[int, int], float] = {}
    for word, ids in complex_.cells:
        rw_inv = float(np.prod(1.0 / r[list(word)])) if word else 1.0
        for a in range(nb):
            for b in range(a + 1, nb):
                c = c0[a, b]
                if c == 0.0:
                    continue
                u, v = ids[a], ids[b]
                key = (u, v) if u < v else (v, u)
                acc[key] = acc.get(key, 0.0) + rw_inv * c
    edges = [(u, v, c) for (u, v), c in sorted(acc.items())]
    return ConductanceNetwork.from_edges(edges, vertices=range(complex_.vertex_count))


# ---------------------------------------------------------------------------
# Text serialization: edge lists ("x y c") and vertex functions ("x value").
# 17 significant digits round-trip doubles exactly.
# ---------------------------------------------------------------------------

def write_edge_list(net: ConductanceNetwork, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, c in net.edge_list():
            fh.write(f"{x} {y} {c:.17g}\n")


def read_edge_list(path) -> ConductanceNetwork:
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            x, y, c = line.split()
            edges.append((int(x), int(y), float(c)))
    return ConductanceNetwork.from_edges(edges)


def write_vertex_function(values: Mapping[int, float], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for x in sorted(values):
            fh.write(f"{x} {values[x]:.17g}\n")


def read_vertex_function(path) -> dict[int, float]:
    out: dict[int, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            x, v = line.split()
            out[int(x)] = float(v)
    return out


def values_to_dict(net: ConductanceNetwork, values: np.ndarray) -> dict[int, float]:
    return {int(v): float(values[k]) for k, v in enumerate(net.vertices)}
