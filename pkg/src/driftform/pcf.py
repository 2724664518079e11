"""Vertex hierarchies of finitely-ramified self-similar structures.

A structure is described by its level-1 combinatorial data: ``M`` contraction
symbols, a boundary of size ``|V0|``, gluing pairs saying which images of
boundary points coincide, and the level-1 address of every boundary point.
That data determines every deeper level by self-similarity.  Refining a level
complex applies the gluing pattern inside each cell; vertex ids are stable
under refinement and deterministic across runs (new ids are handed out in
order of the lexicographically smallest ``(word, boundary slot)`` address).

Structures with a planar/affine embedding resolve identifications by
coordinate equality (tolerance ``COORD_TOL``); purely combinatorial
structures use the gluing pattern directly.  Both routes produce identical
complexes for consistent data.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

COORD_TOL = 1e-12

Word = tuple[int, ...]
Address = tuple[int, int]  # (symbol, boundary slot)


class StructureError(ValueError):
    """Raised for inconsistent self-similar structure data."""


@dataclass(frozen=True)
class AffineMap:
    """Affine contraction ``x -> matrix @ x + offset``."""

    matrix: np.ndarray
    offset: np.ndarray

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts @ self.matrix.T + self.offset

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """Composition ``self o inner``."""
        return AffineMap(
            self.matrix @ inner.matrix,
            self.matrix @ inner.offset + self.offset,
        )

    @staticmethod
    def identity(dim: int) -> "AffineMap":
        return AffineMap(np.eye(dim), np.zeros(dim))


@dataclass(frozen=True)
class Embedding:
    """Coordinates of the boundary set plus one affine map per symbol."""

    boundary_coords: np.ndarray  # (|V0|, dim)
    maps: tuple[AffineMap, ...]

    @property
    def dim(self) -> int:
        return self.boundary_coords.shape[1]


@dataclass(frozen=True)
class SelfSimilarStructure:
    """Combinatorics of a finitely-ramified self-similar set.

    ``identifications`` lists pairs of level-1 addresses that map to the same
    point; ``boundary_addresses[a]`` is a level-1 address of boundary point
    ``a`` (this encodes that the boundary is nested into level 1).  The
    optional ``scalings`` (per-symbol resistance scale factors), ``weights``
    (per-symbol measure weights) and ``base_conductances`` (edge list on the
    boundary) are carried as defaults for the energy/measure hierarchy.
    """

    symbol_count: int
    boundary_size: int
    identifications: tuple[tuple[Address, Address], ...]
    boundary_addresses: tuple[Address, ...]
    embedding: Embedding | None = None
    scalings: tuple[float, ...] | None = None
    weights: tuple[float, ...] | None = None
    base_conductances: tuple[tuple[int, int, float], ...] | None = None
    name: str = "custom"
    assumed_dense: bool = True  # density of the vertex closure is assumed, not checked

    def validate(self) -> None:
        m, nb = self.symbol_count, self.boundary_size
        if m < 2:
            raise StructureError(f"symbol_count must be >= 2, got {m}")
        if nb < 2:
            raise StructureError(f"boundary_size must be >= 2, got {nb}")
        for pair in self.identifications:
            (i, a), (j, b) = pair
            for sym, slot in pair:
                if not (0 <= sym < m and 0 <= slot < nb):
                    raise StructureError(f"identification {pair} out of range")
            if i == j:
                raise StructureError(
                    f"identification {pair} glues two boundary slots of one cell"
                )
        if len(self.boundary_addresses) != nb:
            raise StructureError(
                f"need one level-1 address per boundary point, got "
                f"{len(self.boundary_addresses)} for boundary size {nb}"
            )
        for addr in self.boundary_addresses:
            sym, slot = addr
            if not (0 <= sym < m and 0 <= slot < nb):
                raise StructureError(f"boundary address {addr} out of range")
        _level_one_pattern(self)  # raises on collapses
        if self.scalings is not None:
            if len(self.scalings) != m or not all(0 < r < 1 for r in self.scalings):
                raise StructureError("scalings must be M factors in (0, 1)")
        if self.weights is not None:
            if len(self.weights) != m or not all(w > 0 for w in self.weights):
                raise StructureError("weights must be M positive numbers")
            if abs(sum(self.weights) - 1.0) > 1e-12:
                raise StructureError("weights must sum to 1")
        if self.embedding is not None:
            self._validate_embedding()

    def _validate_embedding(self) -> None:
        emb = self.embedding
        if emb.boundary_coords.shape[0] != self.boundary_size:
            raise StructureError("embedding must give one coordinate per boundary point")
        if len(emb.maps) != self.symbol_count:
            raise StructureError("embedding must give one affine map per symbol")
        images = {
            (i, j): emb.maps[i](emb.boundary_coords[j])[0]
            for i in range(self.symbol_count)
            for j in range(self.boundary_size)
        }
        for pair in self.identifications:
            (i, a), (j, b) = pair
            if np.max(np.abs(images[(i, a)] - images[(j, b)])) > COORD_TOL:
                raise StructureError(
                    f"identified addresses {pair} have different coordinates"
                )
        for a, addr in enumerate(self.boundary_addresses):
            if np.max(np.abs(images[addr] - emb.boundary_coords[a])) > COORD_TOL:
                raise StructureError(
                    f"address {addr} does not land on boundary point {a}"
                )
        # The combinatorial pattern and coordinate equality must induce the
        # same level-1 partition, otherwise the gluing data is incomplete.
        pattern = _level_one_pattern(self)
        by_key: dict[tuple, set[Address]] = {}
        for addr, pt in images.items():
            by_key.setdefault(_coord_key(pt), set()).add(addr)
        coord_classes = {frozenset(s) for s in by_key.values()}
        comb_classes = {frozenset(c) for c in pattern.classes}
        if coord_classes != comb_classes:
            raise StructureError(
                "identification pairs disagree with coordinate coincidences at level 1"
            )


@dataclass(frozen=True)
class LevelComplex:
    """All cells, vertices and intra-cell edges of one refinement level."""

    level: int
    vertex_count: int
    cells: tuple[tuple[Word, tuple[int, ...]], ...]
    edges: tuple[tuple[int, int], ...]
    coordinates: np.ndarray | None = None

    @property
    def vertices(self) -> range:
        return range(self.vertex_count)


@dataclass(frozen=True)
class _GluingPattern:
    classes: tuple[tuple[Address, ...], ...]  # sorted by smallest address
    class_of: Mapping[Address, int]
    corner_of_class: Mapping[int, int]  # class index -> boundary slot it realizes


def _coord_key(point: np.ndarray) -> tuple:
    return tuple(int(round(x / COORD_TOL)) for x in np.atleast_1d(point))


def _level_one_pattern(structure: SelfSimilarStructure) -> _GluingPattern:
    m, nb = structure.symbol_count, structure.boundary_size
    addresses = [(i, j) for i in range(m) for j in range(nb)]
    parent = {a: a for a in addresses}

    def find(a: Address) -> Address:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: Address, b: Address) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for left, right in structure.identifications:
        union(tuple(left), tuple(right))

    groups: dict[Address, list[Address]] = {}
    for a in addresses:
        groups.setdefault(find(a), []).append(a)
    classes = tuple(tuple(sorted(g)) for g in sorted(groups.values()))
    class_of = {a: k for k, cls in enumerate(classes) for a in cls}
    for cls in classes:
        symbols = [i for i, _ in cls]
        if len(symbols) != len(set(symbols)):
            raise StructureError(
                f"gluing collapses two boundary slots of one cell: {cls}"
            )
    corner_of_class: dict[int, int] = {}
    for a, addr in enumerate(structure.boundary_addresses):
        k = class_of[tuple(addr)]
        if k in corner_of_class:
            raise StructureError(
                f"boundary points {corner_of_class[k]} and {a} collapse to one vertex"
            )
        corner_of_class[k] = a
    return _GluingPattern(classes, class_of, corner_of_class)


def build_sierpinski_structure() -> SelfSimilarStructure:
    """The planar Sierpinski gasket on corners (1/2, sqrt(3)/2), (0,0), (1,0).

    Cell maps halve distances toward each corner; every level-1 cell meets
    each other cell in one midpoint.  Carries the standard resistance scale
    3/5 per symbol, the uniform measure weights and unit base conductances.
    """
    corners = np.array([[0.5, math.sqrt(3.0) / 2.0], [0.0, 0.0], [1.0, 0.0]])
    maps = tuple(AffineMap(0.5 * np.eye(2), corners[i] / 2.0) for i in range(3))
    structure = SelfSimilarStructure(
        symbol_count=3,
        boundary_size=3,
        identifications=(
            ((0, 1), (1, 0)),
            ((0, 2), (2, 0)),
            ((1, 2), (2, 1)),
        ),
        boundary_addresses=((0, 0), (1, 1), (2, 2)),
        embedding=Embedding(corners, maps),
        scalings=(0.6, 0.6, 0.6),
        weights=(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
        base_conductances=((0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)),
        name="sg",
    )
    structure.validate()
    return structure


def _level_zero(structure: SelfSimilarStructure) -> LevelComplex:
    nb = structure.boundary_size
    ids = tuple(range(nb))
    edges = tuple((a, b) for a in range(nb) for b in range(a + 1, nb))
    coords = None
    if structure.embedding is not None:
        coords = np.array(structure.embedding.boundary_coords, dtype=float)
    return LevelComplex(0, nb, (((), ids),), edges, coords)


def _edges_from_cells(cells: Sequence[tuple[Word, tuple[int, ...]]]) -> tuple:
    seen: set[tuple[int, int]] = set()
    for _, ids in cells:
        for a, b in itertools.combinations(ids, 2):
            seen.add((a, b) if a < b else (b, a))
    return tuple(sorted(seen))


def _refine_by_coordinates(
    structure: SelfSimilarStructure,
    cells: Sequence[tuple[Word, tuple[int, ...]]],
    cell_maps: Sequence[AffineMap],
    key_to_id: dict[tuple, int],
    coords: list[np.ndarray],
) -> tuple[list, list]:
    emb = structure.embedding
    prev_count = len(key_to_id)
    new_cells: list[tuple[Word, tuple[int, ...]]] = []
    new_maps: list[AffineMap] = []
    seen_old: set[int] = set()
    for (word, _), amap in zip(cells, cell_maps):
        for i in range(structure.symbol_count):
            cmap = amap.compose(emb.maps[i])
            pts = cmap(emb.boundary_coords)
            ids = []
            for j in range(structure.boundary_size):
                key = _coord_key(pts[j])
                vid = key_to_id.get(key)
                if vid is None:
                    vid = len(key_to_id)
                    key_to_id[key] = vid
                    coords.append(pts[j])
                elif vid < prev_count:
                    seen_old.add(vid)
                ids.append(vid)
            new_cells.append((word + (i,), tuple(ids)))
            new_maps.append(cmap)
    if len(seen_old) != prev_count:
        raise StructureError(
            "embedding does not nest the previous level into the refinement"
        )
    return new_cells, new_maps


def _refine_combinatorially(
    structure: SelfSimilarStructure,
    pattern: _GluingPattern,
    cells: Sequence[tuple[Word, tuple[int, ...]]],
    vertex_count: int,
) -> tuple[list, int]:
    new_cells: list[tuple[Word, tuple[int, ...]]] = []
    next_id = vertex_count
    for word, ids in cells:
        class_vertex: dict[int, int] = {}
        for k in range(len(pattern.classes)):
            slot = pattern.corner_of_class.get(k)
            if slot is not None:
                class_vertex[k] = ids[slot]
            else:
                class_vertex[k] = next_id
                next_id += 1
        for i in range(structure.symbol_count):
            sub = tuple(
                class_vertex[pattern.class_of[(i, j)]]
                for j in range(structure.boundary_size)
            )
            new_cells.append((word + (i,), sub))
    return new_cells, next_id


def build_level(structure: SelfSimilarStructure, n: int) -> LevelComplex:
    """Build the level-``n`` complex; ids of coarser levels are preserved.

    Raises :class:`StructureError` for negative levels or inconsistent
    structure data.
    """
    if n < 0:
        raise StructureError(f"level must be >= 0, got {n}")
    structure.validate()
    complex_ = _level_zero(structure)
    if n == 0:
        return complex_

    if structure.embedding is not None:
        emb = structure.embedding
        key_to_id = {
            _coord_key(emb.boundary_coords[j]): j
            for j in range(structure.boundary_size)
        }
        if len(key_to_id) != structure.boundary_size:
            raise StructureError("boundary coordinates are not distinct")
        coords = [emb.boundary_coords[j] for j in range(structure.boundary_size)]
        cells: Sequence = complex_.cells
        cell_maps: Sequence[AffineMap] = [AffineMap.identity(emb.dim)]
        for level in range(1, n + 1):
            cells, cell_maps = _refine_by_coordinates(
                structure, cells, cell_maps, key_to_id, coords
            )
        return LevelComplex(
            n, len(key_to_id), tuple(cells), _edges_from_cells(cells),
            np.array(coords),
        )

    pattern = _level_one_pattern(structure)
    cells = complex_.cells
    count = complex_.vertex_count
    for level in range(1, n + 1):
        cells, count = _refine_combinatorially(structure, pattern, cells, count)
    return LevelComplex(n, count, tuple(cells), _edges_from_cells(cells), None)


def cells_containing(complex_: LevelComplex, x: int) -> list[tuple[Word, tuple[int, ...]]]:
    """All cells whose boundary contains vertex ``x``."""
    if not (0 <= x < complex_.vertex_count):
        raise KeyError(f"vertex {x} not in level-{complex_.level} complex")
    return [cell for cell in complex_.cells if x in cell[1]]


def measure_weights(
    structure: SelfSimilarStructure,
    complex_: LevelComplex,
    theta: Sequence[float] | None = None,
) -> np.ndarray:
    """Probability weights on the level's vertices.

    Each cell spreads its measure ``theta_w`` (the product of per-symbol
    weights along the cell's word) uniformly over its boundary vertices, so
    the total mass is 1 and every vertex carries positive weight.
    """
    if theta is None:
        theta = structure.weights
    if theta is None:
        theta = [1.0 / structure.symbol_count] * structure.symbol_count
    theta = np.asarray(theta, dtype=float)
    if len(theta) != structure.symbol_count or np.any(theta <= 0):
        raise StructureError("theta must be M positive weights")
    if abs(theta.sum() - 1.0) > 1e-12:
        raise StructureError("theta must sum to 1")
    mu = np.zeros(complex_.vertex_count)
    share = 1.0 / structure.boundary_size
    for word, ids in complex_.cells:
        tw = float(np.prod(theta[list(word)])) if word else 1.0
        for vid in ids:
            mu[vid] += tw * share
    return mu


# ---------------------------------------------------------------------------
# Structured-text configuration (documented in docs/structure_config.md)
# ---------------------------------------------------------------------------

def structure_to_dict(structure: SelfSimilarStructure) -> dict:
    d: dict = {
        "name": structure.name,
        "symbol_count": structure.symbol_count,
        "boundary_size": structure.boundary_size,
        "identifications": [
            [list(a), list(b)] for a, b in structure.identifications
        ],
        "boundary_addresses": [list(a) for a in structure.boundary_addresses],
        "assumed_dense": structure.assumed_dense,
    }
    if structure.embedding is not None:
        emb = structure.embedding
        d["embedding"] = {
            "boundary_coords": emb.boundary_coords.tolist(),
            "maps": [
                {"matrix": m.matrix.tolist(), "offset": m.offset.tolist()}
                for m in emb.maps
            ],
        }
    if structure.scalings is not None:
        d["scalings"] = list(structure.scalings)
    if structure.weights is not None:
        d["weights"] = list(structure.weights)
    if structure.base_conductances is not None:
        d["base_conductances"] = [list(e) for e in structure.base_conductances]
    return d


def structure_from_dict(d: Mapping) -> SelfSimilarStructure:
    try:
        embedding = None
        if "embedding" in d and d["embedding"] is not None:
            emb = d["embedding"]
            embedding = Embedding(
                boundary_coords=np.array(emb["boundary_coords"], dtype=float),
                maps=tuple(
                    AffineMap(
                        np.array(m["matrix"], dtype=float),
                        np.array(m["offset"], dtype=float),
                    )
                    for m in emb["maps"]
                ),
            )
        structure = SelfSimilarStructure(
            symbol_count=int(d["symbol_count"]),
            boundary_size=int(d["boundary_size"]),
            identifications=tuple(
                (tuple(a), tuple(b)) for a, b in d["identifications"]
            ),
            boundary_addresses=tuple(tuple(a) for a in d["boundary_addresses"]),
            embedding=embedding,
            scalings=tuple(d["scalings"]) if d.get("scalings") else None,
            weights=tuple(d["weights"]) if d.get("weights") else None,
            base_conductances=tuple(
                (int(a), int(b), float(c)) for a, b, c in d["base_conductances"]
            )
            if d.get("base_conductances")
            else None,
            name=d.get("name", "custom"),
            assumed_dense=bool(d.get("assumed_dense", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise StructureError(f"malformed structure config: {exc}") from exc
    structure.validate()
    return structure


def load_structure(path) -> SelfSimilarStructure:
    with open(path, "r", encoding="utf-8") as fh:
        return structure_from_dict(json.load(fh))


def save_structure(structure: SelfSimilarStructure, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(structure_to_dict(structure), fh, indent=2, sort_keys=True)
        fh.write("\n")
