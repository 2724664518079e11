"""Vertex hierarchy construction and its combinatorial invariants."""

import dataclasses
import itertools
import math

import numpy as np
import pytest

from driftform import pcf


SQ3 = math.sqrt(3.0)


def brute_force_vertex_count(structure: pcf.SelfSimilarStructure, n: int) -> int:
    """Independent oracle: enumerate all words of length n, push the boundary
    coordinates through explicitly composed maps, and dedup by rounding."""
    emb = structure.embedding
    seen = set()
    for word in itertools.product(range(structure.symbol_count), repeat=n):
        pts = emb.boundary_coords
        for sym in reversed(word):
            pts = emb.maps[sym](pts)
        for p in np.atleast_2d(pts):
            seen.add(tuple(round(float(x), 10) for x in p))
    return len(seen)


class TestSierpinskiStructure:
    def test_boundary_coordinates(self):
        sg = pcf.build_sierpinski_structure()
        expected = {(0.5, SQ3 / 2.0), (0.0, 0.0), (1.0, 0.0)}
        got = {tuple(p) for p in sg.embedding.boundary_coords}
        assert got == expected

    def test_level_zero_is_boundary_triangle(self):
        sg = pcf.build_sierpinski_structure()
        cx = pcf.build_level(sg, 0)
        assert cx.vertex_count == 3
        assert len(cx.cells) == 1
        assert len(cx.edges) == 3

    def test_level_one_counts(self):
        cx = pcf.build_level(pcf.build_sierpinski_structure(), 1)
        # 3 cells x 3 edges with no shared edges; midpoint identification
        # leaves 3*(3+1)/2 = 6 vertices.
        assert cx.vertex_count == 6
        assert len(cx.cells) == 3
        assert len(cx.edges) == 9

    def test_level_two_counts_against_coordinate_oracle(self):
        sg = pcf.build_sierpinski_structure()
        cx = pcf.build_level(sg, 2)
        assert len(cx.cells) == 9
        assert cx.vertex_count == brute_force_vertex_count(sg, 2) == 15

    @pytest.mark.parametrize("n", range(6))
    def test_vertex_count_formula(self, n):
        sg = pcf.build_sierpinski_structure()
        cx = pcf.build_level(sg, n)
        assert cx.vertex_count == brute_force_vertex_count(sg, n)
        assert cx.vertex_count == 3 * (3**n + 1) // 2
        assert len(cx.cells) == 3**n


class TestRefinement:
    def test_vertex_ids_stable(self):
        sg = pcf.build_sierpinski_structure()
        prev = pcf.build_level(sg, 0)
        for n in range(1, 5):
            cur = pcf.build_level(sg, n)
            assert set(prev.vertices) <= set(cur.vertices)
            # shared ids keep their coordinates
            np.testing.assert_allclose(
                cur.coordinates[: prev.vertex_count], prev.coordinates, atol=0
            )
            prev = cur

    def test_every_edge_in_exactly_one_cell(self):
        # finitely ramified: cells meet only at vertices
        sg = pcf.build_sierpinski_structure()
        for n in (1, 2, 3):
            cx = pcf.build_level(sg, n)
            count = {e: 0 for e in cx.edges}
            for _, ids in cx.cells:
                for a, b in itertools.combinations(ids, 2):
                    count[(min(a, b), max(a, b))] += 1
            assert set(count.values()) == {1}

    def test_embedding_consistency(self):
        # child cell corners are the affine images of the boundary under the
        # composed word map
        sg = pcf.build_sierpinski_structure()
        cx = pcf.build_level(sg, 3)
        emb = sg.embedding
        for word, ids in cx.cells:
            pts = emb.boundary_coords
            for sym in reversed(word):
                pts = emb.maps[sym](pts)
            np.testing.assert_allclose(
                cx.coordinates[list(ids)], np.atleast_2d(pts), atol=1e-12
            )

    def test_cells_ordered_lexicographically(self):
        cx = pcf.build_level(pcf.build_sierpinski_structure(), 2)
        words = [w for w, _ in cx.cells]
        assert words == sorted(words)


class TestCellsContaining:
    def test_midpoint_in_two_cells(self):
        sg = pcf.build_sierpinski_structure()
        cx = pcf.build_level(sg, 1)
        for mid in (3, 4, 5):
            assert len(pcf.cells_containing(cx, mid)) == 2

    @pytest.mark.parametrize("n", [0, 1, 3])
    def test_corner_in_one_cell(self, n):
        sg = pcf.build_sierpinski_structure()
        cx = pcf.build_level(sg, n)
        for corner in (0, 1, 2):
            assert len(pcf.cells_containing(cx, corner)) == 1

    def test_unknown_vertex_rejected(self):
        cx = pcf.build_level(pcf.build_sierpinski_structure(), 1)
        with pytest.raises(KeyError):
            pcf.cells_containing(cx, 99)


class TestValidation:
    def test_negative_level_rejected(self):
        with pytest.raises(pcf.StructureError):
            pcf.build_level(pcf.build_sierpinski_structure(), -1)

    def test_same_cell_identification_rejected(self):
        sg = pcf.build_sierpinski_structure()
        bad = dataclasses.replace(
            sg, embedding=None, identifications=(((0, 0), (0, 1)),)
        )
        with pytest.raises(pcf.StructureError, match="one cell"):
            bad.validate()

    def test_transitive_collapse_rejected(self):
        # closure would merge two slots of cell 0
        sg = pcf.build_sierpinski_structure()
        bad = dataclasses.replace(
            sg,
            embedding=None,
            identifications=(((0, 1), (1, 0)), ((1, 0), (0, 2))),
        )
        with pytest.raises(pcf.StructureError, match="collapses"):
            pcf.build_level(bad, 1)

    def test_boundary_point_collapse_rejected(self):
        sg = pcf.build_sierpinski_structure()
        bad = dataclasses.replace(
            sg, embedding=None, boundary_addresses=((0, 0), (0, 0), (2, 2))
        )
        with pytest.raises(pcf.StructureError, match="boundary points"):
            bad.validate()

    def test_embedding_disagreement_rejected(self):
        sg = pcf.build_sierpinski_structure()
        # drop one gluing pair: coordinates still coincide at the midpoint,
        # so the combinatorial data is incomplete
        bad = dataclasses.replace(sg, identifications=sg.identifications[:2])
        with pytest.raises(pcf.StructureError, match="disagree"):
            bad.validate()


class TestBuildRoutes:
    def test_combinatorial_matches_coordinates_sg(self):
        sg = pcf.build_sierpinski_structure()
        sg_comb = dataclasses.replace(sg, embedding=None)
        for n in range(5):
            a = pcf.build_level(sg, n)
            b = pcf.build_level(sg_comb, n)
            assert a.cells == b.cells
            assert a.edges == b.edges
            assert a.vertex_count == b.vertex_count

    def test_interval_structure(self):
        interval = pcf.load_structure("docs/configs/interval.json")
        for n in range(6):
            cx = pcf.build_level(interval, n)
            assert cx.vertex_count == 2**n + 1
            # coordinates are exactly the dyadic grid
            got = sorted(float(x) for x in cx.coordinates[:, 0])
            assert got == [k / 2**n for k in range(2**n + 1)]

    def test_interval_combinatorial_route(self):
        interval = pcf.load_structure("docs/configs/interval.json")
        stripped = dataclasses.replace(interval, embedding=None)
        for n in range(5):
            assert (
                pcf.build_level(stripped, n).cells
                == pcf.build_level(interval, n).cells
            )


class TestMeasure:
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_sg_weights(self, n):
        sg = pcf.build_sierpinski_structure()
        cx = pcf.build_level(sg, n)
        mu = pcf.measure_weights(sg, cx)
        corner = (1.0 / 3.0) ** (n + 1)
        for v in range(cx.vertex_count):
            expected = corner if v < 3 else 2.0 * corner
            assert mu[v] == pytest.approx(expected, rel=1e-14)
        assert mu.sum() == pytest.approx(1.0, abs=1e-14)
        assert mu.min() > 0

    def test_bad_theta_rejected(self):
        sg = pcf.build_sierpinski_structure()
        cx = pcf.build_level(sg, 1)
        with pytest.raises(pcf.StructureError):
            pcf.measure_weights(sg, cx, theta=[0.5, 0.5, 0.5])
        with pytest.raises(pcf.StructureError):
            pcf.measure_weights(sg, cx, theta=[1.0, 0.0, 0.0])


class TestConfigIO:
    def test_round_trip(self, tmp_path):
        sg = pcf.build_sierpinski_structure()
        path = tmp_path / "sg.json"
        pcf.save_structure(sg, path)
        loaded = pcf.load_structure(path)
        assert pcf.structure_to_dict(loaded) == pcf.structure_to_dict(sg)
        assert pcf.build_level(loaded, 2).cells == pcf.build_level(sg, 2).cells

    def test_malformed_config_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"symbol_count": 2}')
        with pytest.raises(pcf.StructureError, match="malformed"):
            pcf.load_structure(path)
