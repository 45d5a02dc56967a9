"""Tests for rrdag.graph — representation, validation, depths, JSONL I/O."""

import io

import numpy as np
import pytest

FIGURE_EDGES = [(2, 1), (3, 2), (3, 1), (4, 3), (4, 1), (5, 3), (5, 2)]


def _figure_graph():
    from rrdag.graph import LabeledDag
    return LabeledDag.from_edges(5, 2, FIGURE_EDGES)


def _complete_3_2():
    from rrdag.graph import LabeledDag
    return LabeledDag.from_edges(3, 2, [(2, 1), (3, 1), (3, 2)])


class TestLabeledDag:
    def test_rows_sorted_descending(self):
        g = _complete_3_2()
        assert g.out_neighbors(3) == (2, 1)
        assert g.out_neighbors(1) == ()
        assert list(g.edges()) == [(2, 1), (3, 2), (3, 1)]
        assert g.edge_count == 3

    def test_targets_read_only(self):
        g = _complete_3_2()
        with pytest.raises(ValueError):
            g.targets[0, 0] = 5

    def test_single_vertex(self):
        from rrdag.graph import LabeledDag, validate
        g = LabeledDag.from_edges(1, 3, [])
        assert validate(g).ok
        assert g.edge_count == 0
        assert g.in_degrees.tolist() == [0]

    def test_endpoint_out_of_range(self):
        from rrdag.graph import LabeledDag
        with pytest.raises(ValueError, match="outside"):
            LabeledDag.from_edges(3, 1, [(2, 1), (4, 1)])

    def test_bad_parameters(self):
        from rrdag.graph import LabeledDag
        with pytest.raises(ValueError, match="m must be"):
            LabeledDag.from_edges(3, 0, [])

    def test_equality_and_hash(self):
        from rrdag.graph import LabeledDag
        a = _figure_graph()
        b = LabeledDag.from_edges(5, 2, list(reversed(FIGURE_EDGES)))
        assert a == b
        assert hash(a) == hash(b)
        assert len({a, b}) == 1

    def test_encode_decode(self):
        from rrdag.graph import LabeledDag
        g = _figure_graph()
        assert LabeledDag.decode(g.encode()) == g

    def test_decode_rejects_odd_length(self):
        from rrdag.graph import GraphFormatError, LabeledDag
        data = np.array([3, 1, 2], dtype=np.int32).tobytes()
        with pytest.raises(GraphFormatError):
            LabeledDag.decode(data)


class TestValidate:
    def test_complete_graph_ok(self):
        from rrdag.graph import validate
        report = validate(_complete_3_2())
        assert report.ok
        assert bool(report)
        assert report.violation_count == 0

    def test_increasing_edge(self):
        from rrdag.graph import LabeledDag, validate
        g = LabeledDag.from_edges(3, 2, [(2, 3), (3, 1), (3, 2)])
        report = validate(g)
        assert not report
        assert "edge (2,3) increases" in report.violations

    def test_out_degree_mismatch(self):
        from rrdag.graph import LabeledDag, validate
        g = LabeledDag.from_edges(4, 2, [(2, 1), (3, 2), (3, 1), (4, 1)])
        report = validate(g)
        assert report.violations == ("vertex 4 has out-degree 1, expected 2",)

    def test_self_loop(self):
        from rrdag.graph import LabeledDag, validate
        g = LabeledDag.from_edges(3, 1, [(2, 1), (3, 3)])
        assert "edge (3,3) is a self-loop" in validate(g).violations

    def test_duplicate_neighbor(self):
        from rrdag.graph import LabeledDag, validate
        g = LabeledDag.from_edges(3, 2, [(2, 1), (3, 1), (3, 1)])
        report = validate(g)
        assert "vertex 3 lists out-neighbor 1 more than once" in report.violations

    def test_violation_messages_capped(self):
        from rrdag.graph import LabeledDag, validate
        n = 80
        g = LabeledDag.from_edges(n, 1, [])
        report = validate(g)
        assert report.violation_count == n - 1
        assert len(report.violations) == 50


class TestDegrees:
    def test_complete_graph(self):
        from rrdag.graph import degree_of
        g = _complete_3_2()
        assert degree_of(g, 1) == 2
        assert degree_of(g, 3) == 0

    def test_single_vertex(self):
        from rrdag.graph import LabeledDag, degree_of
        assert degree_of(LabeledDag.from_edges(1, 2, []), 1) == 0

    def test_out_of_range(self):
        from rrdag.graph import degree_of
        with pytest.raises(ValueError, match="out of range"):
            degree_of(_complete_3_2(), 4)

    def test_histogram_and_max(self):
        from rrdag.graph import degree_histogram, max_degree
        g = _figure_graph()
        assert g.in_degrees.tolist() == [3, 2, 2, 0, 0]
        assert degree_histogram(g).tolist() == [2, 0, 2, 1]
        assert max_degree(g) == 3
        assert int(g.in_degrees.sum()) == g.edge_count


class TestUngreedyDepth:
    def test_complete_graph(self):
        from rrdag.graph import ungreedy_depth_walk
        g = _complete_3_2()
        assert ungreedy_depth_walk(g, 3) == 2
        assert ungreedy_depth_walk(g, 1) == 0

    def test_highest_neighbor_followed(self):
        from rrdag.graph import LabeledDag, ungreedy_depth_walk
        g = LabeledDag.from_edges(4, 2, [(2, 1), (3, 2), (3, 1), (4, 2), (4, 1)])
        assert ungreedy_depth_walk(g, 4) == 2

    def test_array_version_matches_walk(self):
        from rrdag.graph import ungreedy_depth_walk, ungreedy_depths
        g = _figure_graph()
        depths = ungreedy_depths(g)
        assert depths.tolist() == [0, 1, 2, 3, 3]
        assert depths.tolist() == [ungreedy_depth_walk(g, v) for v in range(1, 6)]

    def test_malformed(self):
        from rrdag.graph import LabeledDag, MalformedGraphError, ungreedy_depth_walk, ungreedy_depths
        g = LabeledDag.from_edges(3, 1, [(2, 1)])
        with pytest.raises(MalformedGraphError, match="vertex 3"):
            ungreedy_depth_walk(g, 3)
        with pytest.raises(MalformedGraphError):
            ungreedy_depths(g)


class TestSerialization:
    def test_serialize_single_vertex(self):
        from rrdag.graph import LabeledDag, deserialize, serialize
        g = LabeledDag.from_edges(1, 2, [])
        line = serialize(g)
        assert line == '{"n":1,"m":2,"edges":[]}'
        assert deserialize(line) == g

    def test_serialize_figure(self):
        from rrdag.graph import serialize
        assert serialize(_figure_graph()) == (
            '{"n":5,"m":2,"edges":[[2,1],[3,2],[3,1],[4,3],[4,1],[5,3],[5,2]]}'
        )

    def test_jsonl_stream(self):
        from rrdag.graph import dump_jsonl, load_jsonl
        buf = io.StringIO()
        assert dump_jsonl([_complete_3_2(), _figure_graph()], buf) == 2
        text = buf.getvalue().replace("\n", "\n\n", 1)
        graphs = load_jsonl(io.StringIO(text))
        assert graphs == [_complete_3_2(), _figure_graph()]
        assert graphs[0].edge_count == 3

    def test_truncated_line_reports_line_number(self):
        from rrdag.graph import GraphFormatError, load_jsonl, serialize
        text = serialize(_complete_3_2()) + "\n" + '{"n":3,"m":2,"edges":[[2,1]'
        with pytest.raises(GraphFormatError, match="line 2: invalid JSON"):
            load_jsonl(io.StringIO(text))

    def test_missing_field(self):
        from rrdag.graph import GraphFormatError, deserialize
        with pytest.raises(GraphFormatError, match="line 3: missing field 'edges'"):
            deserialize('{"n":3,"m":2}', lineno=3)

    def test_bad_edge(self):
        from rrdag.graph import GraphFormatError, deserialize
        with pytest.raises(GraphFormatError, match=r"edges\[1\]"):
            deserialize('{"n":3,"m":2,"edges":[[2,1],[7,1]]}')
        with pytest.raises(GraphFormatError, match="pair of integers"):
            deserialize('{"n":3,"m":2,"edges":[[2,1,0]]}')

    def test_non_integer_header(self):
        from rrdag.graph import GraphFormatError, deserialize
        with pytest.raises(GraphFormatError, match="'n' must be a positive integer"):
            deserialize('{"n":true,"m":2,"edges":[]}')
