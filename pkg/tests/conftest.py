from __future__ import annotations

from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def assert_graph_invariants(graph) -> None:
    """Structural checks every built graph must satisfy."""
    from lexkg.graph_builder import serialize_graphml

    for edge in graph.edges:
        assert edge.source in graph.nodes, f"dangling source {edge.source}"
        assert edge.target in graph.nodes, f"dangling target {edge.target}"
    degree_sum = sum(node.degree for node in graph.nodes.values())
    assert degree_sum == 2 * len(graph.edges), "degree sum must equal twice the edge count"
    assert serialize_graphml(graph) == serialize_graphml(graph), "serialization must be stable"
