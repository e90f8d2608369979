"""Graph assembly from extraction records, plus deterministic serialization.

Nodes merge on exact (normalized name, entity type) matches; relationship
endpoints resolve by name against the merged node set, and edges whose
endpoint name matches zero nodes or nodes of several types are dropped and
tallied rather than fabricating typed nodes. Serialization is canonical:
equal graphs produce identical bytes on any platform.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .coref import EntityType
from .extraction import EntityRecord, ExtractionMode, RelationshipRecord

DESCRIPTION_SEPARATOR = " | "

NodeKey = tuple[str, EntityType]


class GraphError(Exception):
    pass


@dataclass
class Node:
    name: str
    entity_type: EntityType
    description: str
    degree: int = 0
    provenance: list[tuple[str, int]] = field(default_factory=list)

    @property
    def key(self) -> NodeKey:
        return (self.name, self.entity_type)

    @property
    def node_id(self) -> str:
        # Entity type names contain no ':', so this mapping is injective.
        return f"{self.entity_type.value}:{self.name}"


@dataclass
class Edge:
    source: NodeKey
    target: NodeKey
    description: str
    strength: int
    provenance: tuple[str, int]


@dataclass
class KnowledgeGraph:
    case_id: str
    mode: ExtractionMode
    nodes: dict[NodeKey, Node] = field(default_factory=dict)
    edges: list[Edge] = field(default_factory=list)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)


def merge_records(entities: Sequence[EntityRecord]) -> dict[NodeKey, Node]:
    """One node per distinct (name, type); descriptions concatenated in
    input order, provenance unioned preserving first occurrence."""
    nodes: dict[NodeKey, Node] = {}
    for record in entities:
        key = (record.name, record.entity_type)
        node = nodes.get(key)
        if node is None:
            nodes[key] = Node(
                name=record.name,
                entity_type=record.entity_type,
                description=record.description,
                provenance=[record.source],
            )
        else:
            if record.description:
                node.description = (
                    node.description + DESCRIPTION_SEPARATOR + record.description
                    if node.description
                    else record.description
                )
            if record.source not in node.provenance:
                node.provenance.append(record.source)
    return nodes


def build_graph(
    entities: Sequence[EntityRecord],
    relationships: Sequence[RelationshipRecord],
    case_id: str,
    mode: ExtractionMode,
) -> tuple[KnowledgeGraph, int]:
    """Assemble the graph and return it with the dropped-edge tally.

    Records are expected in (chunk_id, record index) order; the fold is a
    pure function of that order. Parallel edges are retained.
    """
    nodes = merge_records(entities)
    types_by_name: dict[str, list[EntityType]] = {}
    for name, etype in nodes:
        types_by_name.setdefault(name, []).append(etype)

    def resolve(name: str) -> NodeKey | None:
        types = types_by_name.get(name)
        if types is None or len(types) != 1:
            return None
        return (name, types[0])

    graph = KnowledgeGraph(case_id=case_id, mode=mode, nodes=nodes)
    dropped = 0
    for rel in relationships:
        source_key = resolve(rel.source_name)
        target_key = resolve(rel.target_name)
        if source_key is None or target_key is None:
            dropped += 1
            continue
        graph.edges.append(
            Edge(source_key, target_key, rel.description, rel.strength, rel.source)
        )
        nodes[source_key].degree += 1
        nodes[target_key].degree += 1
    # Parallel edges carry no meaningful order; store them canonically so
    # that equal record multisets always produce equal graphs.
    graph.edges.sort(key=_edge_sort_key)
    return graph, dropped


def _sorted_nodes(graph: KnowledgeGraph) -> list[Node]:
    return sorted(graph.nodes.values(), key=lambda n: (n.entity_type.value, n.name))


def _edge_sort_key(e: Edge):
    return (
        e.source[1].value,
        e.source[0],
        e.target[1].value,
        e.target[0],
        e.description,
        e.strength,
        e.provenance,
    )


def _sorted_edges(graph: KnowledgeGraph) -> list[Edge]:
    return sorted(graph.edges, key=_edge_sort_key)


def _provenance_str(provenance) -> str:
    return json.dumps([[case, chunk] for case, chunk in provenance], ensure_ascii=False)


# ---------------------------------------------------------------------------
# GraphML

_GRAPHML_KEYS = (
    ("d0", "graph", "case_id", "string"),
    ("d1", "graph", "mode", "string"),
    ("d2", "node", "name", "string"),
    ("d3", "node", "entity_type", "string"),
    ("d4", "node", "description", "string"),
    ("d5", "node", "degree", "long"),
    ("d6", "node", "provenance", "string"),
    ("d7", "edge", "description", "string"),
    ("d8", "edge", "strength", "long"),
    ("d9", "edge", "provenance", "string"),
)


def _xml_attr(value: str) -> str:
    return escape(value, {'"': "&quot;"})


def serialize_graphml(graph: KnowledgeGraph) -> bytes:
    """Canonical GraphML: declared keys, nodes sorted by (type, name), edges
    by endpoint keys then description; byte-stable for equal graphs."""
    out = io.StringIO()
    out.write('<?xml version="1.0" encoding="UTF-8"?>\n')
    out.write(
        '<graphml xmlns="http://graphml.graphdrawing.org/xmlns"'
        ' xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance"'
        ' xsi:schemaLocation="http://graphml.graphdrawing.org/xmlns'
        ' http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd">\n'
    )
    for key_id, target, name, attr_type in _GRAPHML_KEYS:
        out.write(
            f'  <key id="{key_id}" for="{target}" attr.name="{name}" attr.type="{attr_type}"/>\n'
        )
    out.write('  <graph id="G" edgedefault="directed">\n')
    out.write(f'    <data key="d0">{escape(graph.case_id)}</data>\n')
    out.write(f'    <data key="d1">{escape(graph.mode.value)}</data>\n')
    for node in _sorted_nodes(graph):
        out.write(f'    <node id="{_xml_attr(node.node_id)}">\n')
        out.write(f'      <data key="d2">{escape(node.name)}</data>\n')
        out.write(f'      <data key="d3">{escape(node.entity_type.value)}</data>\n')
        out.write(f'      <data key="d4">{escape(node.description)}</data>\n')
        out.write(f'      <data key="d5">{node.degree}</data>\n')
        out.write(f'      <data key="d6">{escape(_provenance_str(node.provenance))}</data>\n')
        out.write("    </node>\n")
    for edge in _sorted_edges(graph):
        source_id = f"{edge.source[1].value}:{edge.source[0]}"
        target_id = f"{edge.target[1].value}:{edge.target[0]}"
        out.write(
            f'    <edge source="{_xml_attr(source_id)}" target="{_xml_attr(target_id)}">\n'
        )
        out.write(f'      <data key="d7">{escape(edge.description)}</data>\n')
        out.write(f'      <data key="d8">{edge.strength}</data>\n')
        out.write(f'      <data key="d9">{escape(_provenance_str([edge.provenance]))}</data>\n')
        out.write("    </edge>\n")
    out.write("  </graph>\n</graphml>\n")
    return out.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# tabular export

NODE_COLUMNS = ("name", "entity_type", "description", "degree", "provenance")
EDGE_COLUMNS = (
    "source_name",
    "source_type",
    "target_name",
    "target_type",
    "description",
    "strength",
    "provenance",
)


def export_tabular(graph: KnowledgeGraph) -> tuple[str, str]:
    """CSV node and edge tables in canonical order, with header rows."""
    nodes_out = io.StringIO()
    writer = csv.writer(nodes_out, lineterminator="\n")
    writer.writerow(NODE_COLUMNS)
    for node in _sorted_nodes(graph):
        writer.writerow(
            [node.name, node.entity_type.value, node.description, node.degree, _provenance_str(node.provenance)]
        )

    edges_out = io.StringIO()
    writer = csv.writer(edges_out, lineterminator="\n")
    writer.writerow(EDGE_COLUMNS)
    for edge in _sorted_edges(graph):
        writer.writerow(
            [
                edge.source[0],
                edge.source[1].value,
                edge.target[0],
                edge.target[1].value,
                edge.description,
                edge.strength,
                _provenance_str([edge.provenance]),
            ]
        )
    return nodes_out.getvalue(), edges_out.getvalue()


def import_tabular(nodes_csv: str, edges_csv: str, case_id: str, mode: ExtractionMode) -> KnowledgeGraph:
    """Rebuild a graph from its exported tables (lossless column set)."""
    graph = KnowledgeGraph(case_id=case_id, mode=mode)
    node_reader = csv.DictReader(io.StringIO(nodes_csv))
    for row in node_reader:
        node = Node(
            name=row["name"],
            entity_type=EntityType(row["entity_type"]),
            description=row["description"],
            degree=int(row["degree"]),
            provenance=[(case, int(chunk)) for case, chunk in json.loads(row["provenance"])],
        )
        graph.nodes[node.key] = node
    edge_reader = csv.DictReader(io.StringIO(edges_csv))
    for row in edge_reader:
        provenance = json.loads(row["provenance"])[0]
        graph.edges.append(
            Edge(
                source=(row["source_name"], EntityType(row["source_type"])),
                target=(row["target_name"], EntityType(row["target_type"])),
                description=row["description"],
                strength=int(row["strength"]),
                provenance=(provenance[0], int(provenance[1])),
            )
        )
    return graph


def export_parquet(graph: KnowledgeGraph, nodes_path: Path, edges_path: Path) -> None:
    """Columnar export mirroring the CSV rows. Requires pyarrow."""
    try:
        import pyarrow as pa
        import pyarrow.parquet as pq
    except ImportError as exc:  # pragma: no cover
        raise GraphError("parquet export requires the 'pyarrow' extra") from exc

    nodes = _sorted_nodes(graph)
    node_table = pa.table(
        {
            "name": [n.name for n in nodes],
            "entity_type": [n.entity_type.value for n in nodes],
            "description": [n.description for n in nodes],
            "degree": [n.degree for n in nodes],
            "provenance": [_provenance_str(n.provenance) for n in nodes],
        }
    )
    pq.write_table(node_table, nodes_path)
    edges = _sorted_edges(graph)
    edge_table = pa.table(
        {
            "source_name": [e.source[0] for e in edges],
            "source_type": [e.source[1].value for e in edges],
            "target_name": [e.target[0] for e in edges],
            "target_type": [e.target[1].value for e in edges],
            "description": [e.description for e in edges],
            "strength": [e.strength for e in edges],
            "provenance": [_provenance_str([e.provenance]) for e in edges],
        }
    )
    pq.write_table(edge_table, edges_path)


# ---------------------------------------------------------------------------
# degree statistics


@dataclass(frozen=True)
class DegreeSummary:
    node_count: int
    edge_count: int
    max_degree: int
    ranked: tuple[tuple[str, EntityType, int], ...]  # degree-descending


def degree_stats(graph: KnowledgeGraph) -> DegreeSummary:
    ranked = sorted(
        ((n.name, n.entity_type, n.degree) for n in graph.nodes.values()),
        key=lambda item: (-item[2], item[1].value, item[0]),
    )
    max_degree = ranked[0][2] if ranked else 0
    return DegreeSummary(
        node_count=graph.node_count,
        edge_count=graph.edge_count,
        max_degree=max_degree,
        ranked=tuple(ranked),
    )
