"""Graph quality metrics: duplicate clustering, noise rate, run comparison.

The similarity score is pinned to a window definition so that results are
reproducible across platforms: slide the shorter string over every
equal-length window of the longer one and keep the best normalized
insert/delete similarity, scaled to 0-100. Ties at .5 round up.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .coref import EntityType
from .normalize import normalize_name

if TYPE_CHECKING:  # pragma: no cover
    from .graph_builder import KnowledgeGraph

DEFAULT_THRESHOLD = 75


class EvaluationError(Exception):
    pass


class EmptyString(EvaluationError):
    pass


class ZeroNodes(EvaluationError):
    pass


class UnknownMember(EvaluationError):
    pass


class CaseMismatch(EvaluationError):
    pass


# ---------------------------------------------------------------------------
# partial-ratio scoring


def _char_masks(s: str) -> dict[str, int]:
    masks: dict[str, int] = {}
    bit = 1
    for ch in s:
        masks[ch] = masks.get(ch, 0) | bit
        bit <<= 1
    return masks


def _lcs_bits(masks: dict[str, int], window: str) -> int:
    # Bit-parallel LCS length (Allison-Dix): one word op per window char.
    row = 0
    for ch in window:
        x = row | masks.get(ch, 0)
        row = x & ~(x - ((row << 1) | 1))
    return row.bit_count()


def partial_ratio(a: str, b: str) -> int:
    """Best windowed indel similarity between two names, as an integer 0-100.

    With s the shorter and l the longer normalized string, the score is
    ``max over windows w of round(100 * (1 - indel(s, w) / (|s| + |w|)))``
    taken over every window of l with ``|w| == |s|``, where
    ``indel(x, y) = |x| + |y| - 2 * LCS(x, y)``. Computed in exact integer
    arithmetic; equals 100 iff s occurs as a contiguous substring of l.
    """
    na, nb = normalize_name(a), normalize_name(b)
    if not na or not nb:
        raise EmptyString(f"cannot score empty string: {a!r} vs {b!r}")
    s, longer = (na, nb) if len(na) <= len(nb) else (nb, na)
    if s in longer:
        return 100
    m = len(s)
    masks = _char_masks(s)
    best = 0
    for offset in range(len(longer) - m + 1):
        lcs = _lcs_bits(masks, longer[offset : offset + m])
        if lcs > best:
            best = lcs
    # score = round-half-up of 100 * (2*lcs) / (2*m), in integers
    return (200 * best + m) // (2 * m)


# ---------------------------------------------------------------------------
# duplicate clustering


@dataclass(frozen=True)
class DuplicateCluster:
    entity_type: EntityType
    members: tuple[str, ...]  # sorted, non-empty

    @property
    def size(self) -> int:
        return len(self.members)


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[rj] = ri


def cluster_names(
    names_by_type: Mapping[EntityType, Sequence[str]],
    threshold: int = DEFAULT_THRESHOLD,
) -> list[DuplicateCluster]:
    """Connected components of the intra-type similarity graph.

    Nodes of different entity types are never linked; singletons are kept.
    """
    clusters: list[DuplicateCluster] = []
    for etype in EntityType:
        names = sorted(set(names_by_type.get(etype, ())))
        if not names:
            continue
        uf = _UnionFind(len(names))
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                if partial_ratio(names[i], names[j]) >= threshold:
                    uf.union(i, j)
        groups: dict[int, list[str]] = {}
        for i, name in enumerate(names):
            groups.setdefault(uf.find(i), []).append(name)
        for members in groups.values():
            clusters.append(DuplicateCluster(etype, tuple(sorted(members))))
    clusters.sort(key=lambda c: (c.entity_type.value, c.members[0]))
    return clusters


def cluster_duplicates(graph: "KnowledgeGraph", threshold: int = DEFAULT_THRESHOLD) -> list[DuplicateCluster]:
    names_by_type: dict[EntityType, list[str]] = {}
    for name, etype in graph.nodes:
        names_by_type.setdefault(etype, []).append(name)
    return cluster_names(names_by_type, threshold)


# ---------------------------------------------------------------------------
# expert overrides


@dataclass(frozen=True)
class SplitDirective:
    case_id: str
    entity_type: EntityType
    member: str
    new_label: str


@dataclass
class OverrideFile:
    directives: list[SplitDirective] = field(default_factory=list)

    @classmethod
    def load(cls, path: Path) -> "OverrideFile":
        """Tab-separated lines: case_id, entity type, member name, new label."""
        directives = []
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split("\t")]
            if len(parts) != 4:
                raise EvaluationError(f"{path}:{lineno}: expected 4 tab-separated fields")
            case_id, type_name, member, label = parts
            try:
                etype = EntityType(type_name.upper())
            except ValueError:
                raise EvaluationError(f"{path}:{lineno}: unknown entity type {type_name!r}") from None
            directives.append(SplitDirective(case_id, etype, normalize_name(member), label))
        return cls(directives)


def apply_overrides(
    clusters: Sequence[DuplicateCluster],
    overrides: OverrideFile,
    case_id: str,
    strict: bool = True,
) -> list[DuplicateCluster]:
    """Move members out of their components into labelled clusters.

    Directives sharing a (type, label) pair land in the same destination
    cluster, so an expert can split a false positive out as a group. The
    partition property is preserved.
    """
    working: list[tuple[EntityType, set[str]]] = [
        (c.entity_type, set(c.members)) for c in clusters
    ]
    labelled: dict[tuple[EntityType, str], set[str]] = {}

    for directive in overrides.directives:
        if directive.case_id != case_id:
            continue
        source = None
        for etype, members in working:
            if etype is directive.entity_type and directive.member in members:
                source = members
                break
        if source is None:
            dest = labelled.get((directive.entity_type, directive.new_label))
            if dest is not None and directive.member in dest:
                continue  # already moved there
            if strict:
                raise UnknownMember(f"{directive.member} ({directive.entity_type.value})")
            continue
        source.discard(directive.member)
        key = (directive.entity_type, directive.new_label)
        if key not in labelled:
            labelled[key] = set()
            working.append((directive.entity_type, labelled[key]))
        labelled[key].add(directive.member)

    result = [
        DuplicateCluster(etype, tuple(sorted(members)))
        for etype, members in working
        if members
    ]
    result.sort(key=lambda c: (c.entity_type.value, c.members[0]))
    return result


# ---------------------------------------------------------------------------
# metric formulas


def duplication_metrics(clusters: Sequence[DuplicateCluster], total_nodes: int) -> tuple[int, float]:
    """duplicate count = sum over clusters of (size - 1); rate as a percent."""
    if total_nodes == 0:
        raise ZeroNodes("cannot compute a duplication rate over zero nodes")
    membership = sum(c.size for c in clusters)
    if membership > total_nodes:
        raise EvaluationError(
            f"cluster membership {membership} exceeds node count {total_nodes}"
        )
    duplicate_count = membership - len(clusters)
    return duplicate_count, 100.0 * duplicate_count / total_nodes


@dataclass(frozen=True)
class NoiseAnnotation:
    """Node names judged non-informative, either per case or as a uniform lexicon."""

    names: frozenset[str]
    strict: bool = False

    @classmethod
    def from_terms(cls, terms: Iterable[str], strict: bool = False) -> "NoiseAnnotation":
        return cls(frozenset(normalize_name(t) for t in terms if normalize_name(t)), strict)


def noise_metrics(graph: "KnowledgeGraph", annotation: NoiseAnnotation) -> tuple[int, float]:
    if not graph.nodes:
        raise ZeroNodes(f"graph for {graph.case_id} has no nodes")
    node_names = [name for name, _ in graph.nodes]
    if annotation.strict:
        missing = annotation.names - set(node_names)
        if missing:
            raise UnknownMember(", ".join(sorted(missing)))
    count = sum(1 for name in node_names if name in annotation.names)
    return count, 100.0 * count / len(node_names)


def load_noise_annotations(path: Path) -> dict[str, set[str]]:
    """Tab-separated lines: case_id, node name. Returns names per case."""
    per_case: dict[str, set[str]] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("\t")]
        if len(parts) != 2:
            raise EvaluationError(f"{path}:{lineno}: expected 2 tab-separated fields")
        per_case.setdefault(parts[0], set()).add(normalize_name(parts[1]))
    return per_case


def comparison_metrics(baseline_pct: float, corekg_pct: float) -> tuple[float, float]:
    """Absolute drop and relative improvement of a rate, rounded for reporting."""
    if baseline_pct == 0:
        raise ZeroDivisionError("relative improvement undefined for a zero baseline rate")
    absolute = baseline_pct - corekg_pct
    relative = 100.0 * absolute / baseline_pct
    return round(absolute, 2), round(relative, 2)


# ---------------------------------------------------------------------------
# per-case and aggregate reporting


@dataclass(frozen=True)
class CaseMetrics:
    case_id: str
    total_nodes: int
    duplicate_count: int
    duplication_rate_pct: float
    noise_count: int
    noise_rate_pct: float


@dataclass(frozen=True)
class AggregateMetrics:
    cases: int
    total_nodes: int
    duplicate_count: int
    duplication_rate_pct: float
    noise_count: int
    noise_rate_pct: float


@dataclass(frozen=True)
class ComparisonRow:
    metric: str
    baseline_pct: float
    corekg_pct: float
    absolute_drop: float
    relative_improvement_pct: float | None  # None when the baseline rate is zero


@dataclass
class MetricsReport:
    averaging: str
    baseline: AggregateMetrics
    corekg: AggregateMetrics
    comparisons: list[ComparisonRow]
    per_case: list[tuple[CaseMetrics, CaseMetrics]]  # (baseline, corekg) pairs

    def to_dict(self) -> dict:
        def agg(a: AggregateMetrics) -> dict:
            return {
                "cases": a.cases,
                "total_nodes": a.total_nodes,
                "duplicate_count": a.duplicate_count,
                "duplication_rate_pct": round(a.duplication_rate_pct, 2),
                "noise_count": a.noise_count,
                "noise_rate_pct": round(a.noise_rate_pct, 2),
            }

        return {
            "averaging": self.averaging,
            "baseline": agg(self.baseline),
            "corekg": agg(self.corekg),
            "comparisons": [
                {
                    "metric": row.metric,
                    "baseline_pct": round(row.baseline_pct, 2),
                    "corekg_pct": round(row.corekg_pct, 2),
                    "absolute_drop": row.absolute_drop,
                    "relative_improvement_pct": row.relative_improvement_pct,
                }
                for row in self.comparisons
            ],
            "per_case": [
                {
                    "case_id": b.case_id,
                    "baseline_duplication_rate_pct": round(b.duplication_rate_pct, 2),
                    "corekg_duplication_rate_pct": round(c.duplication_rate_pct, 2),
                    "baseline_noise_rate_pct": round(b.noise_rate_pct, 2),
                    "corekg_noise_rate_pct": round(c.noise_rate_pct, 2),
                }
                for b, c in self.per_case
            ],
        }


def _aggregate(cases: Sequence[CaseMetrics], micro: bool) -> AggregateMetrics:
    if not cases:
        raise EvaluationError("no cases to aggregate")
    total_nodes = sum(c.total_nodes for c in cases)
    dup_count = sum(c.duplicate_count for c in cases)
    noise_count = sum(c.noise_count for c in cases)
    if micro:
        if total_nodes == 0:
            raise ZeroNodes("micro-average over zero nodes")
        dup_rate = 100.0 * dup_count / total_nodes
        noise_rate = 100.0 * noise_count / total_nodes
    else:
        dup_rate = sum(c.duplication_rate_pct for c in cases) / len(cases)
        noise_rate = sum(c.noise_rate_pct for c in cases) / len(cases)
    return AggregateMetrics(len(cases), total_nodes, dup_count, dup_rate, noise_count, noise_rate)


def aggregate_report(
    baseline_cases: Sequence[CaseMetrics],
    corekg_cases: Sequence[CaseMetrics],
    micro: bool = False,
) -> MetricsReport:
    """Pair two runs over the same case ids and compare their aggregates.

    The default aggregate is the unweighted mean of per-case rates
    (macro-average); pass ``micro=True`` for pooled counts.
    """
    base_ids = {c.case_id for c in baseline_cases}
    core_ids = {c.case_id for c in corekg_cases}
    if base_ids != core_ids:
        only_base = sorted(base_ids - core_ids)
        only_core = sorted(core_ids - base_ids)
        raise CaseMismatch(f"baseline-only={only_base} corekg-only={only_core}")

    baseline = _aggregate(baseline_cases, micro)
    corekg = _aggregate(corekg_cases, micro)
    comparisons = []
    for metric, b_pct, c_pct in (
        ("duplication_rate", baseline.duplication_rate_pct, corekg.duplication_rate_pct),
        ("noise_rate", baseline.noise_rate_pct, corekg.noise_rate_pct),
    ):
        if b_pct == 0:
            comparisons.append(ComparisonRow(metric, b_pct, c_pct, round(b_pct - c_pct, 2), None))
        else:
            absolute, relative = comparison_metrics(b_pct, c_pct)
            comparisons.append(ComparisonRow(metric, b_pct, c_pct, absolute, relative))

    by_id_base = {c.case_id: c for c in baseline_cases}
    by_id_core = {c.case_id: c for c in corekg_cases}
    per_case = [(by_id_base[cid], by_id_core[cid]) for cid in sorted(base_ids)]
    return MetricsReport("micro" if micro else "macro", baseline, corekg, comparisons, per_case)
