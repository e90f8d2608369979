"""Case corpus ingestion: opinion isolation and token-window chunking.

A corpus is a directory of UTF-8 plain-text files, one per case, with the
file stem as the case id (a manifest file may override ids). Only the
narrative section under an opinion heading is fed to the rest of the
pipeline, split into fixed-size overlapping token windows.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

DEFAULT_OPINION_HEADINGS = ("Opinion", "OPINION", "Opinion by")

# A heading candidate must fit on one short line; longer matches are assumed
# to be narrative text that merely starts with the same word.
_MAX_HEADING_LINE = 120
_MAX_TERMINATOR_LINE = 60


class CorpusError(Exception):
    pass


class EmptyDocument(CorpusError):
    pass


class MissingOpinionSection(CorpusError):
    pass


class UnknownTokenizer(CorpusError):
    pass


class DuplicateCaseId(CorpusError):
    pass


class ManifestError(CorpusError):
    pass


@dataclass
class CaseDocument:
    case_id: str
    raw_text: str
    opinion_text: str | None = None


@dataclass(frozen=True)
class Chunk:
    chunk_id: int
    text: str
    token_span: tuple[int, int]


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_size: int = 300
    overlap: int = 100
    tokenizer_id: str = "whitespace"

    def __post_init__(self) -> None:
        if self.chunk_size <= 0:
            raise ValueError(f"chunk_size must be positive, got {self.chunk_size}")
        if not 0 <= self.overlap < self.chunk_size:
            raise ValueError(
                f"overlap must satisfy 0 <= overlap < chunk_size, got {self.overlap}"
            )

    @property
    def stride(self) -> int:
        return self.chunk_size - self.overlap


def _whitespace_tokens(text: str) -> list[str]:
    # Maximal runs of non-whitespace.
    return text.split()


_TOKENIZERS: dict[str, Callable[[str], list[str]]] = {
    "whitespace": _whitespace_tokens,
}


def register_tokenizer(name: str, fn: Callable[[str], list[str]]) -> None:
    _TOKENIZERS[name] = fn


def tokenize(text: str, tokenizer_id: str = "whitespace") -> list[str]:
    try:
        fn = _TOKENIZERS[tokenizer_id]
    except KeyError:
        raise UnknownTokenizer(tokenizer_id) from None
    return fn(text)


def count_tokens(text: str, tokenizer_id: str = "whitespace") -> int:
    return len(tokenize(text, tokenizer_id))


def _line_offsets(text: str) -> list[tuple[int, int, str]]:
    offsets = []
    pos = 0
    for line in text.split("\n"):
        offsets.append((pos, pos + len(line), line))
        pos += len(line) + 1
    return offsets


def _is_terminator_line(line: str) -> bool:
    """A top-level heading after the opinion: short, all-caps, has letters."""
    stripped = line.strip()
    if not stripped or len(stripped) > _MAX_TERMINATOR_LINE:
        return False
    if not any(ch.isalpha() for ch in stripped):
        return False
    return stripped == stripped.upper()


def extract_opinion(
    doc: CaseDocument,
    heading_patterns: Iterable[str] = DEFAULT_OPINION_HEADINGS,
) -> str:
    """Return the text between the first opinion heading and the next
    top-level heading (or end of document), and store it on the document.

    The result is always a contiguous slice of ``doc.raw_text``.
    """
    if not doc.raw_text.strip():
        raise EmptyDocument(doc.case_id)

    regexes = [
        re.compile(rf"^\s*{re.escape(p)}(?!\w)", re.IGNORECASE) for p in heading_patterns
    ]
    lines = _line_offsets(doc.raw_text)

    heading_idx = None
    for idx, (_, _, line) in enumerate(lines):
        if len(line) > _MAX_HEADING_LINE:
            continue
        if any(rx.search(line) for rx in regexes):
            heading_idx = idx
            break
    if heading_idx is None:
        raise MissingOpinionSection(doc.case_id)

    body_start = min(lines[heading_idx][1] + 1, len(doc.raw_text))
    body_end = len(doc.raw_text)
    for start, _, line in lines[heading_idx + 1 :]:
        if _is_terminator_line(line):
            body_end = start
            break

    raw = doc.raw_text
    s, e = body_start, max(body_start, body_end)
    while s < e and raw[s].isspace():
        s += 1
    while e > s and raw[e - 1].isspace():
        e -= 1
    if s >= e:
        raise MissingOpinionSection(f"{doc.case_id}: opinion heading with empty body")

    opinion = raw[s:e]
    doc.opinion_text = opinion
    return opinion


def chunk_text(text: str, config: ChunkingConfig) -> list[Chunk]:
    """Split text into overlapping token windows.

    Chunk ``i`` spans tokens ``[i*stride, min(i*stride + chunk_size, total))``.
    The number of chunks is ``max(1, ceil((total - overlap) / stride))``, which
    guarantees full coverage and that no chunk is contained in its predecessor.
    """
    tokens = tokenize(text, config.tokenizer_id)
    total = len(tokens)
    if total == 0:
        raise EmptyDocument("no tokens to chunk")

    n = max(1, math.ceil((total - config.overlap) / config.stride))
    chunks = []
    for i in range(n):
        start = i * config.stride
        end = min(start + config.chunk_size, total)
        chunks.append(Chunk(chunk_id=i, text=" ".join(tokens[start:end]), token_span=(start, end)))
    return chunks


def load_manifest(path: Path) -> dict[str, str]:
    """Parse a ``filename = case_id`` manifest; '#' starts a comment line."""
    mapping: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ManifestError(f"{path}:{lineno}: expected 'filename = case_id'")
        filename, _, case_id = line.partition("=")
        filename, case_id = filename.strip(), case_id.strip()
        if not filename or not case_id:
            raise ManifestError(f"{path}:{lineno}: empty filename or case id")
        mapping[filename] = case_id
    return mapping


def load_corpus(corpus_dir: Path, manifest_path: Path | None = None) -> list[CaseDocument]:
    """Read all ``*.txt`` case files, sorted by case id."""
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise CorpusError(f"corpus directory not found: {corpus_dir}")
    overrides = load_manifest(manifest_path) if manifest_path else {}

    docs = []
    seen: set[str] = set()
    for path in sorted(corpus_dir.glob("*.txt")):
        if manifest_path and path.resolve() == Path(manifest_path).resolve():
            continue
        case_id = overrides.get(path.name, path.stem)
        if case_id in seen:
            raise DuplicateCaseId(case_id)
        seen.add(case_id)
        docs.append(CaseDocument(case_id=case_id, raw_text=path.read_text(encoding="utf-8")))
    docs.sort(key=lambda d: d.case_id)
    return docs
