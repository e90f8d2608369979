from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexkg.corpus import (
    CaseDocument,
    ChunkingConfig,
    DuplicateCaseId,
    EmptyDocument,
    ManifestError,
    MissingOpinionSection,
    UnknownTokenizer,
    chunk_text,
    count_tokens,
    extract_opinion,
    load_corpus,
    load_manifest,
    register_tokenizer,
)


def make_doc(text: str, case_id: str = "case-1") -> CaseDocument:
    return CaseDocument(case_id=case_id, raw_text=text)


class TestExtractOpinion:
    def test_heading_to_next_heading(self):
        doc = make_doc("Opinion\nThe facts of the case.\nEND OF DOCUMENT")
        assert extract_opinion(doc) == "The facts of the case."
        assert doc.opinion_text == "The facts of the case."

    def test_uppercase_heading_matches(self):
        doc = make_doc("preamble\nOPINION\nBody text here.\nEND OF DOCUMENT")
        assert extract_opinion(doc) == "Body text here."

    def test_no_heading_raises(self):
        with pytest.raises(MissingOpinionSection):
            extract_opinion(make_doc("Just some text with no section marker."))

    def test_empty_document(self):
        with pytest.raises(EmptyDocument):
            extract_opinion(make_doc(""))
        with pytest.raises(EmptyDocument):
            extract_opinion(make_doc("   \n  "))

    def test_opinion_by_prefix(self):
        doc = make_doc("Docket 12\nOpinion by the panel\nthe narrative starts here\nJUDGMENT")
        assert extract_opinion(doc) == "the narrative starts here"

    def test_word_boundary_not_matched(self):
        # "Opinions" must not match the "Opinion" pattern.
        with pytest.raises(MissingOpinionSection):
            extract_opinion(make_doc("Opinions differ widely.\nmore text"))

    def test_runs_to_end_without_terminator(self):
        doc = make_doc("Opinion\nfirst line\nsecond line")
        assert extract_opinion(doc) == "first line\nsecond line"

    def test_opinion_is_contiguous_substring(self):
        doc = make_doc("x\nOpinion\n  padded body  \nEND OF DOCUMENT\ntail")
        body = extract_opinion(doc)
        assert body in doc.raw_text
        assert body == "padded body"

    def test_idempotent_on_wrapped_body(self):
        doc = make_doc("Header stuff\nOpinion\nthe driver crossed the river at dawn.\nEND OF DOCUMENT")
        body = extract_opinion(doc)
        rewrapped = make_doc(f"Opinion\n{body}\nEND OF DOCUMENT", case_id="rewrap")
        assert extract_opinion(rewrapped) == body


class TestCountTokens:
    def test_whitespace_runs(self):
        assert count_tokens("a b  c") == 3

    def test_empty(self):
        assert count_tokens("") == 0

    def test_generated_text_count(self):
        # The generator is the oracle: 650 whitespace-separated words.
        text = " ".join(f"w{i}" for i in range(650))
        assert count_tokens(text) == 650

    def test_unknown_tokenizer(self):
        with pytest.raises(UnknownTokenizer):
            count_tokens("abc", tokenizer_id="no-such-scheme")

    def test_registered_tokenizer(self):
        register_tokenizer("chars", list)
        assert count_tokens("abc", tokenizer_id="chars") == 3


class TestChunkText:
    def test_sliding_window_arithmetic(self):
        text = " ".join(f"t{i}" for i in range(650))
        chunks = chunk_text(text, ChunkingConfig(300, 100))
        assert [c.token_span for c in chunks] == [(0, 300), (200, 500), (400, 650)]
        assert [c.chunk_id for c in chunks] == [0, 1, 2]

    def test_short_input_single_chunk(self):
        text = " ".join(f"t{i}" for i in range(250))
        chunks = chunk_text(text, ChunkingConfig(300, 100))
        assert [c.token_span for c in chunks] == [(0, 250)]

    def test_exact_window_no_contained_chunk(self):
        text = " ".join(f"t{i}" for i in range(300))
        chunks = chunk_text(text, ChunkingConfig(300, 100))
        assert [c.token_span for c in chunks] == [(0, 300)]

    def test_empty_raises(self):
        with pytest.raises(EmptyDocument):
            chunk_text("   ", ChunkingConfig(300, 100))

    def test_invalid_configs(self):
        with pytest.raises(ValueError):
            ChunkingConfig(chunk_size=0)
        with pytest.raises(ValueError):
            ChunkingConfig(chunk_size=100, overlap=100)
        with pytest.raises(ValueError):
            ChunkingConfig(chunk_size=100, overlap=-1)


@st.composite
def chunk_cases(draw):
    chunk_size = draw(st.integers(min_value=1, max_value=40))
    overlap = draw(st.integers(min_value=0, max_value=chunk_size - 1))
    total = draw(st.integers(min_value=1, max_value=400))
    return chunk_size, overlap, total


@given(chunk_cases())
@settings(max_examples=200)
def test_chunk_properties(case):
    chunk_size, overlap, total = case
    tokens = [f"w{i}" for i in range(total)]
    config = ChunkingConfig(chunk_size, overlap)
    chunks = chunk_text(" ".join(tokens), config)

    # Count formula and full coverage.
    assert len(chunks) == max(1, math.ceil((total - overlap) / config.stride))
    covered = set()
    for c in chunks:
        start, end = c.token_span
        assert end - start <= chunk_size
        covered.update(range(start, end))
    assert covered == set(range(total))

    # Consecutive overlap is exact except for a shorter final chunk.
    for prev, cur in zip(chunks, chunks[1:]):
        assert prev.token_span[1] - cur.token_span[0] == overlap or cur is chunks[-1]
        assert not (
            cur.token_span[0] >= prev.token_span[0] and cur.token_span[1] <= prev.token_span[1]
        ), "no chunk may be contained in its predecessor"

    # Reconstructibility: concatenating tokens at fresh offsets rebuilds the input.
    rebuilt: list[str] = []
    for c in chunks:
        start, end = c.token_span
        chunk_tokens = c.text.split()
        assert chunk_tokens == tokens[start:end]
        rebuilt.extend(chunk_tokens[len(rebuilt) - start :])
    assert rebuilt == tokens


@given(st.lists(st.text(alphabet="abcdefg hij\n\t", min_size=0, max_size=20), max_size=30))
def test_count_tokens_matches_split(fragments):
    text = " ".join(fragments)
    assert count_tokens(text) == len(text.split())


class TestCorpusLoading:
    def test_load_corpus_sorted_by_case_id(self, tmp_path):
        (tmp_path / "b_case.txt").write_text("beta text", encoding="utf-8")
        (tmp_path / "a_case.txt").write_text("alpha text", encoding="utf-8")
        docs = load_corpus(tmp_path)
        assert [d.case_id for d in docs] == ["a_case", "b_case"]
        assert docs[0].raw_text == "alpha text"

    def test_manifest_overrides_ids(self, tmp_path):
        (tmp_path / "f1.txt").write_text("one", encoding="utf-8")
        (tmp_path / "f2.txt").write_text("two", encoding="utf-8")
        manifest = tmp_path / "manifest.txt"
        manifest.write_text("# mapping\nf1.txt = case-010\n", encoding="utf-8")
        docs = load_corpus(tmp_path, manifest)
        assert {d.case_id for d in docs} == {"case-010", "f2"}

    def test_duplicate_case_ids_rejected(self, tmp_path):
        (tmp_path / "f1.txt").write_text("one", encoding="utf-8")
        (tmp_path / "f2.txt").write_text("two", encoding="utf-8")
        manifest = tmp_path / "manifest.txt"
        manifest.write_text("f1.txt = same\nf2.txt = same\n", encoding="utf-8")
        with pytest.raises(DuplicateCaseId):
            load_corpus(tmp_path, manifest)

    def test_bad_manifest_line(self, tmp_path):
        manifest = tmp_path / "manifest.txt"
        manifest.write_text("not a key value pair\n", encoding="utf-8")
        with pytest.raises(ManifestError) as err:
            load_manifest(manifest)
        assert ":1:" in str(err.value)
