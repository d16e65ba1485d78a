import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from query_agent.core.config import DEMO_CORPUS_DIR
from query_agent.core.errors import CorpusError, StructuredParseError
from query_agent.models.corpus_models import ChunkingPolicy, SourceDocument
from query_agent.services.ingest_service import (
    chunk_document,
    document_id,
    load_corpus,
    load_corpus_tables,
    manifest_records,
    parse_structured,
    table_name_for,
)


def _doc(content, fmt="text", path="doc.txt"):
    return SourceDocument(doc_id=document_id(path), path=path, format=fmt, content=content)


def test_demo_corpus_manifest_classifies_six_documents():
    manifest = load_corpus(DEMO_CORPUS_DIR)

    assert [document.path for document in manifest.documents] == [
        "product_a_notes.txt",
        "product_b_notes.txt",
        "products.csv",
        "q2_report.txt",
        "q3_report.txt",
        "sales.json",
    ]
    assert manifest.counts == {"text": 4, "csv": 1, "json": 1}
    assert manifest.skipped == ()
    assert manifest.errors == ()


def test_load_corpus_skips_unknown_extensions_and_records_bad_utf8(tmp_path):
    (tmp_path / "notes.txt").write_text("hello", encoding="utf-8")
    (tmp_path / "feed.xml").write_text("<a/>", encoding="utf-8")
    (tmp_path / "README").write_text("plain", encoding="utf-8")
    (tmp_path / "broken.txt").write_bytes(b"ok \xff\xfe")

    manifest = load_corpus(tmp_path)

    assert [document.path for document in manifest.documents] == ["notes.txt"]
    assert {(item.path, item.reason) for item in manifest.skipped} == {
        ("feed.xml", "unrecognized extension .xml"),
        ("README", "no file extension"),
    }
    assert [error.path for error in manifest.errors] == ["broken.txt"]
    assert "UTF-8" in manifest.errors[0].message


def test_load_corpus_missing_root_names_the_path(tmp_path):
    missing = tmp_path / "nowhere"

    with pytest.raises(CorpusError) as exc_info:
        load_corpus(missing)

    assert str(missing) in str(exc_info.value)


def test_document_ids_are_stable_hashes_of_relative_paths():
    assert document_id("a/b.txt") == document_id("a/b.txt")
    assert document_id("a/b.txt") != document_id("a/c.txt")
    assert len(document_id("a/b.txt")) == 16


def test_manifest_records_start_with_summary():
    records = manifest_records(load_corpus(DEMO_CORPUS_DIR))

    assert records[0]["record"] == "summary"
    assert records[0]["documents"] == 6
    assert all("content" not in record for record in records)


def test_chunking_windows_overlap_and_cover_the_text():
    doc = _doc("abcdefghij" * 3)

    chunks = chunk_document(doc, ChunkingPolicy(max_chars=12, overlap_chars=4))

    assert [chunk.span for chunk in chunks] == [(0, 12), (8, 20), (16, 28), (24, 30)]
    assert all(chunk.text == doc.content[chunk.start : chunk.end] for chunk in chunks)
    assert [chunk.chunk_id for chunk in chunks] == [f"{doc.doc_id}#{i}" for i in range(4)]


def test_chunking_short_and_empty_documents():
    assert [chunk.text for chunk in chunk_document(_doc("tiny"))] == ["tiny"]
    assert chunk_document(_doc("")) == []


def test_chunk_document_rejects_structured_documents():
    with pytest.raises(ValueError):
        chunk_document(_doc("a,b\n1,2\n", fmt="csv", path="t.csv"))


def test_chunking_policy_rejects_overlap_at_or_above_window():
    with pytest.raises(ValueError):
        ChunkingPolicy(max_chars=10, overlap_chars=10)


def test_default_policy_windows_on_a_long_document():
    chunks = chunk_document(_doc("x" * 2500), ChunkingPolicy(max_chars=1000, overlap_chars=200))

    assert [chunk.span for chunk in chunks] == [(0, 1000), (800, 1800), (1600, 2500)]


@settings(max_examples=200, deadline=None)
@given(
    text=st.text(max_size=300),
    overlap=st.integers(min_value=0, max_value=20),
    extra=st.integers(min_value=1, max_value=20),
)
def test_chunks_reassemble_to_the_source_text(text, overlap, extra):
    max_chars = overlap + extra
    policy = ChunkingPolicy(max_chars=max_chars, overlap_chars=overlap)

    chunks = chunk_document(_doc(text), policy)

    rebuilt = "".join(chunk.text if i == 0 else chunk.text[overlap:] for i, chunk in enumerate(chunks))
    assert rebuilt == text
    assert all(len(chunk.text) <= max_chars for chunk in chunks)


def test_csv_types_and_percent_units_are_inferred():
    doc = _doc("name,share,active,note\nA,20%,true,\nB,-4.5%,false,x\n", fmt="csv", path="Market Share.csv")

    table = parse_structured(doc)

    assert table.name == "market_share"
    assert [(c.name, c.type, c.unit) for c in table.schema.columns] == [
        ("name", "text", None),
        ("share", "number", "percent"),
        ("active", "boolean", None),
        ("note", "text", None),
    ]
    assert table.rows == (("A", 20.0, True, None), ("B", -4.5, False, "x"))


def test_csv_ragged_rows_are_reported_by_row_number():
    doc = _doc("a,b\n1,2\n3\n4,5,6\n", fmt="csv", path="r.csv")

    with pytest.raises(StructuredParseError) as exc_info:
        parse_structured(doc)

    assert exc_info.value.rows == (2, 3)


def test_csv_without_header_is_an_error():
    with pytest.raises(StructuredParseError):
        parse_structured(_doc("", fmt="csv", path="empty.csv"))


def test_csv_row_numbers_count_blank_lines():
    doc = _doc("a,b\n\n1,2\n3\n", fmt="csv", path="gaps.csv")

    with pytest.raises(StructuredParseError) as exc_info:
        parse_structured(doc)

    assert exc_info.value.rows == (3,)


def test_json_records_flatten_one_level_and_union_keys():
    doc = _doc(
        '[{"id": 1, "meta": {"region": "EU"}}, {"id": 2, "score": 3.5}]',
        fmt="json",
        path="records.json",
    )

    table = parse_structured(doc)

    assert table.schema.column_names == ("id", "meta.region", "score")
    assert table.rows == ((1.0, "EU", None), (2.0, None, 3.5))


def test_json_integers_beyond_float_range_become_text():
    huge = "1" + "0" * 400
    doc = _doc(f'[{{"a": {huge}, "b": 2}}]', fmt="json", path="big.json")

    table = parse_structured(doc)

    assert table.schema.column("a").type == "text"
    assert table.schema.column("b").type == "number"
    assert table.rows == ((huge, 2.0),)


def test_json_integers_past_the_digit_limit_are_a_parse_error():
    doc = _doc('[{"a": ' + "9" * 5000 + '}]', fmt="json", path="digits.json")

    with pytest.raises(StructuredParseError):
        parse_structured(doc)


def test_json_syntax_error_reports_line():
    doc = _doc('[\n{"id": 1,\n]', fmt="json", path="bad.json")

    with pytest.raises(StructuredParseError) as exc_info:
        parse_structured(doc)

    assert exc_info.value.line == 3


def test_json_scalar_top_level_is_rejected():
    with pytest.raises(StructuredParseError):
        parse_structured(_doc("42", fmt="json", path="scalar.json"))


def test_json_non_object_elements_are_reported_by_index():
    with pytest.raises(StructuredParseError) as exc_info:
        parse_structured(_doc('[{"a": 1}, 2, "x"]', fmt="json", path="mixed.json"))

    assert exc_info.value.rows == (1, 2)


def test_demo_tables_load_with_expected_schemas():
    tables = load_corpus_tables(load_corpus(DEMO_CORPUS_DIR))

    assert tables.errors == ()
    assert sorted(tables.tables) == ["products", "sales"]
    sales = tables.tables["sales"].schema
    assert sales.column("increase").unit == "percent"
    assert sales.column("sales").type == "number"
    assert len(tables.tables["sales"].rows) == 9


def test_table_name_for_normalizes_file_stems():
    assert table_name_for("data/Sales 2024.csv") == "sales_2024"
    assert table_name_for("2024.json") == "t_2024"
