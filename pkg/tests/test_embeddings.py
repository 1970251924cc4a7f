import numpy as np
import pytest

from wordeq.embeddings import (EmbeddingTable, cosine_similarity, embed_descriptor, load_table,
                               lookup, nearest_words)
from wordeq.errors import DimensionError, FormatError, ParseError


def _write(path, lines, newline="\n"):
    path.write_bytes(newline.join(lines).encode("utf-8") + newline.encode())
    return path


@pytest.fixture
def glove_file(tmp_path):
    rng = np.random.default_rng(5)
    words = ["warm", "Bright", "heart", "warming", "muddy"]
    lines = [w + " " + " ".join(f"{v:.6f}" for v in rng.normal(size=300)) for w in words]
    return _write(tmp_path / "vec.txt", lines)


def test_load_three_lines(tmp_path):
    lines = [f"w{i} " + " ".join(["0.5"] * 300) for i in range(3)]
    table = load_table(_write(tmp_path / "t.txt", lines))
    assert len(table) == 3 and table.dimension == 300
    assert table.name == "t"


def test_values_match_independent_line_split(glove_file):
    table = load_table(glove_file, expected_dim=300)
    for line in glove_file.read_text().splitlines():
        token, *rest = line.split(" ")
        np.testing.assert_array_equal(lookup(table, token), np.array([float(v) for v in rest]))


def test_crlf_and_tokens_lowercased(tmp_path):
    table = load_table(_write(tmp_path / "c.txt", ["Warm 1 2", "cold 3 4"], newline="\r\n"))
    assert table.words == ["warm", "cold"]
    np.testing.assert_array_equal(lookup(table, "WARM"), [1.0, 2.0])


def test_short_line_is_format_error_with_line(tmp_path):
    lines = ["a " + " ".join(["1"] * 300), "b " + " ".join(["1"] * 299)]
    with pytest.raises(FormatError, match="line 2"):
        load_table(_write(tmp_path / "bad.txt", lines))


def test_non_numeric_component_reports_line(tmp_path):
    with pytest.raises(ParseError) as info:
        load_table(_write(tmp_path / "bad.txt", ["a 1 2", "b 1 x"]))
    assert info.value.line == 2


def test_token_without_vector_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_table(_write(tmp_path / "bad.txt", ["a 1 2", "lonely"]))


def test_expected_dim_violation(tmp_path):
    with pytest.raises(DimensionError):
        load_table(_write(tmp_path / "t.txt", ["a 1 2"]), expected_dim=300)


def test_empty_file_rejected(tmp_path):
    with pytest.raises(FormatError):
        load_table(_write(tmp_path / "e.txt", [""]))


def test_duplicate_first_wins_with_warning(tmp_path):
    table = load_table(_write(tmp_path / "d.txt", ["warm 1 1", "WARM 2 2"]))
    np.testing.assert_array_equal(lookup(table, "warm"), [1.0, 1.0])
    assert len(table.warnings) == 1 and "duplicate" in table.warnings[0]


def test_word2vec_header_skipped(tmp_path):
    table = load_table(_write(tmp_path / "w.txt", ["2 3", "a 1 2 3", "b 4 5 6"]))
    assert table.words == ["a", "b"] and table.dimension == 3


def test_deterministic_load(glove_file):
    a, b = load_table(glove_file), load_table(glove_file)
    assert a.words == b.words
    np.testing.assert_array_equal(a.matrix, b.matrix)


def test_table_is_immutable(glove_file):
    table = load_table(glove_file)
    with pytest.raises(ValueError):
        table.matrix[0, 0] = 1.0
    with pytest.raises(TypeError):
        table.index["new"] = 0
    with pytest.raises(AttributeError):
        table.dimension = 3


def test_lookup_oov_is_none(glove_file):
    table = load_table(glove_file)
    assert lookup(table, "zzzznotaword") is None
    np.testing.assert_array_equal(lookup(table, "WARM"), lookup(table, "warm"))
    assert lookup(table, "warm").shape == (300,)


def test_embed_descriptor_rules(glove_file):
    table = load_table(glove_file)
    np.testing.assert_array_equal(embed_descriptor(table, "warm"), lookup(table, "warm"))
    expected = (lookup(table, "heart") + lookup(table, "warming")) / 2
    np.testing.assert_allclose(embed_descriptor(table, "heart-warming"), expected, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(embed_descriptor(table, "heart qqq"), lookup(table, "heart"))
    assert embed_descriptor(table, "xq-zz") is None
    assert embed_descriptor(table, "xqzz") is None
    with pytest.raises(ValueError):
        embed_descriptor(table, "")


def test_whole_token_preferred_over_split():
    table = EmbeddingTable.from_dict({"a-b": [9.0, 9.0], "a": [1.0, 0.0], "b": [0.0, 1.0]})
    np.testing.assert_array_equal(embed_descriptor(table, "a-b"), [9.0, 9.0])


def test_cosine_cases():
    v = np.array([0.3, -1.2, 2.0])
    assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-9)
    assert cosine_similarity(v, -v) == pytest.approx(-1.0, abs=1e-12)
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    with pytest.raises(ValueError):
        cosine_similarity([0, 0], [1, 0])
    with pytest.raises(ValueError):
        cosine_similarity([1, 0], [1, 0, 0])


def test_cosine_self_similarity_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        v = rng.normal(size=300) * rng.uniform(1e-3, 1e3)
        assert abs(cosine_similarity(v, v) - 1.0) < 1e-9


def test_nearest_words_orders_by_cosine():
    table = EmbeddingTable.from_dict({"a": [1.0, 0.0], "b": [0.9, 0.1], "c": [0.0, 1.0], "d": [-1, 0]})
    assert [w for w, _ in nearest_words(table, "a", 2)] == ["b", "c"]
    assert nearest_words(table, "nope") == []


def test_from_dict_rejects_ragged():
    with pytest.raises(FormatError):
        EmbeddingTable.from_dict({"a": [1.0, 2.0], "b": [1.0]})
