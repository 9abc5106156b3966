import pytest
from hypothesis import given, settings, strategies as st

from corpuskit.langnorm import (
    Kind, ResolutionTables, correct_name, fold, levenshtein_at_most_one, load_default_scripts, make_label,
    normalize_code,
)

TABLES = ResolutionTables.default()


@pytest.mark.parametrize("code,resolved,kind", [
    ("eng", "eng", Kind.EXACT),
    ("ber", "ber", Kind.RETAINED_GROUP),
    ("mol", "ron", Kind.MERGED_INTO),
    ("en", "eng", Kind.MAPPED),
    ("fre", "fra", Kind.MAPPED),
    ("EN", "eng", Kind.MAPPED),
    ("Portuguese", "por", Kind.NAME_MATCHED),
    ("Portugese", "por", Kind.NAME_CORRECTED),
    ("english", "eng", Kind.NAME_CORRECTED),
])
def test_resolution(code, resolved, kind):
    res = normalize_code(code)
    assert (res.resolved, res.kind) == (resolved, kind)


def test_unresolved_is_retained_with_warning(caplog):
    res = normalize_code("Xyzzy-dialect")
    assert res.kind is Kind.UNRESOLVED and res.resolved == "Xyzzy-dialect"
    assert res.retained_original
    assert "unresolved" in caplog.text


def test_group_codes_flagged():
    assert normalize_code("ber").retained_original
    assert not normalize_code("eng").retained_original
    # the other group code called out for retention
    assert normalize_code("bih").kind is Kind.RETAINED_GROUP


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        normalize_code("  ")


def test_correct_name():
    names = {"English", "Portuguese", "French"}
    assert correct_name("english", names) == "English"
    assert correct_name("Portugese", names) == "Portuguese"
    assert correct_name("Xyzzy", names) is None
    assert correct_name("Frènch", names) == "French"


def test_correct_name_tie_returns_none():
    assert correct_name("Tash", {"Tush", "Tosh"}) is None
    # an exact fold hit beats distance-1 neighbours
    assert correct_name("Tush", {"Tush", "Tosh"}) == "Tush"


def _brute_edit(a, b):
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@given(st.text("abc", max_size=6), st.text("abc", max_size=6))
def test_levenshtein_matches_dp(a, b):
    assert levenshtein_at_most_one(a, b) == min(_brute_edit(a, b), 2)


def test_correction_oracle_over_canonical_names():
    names = sorted(TABLES.names)[:3000]
    folded = {}
    for n in names:
        folded.setdefault(fold(n), set()).add(n)
    probe = "Portugese"
    hits = {n for n in names if _brute_edit(fold(probe), fold(n)) <= 1}
    assert correct_name(probe, names) == (hits.pop() if len(hits) == 1 else None)


code_inputs = st.sampled_from(sorted(TABLES.codes["exact"])[:4000] + sorted(TABLES.codes["mapped"])[:500]
                              + sorted(TABLES.codes["merged_into"]) + sorted(TABLES.codes["retained_group"]))


@settings(max_examples=300)
@given(code_inputs)
def test_idempotence(code):
    first = normalize_code(code)
    again = normalize_code(first.resolved)
    assert again.resolved == first.resolved
    assert again.kind in (Kind.EXACT, Kind.RETAINED_GROUP)


def test_config_tables_take_precedence():
    tables = TABLES.extend([("xyz", "xyz", "retained_group"), ("mol", "mol", "exact")])
    assert normalize_code("xyz", tables).kind is Kind.RETAINED_GROUP
    assert normalize_code("mol", tables).kind is Kind.EXACT


def test_tables_file_format(tmp_path):
    p = tmp_path / "t.tsv"
    p.write_text("# comment\nfoo\tbar\tmerged_into\n\nbar\tbar\texact\n", encoding="utf-8")
    t = ResolutionTables.from_file(p)
    assert normalize_code("foo", t).resolved == "bar"
    p.write_text("only-two\tfields\n")
    with pytest.raises(ValueError):
        ResolutionTables.from_file(p)


def test_make_label(caplog):
    assert str(make_label("eng", "Latn")) == "eng_Latn"
    assert str(make_label("ber", "Latn")) == "ber_Latn"
    assert str(make_label("rus", None)) == "rus_None"
    assert "None" in caplog.text


def test_default_scripts():
    d = load_default_scripts()
    assert d["rus"] == "Cyrl" and d["eng"] == "Latn" and d["jpn"] == "Jpan"
