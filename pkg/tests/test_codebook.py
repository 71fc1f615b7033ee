"""Codebook loading, hierarchy queries, and forest invariants."""
from __future__ import annotations

import pytest

from relscale.codebook import CodeSystem, load_codebook, write_codebook_tsv
from relscale.errors import FormatError, UnknownCodeError

DX = CodeSystem.ICD9_DIAGNOSIS
PX = CodeSystem.ICD9_PROCEDURE
ATC = CodeSystem.ATC


def write_rows(tmp_path, rows, name="cb.tsv"):
    path = tmp_path / name
    write_codebook_tsv(rows, path)
    return path


class TestLoading:
    def test_spironolactone_row(self, cardio_cb):
        node = cardio_cb.node(ATC, "C03DA01")
        assert node.parent == "C03DA"
        assert node.level == 4
        assert node.description == "Spironolactone"

    def test_root_row_level_zero(self, cardio_cb):
        node = cardio_cb.node(DX, "390-459")
        assert node.parent is None
        assert node.level == 0

    def test_row_count_equals_node_count(self, cardio_cb, fixtures_dir):
        lines = (fixtures_dir / "codebook_cardio.tsv").read_text().splitlines()
        data_rows = [l for l in lines if l and not l.startswith("#")]
        assert len(cardio_cb) == len(data_rows)

    def test_dangling_parent_names_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("atc\tA01\tX99\tSomething\n")
        with pytest.raises(FormatError) as err:
            load_codebook(path)
        assert "1" in str(err.value)

    def test_wrong_column_count(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("atc\tA01\tSomething\n")
        with pytest.raises(FormatError):
            load_codebook(path)

    def test_duplicate_code(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("atc\tA\t\tFirst\natc\tA\t\tSecond\n")
        with pytest.raises(FormatError):
            load_codebook(path)

    def test_cycle_detected(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("atc\tA\tB\tNode a\natc\tB\tA\tNode b\n")
        with pytest.raises(FormatError):
            load_codebook(path)

    def test_comment_lines_skipped(self, tmp_path):
        path = tmp_path / "ok.tsv"
        path.write_text("# header comment\natc\tA\t\tRoot\n")
        assert len(load_codebook(path)) == 1

    def test_same_code_in_two_systems_allowed(self, tmp_path):
        rows = [("icd9-diagnosis", "35", "", "Diagnosis"),
                ("icd9-procedure", "35", "", "Procedure")]
        cb = load_codebook(write_rows(tmp_path, rows))
        assert cb.node(DX, "35").description == "Diagnosis"
        assert cb.node(PX, "35").description == "Procedure"


class TestAncestors:
    def test_diagnosis_chain(self, cardio_cb):
        assert cardio_cb.ancestors(DX, "401") == ["390-459", "401-405", "401"]

    def test_atc_chain(self, cardio_cb):
        assert cardio_cb.ancestors(ATC, "C03DA01") == \
            ["C", "C03", "C03D", "C03DA", "C03DA01"]

    def test_root_is_its_own_chain(self, cardio_cb):
        assert cardio_cb.ancestors(DX, "390-459") == ["390-459"]

    def test_unknown_code(self, cardio_cb):
        with pytest.raises(UnknownCodeError):
            cardio_cb.ancestors(DX, "999")

    def test_round_trip_via_parent_links(self, cardio_cb):
        for node in cardio_cb:
            chain = cardio_cb.ancestors(node.system, node.code)
            rebuilt = []
            cur = node.code
            while cur is not None:
                rebuilt.append(cur)
                cur = cardio_cb.node(node.system, cur).parent
            assert chain == rebuilt[::-1]

    def test_level_matches_chain_length(self, cardio_cb):
        for node in cardio_cb:
            assert node.level == \
                len(cardio_cb.ancestors(node.system, node.code)) - 1


class TestHierarchicalDescription:
    def test_code_401(self, cardio_cb):
        assert cardio_cb.hierarchical_description(DX, "401") == \
            ("Diseases of the Circulatory System Hypertensive Disease "
             "Essential Hypertension")

    def test_root_unchanged(self, cardio_cb):
        assert cardio_cb.hierarchical_description(DX, "390-459") == \
            "Diseases of the Circulatory System"

    def test_uninformative_leaf_gains_ancestor_text(self, cardio_cb):
        text = cardio_cb.hierarchical_description(DX, "014.8")
        assert text.endswith("Others")
        assert "Tuberculosis" in text

    def test_contains_every_ancestor_description(self, cardio_cb):
        for node in cardio_cb:
            text = cardio_cb.hierarchical_description(node.system, node.code)
            for code in cardio_cb.ancestors(node.system, node.code):
                assert cardio_cb.node(node.system, code).description in text


class TestDescendants:
    def test_leaf_empty(self, cardio_cb):
        assert cardio_cb.descendants(ATC, "C03DA01") == set()

    def test_c03d(self, cardio_cb):
        assert cardio_cb.descendants(ATC, "C03D") == {"C03DA", "C03DA01"}

    def test_three_level_chain(self, tmp_path):
        rows = [("atc", "a", "", "A"), ("atc", "b", "a", "B"),
                ("atc", "c", "b", "C")]
        cb = load_codebook(write_rows(tmp_path, rows))
        assert cb.descendants(ATC, "a") == {"b", "c"}

    def test_membership_under_root(self, cardio_cb):
        for node in cardio_cb:
            root = cardio_cb.ancestors(node.system, node.code)[0]
            if node.code != root:
                assert node.code in cardio_cb.descendants(node.system, root)

    def test_forest_partition(self, cardio_cb):
        total = sum(1 + len(cardio_cb.descendants(r.system, r.code))
                    for r in cardio_cb.roots())
        assert total == len(cardio_cb)


class TestCodeSystem:
    def test_parse_round_trip(self):
        for system in CodeSystem:
            assert CodeSystem.parse(system.value) is system

    def test_parse_rejects_unknown(self):
        with pytest.raises(ValueError):
            CodeSystem.parse("icd10")

    def test_loader_wraps_bad_system_with_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("atc\tA\t\tRoot\nicd10\tB\t\tNope\n")
        with pytest.raises(FormatError) as err:
            load_codebook(path)
        assert "2" in str(err.value)
