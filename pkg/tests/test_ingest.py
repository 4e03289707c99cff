import json
import zipfile

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from cardaudit.ingest import (
    IngestError,
    parse_cvrs,
    parse_manifest,
    parse_mvrs,
    records_from_json,
    serialize_canonical,
)


class TestCanonical:
    def test_reads_fixture(self, fixtures_dir):
        records, report = parse_cvrs("canonical", fixtures_dir / "canonical.json")
        assert len(records) == 6
        assert report.records_read == 6
        assert report.contests_seen == {"mayor", "measure-1"}

    def test_round_trip_byte_stable(self, fixtures_dir, tmp_path):
        records, _ = parse_cvrs("canonical", fixtures_dir / "canonical.json")
        text = serialize_canonical(records)
        path = tmp_path / "roundtrip.json"
        path.write_text(text)
        records2, _ = parse_cvrs("canonical", path)
        assert serialize_canonical(records2) == text

    def test_malformed_record_rejected_with_location(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps([
            {"id": "ok-1", "contests": {}},
            {"contests": {}},
            {"id": "ok-2", "contests": {"c": {"a": "notamark"}}},
        ]))
        records, report = parse_cvrs("canonical", path)
        assert len(records) == 1
        assert report.records_rejected == 2
        assert any("[1]" in r for r in report.reasons)
        assert any("[2]" in r for r in report.reasons)

    def test_duplicate_ids_abort(self, tmp_path):
        path = tmp_path / "dup.json"
        path.write_text(json.dumps([
            {"id": "x", "contests": {}},
            {"id": "x", "contests": {}},
        ]))
        with pytest.raises(IngestError, match="duplicate"):
            parse_cvrs("canonical", path)

    def test_not_json_fails_structured(self, tmp_path):
        path = tmp_path / "garbage.json"
        path.write_bytes(b"\x00\xff\xfe not json")
        with pytest.raises(IngestError):
            parse_cvrs("canonical", path)


class TestHartZip:
    def test_reads_fixture(self, fixtures_dir):
        records, report = parse_cvrs("hart_zip_xml", fixtures_dir / "hart.zip")
        assert len(records) == 6
        assert report.records_rejected == 0

    def test_matches_canonical_fixture(self, fixtures_dir):
        hart, _ = parse_cvrs("hart_zip_xml", fixtures_dir / "hart.zip")
        canon, _ = parse_cvrs("canonical", fixtures_dir / "canonical.json")
        assert sorted(hart, key=lambda c: c.card_id) == sorted(canon, key=lambda c: c.card_id)

    def test_truncated_member_rejected_others_kept(self, fixtures_dir, tmp_path):
        src = zipfile.ZipFile(fixtures_dir / "hart.zip")
        path = tmp_path / "partial.zip"
        with zipfile.ZipFile(path, "w") as out:
            names = src.namelist()
            for name in names[:2]:
                out.writestr(name, src.read(name))
            out.writestr("cvr-broken.xml", src.read(names[2])[: 20])
        records, report = parse_cvrs("hart_zip_xml", path)
        assert len(records) == 2
        assert report.records_rejected == 1
        assert any("cvr-broken.xml" in r for r in report.reasons)

    def test_not_a_zip(self, tmp_path):
        path = tmp_path / "no.zip"
        path.write_bytes(b"PK\x03\x04 but not really")
        with pytest.raises(IngestError, match="zip"):
            parse_cvrs("hart_zip_xml", path)


class TestDominion:
    def test_reads_fixture(self, fixtures_dir):
        records, report = parse_cvrs("dominion_export", fixtures_dir / "dominion.json")
        assert len(records) == 6
        assert report.records_rejected == 0

    def test_card_id_composed_from_session(self, fixtures_dir):
        records, _ = parse_cvrs("dominion_export", fixtures_dir / "dominion.json")
        assert {r.card_id for r in records} == {
            "1-1-1", "1-1-2", "1-1-3", "1-2-1", "1-2-2", "2-1-1",
        }

    def test_matches_canonical_fixture(self, fixtures_dir):
        dom, _ = parse_cvrs("dominion_export", fixtures_dir / "dominion.json")
        canon, _ = parse_cvrs("canonical", fixtures_dir / "canonical.json")
        assert sorted(dom, key=lambda c: c.card_id) == sorted(canon, key=lambda c: c.card_id)

    def test_non_vote_marks_skipped(self, tmp_path):
        path = tmp_path / "dom.json"
        path.write_text(json.dumps({
            "Sessions": [{
                "TabulatorId": 1, "BatchId": 1, "RecordId": 1,
                "Contests": [{"Id": "c", "Marks": [
                    {"CandidateId": "a", "IsVote": False},
                    {"CandidateId": "b", "IsVote": True},
                ]}],
            }]
        }))
        records, _ = parse_cvrs("dominion_export", path)
        assert records[0].votes == {"c": {"b": True}}


class TestManifest:
    def test_reads_fixture(self, fixtures_dir):
        manifest = parse_manifest(fixtures_dir / "manifest.csv")
        assert manifest.total_cards == 6
        assert len(manifest.entries) == 3

    def test_two_batches_total(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(
            "container,tabulator,batch,card_count,id_prefix\n"
            "a,t,1,50,x-\na,t,2,25,y-\n"
        )
        assert parse_manifest(path).total_cards == 75

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("container,tabulator,batch,card_count,id_prefix\n")
        with pytest.raises(IngestError, match="no manifest rows"):
            parse_manifest(path)

    def test_non_numeric_count_names_row(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(
            "container,tabulator,batch,card_count,id_prefix\n"
            "a,t,1,50,x-\na,t,2,many,y-\n"
        )
        with pytest.raises(IngestError, match="row 3"):
            parse_manifest(path)

    def test_duplicate_batch_names_both_rows(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(
            "container,tabulator,batch,card_count,id_prefix\n"
            "a,t,1,50,x-\na,t,1,25,y-\n"
        )
        with pytest.raises(IngestError, match="rows 2 and 3"):
            parse_manifest(path)


class TestMvrs:
    def test_reads_fixture(self, fixtures_dir):
        records, report = parse_mvrs(fixtures_dir / "mvrs.json")
        assert len(records) == 3
        flagged = [r for r in records if r.not_found]
        assert [r.card_id for r in flagged] == ["1-2-1"]
        assert flagged[0].votes == {}

    def test_records_from_json_validates(self):
        with pytest.raises(IngestError):
            records_from_json([{"contests": {}}])
        records = records_from_json([{"id": "x", "contests": {"c": {"a": True}}}])
        assert records[0].card_id == "x"


class TestFuzz:
    @settings(max_examples=200, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(st.binary(max_size=400))
    def test_parsers_never_crash(self, tmp_path_factory, data):
        path = tmp_path_factory.mktemp("fuzz") / "input"
        path.write_bytes(data)
        for fmt in ("canonical", "hart_zip_xml", "dominion_export"):
            try:
                parse_cvrs(fmt, path)
            except IngestError:
                pass
        try:
            parse_manifest(path)
        except IngestError:
            pass
        try:
            parse_mvrs(path)
        except IngestError:
            pass
