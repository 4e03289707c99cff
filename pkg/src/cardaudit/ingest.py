"""
Parsers for cast-vote records, ballot manifests, and manual-vote records.

The canonical JSON record shape is the contract; the vendor readers (Hart
zip-of-XML, Dominion JSON export) normalize a documented subset of their
schemas — card id, contests, choices — into the same CardRecord.  Schemas
and golden fixtures live in docs/FORMATS.md and tests/fixtures/.

No parser raises on arbitrary bytes: malformed records are rejected with a
location in the ParseReport, and inputs too broken to enumerate records fail
with IngestError.
"""

from __future__ import annotations

import csv
import io
import json
import zipfile
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

from .models import BallotManifest, CardRecord, ManifestEntry

CVR_FORMATS = ("canonical", "hart_zip_xml", "dominion_export")


class IngestError(ValueError):
    pass


@dataclass
class ParseReport:
    records_read: int = 0
    records_rejected: int = 0
    reasons: list[str] = field(default_factory=list)
    contests_seen: set[str] = field(default_factory=set)
    duplicate_ids: list[str] = field(default_factory=list)

    def reject(self, where: str, why: str):
        self.records_rejected += 1
        self.reasons.append(f"{where}: {why}")


def _coerce_mark(value) -> bool | int:
    if isinstance(value, bool):
        return value
    if isinstance(value, int):
        return value
    raise ValueError(f"mark must be a boolean or a rank integer, got {value!r}")


def _record_from_dict(raw: dict, where: str) -> CardRecord:
    card_id = raw.get("id")
    if not isinstance(card_id, str) or not card_id:
        raise ValueError("missing or empty id")
    contests = raw.get("contests")
    if not isinstance(contests, dict):
        raise ValueError("missing contests map")
    votes: dict[str, dict[str, bool | int]] = {}
    for cid, marks in contests.items():
        if not isinstance(marks, dict):
            raise ValueError(f"contest {cid}: marks must be a map")
        votes[cid] = {cand: _coerce_mark(m) for cand, m in marks.items()}
    return CardRecord(
        card_id=card_id,
        votes=votes,
        phantom=bool(raw.get("phantom", False)),
        not_found=bool(raw.get("not_found", False)),
    )


def _parse_canonical(data: bytes, path: str, report: ParseReport) -> list[CardRecord]:
    try:
        raw = json.loads(data.decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise IngestError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(raw, list):
        raise IngestError(f"{path}: expected a top-level array of records")
    records = []
    for i, entry in enumerate(raw):
        try:
            if not isinstance(entry, dict):
                raise ValueError("record must be an object")
            records.append(_record_from_dict(entry, f"{path}[{i}]"))
            report.records_read += 1
        except ValueError as e:
            report.reject(f"{path}[{i}]", str(e))
    return records


def _parse_hart_member(data: bytes) -> CardRecord:
    root = ET.fromstring(data)
    card_id = root.findtext("CardId")
    if not card_id:
        raise ValueError("missing CardId")
    votes: dict[str, dict[str, bool | int]] = {}
    for contest in root.iter("Contest"):
        cid = contest.get("name")
        if not cid:
            raise ValueError("Contest element without name")
        marks: dict[str, bool | int] = {}
        for choice in contest.iter("Choice"):
            cand = choice.get("name")
            if not cand:
                raise ValueError(f"contest {cid}: Choice without name")
            rank = choice.get("rank")
            marks[cand] = int(rank) if rank is not None else True
        votes[cid] = marks
    return CardRecord(card_id=card_id, votes=votes)


def _parse_hart_zip(data: bytes, path: str, report: ParseReport) -> list[CardRecord]:
    records = []
    try:
        archive = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as e:
        raise IngestError(f"{path}: not a zip archive: {e}") from e
    with archive:
        for name in archive.namelist():
            if name.endswith("/"):
                continue
            try:
                with archive.open(name) as member:
                    records.append(_parse_hart_member(member.read()))
                report.records_read += 1
            except (ET.ParseError, ValueError, KeyError, zipfile.BadZipFile) as e:
                report.reject(f"{path}:{name}", str(e))
    return records


def _parse_dominion(data: bytes, path: str, report: ParseReport) -> list[CardRecord]:
    try:
        raw = json.loads(data.decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise IngestError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(raw, dict) or not isinstance(raw.get("Sessions"), list):
        raise IngestError(f"{path}: expected an object with a Sessions array")
    records = []
    for i, session in enumerate(raw["Sessions"]):
        try:
            if not isinstance(session, dict):
                raise ValueError("session must be an object")
            tab = session["TabulatorId"]
            batch = session["BatchId"]
            rec = session["RecordId"]
            card_id = f"{tab}-{batch}-{rec}"
            votes: dict[str, dict[str, bool | int]] = {}
            for contest in session.get("Contests", []):
                cid = str(contest["Id"])
                marks: dict[str, bool | int] = {}
                for mark in contest.get("Marks", []):
                    cand = str(mark["CandidateId"])
                    if not mark.get("IsVote", True):
                        continue
                    rank = mark.get("Rank")
                    marks[cand] = int(rank) if rank is not None else True
                votes[cid] = marks
            records.append(CardRecord(card_id=card_id, votes=votes))
            report.records_read += 1
        except (KeyError, TypeError, ValueError) as e:
            report.reject(f"{path}:Sessions[{i}]", repr(e))
    return records


def parse_cvrs(fmt: str, path: str | Path) -> tuple[list[CardRecord], ParseReport]:
    """
    Parse a CVR export into CardRecords.  Duplicate card ids abort the parse:
    comparison auditing requires a 1:1 card-to-CVR mapping.
    """
    if fmt not in CVR_FORMATS:
        raise IngestError(f"unknown CVR format {fmt!r}")
    path = str(path)
    report = ParseReport()
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise IngestError(f"{path}: {e}") from e
    if fmt == "canonical":
        records = _parse_canonical(data, path, report)
    elif fmt == "hart_zip_xml":
        records = _parse_hart_zip(data, path, report)
    else:
        records = _parse_dominion(data, path, report)
    seen: set[str] = set()
    for r in records:
        if r.card_id in seen:
            report.duplicate_ids.append(r.card_id)
        seen.add(r.card_id)
        report.contests_seen.update(r.votes.keys())
    if report.duplicate_ids:
        raise IngestError(
            f"{path}: duplicate card ids: {sorted(set(report.duplicate_ids))[:5]}"
        )
    return records, report


def serialize_canonical(records: list[CardRecord]) -> str:
    """Canonical JSON with sorted keys; parse . serialize is byte-stable."""
    out = []
    for r in records:
        entry: dict = {"id": r.card_id, "contests": r.votes}
        if r.phantom:
            entry["phantom"] = True
        if r.not_found:
            entry["not_found"] = True
        out.append(entry)
    return json.dumps(out, sort_keys=True, indent=1) + "\n"


def parse_manifest(path: str | Path) -> BallotManifest:
    """
    Read a ballot manifest: CSV with header
    container,tabulator,batch,card_count,id_prefix.
    """
    path = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise IngestError(f"{path}: {e}") from e
    try:
        rows = list(csv.DictReader(io.StringIO(text)))
    except csv.Error as e:
        raise IngestError(f"{path}: {e}") from e
    if not rows:
        raise IngestError(f"{path}: no manifest rows")
    required = {"container", "tabulator", "batch", "card_count", "id_prefix"}
    entries = []
    seen: dict[tuple, int] = {}
    for i, row in enumerate(rows, start=2):  # row 1 is the header
        if None in row or not required <= set(row):
            raise IngestError(f"{path}: row {i}: expected columns {sorted(required)}")
        try:
            count = int(row["card_count"])
        except (TypeError, ValueError):
            raise IngestError(f"{path}: row {i}: card_count {row['card_count']!r} is not a number")
        if count < 0:
            raise IngestError(f"{path}: row {i}: negative card_count")
        key = (row["container"], row["tabulator"], row["batch"])
        if key in seen:
            raise IngestError(
                f"{path}: rows {seen[key]} and {i}: duplicate batch {key}"
            )
        seen[key] = i
        entries.append(
            ManifestEntry(
                container=row["container"],
                tabulator=row["tabulator"],
                batch=row["batch"],
                card_count=count,
                id_prefix=row["id_prefix"],
            )
        )
    return BallotManifest(entries=tuple(entries))


def records_from_json(raw) -> list[CardRecord]:
    """Canonical record objects (already-decoded JSON) -> CardRecords."""
    if not isinstance(raw, list):
        raise IngestError("expected an array of records")
    records = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise IngestError(f"record {i}: must be an object")
        try:
            records.append(_record_from_dict(entry, f"record {i}"))
        except ValueError as e:
            raise IngestError(f"record {i}: {e}") from e
    return records


def parse_mvrs(path: str | Path) -> tuple[list[CardRecord], ParseReport]:
    """
    Manual-vote records: same canonical record shape as CVRs plus an optional
    per-card `"not_found": true` for cards the retrieval team could not find.
    """
    path = str(path)
    report = ParseReport()
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise IngestError(f"{path}: {e}") from e
    records = _parse_canonical(data, path, report)
    seen: set[str] = set()
    for r in records:
        if r.card_id in seen:
            report.duplicate_ids.append(r.card_id)
        seen.add(r.card_id)
        report.contests_seen.update(r.votes.keys())
    if report.duplicate_ids:
        raise IngestError(f"{path}: duplicate card ids in MVR file")
    return records, report
