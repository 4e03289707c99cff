import json
from pathlib import Path

import pytest

from cardaudit.models import CardRecord

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def plurality_card(card_id: str, contest: str, candidate: str | None, extra=None) -> CardRecord:
    votes = {contest: {candidate: True} if candidate else {}}
    if extra:
        votes.update(extra)
    return CardRecord(card_id=card_id, votes=votes)


def two_candidate_cards(contest: str, n_winner: int, n_loser: int, winner="w", loser="l", prefix="card"):
    """n_winner votes for the winner then n_loser for the loser."""
    cards = []
    for i in range(n_winner):
        cards.append(plurality_card(f"{prefix}-{i + 1}", contest, winner))
    for i in range(n_loser):
        cards.append(plurality_card(f"{prefix}-{n_winner + i + 1}", contest, loser))
    return cards


def build_e2e_election(base: Path) -> dict:
    """
    Three-contest synthetic election for end-to-end runs: a county-wide
    contest on all 2,000 cards (margin 10%), a small contest on 400 of them
    (margin 20%), and a 60-card contest reported as a tie.
    """
    base.mkdir(parents=True, exist_ok=True)
    records = []
    county_rank = 0
    for batch in range(1, 5):
        for pos in range(1, 501):
            card_id = f"b{batch}-{pos}"
            county_rank += 1
            votes = {"county": {("alice" if county_rank <= 1100 else "bob"): True}}
            if batch == 1 and pos <= 400:
                votes["small"] = {("carol" if pos <= 240 else "dave"): True}
            if batch == 1 and 401 <= pos <= 460:
                votes["tied"] = {("eve" if pos <= 430 else "frank"): True}
            records.append({"id": card_id, "contests": votes})
    cvr_path = base / "cvrs.json"
    cvr_path.write_text(json.dumps(records, sort_keys=True, indent=1) + "\n")

    manifest_path = base / "manifest.csv"
    manifest_path.write_text(
        "container,tabulator,batch,card_count,id_prefix\n"
        + "".join(f"Box-{b},T{b},{b},500,b{b}-\n" for b in range(1, 5))
    )

    config = {
        "seed": "93157823401226051823",
        "cvr_path": str(cvr_path),
        "cvr_format": "canonical",
        "manifest_path": str(manifest_path),
        "risk_function": {"kind": "alpha_optimal_comparison", "p1": 0.0, "p2": 1e-4},
        "error_model": {"p1": 0.0, "p2": 0.0},
        "contests": [
            {
                "id": "county",
                "name": "County Measure",
                "social_choice": "plurality",
                "candidates": ["alice", "bob"],
                "reported_winners": ["alice"],
                "cards_upper_bound": 2000,
                "risk_limit": 0.05,
            },
            {
                "id": "small",
                "name": "Small District",
                "social_choice": "plurality",
                "candidates": ["carol", "dave"],
                "reported_winners": ["carol"],
                "cards_upper_bound": 400,
                "risk_limit": 0.05,
            },
            {
                "id": "tied",
                "name": "Tied Board Seat",
                "social_choice": "plurality",
                "candidates": ["eve", "frank"],
                "reported_winners": ["eve"],
                "cards_upper_bound": 60,
                "risk_limit": 0.05,
            },
        ],
    }
    config_path = base / "config.json"
    config_path.write_text(json.dumps(config, sort_keys=True, indent=1) + "\n")
    return {
        "config": config_path,
        "cvrs": cvr_path,
        "manifest": manifest_path,
        "records": records,
    }


def error_free_mvrs(records: list[dict], card_ids) -> list[dict]:
    """MVRs that read exactly what the CVRs say, for the given cards."""
    by_id = {r["id"]: r for r in records}
    return [
        {"id": cid, "contests": by_id[cid]["contests"]}
        for cid in sorted(card_ids)
        if cid in by_id
    ]


def hand_count_mvrs(records: list[dict]) -> list[dict]:
    """
    Full hand count of the tied contest: two cards reported for eve actually
    show votes for frank, so the hand count flips the outcome to frank.
    """
    out = []
    for r in records:
        if "tied" not in r["contests"]:
            continue
        contests = {k: dict(v) for k, v in r["contests"].items()}
        pos = int(r["id"].split("-")[1])
        if pos in (401, 402):
            contests["tied"] = {"frank": True}
        out.append({"id": r["id"], "contests": contests})
    return out
