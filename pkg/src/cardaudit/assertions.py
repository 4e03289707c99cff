"""
Assertions and assorters.

Each contest's reported outcome is expressed as a conjunction of *assertions*:
claims that the mean of an *assorter* (a function mapping one card's votes to
[0, u]) over all cards containing the contest exceeds 1/2.  For comparison
audits each assertion also carries an *overstatement assorter* B that rescales
CVR-vs-MVR discrepancies so that the outcome is correct iff the mean of B
exceeds 1/2 despite CVR errors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .models import CardRecord, Contest, _plurality_valid_marks

ASSORTER_KINDS = ("plurality_pair", "supermajority", "raire_neb", "raire_nen")


@dataclass(frozen=True)
class AssorterSpec:
    """
    One assorter.  ``winner`` and ``loser`` are candidate ids; ``continuing``
    is the set of candidates still standing for a raire_nen claim.
    ``votes_allowed`` is the contest's vote-for-k, needed to recognize
    overvotes.
    """

    kind: str
    contest_id: str
    winner: str
    loser: str = ""
    share_threshold: float = 0.5
    continuing: frozenset[str] = frozenset()
    candidates: tuple[str, ...] = ()
    votes_allowed: int = 1

    def __post_init__(self):
        if self.kind not in ASSORTER_KINDS:
            raise ValueError(f"unknown assorter kind {self.kind!r}")
        if self.kind != "supermajority" and self.winner == self.loser:
            raise ValueError("winner and loser must differ")
        if self.kind == "raire_nen" and not {self.winner, self.loser} <= self.continuing:
            raise ValueError("winner and loser must be in the continuing set")

    @property
    def upper_bound(self) -> float:
        if self.kind == "supermajority":
            return 1 / (2 * self.share_threshold)
        return 1.0

    def describe(self) -> str:
        if self.kind == "plurality_pair":
            return f"{self.winner} beats {self.loser}"
        if self.kind == "supermajority":
            return f"{self.winner} exceeds {self.share_threshold:g} of valid votes"
        if self.kind == "raire_neb":
            return f"{self.winner} not eliminated before {self.loser}"
        return f"{self.winner} beats {self.loser} among {{{','.join(sorted(self.continuing))}}}"


def _rank(marks: dict, candidate: str) -> int | None:
    r = marks.get(candidate)
    return r if isinstance(r, int) and r >= 1 else None


def _top_among(marks: dict, group) -> str | None:
    """The unique candidate in `group` with the lowest rank, if any."""
    ranked = [(r, c) for c in group if (r := _rank(marks, c)) is not None]
    if not ranked:
        return None
    best = min(r for r, _ in ranked)
    top = [c for r, c in ranked if r == best]
    return top[0] if len(top) == 1 else None


def assort(spec: AssorterSpec, card: CardRecord) -> float:
    """
    Value of the assorter on one card, in [0, upper_bound].

    plurality_pair: (1{valid vote for w} - 1{valid vote for l} + 1)/2, where a
    card with more marks than allowed (overvote) casts no valid vote.

    supermajority: 1/(2f) for a valid vote for w, 0 for a valid vote for
    someone else, 1/2 otherwise (undervote or overvote).

    raire_neb: w's first preferences against every ballot on which l is
    ranked ahead of w (or l is ranked and w is not).

    raire_nen: head-to-head between w and l when only the continuing
    candidates remain.
    """
    marks = card.marks(spec.contest_id)
    if spec.kind == "plurality_pair":
        valid = _plurality_valid_marks(marks, spec.candidates, spec.votes_allowed)
        return (float(spec.winner in valid) - float(spec.loser in valid) + 1) / 2
    if spec.kind == "supermajority":
        valid = _plurality_valid_marks(marks, spec.candidates, 1)
        if len(valid) == 1:
            return spec.upper_bound if spec.winner in valid else 0.0
        return 0.5
    if spec.kind == "raire_neb":
        rw, rl = _rank(marks, spec.winner), _rank(marks, spec.loser)
        w_first = _top_among(marks, spec.candidates) == spec.winner
        l_over_w = rl is not None and (rw is None or rl < rw)
        return (float(w_first) - float(l_over_w) + 1) / 2
    top = _top_among(marks, spec.continuing)
    return (float(top == spec.winner) - float(top == spec.loser) + 1) / 2


@dataclass
class Assertion:
    """
    One half-average claim with its comparison-audit scaling and sequential
    test state.  ``reported_mean`` is the assorter mean over all cards in the
    contest's sampling domain including phantoms; ``margin`` is the diluted
    assorter margin 2*mean - 1; ``overstatement_bound`` is the upper bound
    of the overstatement assorter B.
    """

    contest_id: str
    spec: AssorterSpec
    reported_mean: float | None = None
    margin: float | None = None
    overstatement_bound: float | None = None
    status: str = "open"
    p_value: float = 1.0
    tracker: "object | None" = None  # risk.AlphaState once measurement starts
    style_discrepancies: int = 0

    @property
    def name(self) -> str:
        return f"{self.contest_id}:{self.spec.kind}:{self.spec.winner}:{self.spec.loser}"


class RaireParseError(ValueError):
    pass


def load_raire_assertions(path: str | Path) -> list[dict]:
    """
    Read IRV assertions from a JSON file: a list of entries
    {"type": "NEB"|"NEN", "winner": ..., "loser": ..., "continuing": [...]}
    (``continuing`` only for NEN).  Schema in docs/FORMATS.md.
    """
    with open(path, encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise RaireParseError(f"{path}: {e}") from e
    if isinstance(raw, dict):
        raw = raw.get("assertions", [])
    entries = []
    for i, entry in enumerate(raw):
        try:
            kind = entry["type"].upper()
            if kind not in ("NEB", "NEN"):
                raise RaireParseError(f"{path}: entry {i}: unknown type {entry['type']!r}")
            entries.append(
                {
                    "type": kind,
                    "winner": entry["winner"],
                    "loser": entry["loser"],
                    "continuing": list(entry.get("continuing", [])),
                }
            )
        except (KeyError, TypeError, AttributeError) as e:
            raise RaireParseError(f"{path}: entry {i}: {e}") from e
    return entries


def build_assertions(contest: Contest, raire_entries: list[dict] | None = None) -> list[Assertion]:
    """
    The set of assertions whose conjunction is equivalent to the contest's
    reported outcome: winner x loser pairs for plurality, one threshold claim
    per winner for supermajority, and the imported claims for IRV.
    """
    specs: list[AssorterSpec] = []
    if contest.social_choice == "plurality":
        losers = [c for c in contest.candidates if c not in contest.reported_winners]
        for w in contest.reported_winners:
            for l in losers:
                specs.append(
                    AssorterSpec(
                        kind="plurality_pair",
                        contest_id=contest.id,
                        winner=w,
                        loser=l,
                        candidates=contest.candidates,
                        votes_allowed=contest.n_winners,
                    )
                )
    elif contest.social_choice == "supermajority":
        for w in contest.reported_winners:
            specs.append(
                AssorterSpec(
                    kind="supermajority",
                    contest_id=contest.id,
                    winner=w,
                    share_threshold=contest.share_threshold or 0.5,
                    candidates=contest.candidates,
                )
            )
    else:
        if raire_entries is None:
            raise ValueError(
                f"contest {contest.id}: assertions unavailable (IRV requires imported assertions)"
            )
        for entry in raire_entries:
            if entry["type"] == "NEB":
                specs.append(
                    AssorterSpec(
                        kind="raire_neb",
                        contest_id=contest.id,
                        winner=entry["winner"],
                        loser=entry["loser"],
                        candidates=contest.candidates,
                    )
                )
            else:
                specs.append(
                    AssorterSpec(
                        kind="raire_nen",
                        contest_id=contest.id,
                        winner=entry["winner"],
                        loser=entry["loser"],
                        continuing=frozenset(entry["continuing"]),
                        candidates=contest.candidates,
                    )
                )
    return [Assertion(contest_id=contest.id, spec=s) for s in specs]


def set_margin(assertion: Assertion, cards: list[CardRecord]) -> Assertion:
    """
    Compute the reported assorter mean over every record whose style contains
    the contest (phantoms included, scored at the assorter midpoint u/2), the
    margin v = 2*mean - 1, and the overstatement-assorter bound 2u/(2u - v).

    A mean at or below 1/2 means the CVRs themselves do not show the asserted
    winner ahead; the assertion is flagged since sampling can never confirm it.
    """
    u = assertion.spec.upper_bound
    total = 0.0
    n = 0
    for card in cards:
        if assertion.contest_id not in card.votes:
            continue
        total += u / 2 if card.phantom else assort(assertion.spec, card)
        n += 1
    if n == 0:
        raise ValueError(f"no records contain contest {assertion.contest_id}")
    mean = total / n
    assertion.reported_mean = mean
    assertion.margin = 2 * mean - 1
    assertion.overstatement_bound = 2 * u / (2 * u - assertion.margin)
    return assertion


@dataclass(frozen=True)
class OverstatementValue:
    """a(CVR) - a(MVR) for one card, with a style-discrepancy flag."""

    value: float
    style_discrepancy: bool = False


def overstatement(
    spec: AssorterSpec, cvr: CardRecord, mvr: CardRecord | None
) -> OverstatementValue:
    """
    Overstatement of one assertion for one card.  A phantom CVR is scored at
    the assorter midpoint; a card that cannot be found (mvr None or flagged
    not_found), or a phantom, gets a(MVR) = 0 — the worst case for the
    audited outcome.
    """
    u = spec.upper_bound
    a_cvr = u / 2 if cvr.phantom else assort(spec, cvr)
    if cvr.phantom or mvr is None or mvr.not_found:
        return OverstatementValue(a_cvr - 0.0)
    discrepancy = spec.contest_id not in mvr.votes
    return OverstatementValue(a_cvr - assort(spec, mvr), discrepancy)


def overstatement_assorter(assertion: Assertion, omega: float) -> float:
    """
    B(omega) = (1 - omega/u) / (2 - v/u): the rescaled overstatement whose
    mean over the contest's cards exceeds 1/2 iff the assertion holds despite
    the observed CVR errors.  Strictly decreasing in omega, in
    [0, overstatement_bound].
    """
    if assertion.margin is None:
        raise ValueError("margin not set")
    u = assertion.spec.upper_bound
    if not -u <= omega <= u + 1e-12:
        raise ValueError(f"overstatement {omega} outside [-{u}, {u}]")
    return (1 - omega / u) / (2 - assertion.margin / u)


def noerror_value(assertion: Assertion) -> float:
    """B(0): the value every draw takes when the MVR matches the CVR."""
    return overstatement_assorter(assertion, 0.0)


def contest_margin(assertions: list[Assertion]) -> float:
    """The binding (smallest) margin across a contest's assertions."""
    margins = [a.margin for a in assertions if a.margin is not None]
    if not margins:
        return math.nan
    return min(margins)
