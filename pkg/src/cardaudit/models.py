"""
Domain types for contests, cards, manifests, and audit configuration, plus the
pre-audit consistency checks and phantom-record generation.

A *card* is the atomic sampling unit.  Each card's *style* is the set of
contests it contains, inferred from its cast-vote record (CVR).  Before any
sampling happens the CVRs are checked against the reported winners and the
per-contest card-count upper bounds, and "phantom" records are created to
account for any cards the voting system may have failed to produce a CVR for.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

PHANTOM_PREFIX = "phantom"

SOCIAL_CHOICES = ("plurality", "supermajority", "irv")


class ConfigError(ValueError):
    """Raised for malformed contest or audit configuration."""


@dataclass(frozen=True)
class Contest:
    """
    One contest under audit.

    ``cards_upper_bound`` is a trustworthy upper bound on the number of cards
    that contain the contest, derived from canvass data, not from the voting
    system itself.  ``n_winners`` is 1 for ordinary plurality and k for
    vote-for-k; ``share_threshold`` is the winning fraction f for
    supermajority contests.
    """

    id: str
    name: str
    social_choice: str
    candidates: tuple[str, ...]
    reported_winners: tuple[str, ...]
    cards_upper_bound: int
    risk_limit: float = 0.05
    n_winners: int = 1
    share_threshold: float | None = None
    audit_mode: str = "comparison"
    status: str = "active"

    def __post_init__(self):
        if self.social_choice not in SOCIAL_CHOICES:
            raise ConfigError(f"unknown social choice {self.social_choice!r}")
        if not set(self.reported_winners) <= set(self.candidates):
            raise ConfigError(f"contest {self.id}: winners not among candidates")
        expected = self.n_winners if self.social_choice == "plurality" else 1
        if len(self.reported_winners) != expected:
            raise ConfigError(
                f"contest {self.id}: expected {expected} reported winner(s), "
                f"got {len(self.reported_winners)}"
            )
        if not 0 < self.risk_limit < 1:
            raise ConfigError(f"contest {self.id}: risk limit must be in (0,1)")
        if self.cards_upper_bound < 1:
            raise ConfigError(f"contest {self.id}: card bound must be >= 1")
        if self.social_choice == "supermajority":
            if self.share_threshold is None or not 0.5 <= self.share_threshold < 1:
                raise ConfigError(
                    f"contest {self.id}: supermajority needs share threshold in [1/2, 1)"
                )
        if self.audit_mode not in ("comparison", "polling"):
            raise ConfigError(f"contest {self.id}: bad audit mode {self.audit_mode!r}")


@dataclass(frozen=True)
class CardRecord:
    """
    One card's votes, either as cast-vote record (CVR) or manual-vote record
    (MVR).  ``votes`` maps contest id -> {candidate id -> mark}, where a mark
    is True for a plurality/supermajority choice or a rank integer (1 = most
    preferred) for IRV.  A phantom record stands in for a card the system may
    have failed to account for; it contains exactly one contest with no marks.
    """

    card_id: str
    votes: dict[str, dict[str, bool | int]]
    phantom: bool = False
    not_found: bool = False
    sample_number: int | None = None

    def style(self) -> frozenset[str]:
        return frozenset(self.votes.keys())

    def marks(self, contest_id: str) -> dict[str, bool | int]:
        return self.votes.get(contest_id, {})

    def with_sample_number(self, u: int) -> "CardRecord":
        if self.sample_number is not None and self.sample_number != u:
            raise ValueError(f"card {self.card_id}: sample number already assigned")
        return replace(self, sample_number=u)


def card_style(card: CardRecord) -> frozenset[str]:
    """The set of contest ids on a card (the key set of its votes map)."""
    return card.style()


@dataclass(frozen=True)
class ManifestEntry:
    container: str
    tabulator: str
    batch: str
    card_count: int
    id_prefix: str


@dataclass(frozen=True)
class BallotManifest:
    """Inventory mapping card identifiers to physical storage locations."""

    entries: tuple[ManifestEntry, ...]

    @property
    def total_cards(self) -> int:
        return sum(e.card_count for e in self.entries)

    def locate(self, card_id: str) -> tuple[ManifestEntry, int] | None:
        """
        Resolve a card id to (manifest entry, position within batch).

        A card id belongs to an entry when it is the entry's id_prefix
        followed by a position in 1..card_count.  The longest matching prefix
        wins, so nested prefixes are unambiguous.
        """
        best = None
        for e in self.entries:
            if card_id.startswith(e.id_prefix):
                suffix = card_id[len(e.id_prefix):]
                if not suffix.isdigit():
                    continue
                pos = int(suffix)
                if 1 <= pos <= e.card_count:
                    if best is None or len(e.id_prefix) > len(best[0].id_prefix):
                        best = (e, pos)
        return best


@dataclass(frozen=True)
class TabulationResult:
    winners: tuple[str, ...]
    tallies: dict[str, float]
    tie: bool = False


@dataclass
class ConsistencyReport:
    """Findings from the pre-audit checks of CVRs against reported results."""

    winner_mismatches: list[str] = field(default_factory=list)
    overfull_contests: list[tuple[str, int, int]] = field(default_factory=list)
    phantom_cvrs_needed: dict[str, int] = field(default_factory=dict)
    phantom_cards_needed: int = 0
    ties: list[str] = field(default_factory=list)

    @property
    def fatal(self) -> bool:
        return bool(self.overfull_contests)


@dataclass(frozen=True)
class ErrorModel:
    """
    Assumed or injected CVR error rates: ``p1`` one-vote overstatements per
    card, ``p2`` two-vote overstatements per card.  With placement
    ``first_then_equispaced`` the first sampled CVR carries an error and the
    rest are equispaced.
    """

    p1: float = 0.0
    p2: float = 0.0
    placement: str = "first_then_equispaced"

    def __post_init__(self):
        if self.p1 < 0 or self.p2 < 0 or self.p1 + self.p2 > 1:
            raise ConfigError("error rates must be nonnegative with p1 + p2 <= 1")
        if self.placement not in ("first_then_equispaced", "none"):
            raise ConfigError(f"unknown error placement {self.placement!r}")


@dataclass(frozen=True)
class RiskFunction:
    """
    Which ALPHA alternative estimator to use.  ``alpha_optimal_comparison``
    picks the alternative mean that maximizes expected log growth under the
    assumed overstatement rates; ``alpha_fixed_eta`` uses ``eta`` as given.
    """

    kind: str = "alpha_optimal_comparison"
    p1: float = 0.0
    p2: float = 1e-4
    eta: float | None = None

    def __post_init__(self):
        if self.kind not in ("alpha_optimal_comparison", "alpha_fixed_eta"):
            raise ConfigError(f"unknown risk function {self.kind!r}")
        if self.kind == "alpha_fixed_eta" and self.eta is None:
            raise ConfigError("alpha_fixed_eta requires eta")


@dataclass(frozen=True)
class RoundStrategy:
    """How to pick next-round sample sizes from the current test state."""

    kind: str = "deterministic_projection"
    quantile: float = 0.9
    replications: int = 100

    def __post_init__(self):
        if self.kind not in ("deterministic_projection", "simulation_quantile"):
            raise ConfigError(f"unknown round strategy {self.kind!r}")
        if not 0 < self.quantile < 1:
            raise ConfigError("quantile must be in (0,1)")


@dataclass(frozen=True)
class AuditSpec:
    """Everything the audit needs beyond the election data itself."""

    seed: str
    contests: tuple[Contest, ...]
    cvr_path: str
    cvr_format: str = "canonical"
    manifest_path: str = ""
    risk_function: RiskFunction = field(default_factory=RiskFunction)
    error_model: ErrorModel = field(default_factory=ErrorModel)
    round_strategy: RoundStrategy = field(default_factory=RoundStrategy)
    inflation_factor: float = 1.0
    raire_paths: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.seed:
            raise ConfigError("seed must be nonempty")
        if self.inflation_factor < 1:
            raise ConfigError("inflation factor must be >= 1")
        if len({c.id for c in self.contests}) != len(self.contests):
            raise ConfigError("duplicate contest ids")


def load_audit_spec(path: str | Path) -> AuditSpec:
    """Read the audit configuration file (JSON; schema in docs/FORMATS.md)."""
    with open(path, encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path}: {e}") from e
    try:
        contests = tuple(
            Contest(
                id=c["id"],
                name=c.get("name", c["id"]),
                social_choice=c.get("social_choice", "plurality"),
                candidates=tuple(c["candidates"]),
                reported_winners=tuple(c["reported_winners"]),
                cards_upper_bound=int(c["cards_upper_bound"]),
                risk_limit=float(c.get("risk_limit", 0.05)),
                n_winners=int(c.get("n_winners", 1)),
                share_threshold=c.get("share_threshold"),
                audit_mode=c.get("audit_mode", "comparison"),
            )
            for c in raw["contests"]
        )
        rf = raw.get("risk_function", {})
        em = raw.get("error_model", {})
        rs = raw.get("round_strategy", {})
        return AuditSpec(
            seed=str(raw["seed"]),
            contests=contests,
            cvr_path=raw["cvr_path"],
            cvr_format=raw.get("cvr_format", "canonical"),
            manifest_path=raw.get("manifest_path", ""),
            risk_function=RiskFunction(
                kind=rf.get("kind", "alpha_optimal_comparison"),
                p1=float(rf.get("p1", 0.0)),
                p2=float(rf.get("p2", 1e-4)),
                eta=rf.get("eta"),
            ),
            error_model=ErrorModel(
                p1=float(em.get("p1", 0.0)),
                p2=float(em.get("p2", 0.0)),
                placement=em.get("placement", "first_then_equispaced"),
            ),
            round_strategy=RoundStrategy(
                kind=rs.get("kind", "deterministic_projection"),
                quantile=float(rs.get("quantile", 0.9)),
                replications=int(rs.get("replications", 100)),
            ),
            inflation_factor=float(raw.get("inflation_factor", 1.0)),
            raire_paths=dict(raw.get("raire_paths", {})),
        )
    except KeyError as e:
        raise ConfigError(f"config {path}: missing field {e}") from e


def _plurality_valid_marks(marks: dict, candidates: tuple[str, ...], allowed: int) -> set[str]:
    """Candidates receiving a valid vote on one card; empty set on overvote."""
    chosen = {c for c in candidates if marks.get(c)}
    if len(chosen) > allowed:
        return set()
    return chosen


def tabulate_plurality(contest: Contest, cvrs: list[CardRecord]) -> TabulationResult:
    tallies = {c: 0.0 for c in contest.candidates}
    for card in cvrs:
        if contest.id not in card.votes:
            continue
        for c in _plurality_valid_marks(card.marks(contest.id), contest.candidates, contest.n_winners):
            tallies[c] += 1
    # top-k, ties broken toward lexicographically smaller id, and flagged
    ranked = sorted(contest.candidates, key=lambda c: (-tallies[c], c))
    winners = tuple(ranked[: contest.n_winners])
    tie = (
        len(ranked) > contest.n_winners
        and tallies[ranked[contest.n_winners - 1]] == tallies[ranked[contest.n_winners]]
    )
    return TabulationResult(winners, tallies, tie)


def tabulate_supermajority(contest: Contest, cvrs: list[CardRecord]) -> TabulationResult:
    tallies = {c: 0.0 for c in contest.candidates}
    valid = 0
    for card in cvrs:
        if contest.id not in card.votes:
            continue
        chosen = _plurality_valid_marks(card.marks(contest.id), contest.candidates, 1)
        if len(chosen) == 1:
            tallies[chosen.pop()] += 1
            valid += 1
    f = contest.share_threshold or 0.5
    winners = tuple(c for c in contest.candidates if valid > 0 and tallies[c] / valid > f)
    tie = valid > 0 and any(tallies[c] / valid == f for c in contest.candidates)
    return TabulationResult(winners, tallies, tie)


def tabulate_irv(contest: Contest, cvrs: list[CardRecord]) -> TabulationResult:
    """
    Sequential elimination: repeatedly drop the candidate with the fewest
    first preferences among continuing candidates, breaking ties toward the
    lexicographically smallest id (ties are flagged in the result).
    """
    rankings = []
    for card in cvrs:
        if contest.id not in card.votes:
            continue
        marks = card.marks(contest.id)
        ranked = {c: r for c, r in marks.items() if isinstance(r, int) and r >= 1}
        if ranked:
            rankings.append(ranked)
    continuing = set(contest.candidates)
    tie_seen = False
    first_round_tallies: dict[str, float] = {}
    while len(continuing) > 1:
        tallies = {c: 0.0 for c in continuing}
        for ranked in rankings:
            live = {c: r for c, r in ranked.items() if c in continuing}
            if not live:
                continue
            best = min(live.values())
            top = [c for c, r in live.items() if r == best]
            if len(top) == 1:  # duplicate ranks make no candidate top
                tallies[top[0]] += 1
        if not first_round_tallies:
            first_round_tallies = dict(tallies)
        low = min(tallies.values())
        lowest = sorted(c for c in continuing if tallies[c] == low)
        if len(lowest) > 1:
            tie_seen = True
        continuing.remove(lowest[0])
    winner = continuing.pop()
    return TabulationResult((winner,), first_round_tallies, tie_seen)


def tabulate_reported(contest: Contest, cvrs: list[CardRecord]) -> TabulationResult:
    """Winner set implied by the CVRs under the contest's social choice rule."""
    relevant = [c for c in cvrs if contest.id in c.votes and not c.phantom]
    if not relevant:
        raise ValueError(f"no CVRs contain contest {contest.id}")
    if contest.social_choice == "plurality":
        return tabulate_plurality(contest, relevant)
    if contest.social_choice == "supermajority":
        return tabulate_supermajority(contest, relevant)
    return tabulate_irv(contest, relevant)


def validate(
    contests: list[Contest],
    cvrs: list[CardRecord],
    manifest: BallotManifest | None = None,
) -> ConsistencyReport:
    """
    Check CVRs against reported winners and card-count bounds.

    More CVRs containing a contest than the contest's upper bound is fatal:
    the inputs cannot all be right.  Fewer means phantom records are needed.
    """
    report = ConsistencyReport()
    counts = {c.id: 0 for c in contests}
    for card in cvrs:
        for cid in card.votes:
            if cid in counts:
                counts[cid] += 1
    for contest in contests:
        n = counts[contest.id]
        if n > contest.cards_upper_bound:
            report.overfull_contests.append((contest.id, n, contest.cards_upper_bound))
            continue
        if n < contest.cards_upper_bound:
            report.phantom_cvrs_needed[contest.id] = contest.cards_upper_bound - n
        if n > 0:
            result = tabulate_reported(contest, cvrs)
            if result.tie:
                report.ties.append(contest.id)
            if set(result.winners) != set(contest.reported_winners):
                report.winner_mismatches.append(contest.id)
    if manifest is not None:
        implied_total = len([c for c in cvrs if not c.phantom]) + sum(
            report.phantom_cvrs_needed.values()
        )
        report.phantom_cards_needed = max(0, implied_total - manifest.total_cards)
    return report


def make_phantoms(
    contests: list[Contest],
    cvrs: list[CardRecord],
    report: ConsistencyReport,
) -> list[CardRecord]:
    """
    Append one phantom CardRecord per missing CVR.  Phantoms are generated
    separately for each contest; each phantom contains only that contest and
    no marks, and is scored worst-case during the audit.  Idempotent: records
    already counted (including prior phantoms) reduce the shortfall.
    """
    if report.fatal:
        raise ValueError("consistency check failed; refusing to generate phantoms")
    out = list(cvrs)
    existing = {c.card_id for c in cvrs}
    counts = {c.id: 0 for c in contests}
    for card in cvrs:
        for cid in card.votes:
            if cid in counts:
                counts[cid] += 1
    for contest in contests:
        shortfall = contest.cards_upper_bound - counts[contest.id]
        k = 1
        while shortfall > 0:
            pid = f"{PHANTOM_PREFIX}-{contest.id}-{k}"
            k += 1
            if pid in existing:
                continue
            out.append(CardRecord(card_id=pid, votes={contest.id: {}}, phantom=True))
            existing.add(pid)
            shortfall -= 1
    return out
