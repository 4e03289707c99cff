"""
Consistent sampling with per-contest thresholds.

Every card (phantoms included) gets a pseudo-random 256-bit sample number
u_i = SHA-256(seed || ":" || card_id), read big-endian.  A round picks a
cumulative target S_c per contest; the threshold t_c is the S_c-th smallest
sample number among cards containing c, and the sample is every card at or
below the threshold of any contest on it.  Growing any target grows the
sample monotonically, and the same card serves every contest it contains.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .models import BallotManifest, CardRecord


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class RoundPlan:
    """
    One round's targets and selection.  ``targets`` are cumulative sample
    sizes S_c; ``thresholds`` map contest id to t_c; ``estimated_total`` is
    the expected number of distinct physical cards to retrieve, counting
    previously sampled cards with probability 1 and excluding phantoms.
    """

    round: int
    targets: dict[str, int]
    fractions: dict[str, float]
    thresholds: dict[str, int]
    selected: frozenset[str]
    estimated_total: float
    newly_selected: frozenset[str] = field(default_factory=frozenset)


def sample_number(seed: str, card_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{card_id}".encode()).digest()
    return int.from_bytes(digest, "big")


def assign_sample_numbers(seed: str, cards: list[CardRecord]) -> list[CardRecord]:
    """
    Deterministically assign u_i to every card.  Publishing the seed lets
    anyone recompute the numbers; the dice ceremony that generates the seed
    is documented in docs/FORMATS.md.  Duplicate card ids (or a 256-bit hash
    collision, which would signal something badly wrong) are rejected.
    """
    ids = [c.card_id for c in cards]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise SamplingError(f"duplicate card ids: {dupes[:5]}")
    out = [c.with_sample_number(sample_number(seed, c.card_id)) for c in cards]
    numbers = {c.sample_number for c in out}
    if len(numbers) != len(out):
        raise SamplingError("sample number collision; check the seed and card ids")
    return out


def plan_round(
    active_contests: dict[str, int],
    targets: dict[str, int],
    cards: list[CardRecord],
    prior_selected: frozenset[str] = frozenset(),
    round_index: int = 1,
) -> RoundPlan:
    """
    Build a round plan from cumulative per-contest targets.

    active_contests maps contest id -> N_c.  A card's inclusion probability
    is the largest sampling fraction among the active contests it contains;
    cards already in the sample count with probability 1.
    """
    fractions: dict[str, float] = {}
    for cid, S in targets.items():
        N = active_contests[cid]
        if S > N:
            raise SamplingError(f"contest {cid}: target {S} exceeds card bound {N}")
        fractions[cid] = S / N

    by_contest: dict[str, list[int]] = {cid: [] for cid in targets}
    estimated_total = 0.0
    for card in cards:
        if card.sample_number is None:
            raise SamplingError(f"card {card.card_id} has no sample number")
        for cid in card.votes:
            if cid in by_contest:
                by_contest[cid].append(card.sample_number)
        if not card.phantom:
            if card.card_id in prior_selected:
                estimated_total += 1.0
            else:
                p = max(
                    (fractions[cid] for cid in card.votes if cid in fractions),
                    default=0.0,
                )
                estimated_total += p

    thresholds: dict[str, int] = {}
    for cid, numbers in by_contest.items():
        S = targets[cid]
        if S == 0:
            thresholds[cid] = 0
        else:
            numbers.sort()
            thresholds[cid] = numbers[S - 1]
    return RoundPlan(
        round=round_index,
        targets=dict(targets),
        fractions=fractions,
        thresholds=thresholds,
        selected=frozenset(prior_selected),
        estimated_total=estimated_total,
    )


def consistent_sample(cards: list[CardRecord], plan: RoundPlan) -> RoundPlan:
    """
    Select every card whose sample number is at or below the threshold of
    some active contest on it.  The result always contains the prior rounds'
    selection, so samples are nested across rounds and shared across
    contests.
    """
    newly = set()
    for card in cards:
        if card.card_id in plan.selected:
            continue
        for cid in card.votes:
            t = plan.thresholds.get(cid)
            if t is not None and card.sample_number is not None and card.sample_number <= t:
                newly.add(card.card_id)
                break
    return RoundPlan(
        round=plan.round,
        targets=plan.targets,
        fractions=plan.fractions,
        thresholds=plan.thresholds,
        selected=plan.selected | newly,
        estimated_total=plan.estimated_total,
        newly_selected=frozenset(newly),
    )


@dataclass(frozen=True)
class RetrievalEntry:
    card_id: str
    container: str
    tabulator: str
    batch: str
    position: int


@dataclass(frozen=True)
class RetrievalList:
    """Where to find the sampled cards, grouped for the retrieval teams."""

    entries: tuple[RetrievalEntry, ...]
    phantoms: tuple[str, ...]
    not_locatable: tuple[str, ...]

    def to_csv(self) -> str:
        lines = ["card_id,container,tabulator,batch,position"]
        for e in self.entries:
            lines.append(f"{e.card_id},{e.container},{e.tabulator},{e.batch},{e.position}")
        for p in self.phantoms:
            lines.append(f"{p},phantom — no card to retrieve,,,")
        for m in self.not_locatable:
            lines.append(f"{m},not locatable,,,")
        return "\n".join(lines) + "\n"


def retrieval_list(
    selected: frozenset[str] | set[str],
    cards: list[CardRecord],
    manifest: BallotManifest,
) -> RetrievalList:
    """
    Resolve selected card ids to physical locations via the manifest,
    sorted by (container, tabulator, batch, position).  Phantoms have no
    card to retrieve; ids the manifest cannot resolve are listed separately
    and will be scored as not-found if left unresolved.
    """
    by_id = {c.card_id: c for c in cards}
    entries = []
    phantoms = []
    missing = []
    for card_id in selected:
        card = by_id.get(card_id)
        if card is not None and card.phantom:
            phantoms.append(card_id)
            continue
        loc = manifest.locate(card_id)
        if loc is None:
            missing.append(card_id)
            continue
        entry, pos = loc
        entries.append(
            RetrievalEntry(card_id, entry.container, entry.tabulator, entry.batch, pos)
        )
    entries.sort(key=lambda e: (e.container, e.tabulator, e.batch, e.position))
    return RetrievalList(tuple(entries), tuple(sorted(phantoms)), tuple(sorted(missing)))
