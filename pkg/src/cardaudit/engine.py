"""
The main audit loop: set up from configuration, check consistency, plan
rounds, consume manual-vote records, measure risk, escalate to hand counts,
and report.

State is event-sourced: every mutation appends one event to events.jsonl in
the state directory and rewrites state.json atomically.  Replaying the event
log from scratch reproduces the identical state, which is what makes the
audit trail auditable in its own right.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import risk
from .assertions import (
    Assertion,
    AssorterSpec,
    assort,
    build_assertions,
    contest_margin,
    load_raire_assertions,
    overstatement,
    overstatement_assorter,
    set_margin,
)
from .ingest import parse_cvrs, parse_manifest, parse_mvrs
from .models import (
    AuditSpec,
    BallotManifest,
    CardRecord,
    ConsistencyReport,
    Contest,
    ErrorModel,
    ManifestEntry,
    RiskFunction,
    RoundStrategy,
    make_phantoms,
    tabulate_reported,
    validate,
)
from .sampling import RoundPlan, assign_sample_numbers, consistent_sample, plan_round

SNAPSHOT = "state.json"
EVENT_LOG = "events.jsonl"


class EngineError(RuntimeError):
    pass


@dataclass
class AuditState:
    spec: AuditSpec
    contests: list[Contest] = field(default_factory=list)
    assertions: list[Assertion] = field(default_factory=list)
    cards: list[CardRecord] = field(default_factory=list)
    manifest: BallotManifest | None = None
    rounds: list[RoundPlan] = field(default_factory=list)
    mvrs: dict[str, CardRecord] = field(default_factory=dict)
    consumed: dict[str, list[str]] = field(default_factory=dict)
    observed: dict[str, dict[str, int]] = field(default_factory=dict)
    applied_payloads: list[str] = field(default_factory=list)
    consistency: ConsistencyReport | None = None
    checked: bool = False
    warnings: list[str] = field(default_factory=list)

    def contest(self, contest_id: str) -> Contest:
        for c in self.contests:
            if c.id == contest_id:
                return c
        raise EngineError(f"unknown contest {contest_id!r}")

    def active_contests(self) -> list[Contest]:
        return [c for c in self.contests if c.status == "active"]

    def contest_assertions(self, contest_id: str) -> list[Assertion]:
        return [a for a in self.assertions if a.contest_id == contest_id]

    def open_assertions(self, contest_id: str) -> list[Assertion]:
        return [a for a in self.contest_assertions(contest_id) if a.status == "open"]

    def current_plan(self) -> RoundPlan | None:
        return self.rounds[-1] if self.rounds else None

    def selected(self) -> frozenset[str]:
        plan = self.current_plan()
        return plan.selected if plan else frozenset()

    def consumed_ids(self) -> set[str]:
        return {i for ids in self.consumed.values() for i in ids}

    def _set_contest_status(self, contest_id: str, status: str):
        for i, c in enumerate(self.contests):
            if c.id == contest_id:
                self.contests[i] = dataclasses.replace(c, status=status)
                return
        raise EngineError(f"unknown contest {contest_id!r}")


# ---------------------------------------------------------------------------
# setup


def initialize(spec: AuditSpec) -> AuditState:
    """Load CVRs and the manifest; no checks or sampling yet."""
    cards, _report = parse_cvrs(spec.cvr_format, spec.cvr_path)
    manifest = parse_manifest(spec.manifest_path) if spec.manifest_path else None
    return AuditState(spec=spec, contests=list(spec.contests), cards=cards, manifest=manifest)


def check(state: AuditState) -> ConsistencyReport:
    """
    Run the pre-audit consistency checks; on success generate phantoms,
    build assertions with margins, and assign sample numbers.  Fatal findings
    (more CVRs than the card bound allows) leave the state unchanged.
    """
    if state.rounds:
        raise EngineError("audit already under way; the consistency check cannot rerun")
    state.warnings = []
    report = validate(state.contests, state.cards, state.manifest)
    state.consistency = report
    if report.fatal:
        return report
    state.cards = make_phantoms(state.contests, state.cards, report)
    assertions: list[Assertion] = []
    for contest in state.contests:
        raire = None
        if contest.social_choice == "irv":
            path = state.spec.raire_paths.get(contest.id)
            if path is None:
                raise EngineError(
                    f"contest {contest.id}: assertions unavailable (no imported IRV assertions)"
                )
            raire = load_raire_assertions(path)
        for assertion in build_assertions(contest, raire):
            set_margin(assertion, state.cards)
            if assertion.reported_mean <= 0.5:
                state.warnings.append(
                    f"assertion {assertion.name}: reported mean {assertion.reported_mean:.4f} <= 1/2; "
                    "sampling can never confirm it"
                )
            _init_tracker(state, contest, assertion)
            assertions.append(assertion)
    state.assertions = assertions
    state.cards = assign_sample_numbers(state.spec.seed, state.cards)
    state.consumed = {c.id: [] for c in state.contests}
    state.observed = {
        c.id: {"draws": 0, "one_vote": 0, "two_vote": 0} for c in state.contests
    }
    state.checked = True
    return report


def _init_tracker(state: AuditState, contest: Contest, assertion: Assertion):
    u = assertion.spec.upper_bound
    if contest.audit_mode == "comparison":
        u_B = assertion.overstatement_bound
        eta = risk.resolve_eta(state.spec.risk_function, assertion.margin, u, u_B)
    else:
        u_B = u
        rf = state.spec.risk_function
        if rf.kind == "alpha_fixed_eta":
            eta = min(max(float(rf.eta), 0.5 + risk.ETA_CLEARANCE), u)
        else:
            eta = min(max(assertion.reported_mean, 0.5 + risk.ETA_CLEARANCE), u)
    assertion.tracker = risk.fresh_state(
        N=contest.cards_upper_bound, u_B=u_B, eta=eta, mode=contest.audit_mode
    )


def reseed(state: AuditState, seed: str):
    """
    Adopt the dice-ceremony seed.  Only legal before any round has been
    planned; all sample numbers are recomputed.
    """
    if state.rounds:
        raise EngineError("cannot change the seed after sampling has begun")
    state.spec = dataclasses.replace(state.spec, seed=seed)
    if state.checked:
        state.cards = assign_sample_numbers(
            seed, [dataclasses.replace(c, sample_number=None) for c in state.cards]
        )


# ---------------------------------------------------------------------------
# planning


def estimate_contest_sample(
    state: AuditState, contest: Contest, error_model: ErrorModel | None = None
) -> int:
    """First-round estimate: the largest need across the contest's assertions."""
    em = error_model if error_model is not None else state.spec.error_model
    best = 0
    for assertion in state.contest_assertions(contest.id):
        u = assertion.spec.upper_bound
        if contest.audit_mode == "polling":
            s = risk.estimate_polling_sample_size(
                N=contest.cards_upper_bound,
                v=assertion.margin,
                u=u,
                alpha=contest.risk_limit,
                eta=assertion.tracker.eta if assertion.tracker else None,
            )
        else:
            s = risk.estimate_sample_size(
                N=contest.cards_upper_bound,
                v=assertion.margin,
                u=u,
                alpha=contest.risk_limit,
                error_model=em,
                risk_function=state.spec.risk_function,
            )
        best = max(best, s)
    return best


def _observed_error_model(state: AuditState, contest: Contest) -> ErrorModel:
    obs = state.observed[contest.id]
    if obs["draws"] == 0:
        return state.spec.error_model
    return ErrorModel(
        p1=obs["one_vote"] / obs["draws"],
        p2=obs["two_vote"] / obs["draws"],
        placement="first_then_equispaced",
    )


def next_round(state: AuditState, target_overrides: dict[str, int] | None = None) -> RoundPlan:
    """
    Plan the next round: project the draws each open assertion still needs
    (deterministic placement of the plug-in error rates, or a simulation
    quantile), inflate, cap at the card bound, and select by consistent
    sampling.  Auditors may override individual cumulative targets, but
    never below what has already been consumed nor above the card bound.
    """
    if not state.checked:
        raise EngineError("run the consistency check before sampling")
    if state.rounds:
        # close out the current round so cumulative targets stay monotone
        advance(state, close=True)
        finalize_hand_counts(state)
    active = state.active_contests()
    if not active:
        raise EngineError("audit complete: no active contests")
    overrides = target_overrides or {}
    for cid in overrides:
        if not any(c.id == cid for c in active):
            raise EngineError(f"target override for inactive or unknown contest {cid!r}")
    strategy = state.spec.round_strategy
    targets: dict[str, int] = {}
    bounds: dict[str, int] = {}
    for contest in active:
        em = _observed_error_model(state, contest)
        done = len(state.consumed[contest.id])
        need = 0
        for assertion in state.open_assertions(contest.id):
            u = assertion.spec.upper_bound
            if strategy.kind == "deterministic_projection":
                n = risk.project_additional_draws(
                    assertion.tracker, assertion.margin, u, contest.risk_limit, em
                )
            else:
                seed = int.from_bytes(
                    hashlib.sha256(
                        f"{state.spec.seed}:plan:{len(state.rounds) + 1}:{assertion.name}".encode()
                    ).digest()[:8],
                    "big",
                )
                n = risk.simulate_additional_draws(
                    assertion.tracker,
                    assertion.margin,
                    u,
                    contest.risk_limit,
                    em,
                    strategy.quantile,
                    strategy.replications,
                    seed,
                )
            need = max(need, n)
        S = done + math.ceil(need * state.spec.inflation_factor)
        if contest.id in overrides:
            S = int(overrides[contest.id])
            if S > contest.cards_upper_bound:
                raise EngineError(
                    f"contest {contest.id}: target {S} exceeds the card bound "
                    f"{contest.cards_upper_bound}"
                )
            S = max(S, done)
        targets[contest.id] = min(S, contest.cards_upper_bound)
        bounds[contest.id] = contest.cards_upper_bound
    plan = plan_round(
        bounds,
        targets,
        state.cards,
        prior_selected=state.selected(),
        round_index=len(state.rounds) + 1,
    )
    plan = consistent_sample(state.cards, plan)
    state.rounds.append(plan)
    return plan


# ---------------------------------------------------------------------------
# measurement


def import_mvrs(state: AuditState, records: list[CardRecord]) -> dict:
    """
    Merge manual records into the audit.  Records are accepted for selected
    cards and for any card containing a hand-count contest; anything else is
    reported back and ignored.  A re-submitted card supersedes the earlier
    entry (the event log keeps both); draws already consumed are never
    re-scored, but hand-count tabulation uses the latest reading.
    """
    known = {c.card_id for c in state.cards}
    selected = state.selected()
    hand_contests = {c.id for c in state.contests if c.status in ("hand_count", "finished")}
    by_id = {c.card_id: c for c in state.cards}
    accepted, unknown, unselected, superseded = [], [], [], []
    for record in records:
        if record.card_id not in known:
            unknown.append(record.card_id)
            continue
        card = by_id[record.card_id]
        relevant_to_hand_count = bool(set(card.votes) & hand_contests)
        if record.card_id in selected or relevant_to_hand_count:
            if record.card_id in state.mvrs:
                superseded.append(record.card_id)
            state.mvrs[record.card_id] = record
            accepted.append(record.card_id)
        else:
            unselected.append(record.card_id)
    return {
        "accepted": accepted,
        "unknown": unknown,
        "unselected": unselected,
        "superseded": superseded,
    }


def _classify_overstatement(state: AuditState, contest_id: str, omega: float, u: float):
    obs = state.observed[contest_id]
    if omega > 0.75 * u:
        obs["two_vote"] += 1
    elif omega > 0.25 * u:
        obs["one_vote"] += 1


def advance(state: AuditState, close: bool = False) -> dict[str, int]:
    """
    Consume newly available draws for every active contest, in ascending
    sample-number order.  A card without an MVR blocks its contest's stream
    until the MVR arrives — unless `close` is set, in which case it is scored
    as not found (the worst case).  Phantoms never have MVRs and are consumed
    immediately at their worst-case score.
    """
    if not state.checked:
        raise EngineError("run the consistency check before measuring")
    plan = state.current_plan()
    if plan is None:
        raise EngineError("no round planned")
    fed: dict[str, int] = {}
    for contest in state.active_contests():
        t_c = plan.thresholds.get(contest.id)
        if t_c is None:
            continue
        eligible = sorted(
            (
                c
                for c in state.cards
                if contest.id in c.votes and c.sample_number is not None and c.sample_number <= t_c
            ),
            key=lambda c: c.sample_number,
        )
        done = len(state.consumed[contest.id])
        count = 0
        for card in eligible[done:]:
            mvr = state.mvrs.get(card.card_id)
            if mvr is None and not card.phantom and not close:
                break
            _consume(state, contest, card, mvr)
            count += 1
        if count:
            fed[contest.id] = count
        _refresh_contest_status(state, contest.id)
    return fed


def _consume(state: AuditState, contest: Contest, card: CardRecord, mvr: CardRecord | None):
    state.consumed[contest.id].append(card.card_id)
    obs = state.observed[contest.id]
    obs["draws"] += 1
    classified = False
    for assertion in state.open_assertions(contest.id):
        if contest.audit_mode == "comparison":
            ov = overstatement(assertion.spec, card, mvr)
            if ov.style_discrepancy:
                assertion.style_discrepancies += 1
            u = assertion.spec.upper_bound
            if not classified:
                _classify_overstatement(state, contest.id, ov.value, u)
                classified = True
            x = overstatement_assorter(assertion, ov.value)
        else:
            x = 0.0 if (mvr is None or mvr.not_found) else assort(assertion.spec, mvr)
        assertion.tracker = risk.alpha_step(assertion.tracker, x)
        assertion.p_value = risk.p_value(assertion.tracker)
        if assertion.p_value <= contest.risk_limit:
            assertion.status = "confirmed"


def _refresh_contest_status(state: AuditState, contest_id: str):
    contest = state.contest(contest_id)
    if contest.status != "active":
        return
    if not state.open_assertions(contest_id):
        state._set_contest_status(contest_id, "confirmed")


def run_round(state: AuditState, mvr_path: str | Path) -> dict:
    """
    Execute one full round against an MVR file: import the records, consume
    every selected draw (missing cards scored worst-case), and settle any
    completed hand counts.  Equivalent to `import-mvrs` followed by `measure`.
    """
    records, _report = parse_mvrs(mvr_path)
    outcome = import_mvrs(state, records)
    fed = advance(state, close=True)
    finished = finalize_hand_counts(state)
    return {"imported": outcome, "draws": fed, "hand_counts_finished": finished}


def escalate(state: AuditState, contest_id: str):
    """
    Move a contest to a full hand count.  Its assertions leave the audit; the
    outcome is settled by a complete MVR set for every card containing it.
    """
    contest = state.contest(contest_id)
    if contest.status == "confirmed":
        raise EngineError(f"contest {contest_id} already confirmed")
    if contest.status != "active":
        raise EngineError(f"contest {contest_id} is not active (status {contest.status})")
    state._set_contest_status(contest_id, "hand_count")
    for assertion in state.open_assertions(contest_id):
        assertion.status = "hand_counted"


def hand_count_outcome(state: AuditState, contest_id: str):
    """
    Tabulate the full hand count if every non-phantom card containing the
    contest has an MVR; None while coverage is incomplete.
    """
    contest = state.contest(contest_id)
    containing = [
        c for c in state.cards if contest_id in c.votes and not c.phantom
    ]
    entered = [state.mvrs[c.card_id] for c in containing if c.card_id in state.mvrs]
    if len(entered) < len(containing):
        return None
    return tabulate_reported(contest, entered)


def finalize_hand_counts(state: AuditState) -> list[str]:
    """Mark hand-count contests finished once their full count is entered."""
    finished = []
    for contest in state.contests:
        if contest.status == "hand_count" and hand_count_outcome(state, contest.id):
            state._set_contest_status(contest.id, "finished")
            finished.append(contest.id)
    return finished


# ---------------------------------------------------------------------------
# reporting


def report(state: AuditState, recount_threshold: float | None = None) -> dict:
    """
    Per-contest audit status: card bound, diluted margin, estimated and
    actual sample sizes, per-assertion p-values, and (optionally) workload
    totals omitting contests inside an automatic-recount threshold.
    """
    selected = state.selected()
    contests_out = []
    fractions: dict[str, float] = {}
    estimates: dict[str, int] = {}
    for contest in state.contests:
        assertions = state.contest_assertions(contest.id)
        margin = contest_margin(assertions)
        est = estimate_contest_sample(state, contest) if assertions else None
        if est is not None:
            estimates[contest.id] = est
        sampled = sum(
            1 for c in state.cards if contest.id in c.votes and c.card_id in selected
        )
        consumed = len(state.consumed.get(contest.id, []))
        outcome = None
        if contest.status in ("hand_count", "finished"):
            result = hand_count_outcome(state, contest.id)
            if result is not None:
                outcome = list(result.winners)
        final_winners = outcome if outcome is not None else list(contest.reported_winners)
        fractions[contest.id] = sampled / contest.cards_upper_bound
        contests_out.append(
            {
                "id": contest.id,
                "name": contest.name,
                "status": contest.status,
                "audit_mode": contest.audit_mode,
                "cards": contest.cards_upper_bound,
                "diluted_margin": None if margin != margin else margin,
                "risk_limit": contest.risk_limit,
                "reported_winners": list(contest.reported_winners),
                "final_winners": final_winners,
                "outcome_replaced": outcome is not None
                and set(outcome) != set(contest.reported_winners),
                "estimated_sample": est,
                "cards_sampled": sampled,
                "cards_consumed": consumed,
                "sampling_fraction": fractions[contest.id],
                "assertions": [
                    {
                        "claim": a.spec.describe(),
                        "kind": a.spec.kind,
                        "reported_mean": a.reported_mean,
                        "margin": a.margin,
                        "p_value": a.p_value,
                        "status": a.status,
                        "style_discrepancies": a.style_discrepancies,
                    }
                    for a in assertions
                ],
            }
        )
    rounds_out = [
        {
            "round": p.round,
            "targets": dict(sorted(p.targets.items())),
            "estimated_total": p.estimated_total,
            "selected_cards": len(p.selected),
        }
        for p in state.rounds
    ]
    out = {
        "contests": contests_out,
        "rounds": rounds_out,
        "totals": {
            "cards": len([c for c in state.cards if not c.phantom]),
            "selected": len(selected),
            "estimated_cards": _estimated_total(state, estimates, exclude=set()),
        },
        "warnings": list(state.warnings),
    }
    if recount_threshold is not None:
        omitted = {
            c["id"]
            for c in contests_out
            if c["diluted_margin"] is not None and c["diluted_margin"] <= recount_threshold
        }
        out["recount_threshold"] = recount_threshold
        out["omitted_contests"] = sorted(omitted)
        out["totals_excluding_recounts"] = {
            "estimated_cards": _estimated_total(state, estimates, exclude=omitted),
        }
    return out


def _estimated_total(state: AuditState, estimates: dict[str, int], exclude: set[str]) -> float:
    """Expected distinct cards: sum over cards of the max sampling fraction."""
    fractions = {}
    for cid, est in estimates.items():
        contest = state.contest(cid)
        if cid in exclude or contest.status not in ("active", "confirmed"):
            continue
        fractions[cid] = est / contest.cards_upper_bound
    # hand-count contests cost every card that contains them
    for contest in state.contests:
        if contest.status in ("hand_count", "finished") and contest.id not in exclude:
            fractions[contest.id] = 1.0
    total = 0.0
    for card in state.cards:
        if card.phantom:
            continue
        total += max((fractions.get(cid, 0.0) for cid in card.votes), default=0.0)
    return total


# ---------------------------------------------------------------------------
# persistence

_JSON_KW = dict(sort_keys=True, separators=(",", ":"))


def _spec_to_dict(spec: AuditSpec) -> dict:
    d = dataclasses.asdict(spec)
    d["contests"] = [dataclasses.asdict(c) for c in spec.contests]
    return d


def _contest_from_dict(c: dict) -> Contest:
    return Contest(
        **{k: tuple(v) if k in ("candidates", "reported_winners") else v for k, v in c.items()}
    )


def _spec_from_dict(d: dict) -> AuditSpec:
    return AuditSpec(
        seed=d["seed"],
        contests=tuple(_contest_from_dict(c) for c in d["contests"]),
        cvr_path=d["cvr_path"],
        cvr_format=d["cvr_format"],
        manifest_path=d["manifest_path"],
        risk_function=RiskFunction(**d["risk_function"]),
        error_model=ErrorModel(**d["error_model"]),
        round_strategy=RoundStrategy(**d["round_strategy"]),
        inflation_factor=d["inflation_factor"],
        raire_paths=d["raire_paths"],
    )


def _card_to_dict(card: CardRecord) -> dict:
    d = {"id": card.card_id, "votes": card.votes}
    if card.phantom:
        d["phantom"] = True
    if card.not_found:
        d["not_found"] = True
    if card.sample_number is not None:
        d["u"] = str(card.sample_number)
    return d


def _card_from_dict(d: dict) -> CardRecord:
    return CardRecord(
        card_id=d["id"],
        votes={c: dict(m) for c, m in d["votes"].items()},
        phantom=d.get("phantom", False),
        not_found=d.get("not_found", False),
        sample_number=int(d["u"]) if "u" in d else None,
    )


def _assertion_to_dict(a: Assertion) -> dict:
    spec = dataclasses.asdict(a.spec)
    spec["continuing"] = sorted(a.spec.continuing)
    spec["candidates"] = list(a.spec.candidates)
    tracker = dataclasses.asdict(a.tracker) if a.tracker is not None else None
    return {
        "contest_id": a.contest_id,
        "spec": spec,
        "reported_mean": a.reported_mean,
        "margin": a.margin,
        "overstatement_bound": a.overstatement_bound,
        "status": a.status,
        "p_value": a.p_value,
        "style_discrepancies": a.style_discrepancies,
        "tracker": tracker,
    }


def _assertion_from_dict(d: dict) -> Assertion:
    spec = d["spec"]
    a = Assertion(
        contest_id=d["contest_id"],
        spec=AssorterSpec(
            kind=spec["kind"],
            contest_id=spec["contest_id"],
            winner=spec["winner"],
            loser=spec["loser"],
            share_threshold=spec["share_threshold"],
            continuing=frozenset(spec["continuing"]),
            candidates=tuple(spec["candidates"]),
            votes_allowed=spec["votes_allowed"],
        ),
        reported_mean=d["reported_mean"],
        margin=d["margin"],
        overstatement_bound=d["overstatement_bound"],
        status=d["status"],
        p_value=d["p_value"],
        style_discrepancies=d["style_discrepancies"],
    )
    if d["tracker"] is not None:
        a.tracker = risk.AlphaState(**d["tracker"])
    return a


def state_to_dict(state: AuditState) -> dict:
    report_d = None
    if state.consistency is not None:
        report_d = {
            "winner_mismatches": state.consistency.winner_mismatches,
            "overfull_contests": [list(t) for t in state.consistency.overfull_contests],
            "phantom_cvrs_needed": state.consistency.phantom_cvrs_needed,
            "phantom_cards_needed": state.consistency.phantom_cards_needed,
            "ties": state.consistency.ties,
        }
    return {
        "spec": _spec_to_dict(state.spec),
        "contests": [dataclasses.asdict(c) for c in state.contests],
        "assertions": [_assertion_to_dict(a) for a in state.assertions],
        "cards": [_card_to_dict(c) for c in state.cards],
        "manifest": (
            [dataclasses.asdict(e) for e in state.manifest.entries]
            if state.manifest is not None
            else None
        ),
        "rounds": [
            {
                "round": p.round,
                "targets": p.targets,
                "fractions": p.fractions,
                "thresholds": {k: str(v) for k, v in p.thresholds.items()},
                "selected": sorted(p.selected),
                "newly_selected": sorted(p.newly_selected),
                "estimated_total": p.estimated_total,
            }
            for p in state.rounds
        ],
        "mvrs": {k: _card_to_dict(v) for k, v in sorted(state.mvrs.items())},
        "consumed": state.consumed,
        "observed": state.observed,
        "applied_payloads": state.applied_payloads,
        "consistency": report_d,
        "checked": state.checked,
        "warnings": state.warnings,
    }


def state_from_dict(d: dict) -> AuditState:
    spec = _spec_from_dict(d["spec"])
    state = AuditState(spec=spec)
    state.contests = [_contest_from_dict(c) for c in d["contests"]]
    state.assertions = [_assertion_from_dict(a) for a in d["assertions"]]
    state.cards = [_card_from_dict(c) for c in d["cards"]]
    state.manifest = (
        BallotManifest(entries=tuple(ManifestEntry(**e) for e in d["manifest"]))
        if d["manifest"] is not None
        else None
    )
    state.rounds = [
        RoundPlan(
            round=p["round"],
            targets=p["targets"],
            fractions=p["fractions"],
            thresholds={k: int(v) for k, v in p["thresholds"].items()},
            selected=frozenset(p["selected"]),
            newly_selected=frozenset(p["newly_selected"]),
            estimated_total=p["estimated_total"],
        )
        for p in d["rounds"]
    ]
    state.mvrs = {k: _card_from_dict(v) for k, v in d["mvrs"].items()}
    state.consumed = d["consumed"]
    state.observed = d["observed"]
    state.applied_payloads = d["applied_payloads"]
    if d["consistency"] is not None:
        c = d["consistency"]
        state.consistency = ConsistencyReport(
            winner_mismatches=c["winner_mismatches"],
            overfull_contests=[tuple(t) for t in c["overfull_contests"]],
            phantom_cvrs_needed=c["phantom_cvrs_needed"],
            phantom_cards_needed=c["phantom_cards_needed"],
            ties=c["ties"],
        )
    state.checked = d["checked"]
    state.warnings = d["warnings"]
    return state


class StateStore:
    """Snapshot + append-only event log in one directory."""

    def __init__(self, state_dir: str | Path):
        self.dir = Path(state_dir)

    @property
    def snapshot_path(self) -> Path:
        return self.dir / SNAPSHOT

    @property
    def log_path(self) -> Path:
        return self.dir / EVENT_LOG

    def exists(self) -> bool:
        return self.snapshot_path.exists()

    def load(self) -> AuditState:
        with open(self.snapshot_path, encoding="utf-8") as f:
            return state_from_dict(json.load(f))

    def save(self, state: AuditState, event: dict | None = None):
        self.dir.mkdir(parents=True, exist_ok=True)
        if event is not None:
            seq = 0
            if self.log_path.exists():
                with open(self.log_path, encoding="utf-8") as f:
                    seq = sum(1 for _ in f)
            with open(self.log_path, "a", encoding="utf-8") as f:
                f.write(json.dumps({"seq": seq, **event}, **_JSON_KW) + "\n")
        tmp = self.snapshot_path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(state_to_dict(state), f, **_JSON_KW)
        os.replace(tmp, self.snapshot_path)

    def events(self) -> list[dict]:
        if not self.log_path.exists():
            return []
        with open(self.log_path, encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def replay(store: StateStore) -> AuditState:
    """
    Re-execute the event log from nothing.  With unchanged input files the
    result is identical to the stored snapshot (event-sourced determinism).
    """
    state: AuditState | None = None
    for event in store.events():
        kind = event["type"]
        if kind == "init":
            spec = _spec_from_dict(event["spec"])
            for path, digest in event["inputs"].items():
                if file_digest(path) != digest:
                    raise EngineError(f"replay: input file {path} changed since the audit ran")
            state = initialize(spec)
        elif kind == "check":
            check(state)
        elif kind == "plan":
            if event.get("seed") and event["seed"] != state.spec.seed:
                reseed(state, event["seed"])
            next_round(state, target_overrides=event.get("targets"))
        elif kind == "import_mvrs":
            records = [_card_from_dict(r) for r in event["records"]]
            import_mvrs(state, records)
            state.applied_payloads.append(event["digest"])
            advance(state, close=False)
        elif kind == "measure":
            advance(state, close=True)
            finalize_hand_counts(state)
        elif kind == "escalate":
            escalate(state, event["contest"])
        else:
            raise EngineError(f"replay: unknown event type {kind!r}")
    if state is None:
        raise EngineError("replay: empty event log")
    return state
