import random

import pytest

from cardaudit.models import (
    BallotManifest,
    CardRecord,
    ConfigError,
    Contest,
    ManifestEntry,
    card_style,
    make_phantoms,
    tabulate_reported,
    validate,
)
from conftest import plurality_card, two_candidate_cards


def contest(**kw) -> Contest:
    defaults = dict(
        id="c1",
        name="Contest One",
        social_choice="plurality",
        candidates=("A", "B", "C"),
        reported_winners=("A",),
        cards_upper_bound=100,
    )
    defaults.update(kw)
    return Contest(**defaults)


def cards_with_tallies(tallies: dict[str, int], contest_id="c1") -> list[CardRecord]:
    cards = []
    i = 0
    for cand, n in tallies.items():
        for _ in range(n):
            i += 1
            cards.append(plurality_card(f"t-{i}", contest_id, cand))
    return cards


class TestContestInvariants:
    def test_winner_not_a_candidate(self):
        with pytest.raises(ConfigError):
            contest(reported_winners=("Z",))

    def test_wrong_winner_count_for_multiwinner(self):
        with pytest.raises(ConfigError):
            contest(n_winners=2)  # only one reported winner given

    def test_risk_limit_bounds(self):
        with pytest.raises(ConfigError):
            contest(risk_limit=0.0)
        with pytest.raises(ConfigError):
            contest(risk_limit=1.0)

    def test_supermajority_needs_threshold(self):
        with pytest.raises(ConfigError):
            contest(social_choice="supermajority")


class TestTabulate:
    def test_plurality_argmax(self):
        c = contest()
        result = tabulate_reported(c, cards_with_tallies({"A": 10, "B": 5, "C": 3}))
        assert result.winners == ("A",)
        assert not result.tie

    def test_vote_for_two_top_k(self):
        c = contest(n_winners=2, reported_winners=("A", "B"))
        result = tabulate_reported(c, cards_with_tallies({"A": 10, "B": 5, "C": 3}))
        assert set(result.winners) == {"A", "B"}

    def test_supermajority_two_thirds(self):
        c = contest(social_choice="supermajority", share_threshold=2 / 3)
        result = tabulate_reported(c, cards_with_tallies({"A": 70, "B": 30}))
        assert result.winners == ("A",)

    def test_supermajority_not_reached(self):
        c = contest(social_choice="supermajority", share_threshold=2 / 3)
        result = tabulate_reported(c, cards_with_tallies({"A": 60, "B": 40}))
        assert result.winners == ()

    def test_exact_tie_flagged(self):
        c = contest()
        result = tabulate_reported(c, cards_with_tallies({"A": 5, "B": 5}))
        assert result.tie
        assert result.winners == ("A",)  # deterministic lexicographic break

    def test_overvote_casts_no_valid_vote(self):
        c = contest()
        cards = cards_with_tallies({"A": 2, "B": 1})
        cards.append(CardRecord("ov-1", {"c1": {"A": True, "B": True}}))
        result = tabulate_reported(c, cards)
        assert result.tallies == {"A": 2, "B": 1, "C": 0}

    def test_plurality_matches_brute_force(self):
        rng = random.Random(7)
        cands = ("A", "B", "C", "D")
        for _ in range(25):
            tallies = {c: rng.randrange(30) for c in cands}
            cards = cards_with_tallies(tallies)
            if not cards:
                continue
            c = contest(candidates=cands, reported_winners=(max(cands, key=lambda k: (tallies[k], k)),))
            result = tabulate_reported(c, cards)
            assert result.tallies == {k: float(v) for k, v in tallies.items()}
            best = max(tallies.values())
            assert result.winners[0] in {k for k, v in tallies.items() if v == best}

    def test_irv_sequential_elimination(self):
        c = contest(social_choice="irv", candidates=("A", "B", "C"), reported_winners=("B",))
        # A:4 first prefs, B:3, C:2; C eliminated, C's voters prefer B -> B wins 5-4
        cards = []
        for i in range(4):
            cards.append(CardRecord(f"i-a{i}", {"c1": {"A": 1}}))
        for i in range(3):
            cards.append(CardRecord(f"i-b{i}", {"c1": {"B": 1}}))
        for i in range(2):
            cards.append(CardRecord(f"i-c{i}", {"c1": {"C": 1, "B": 2}}))
        result = tabulate_reported(c, cards)
        assert result.winners == ("B",)


class TestCardStyle:
    def test_style_is_vote_key_set(self):
        card = CardRecord("x", {"P": {"a": True}, "Q": {}})
        assert card_style(card) == {"P", "Q"}

    def test_phantom_style_single_contest(self):
        card = CardRecord("phantom-c1-1", {"c1": {}}, phantom=True)
        assert card_style(card) == {"c1"}

    def test_empty_votes_no_style(self):
        assert card_style(CardRecord("x", {})) == frozenset()


class TestValidate:
    def test_winner_mismatch_flagged(self):
        c = contest(reported_winners=("B",))
        report = validate([c], cards_with_tallies({"A": 10, "B": 5}))
        assert report.winner_mismatches == ["c1"]
        assert not report.fatal

    def test_overfull_is_fatal(self):
        c = contest(cards_upper_bound=100)
        report = validate([c], cards_with_tallies({"A": 60, "B": 41}))
        assert report.fatal
        assert report.overfull_contests == [("c1", 101, 100)]

    def test_phantom_count(self):
        c = contest(cards_upper_bound=100)
        report = validate([c], cards_with_tallies({"A": 60, "B": 38}))
        assert report.phantom_cvrs_needed == {"c1": 2}

    def test_phantom_cards_from_manifest(self):
        c = contest(cards_upper_bound=100)
        manifest = BallotManifest((ManifestEntry("box", "t", "1", 97, "t-"),))
        report = validate([c], cards_with_tallies({"A": 60, "B": 38}), manifest)
        # 98 CVRs + 2 phantom CVRs = 100 accounted, manifest holds 97
        assert report.phantom_cards_needed == 3

    def test_tie_is_not_an_error(self):
        c = contest(reported_winners=("A",))
        report = validate([c], cards_with_tallies({"A": 5, "B": 5}))
        assert report.ties == ["c1"]
        assert not report.fatal


class TestMakePhantoms:
    def test_exact_shortfall(self):
        c = contest(cards_upper_bound=100)
        cards = cards_with_tallies({"A": 60, "B": 38})
        report = validate([c], cards)
        out = make_phantoms([c], cards, report)
        phantoms = [x for x in out if x.phantom]
        assert len(phantoms) == 2
        assert all(x.votes == {"c1": {}} for x in phantoms)
        assert [x.card_id for x in phantoms] == ["phantom-c1-1", "phantom-c1-2"]

    def test_zero_when_counts_match(self):
        c = contest(cards_upper_bound=98)
        cards = cards_with_tallies({"A": 60, "B": 38})
        out = make_phantoms([c], cards, validate([c], cards))
        assert out == cards

    def test_separate_phantoms_per_contest(self):
        c1 = contest(id="c1", cards_upper_bound=3)
        c2 = contest(id="c2", cards_upper_bound=3)
        cards = two_candidate_cards("c1", 1, 1, winner="A", loser="B", prefix="p") + \
            two_candidate_cards("c2", 2, 0, winner="A", loser="B", prefix="q")
        report = validate([c1, c2], cards)
        out = make_phantoms([c1, c2], cards, report)
        phantoms = [x for x in out if x.phantom]
        assert len(phantoms) == 2
        assert {tuple(x.votes.keys()) for x in phantoms} == {("c1",), ("c2",)}

    def test_post_phantom_counts_exact(self):
        c1 = contest(id="c1", cards_upper_bound=50)
        c2 = contest(id="c2", cards_upper_bound=20)
        cards = two_candidate_cards("c1", 20, 10, prefix="p") + \
            two_candidate_cards("c2", 9, 2, prefix="q")
        out = make_phantoms([c1, c2], cards, validate([c1, c2], cards))
        for cid, bound in (("c1", 50), ("c2", 20)):
            assert sum(1 for x in out if cid in x.votes) == bound

    def test_idempotent(self):
        c = contest(cards_upper_bound=100)
        cards = cards_with_tallies({"A": 60, "B": 38})
        once = make_phantoms([c], cards, validate([c], cards))
        twice = make_phantoms([c], once, validate([c], once))
        assert twice == once

    def test_refuses_fatal_report(self):
        c = contest(cards_upper_bound=100)
        cards = cards_with_tallies({"A": 60, "B": 41})
        report = validate([c], cards)
        with pytest.raises(ValueError):
            make_phantoms([c], cards, report)


class TestManifestLocate:
    def test_longest_prefix_wins(self):
        m = BallotManifest(
            (
                ManifestEntry("box", "t", "1", 99, "b1-"),
                ManifestEntry("box", "t", "11", 99, "b1-1"),
            )
        )
        entry, pos = m.locate("b1-12")
        assert entry.batch == "11" and pos == 2

    def test_position_out_of_range(self):
        m = BallotManifest((ManifestEntry("box", "t", "1", 10, "b1-"),))
        assert m.locate("b1-11") is None
        assert m.locate("b1-0") is None

    def test_total_cards(self):
        m = BallotManifest(
            (ManifestEntry("a", "t", "1", 50, "x-"), ManifestEntry("a", "t", "2", 25, "y-"))
        )
        assert m.total_cards == 75
