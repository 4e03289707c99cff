import json
from pathlib import Path

import pytest

from cardaudit.cli import execute
from conftest import build_e2e_election, error_free_mvrs, hand_count_mvrs


@pytest.fixture
def election(tmp_path):
    return build_e2e_election(tmp_path / "election")


def run(*argv) -> int:
    return execute(list(argv)).exit_code


def init_and_check(election, state_dir) -> int:
    assert run("init", "--config", str(election["config"]), "--state-dir", state_dir) == 0
    return run("check", "--state-dir", state_dir)


class TestInitAndCheck:
    def test_clean_fixture_passes(self, election, tmp_path):
        assert init_and_check(election, str(tmp_path / "s")) == 0
        assert (tmp_path / "s" / "check.json").exists()

    def test_init_refuses_overwrite(self, election, tmp_path):
        state_dir = str(tmp_path / "s")
        assert run("init", "--config", str(election["config"]), "--state-dir", state_dir) == 0
        assert run("init", "--config", str(election["config"]), "--state-dir", state_dir) == 2

    def test_winner_mismatch_exits_2(self, election, tmp_path):
        config = json.loads(election["config"].read_text())
        config["contests"][0]["reported_winners"] = ["bob"]
        bad = election["config"].parent / "bad-config.json"
        bad.write_text(json.dumps(config))
        state_dir = str(tmp_path / "s")
        assert run("init", "--config", str(bad), "--state-dir", state_dir) == 0
        assert run("check", "--state-dir", state_dir) == 2
        report = json.loads((tmp_path / "s" / "check.json").read_text())
        assert report["winner_mismatches"] == ["county"]

    def test_overfull_contest_exits_3(self, election, tmp_path):
        config = json.loads(election["config"].read_text())
        config["contests"][1]["cards_upper_bound"] = 399  # 400 CVRs contain it
        bad = election["config"].parent / "overfull-config.json"
        bad.write_text(json.dumps(config))
        state_dir = str(tmp_path / "s")
        assert run("init", "--config", str(bad), "--state-dir", state_dir) == 0
        assert run("check", "--state-dir", state_dir) == 3

    def test_bad_flags_exit_1(self):
        assert run("init") == 1
        assert run("no-such-command") == 1


class TestEstimate:
    def test_zero_and_injected_columns(self, election, tmp_path):
        state_dir = str(tmp_path / "s")
        init_and_check(election, state_dir)
        assert run("estimate", "--state-dir", state_dir, "--errors", "1e-3", "--format", "csv") == 0
        rows = json.loads((tmp_path / "s" / "estimates.json").read_text())
        by_id = {r["contest"]: r for r in rows}
        assert by_id["tied"]["estimate_zero_error"] == 60
        assert by_id["county"]["estimate_with_errors"] >= by_id["county"]["estimate_zero_error"]
        assert by_id["county"]["injected_rate"] == pytest.approx(1e-3)

    def test_estimate_before_check_fails(self, election, tmp_path):
        state_dir = str(tmp_path / "s")
        assert run("init", "--config", str(election["config"]), "--state-dir", state_dir) == 0
        assert run("estimate", "--state-dir", state_dir) == 2


class TestSampleDeterminism:
    def test_same_seed_same_retrieval_list(self, election, tmp_path):
        lists = []
        for name in ("a", "b"):
            state_dir = str(tmp_path / name)
            init_and_check(election, state_dir)
            assert run("sample", "--round", "1", "--state-dir", state_dir) == 0
            lists.append((Path(state_dir) / "retrieval-round-1.csv").read_bytes())
        assert lists[0] == lists[1]

    def test_seed_flag_changes_selection(self, election, tmp_path):
        state_dir = str(tmp_path / "a")
        init_and_check(election, state_dir)
        assert run("sample", "--seed", "different-dice", "--state-dir", state_dir) == 0
        other = str(tmp_path / "b")
        init_and_check(election, other)
        assert run("sample", "--state-dir", other) == 0
        a = (Path(state_dir) / "retrieval-round-1.csv").read_bytes()
        b = (Path(other) / "retrieval-round-1.csv").read_bytes()
        assert a != b

    def test_seed_change_after_round_rejected(self, election, tmp_path):
        state_dir = str(tmp_path / "s")
        init_and_check(election, state_dir)
        assert run("sample", "--state-dir", state_dir) == 0
        assert run("sample", "--seed", "new", "--state-dir", state_dir) == 2

    def test_wrong_round_number_rejected(self, election, tmp_path):
        state_dir = str(tmp_path / "s")
        init_and_check(election, state_dir)
        assert run("sample", "--round", "2", "--state-dir", state_dir) == 2


class TestFullWorkflow:
    def drive(self, election, tmp_path) -> Path:
        state_dir = tmp_path / "s"
        init_and_check(election, str(state_dir))
        assert run("sample", "--round", "1", "--state-dir", str(state_dir)) == 0
        selected = {
            line.split(",")[0]
            for line in (state_dir / "retrieval-round-1.csv").read_text().splitlines()[1:]
        }
        mvr_path = tmp_path / "round1-mvrs.json"
        mvr_path.write_text(json.dumps(error_free_mvrs(election["records"], selected)))
        assert run("import-mvrs", "--file", str(mvr_path), "--state-dir", str(state_dir)) == 0
        assert run("measure", "--state-dir", str(state_dir)) == 0
        assert run("escalate", "tied", "--state-dir", str(state_dir)) == 0
        hand_path = tmp_path / "hand-count.json"
        hand_path.write_text(json.dumps(hand_count_mvrs(election["records"])))
        assert run("import-mvrs", "--file", str(hand_path), "--state-dir", str(state_dir)) == 0
        assert run("measure", "--state-dir", str(state_dir)) == 0
        assert run("report", "--state-dir", str(state_dir), "--threshold", "0.001") == 0
        return state_dir

    def test_end_to_end(self, election, tmp_path):
        state_dir = self.drive(election, tmp_path)
        doc = json.loads((state_dir / "report.json").read_text())
        statuses = {c["id"]: c["status"] for c in doc["contests"]}
        assert statuses == {"county": "confirmed", "small": "confirmed", "tied": "finished"}
        tied = next(c for c in doc["contests"] if c["id"] == "tied")
        assert tied["final_winners"] == ["frank"]

    def test_double_apply_refused(self, election, tmp_path):
        state_dir = tmp_path / "s"
        init_and_check(election, str(state_dir))
        assert run("sample", "--state-dir", str(state_dir)) == 0
        selected = {
            line.split(",")[0]
            for line in (state_dir / "retrieval-round-1.csv").read_text().splitlines()[1:]
        }
        mvr_path = tmp_path / "round1-mvrs.json"
        mvr_path.write_text(json.dumps(error_free_mvrs(election["records"], selected)))
        assert run("import-mvrs", "--file", str(mvr_path), "--state-dir", str(state_dir)) == 0
        assert run("import-mvrs", "--file", str(mvr_path), "--state-dir", str(state_dir)) == 2

    def test_escalate_unknown_contest(self, election, tmp_path):
        state_dir = tmp_path / "s"
        init_and_check(election, str(state_dir))
        assert run("escalate", "nope", "--state-dir", str(state_dir)) == 2

    def test_measure_rerun_is_idempotent(self, election, tmp_path):
        state_dir = self.drive(election, tmp_path)
        before = (state_dir / "measure-round-1.json").read_bytes()
        assert run("measure", "--state-dir", str(state_dir)) == 0
        assert (state_dir / "measure-round-1.json").read_bytes() == before
