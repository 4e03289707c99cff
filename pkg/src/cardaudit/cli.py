"""
Operator command line.  One subcommand per audit ceremony step, so the shell
history doubles as an evidence trail:

    init -> check -> estimate -> sample -> (retrieve & read cards)
         -> import-mvrs -> measure -> [escalate] -> report

Exit codes: 0 ok, 1 runtime error, 2 validation failure, 3 fatal consistency
stop (more CVRs than the card-count bound allows).
"""

from __future__ import annotations

import dataclasses
import fcntl
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click

from . import engine
from .engine import EngineError, StateStore, file_digest
from .ingest import IngestError, parse_mvrs
from .models import ConfigError, ErrorModel, load_audit_spec
from .sampling import SamplingError, retrieval_list

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2
EXIT_FATAL = 3

STATE_DIR_ENV = "CARDAUDIT_STATE_DIR"


@dataclass
class CommandResult:
    exit_code: int
    artifacts: list[str] = field(default_factory=list)
    message: str = ""


def _json_bytes(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write(path: Path, content: str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content, encoding="utf-8")
    return str(path)


class _Lock:
    """Exclusive advisory lock on the state directory for mutations."""

    def __init__(self, state_dir: Path):
        state_dir.mkdir(parents=True, exist_ok=True)
        self.fd = os.open(state_dir / ".lock", os.O_CREAT | os.O_RDWR)

    def __enter__(self):
        fcntl.flock(self.fd, fcntl.LOCK_EX)
        return self

    def __exit__(self, *exc):
        fcntl.flock(self.fd, fcntl.LOCK_UN)
        os.close(self.fd)


def _state_dir(opt: str | None) -> Path:
    if opt:
        return Path(opt)
    env = os.environ.get(STATE_DIR_ENV)
    if env:
        return Path(env)
    return Path("audit-state")


@click.group()
def cli():
    """Risk-limiting audit engine using card-style sample targeting."""


@cli.command("init")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--state-dir", default=None)
def cmd_init(config_path, state_dir):
    """Create the audit state from a configuration file."""
    spec = load_audit_spec(config_path)
    store = StateStore(_state_dir(state_dir))
    if store.exists():
        raise EngineError(f"state already exists in {store.dir}; refusing to overwrite")
    with _Lock(store.dir):
        state = engine.initialize(spec)
        inputs = {spec.cvr_path: file_digest(spec.cvr_path)}
        if spec.manifest_path:
            inputs[spec.manifest_path] = file_digest(spec.manifest_path)
        for path in spec.raire_paths.values():
            inputs[path] = file_digest(path)
        store.save(state, {"type": "init", "spec": engine._spec_to_dict(spec), "inputs": inputs})
    click.echo(f"initialized audit of {len(spec.contests)} contest(s) in {store.dir}")
    _result(EXIT_OK, [str(store.snapshot_path)])


@cli.command("check")
@click.option("--state-dir", default=None)
def cmd_check(state_dir):
    """Check CVRs against reported winners and card bounds; make phantoms."""
    store = StateStore(_state_dir(state_dir))
    with _Lock(store.dir):
        state = store.load()
        report = engine.check(state)
        artifact = _write(
            store.dir / "check.json",
            _json_bytes(
                {
                    "fatal": report.fatal,
                    "winner_mismatches": report.winner_mismatches,
                    "overfull_contests": [list(t) for t in report.overfull_contests],
                    "phantom_cvrs_needed": report.phantom_cvrs_needed,
                    "phantom_cards_needed": report.phantom_cards_needed,
                    "ties": report.ties,
                    "warnings": state.warnings,
                }
            ),
        )
        if report.fatal:
            for cid, n, bound in report.overfull_contests:
                click.echo(f"FATAL: contest {cid}: {n} CVRs exceed the card bound {bound}")
            _result(EXIT_FATAL, [artifact])
        store.save(state, {"type": "check"})
    for cid in report.ties:
        click.echo(f"note: contest {cid}: reported outcome is a tie")
    if report.winner_mismatches:
        for cid in report.winner_mismatches:
            click.echo(f"MISMATCH: contest {cid}: CVR winners differ from reported winners")
        _result(EXIT_VALIDATION, [artifact])
    click.echo("consistency check passed")
    _result(EXIT_OK, [artifact])


@cli.command("estimate")
@click.option("--state-dir", default=None)
@click.option("--errors", type=float, default=None, help="injected one-vote overstatement rate")
@click.option("--risk-limit", type=float, default=None, help="override risk limit for the table")
@click.option("--format", "fmt", type=click.Choice(["table", "csv", "structured"]), default="table")
def cmd_estimate(state_dir, errors, risk_limit, fmt):
    """Estimate per-contest sample sizes under the error models."""
    store = StateStore(_state_dir(state_dir))
    state = store.load()
    if not state.checked:
        raise EngineError("run `check` before `estimate`")
    zero = ErrorModel(p1=0.0, p2=0.0)
    injected = (
        ErrorModel(p1=errors, p2=state.spec.error_model.p2)
        if errors is not None
        else state.spec.error_model
    )
    rows = []
    for contest in state.contests:
        if risk_limit is not None:
            contest = dataclasses.replace(contest, risk_limit=risk_limit)
        margin = engine.contest_margin(state.contest_assertions(contest.id))
        rows.append(
            {
                "contest": contest.id,
                "cards": contest.cards_upper_bound,
                "diluted_margin": margin,
                "risk_limit": contest.risk_limit,
                "estimate_zero_error": engine.estimate_contest_sample(state, contest, zero),
                "estimate_with_errors": engine.estimate_contest_sample(state, contest, injected),
                "injected_rate": injected.p1,
            }
        )
    artifacts = [_write(store.dir / "estimates.json", _json_bytes(rows))]
    if fmt == "csv":
        lines = ["contest,cards,diluted_margin,risk_limit,estimate_zero_error,estimate_with_errors"]
        for r in rows:
            lines.append(
                f"{r['contest']},{r['cards']},{r['diluted_margin']:.6f},{r['risk_limit']},"
                f"{r['estimate_zero_error']},{r['estimate_with_errors']}"
            )
        artifacts.append(_write(store.dir / "estimates.csv", "\n".join(lines) + "\n"))
        click.echo("\n".join(lines))
    elif fmt == "structured":
        click.echo(_json_bytes(rows), nl=False)
    else:
        header = f"{'contest':<24}{'cards':>10}{'margin':>10}{'zero-err':>10}{'w/errors':>10}"
        click.echo(header)
        for r in rows:
            click.echo(
                f"{r['contest']:<24}{r['cards']:>10}{r['diluted_margin']:>10.4f}"
                f"{r['estimate_zero_error']:>10}{r['estimate_with_errors']:>10}"
            )
    _result(EXIT_OK, artifacts)


@cli.command("sample")
@click.option("--state-dir", default=None)
@click.option("--round", "round_index", type=int, default=None)
@click.option("--seed", default=None, help="dice-ceremony seed; fixes sample numbers for round 1")
def cmd_sample(state_dir, round_index, seed):
    """Plan the next round and write the card retrieval list."""
    store = StateStore(_state_dir(state_dir))
    with _Lock(store.dir):
        state = store.load()
        if not state.checked:
            raise EngineError("run `check` before `sample`")
        expected = len(state.rounds) + 1
        if round_index is not None and round_index != expected:
            raise EngineError(f"next round is {expected}, not {round_index}")
        if seed is not None and seed != state.spec.seed:
            if state.rounds:
                raise EngineError("cannot change the seed after sampling has begun")
            engine.reseed(state, seed)
        plan = engine.next_round(state)
        rlist = retrieval_list(plan.selected, state.cards, state.manifest)
        name = f"retrieval-round-{plan.round}.csv"
        artifact = _write(store.dir / name, rlist.to_csv())
        store.save(state, {"type": "plan", "seed": state.spec.seed})
    click.echo(
        f"round {plan.round}: targets {json.dumps(dict(sorted(plan.targets.items())))}, "
        f"{len(plan.selected)} cards selected "
        f"({plan.estimated_total:.1f} expected), list in {artifact}"
    )
    _result(EXIT_OK, [artifact])


@cli.command("import-mvrs")
@click.option("--state-dir", default=None)
@click.option("--file", "mvr_path", required=True, type=click.Path(exists=True))
def cmd_import_mvrs(state_dir, mvr_path):
    """Import a file of manual vote records for the retrieved cards."""
    store = StateStore(_state_dir(state_dir))
    with _Lock(store.dir):
        state = store.load()
        digest = file_digest(mvr_path)
        if digest in state.applied_payloads:
            raise EngineError(f"{mvr_path} already applied (digest {digest[:12]})")
        records, report = parse_mvrs(mvr_path)
        outcome = engine.import_mvrs(state, records)
        state.applied_payloads.append(digest)
        engine.advance(state, close=False)
        store.save(
            state,
            {
                "type": "import_mvrs",
                "digest": digest,
                "records": [engine._card_to_dict(r) for r in records],
            },
        )
    for cid in outcome["unknown"]:
        click.echo(f"warning: MVR for unknown card {cid} ignored")
    for cid in outcome["unselected"]:
        click.echo(f"warning: MVR for unselected card {cid} ignored")
    click.echo(f"imported {len(outcome['accepted'])} MVR(s) from {mvr_path}")
    if not outcome["accepted"] and records:
        _result(EXIT_VALIDATION, [])
    _result(EXIT_OK, [])


@cli.command("measure")
@click.option("--state-dir", default=None)
def cmd_measure(state_dir):
    """Score the round: consume all selected draws, missing cards worst-case."""
    store = StateStore(_state_dir(state_dir))
    with _Lock(store.dir):
        state = store.load()
        if not state.rounds:
            raise EngineError("no round planned; run `sample` first")
        fed = engine.advance(state, close=True)
        finished = engine.finalize_hand_counts(state)
        if fed or finished:
            store.save(state, {"type": "measure"})
        plan = state.current_plan()
        artifact = _write(
            store.dir / f"measure-round-{plan.round}.json",
            _json_bytes(
                {
                    "round": plan.round,
                    "draws_consumed": {k: len(v) for k, v in sorted(state.consumed.items())},
                    "assertions": [
                        {
                            "contest": a.contest_id,
                            "claim": a.spec.describe(),
                            "p_value": a.p_value,
                            "status": a.status,
                        }
                        for a in state.assertions
                    ],
                    "contests": {c.id: c.status for c in state.contests},
                }
            ),
        )
    for c in state.contests:
        click.echo(f"{c.id}: {c.status}")
    _result(EXIT_OK, [artifact])


@cli.command("escalate")
@click.argument("contest_id")
@click.option("--state-dir", default=None)
def cmd_escalate(contest_id, state_dir):
    """Take a contest to a full hand count."""
    store = StateStore(_state_dir(state_dir))
    with _Lock(store.dir):
        state = store.load()
        engine.escalate(state, contest_id)
        store.save(state, {"type": "escalate", "contest": contest_id})
    click.echo(f"contest {contest_id} escalated to full hand count")
    _result(EXIT_OK, [])


@cli.command("report")
@click.option("--state-dir", default=None)
@click.option("--threshold", type=float, default=None, help="omit margins at or below this")
@click.option("--format", "fmt", type=click.Choice(["table", "csv", "structured"]), default="table")
def cmd_report(state_dir, threshold, fmt):
    """Emit the audit report."""
    store = StateStore(_state_dir(state_dir))
    state = store.load()
    doc = engine.report(state, recount_threshold=threshold)
    artifacts = [_write(store.dir / "report.json", _json_bytes(doc))]
    if fmt == "structured":
        click.echo(_json_bytes(doc), nl=False)
    elif fmt == "csv":
        lines = ["contest,cards,diluted_margin,status,estimated_sample,cards_sampled,max_p_value"]
        for c in doc["contests"]:
            margin = "" if c["diluted_margin"] is None else f"{c['diluted_margin']:.6f}"
            p = max((a["p_value"] for a in c["assertions"]), default="")
            lines.append(
                f"{c['id']},{c['cards']},{margin},{c['status']},"
                f"{c['estimated_sample']},{c['cards_sampled']},{p}"
            )
        artifacts.append(_write(store.dir / "report.csv", "\n".join(lines) + "\n"))
        click.echo("\n".join(lines))
    else:
        for c in doc["contests"]:
            margin = "?" if c["diluted_margin"] is None else f"{c['diluted_margin']:.4f}"
            flip = " (outcome replaced)" if c["outcome_replaced"] else ""
            click.echo(
                f"{c['id']:<24} cards={c['cards']:<9} margin={margin:<8} "
                f"status={c['status']}{flip}"
            )
        if "totals_excluding_recounts" in doc:
            click.echo(
                f"estimated cards, all contests: {doc['totals']['estimated_cards']:.1f}; "
                f"omitting margins <= {doc['recount_threshold']}: "
                f"{doc['totals_excluding_recounts']['estimated_cards']:.1f}"
            )
    _result(EXIT_OK, artifacts)


@cli.command("serve")
@click.option("--state-dir", default=None)
@click.option("--port", type=int, default=8700)
@click.option("--token", default=None, help="bearer token for mutating routes")
def cmd_serve(state_dir, port, token):
    """Serve the HTTP API for the operator dashboard."""
    from .server import ApiSession, serve

    session = ApiSession(state_dir=str(_state_dir(state_dir)), port=port, auth_token=token or "")
    serve(session)
    _result(EXIT_OK, [])


class _Done(Exception):
    def __init__(self, result: CommandResult):
        self.result = result


def _result(code: int, artifacts: list[str], message: str = ""):
    raise _Done(CommandResult(exit_code=code, artifacts=artifacts, message=message))


def execute(argv: list[str]) -> CommandResult:
    """Run one CLI invocation and report its exit code and artifacts."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return CommandResult(EXIT_OK)
    except _Done as done:
        for line in done.result.message.splitlines():
            click.echo(line)
        return done.result
    except click.UsageError as e:
        click.echo(f"usage error: {e.format_message()}", err=True)
        return CommandResult(EXIT_RUNTIME)
    except click.ClickException as e:
        click.echo(f"error: {e.format_message()}", err=True)
        return CommandResult(EXIT_RUNTIME)
    except (EngineError, IngestError, SamplingError, ConfigError) as e:
        click.echo(f"error: {e}", err=True)
        return CommandResult(EXIT_VALIDATION)
    except (OSError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        return CommandResult(EXIT_RUNTIME)


def main():
    sys.exit(execute(sys.argv[1:]).exit_code)


if __name__ == "__main__":
    main()
