"""
HTTP API for the operator dashboard.

One process serves one audit (one state directory).  Reads are open;
mutations require the bearer token and are serialized through a single
non-blocking lock — a second concurrent mutation gets 409 rather than
interleaving.  Every mutation appends to the same event log the CLI uses,
so the dashboard and the command line are two views of one audit.

Responses are JSON with sorted keys; GET /api/report is byte-identical to
`cardaudit report --format structured`.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from . import engine
from .engine import EngineError, StateStore
from .ingest import IngestError, records_from_json
from .sampling import retrieval_list


@dataclass
class ApiSession:
    state_dir: str
    port: int = 8700
    auth_token: str = ""
    host: str = "127.0.0.1"


class ApiError(Exception):
    def __init__(self, status: int, payload: dict):
        self.status = status
        self.payload = payload


class AuditApi:
    """Route handlers over one in-memory audit state."""

    def __init__(self, session: ApiSession):
        self.session = session
        self.store = StateStore(session.state_dir)
        self.state = self.store.load()
        self.mutation_lock = threading.Lock()

    # -- helpers

    def _authorized(self, headers) -> bool:
        if not self.session.auth_token:
            return True
        auth = headers.get("Authorization", "")
        return auth == f"Bearer {self.session.auth_token}"

    def _mutate(self, fn):
        if not self.mutation_lock.acquire(blocking=False):
            raise ApiError(409, {"error": "another change is in progress"})
        try:
            return fn()
        finally:
            self.mutation_lock.release()

    # -- routes

    def get_state(self) -> dict:
        s = self.state
        plan = s.current_plan()
        return {
            "checked": s.checked,
            "round": plan.round if plan else 0,
            "contests": {c.id: c.status for c in s.contests},
            "cards": len([c for c in s.cards if not c.phantom]),
            "selected": len(s.selected()),
            "mvrs_entered": len(s.mvrs),
            "warnings": s.warnings,
        }

    def get_contests(self) -> list[dict]:
        out = []
        for c in self.state.contests:
            assertions = self.state.contest_assertions(c.id)
            margin = engine.contest_margin(assertions) if assertions else None
            projected = None
            if c.status == "active" and assertions:
                em = engine._observed_error_model(self.state, c)
                projected = max(
                    engine.risk.project_additional_draws(
                        a.tracker, a.margin, a.spec.upper_bound, c.risk_limit, em
                    )
                    for a in self.state.open_assertions(c.id)
                )
            out.append(
                {
                    "id": c.id,
                    "name": c.name,
                    "status": c.status,
                    "social_choice": c.social_choice,
                    "candidates": list(c.candidates),
                    "n_winners": c.n_winners,
                    "reported_winners": list(c.reported_winners),
                    "cards": c.cards_upper_bound,
                    "risk_limit": c.risk_limit,
                    "diluted_margin": None if margin != margin else margin,
                    "cards_consumed": len(self.state.consumed.get(c.id, [])),
                    "projected_remaining": projected,
                }
            )
        return out

    def get_assertions(self) -> list[dict]:
        return [
            {
                "contest": a.contest_id,
                "claim": a.spec.describe(),
                "kind": a.spec.kind,
                "margin": a.margin,
                "p_value": a.p_value,
                "status": a.status,
                "risk_limit": self.state.contest(a.contest_id).risk_limit,
            }
            for a in self.state.assertions
        ]

    def post_rounds(self, body: dict) -> dict:
        overrides = body.get("targets") if isinstance(body, dict) else None
        if overrides is not None and not (
            isinstance(overrides, dict)
            and all(isinstance(v, int) and v >= 0 for v in overrides.values())
        ):
            raise ApiError(400, {"error": "targets must map contest ids to counts"})

        def run():
            state = self.state
            try:
                plan = engine.next_round(state, target_overrides=overrides)
            except EngineError as e:
                raise ApiError(409, {"error": str(e)})
            event = {"type": "plan", "seed": state.spec.seed}
            if overrides:
                event["targets"] = overrides
            self.store.save(state, event)
            return {
                "round": plan.round,
                "targets": dict(sorted(plan.targets.items())),
                "selected": len(plan.selected),
                "newly_selected": sorted(plan.newly_selected),
                "estimated_total": plan.estimated_total,
            }

        return self._mutate(run)

    def get_retrieval_list(self, round_index: int) -> dict:
        state = self.state
        styles = {c.card_id: sorted(c.votes) for c in state.cards}
        for plan in state.rounds:
            if plan.round == round_index:
                rlist = retrieval_list(plan.selected, state.cards, state.manifest)
                return {
                    "round": round_index,
                    "entries": [
                        {
                            "card_id": e.card_id,
                            "container": e.container,
                            "tabulator": e.tabulator,
                            "batch": e.batch,
                            "position": e.position,
                            "contests": styles.get(e.card_id, []),
                            "entered": e.card_id in state.mvrs,
                        }
                        for e in rlist.entries
                    ],
                    "phantoms": list(rlist.phantoms),
                    "not_locatable": list(rlist.not_locatable),
                }
        raise ApiError(404, {"error": f"no round {round_index}"})

    def post_mvrs(self, body) -> dict:
        raw = body.get("records") if isinstance(body, dict) else body
        try:
            records = records_from_json(raw)
        except IngestError as e:
            raise ApiError(422, {"error": str(e), "unknown": [], "unselected": []})

        def run():
            state = self.state
            known = {c.card_id for c in state.cards}
            selected = state.selected()
            hand = {c.id for c in state.contests if c.status in ("hand_count", "finished")}
            by_id = {c.card_id: c for c in state.cards}
            unknown = [r.card_id for r in records if r.card_id not in known]
            unselected = [
                r.card_id
                for r in records
                if r.card_id in known
                and r.card_id not in selected
                and not (set(by_id[r.card_id].votes) & hand)
            ]
            if unknown or unselected:
                # all-or-nothing: a bad batch changes no state
                raise ApiError(
                    422,
                    {
                        "error": "records for cards not on the retrieval list",
                        "unknown": sorted(unknown),
                        "unselected": sorted(unselected),
                    },
                )
            outcome = engine.import_mvrs(state, records)
            engine.advance(state, close=False)
            engine.finalize_hand_counts(state)
            digest = hashlib.sha256(
                json.dumps([engine._card_to_dict(r) for r in records], sort_keys=True).encode()
            ).hexdigest()
            state.applied_payloads.append(digest)
            self.store.save(
                state,
                {
                    "type": "import_mvrs",
                    "digest": digest,
                    "records": [engine._card_to_dict(r) for r in records],
                },
            )
            return {
                "accepted": outcome["accepted"],
                "superseded": outcome["superseded"],
                "p_values": {
                    a.spec.describe(): a.p_value
                    for a in state.assertions
                    if a.contest_id in {cid for r in records for cid in r.votes}
                },
            }

        return self._mutate(run)

    def post_escalate(self, contest_id: str) -> dict:
        def run():
            try:
                engine.escalate(self.state, contest_id)
            except EngineError as e:
                raise ApiError(422, {"error": str(e)})
            self.store.save(self.state, {"type": "escalate", "contest": contest_id})
            return {"contest": contest_id, "status": "hand_count"}

        return self._mutate(run)

    def get_report(self, threshold: float | None) -> dict:
        return engine.report(self.state, recount_threshold=threshold)


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode()


def make_handler(api: AuditApi):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "cardaudit"

        def log_message(self, fmt, *args):  # quiet; the event log is the record
            pass

        def _send(self, status: int, payload) -> None:
            body = _json_bytes(payload)
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self._cors()
            self.end_headers()
            self.wfile.write(body)

        def _cors(self):
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Authorization, Content-Type")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")

        def _body(self):
            length = int(self.headers.get("Content-Length") or 0)
            data = self.rfile.read(length) if length else b""
            if not data:
                return {}
            try:
                return json.loads(data)
            except json.JSONDecodeError as e:
                raise ApiError(400, {"error": f"request body is not valid JSON: {e}"})

        def do_OPTIONS(self):
            self.send_response(204)
            self._cors()
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            query = parse_qs(url.query)
            try:
                if parts == ["api", "state"]:
                    self._send(200, api.get_state())
                elif parts == ["api", "contests"]:
                    self._send(200, api.get_contests())
                elif parts == ["api", "assertions"]:
                    self._send(200, api.get_assertions())
                elif len(parts) == 4 and parts[:2] == ["api", "rounds"] and parts[3] == "retrieval-list":
                    self._send(200, api.get_retrieval_list(int(parts[2])))
                elif parts == ["api", "report"]:
                    threshold = None
                    if "threshold" in query:
                        threshold = float(query["threshold"][0])
                    self._send(200, api.get_report(threshold))
                else:
                    self._send(404, {"error": f"no route {url.path}"})
            except ApiError as e:
                self._send(e.status, e.payload)
            except ValueError as e:
                self._send(400, {"error": str(e)})

        def do_POST(self):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            try:
                if not api._authorized(self.headers):
                    self._send(401, {"error": "missing or invalid bearer token"})
                    return
                body = self._body()
                if parts == ["api", "rounds"]:
                    self._send(200, api.post_rounds(body))
                elif parts == ["api", "mvrs"]:
                    self._send(200, api.post_mvrs(body))
                elif len(parts) == 4 and parts[:2] == ["api", "contests"] and parts[3] == "escalate":
                    self._send(200, api.post_escalate(parts[2]))
                else:
                    self._send(404, {"error": f"no route {url.path}"})
            except ApiError as e:
                self._send(e.status, e.payload)
            except (EngineError, IngestError) as e:
                self._send(422, {"error": str(e)})
            except ValueError as e:
                self._send(400, {"error": str(e)})

    return Handler


def make_server(session: ApiSession) -> ThreadingHTTPServer:
    api = AuditApi(session)
    server = ThreadingHTTPServer((session.host, session.port), make_handler(api))
    server.api = api
    return server


def serve(session: ApiSession):
    server = make_server(session)
    print(f"serving audit {session.state_dir} on http://{session.host}:{session.port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
