"""Minimal HTTP session service for live experiment advising and simulation.

Endpoints (HTTP/1.1, UTF-8 JSON bodies, versioned under /v1):

* ``POST /v1/sessions``                 create a session, get stage 1
* ``GET  /v1/sessions/{id}``            full read-only snapshot
* ``POST /v1/sessions/{id}/stages``     submit a stage's observations
* ``POST /v1/sessions/{id}/preview``    what-if decision, never mutates
* ``POST /v1/simulations``              batch/compare runs (sync for n <= 1e4,
                                        job handle above that)
* ``GET  /v1/simulations/{job_id}``     poll an async simulation job

The service adds no decision logic: every transition goes through the
designs module, so replaying a session's audit log through that module
reproduces its state exactly.  Sessions persist as one JSON file each in an
embedded file store; mutation per session is serialized by a lock, and a
duplicate submit (same payload digest) replays the original response.

Error bodies are ``{code, message, detail}``.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from . import data as data_mod
from .designs import (
    DesignConfig,
    advance,
    finalize,
    half_half_config,
    init_design,
    multi_stage_config,
    preview_init,
    preview_next,
    state_from_snapshot,
    state_to_snapshot,
    two_stage_config,
)
from .errors import (
    CountMismatch,
    InfeasibleConfig,
    NeymanError,
    WrongStage,
)
from .montecarlo import compare_designs, population_from_json_dict, run_batch
from .tuning import full_betas, geometric_schedule, multi_stage_log_schedule

__all__ = ["SessionStore", "NeymanService", "make_server", "serve"]

SYNC_SIM_LIMIT = 10_000


def config_from_request(obj: dict) -> DesignConfig:
    """Build a DesignConfig from a create-session payload.

    Accepts {T, M} plus either a beta (M=2), an explicit betas list, or a
    named schedule ("geometric" or "multi_stage_log" with C).
    """
    T = int(obj["T"])
    M = int(obj.get("M", 2))
    min_arm_obs = int(obj.get("min_arm_obs", 2))
    kind = obj.get("design")
    if kind is None:
        kind = {1: "half_half", 2: "two_stage"}.get(M, "multi_stage")
    if kind == "half_half":
        return half_half_config(T)
    if kind == "two_stage":
        return two_stage_config(T, float(obj.get("beta", 1.0)), min_arm_obs)
    if kind != "multi_stage":
        raise ValueError(f"unknown design kind {kind!r}")
    if "betas" in obj:
        betas = full_betas(tuple(float(b) for b in obj["betas"]), M)
    else:
        name = obj.get("schedule", "geometric")
        if name == "geometric":
            betas = geometric_schedule(M).betas
        elif name == "multi_stage_log":
            betas = multi_stage_log_schedule(M, T, float(obj.get("C", 1.0))).betas
        else:
            raise ValueError(f"unknown schedule {name!r}")
    return multi_stage_config(T, M, betas, min_arm_obs)


def _population_from_request(obj: dict):
    if obj.get("kind") == "table1":
        return data_mod.table1_population(
            int(obj.get("n_per_arm", 40)), int(obj.get("seed", 0))
        )
    return population_from_json_dict(obj)


def _design_from_request(obj: dict) -> DesignConfig:
    if "kind" in obj and "betas" in obj:
        return DesignConfig.from_json_dict(obj)
    return config_from_request(obj)


class Session:
    """One experiment session: design state plus an append-only audit log."""

    __slots__ = ("id", "state", "created", "updated", "audit", "last_digest",
                 "last_response", "lock")

    def __init__(self, session_id: str, state, created: float | None = None):
        self.id = session_id
        self.state = state
        self.created = created if created is not None else time.time()
        self.updated = self.created
        self.audit: list[dict] = []
        self.last_digest: str | None = None
        self.last_response: dict | None = None
        self.lock = threading.Lock()

    def snapshot(self) -> dict:
        state = self.state
        totals = None
        tau_hat = None
        if state.done:
            alloc, tau = finalize(state)
            totals = {"t1": alloc.t1, "t0": alloc.t0}
            tau_hat = tau
        return {
            "session_id": self.id,
            "created": self.created,
            "updated": self.updated,
            "config": state.config.to_json_dict(),
            "pending": state.pending.to_json_dict() if state.pending else None,
            "case_path": list(state.case_path),
            "cumulative": {"t1": state.cumulative.t1, "t0": state.cumulative.t0},
            "sigma_history": [dict(h) for h in state.sigma_history],
            "stage_log": [a.to_json_dict() for a in state.stage_log],
            "frozen_arm": state.frozen_arm,
            "done": state.done,
            "totals": totals,
            "tau_hat": tau_hat,
            "audit": list(self.audit),
        }

    def to_json_dict(self) -> dict:
        return {
            "session_id": self.id,
            "created": self.created,
            "updated": self.updated,
            "state": state_to_snapshot(self.state),
            "audit": list(self.audit),
            "last_digest": self.last_digest,
            "last_response": self.last_response,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Session":
        session = cls(obj["session_id"], state_from_snapshot(obj["state"]), obj["created"])
        session.updated = obj.get("updated", session.created)
        session.audit = list(obj.get("audit", []))
        session.last_digest = obj.get("last_digest")
        session.last_response = obj.get("last_response")
        return session


class SessionStore:
    """Embedded one-JSON-file-per-session store with an in-memory cache."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._cache: dict[str, Session] = {}
        self._lock = threading.Lock()

    def _path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.json"

    def create(self, state) -> Session:
        session = Session(uuid.uuid4().hex, state)
        with self._lock:
            self._cache[session.id] = session
        self.persist(session)
        return session

    def get(self, session_id: str) -> Session | None:
        with self._lock:
            if session_id in self._cache:
                return self._cache[session_id]
        path = self._path(session_id)
        if not path.exists():
            return None
        session = Session.from_json_dict(json.loads(path.read_text()))
        with self._lock:
            return self._cache.setdefault(session_id, session)

    def persist(self, session: Session) -> None:
        session.updated = time.time()
        tmp = self._path(session.id).with_suffix(".tmp")
        tmp.write_text(json.dumps(session.to_json_dict(), sort_keys=True))
        tmp.replace(self._path(session.id))


def _payload_digest(obj: dict) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


class NeymanService:
    """Transport-independent request handlers; the HTTP layer is a shim."""

    def __init__(self, state_dir: str | Path, sim_workers: int = 1):
        self.store = SessionStore(state_dir)
        self.sim_workers = sim_workers
        self.jobs: dict[str, dict] = {}
        self._jobs_lock = threading.Lock()

    # -- sessions ---------------------------------------------------------

    def create_session(self, body: dict) -> tuple[int, dict]:
        try:
            config = config_from_request(body)
            state, alloc = init_design(config)
        except InfeasibleConfig as exc:
            return 400, _error("InfeasibleConfig", str(exc))
        except (KeyError, ValueError, TypeError, NeymanError) as exc:
            return 400, _error("BadRequest", str(exc))
        session = self.store.create(state)
        return 200, {
            "session_id": session.id,
            "stage": alloc.to_json_dict(),
            "case_label": alloc.case_label,
            "config": config.to_json_dict(),
        }

    def get_session(self, session_id: str) -> tuple[int, dict]:
        session = self.store.get(session_id)
        if session is None:
            return 404, _error("NotFound", f"no session {session_id}")
        return 200, session.snapshot()

    def submit_stage(self, session_id: str, body: dict) -> tuple[int, dict]:
        session = self.store.get(session_id)
        if session is None:
            return 404, _error("NotFound", f"no session {session_id}")
        digest = _payload_digest(body)
        with session.lock:
            if digest == session.last_digest and session.last_response is not None:
                return 200, session.last_response
            state = session.state
            pending = state.pending
            if pending is None or state.done:
                return 409, _error("WrongStage", "session is not awaiting observations")
            treated = body.get("treated", [])
            control = body.get("control", [])
            try:
                advance(state, treated, control)
            except CountMismatch as exc:
                return 422, _error("CountMismatch", str(exc))
            except WrongStage as exc:
                return 409, _error("WrongStage", str(exc))
            except (ValueError, TypeError, NeymanError) as exc:
                return 400, _error("BadRequest", str(exc))

            session.audit.append(
                {
                    "stage": pending.stage_index,
                    "allocation": {"t1": pending.t1, "t0": pending.t0},
                    "digest": digest,
                }
            )
            latest = state.sigma_history[-1] if state.sigma_history else None
            response: dict = {
                "session_id": session.id,
                "stage": state.pending.to_json_dict() if state.pending else None,
                "case_path": list(state.case_path),
                "case_label": state.case_path[-1],
                "sigma_hat": None
                if latest is None
                else {"treated": latest["sigma1_hat"], "control": latest["sigma0_hat"]},
                "shares": None
                if latest is None
                else {"treated": latest["share1"], "control": latest["share0"]},
                "frozen_arm": state.frozen_arm,
                "done": state.done,
            }
            if state.done:
                totals, tau_hat = finalize(state)
                response["totals"] = {"t1": totals.t1, "t0": totals.t0}
                response["tau_hat"] = tau_hat
            session.last_digest = digest
            session.last_response = response
            self.store.persist(session)
            return 200, response

    def preview(self, session_id: str, body: dict) -> tuple[int, dict]:
        session = self.store.get(session_id)
        if session is None:
            return 404, _error("NotFound", f"no session {session_id}")
        try:
            if "config" in body:
                return 200, preview_init(config_from_request(body["config"]))
            with session.lock:
                if "sigma_hat" in body:
                    pair = body["sigma_hat"]
                    sigma = (float(pair["treated"]), float(pair["control"]))
                    if body.get("swap_arms"):
                        sigma = (sigma[1], sigma[0])
                    result = preview_next(session.state, sigma_hat=sigma)
                elif body.get("swap_arms"):
                    result = preview_next(
                        session.state,
                        draft_obs1=body.get("control", []),
                        draft_obs0=body.get("treated", []),
                    )
                else:
                    result = preview_next(
                        session.state,
                        draft_obs1=body.get("treated", []),
                        draft_obs0=body.get("control", []),
                    )
            return 200, result
        except CountMismatch as exc:
            return 422, _error("CountMismatch", str(exc))
        except WrongStage as exc:
            return 409, _error("WrongStage", str(exc))
        except (KeyError, ValueError, TypeError, NeymanError) as exc:
            return 400, _error("BadRequest", str(exc))

    # -- simulations ------------------------------------------------------

    def _run_simulation(self, body: dict) -> dict:
        pop = _population_from_request(body["pop"])
        master_seed = int(body.get("master_seed", 0))
        n = int(body["n"])
        if n < 1:
            raise ValueError(f"n must be positive, got {n}")
        if "designs" in body:
            designs = [_design_from_request(d) for d in body["designs"]]
            table = compare_designs(designs, pop, master_seed, n, self.sim_workers)
            return {
                "kind": "compare",
                "n": n,
                "master_seed": master_seed,
                "pop": pop.label(),
                "results": [s.to_json_dict() for s in table.values()],
            }
        design = _design_from_request(body["design"])
        summary = run_batch(design, pop, master_seed, n, self.sim_workers)
        return {
            "kind": "batch",
            "n": n,
            "master_seed": master_seed,
            "pop": pop.label(),
            "result": summary.to_json_dict(),
        }

    def run_simulation(self, body: dict) -> tuple[int, dict]:
        try:
            n = int(body.get("n", 0))
            if n <= SYNC_SIM_LIMIT:
                return 200, self._run_simulation(body)
        except (KeyError, ValueError, TypeError, NeymanError) as exc:
            return 400, _error("BadRequest", str(exc))

        job_id = uuid.uuid4().hex
        with self._jobs_lock:
            self.jobs[job_id] = {"status": "running"}

        def work() -> None:
            try:
                result = self._run_simulation(body)
                with self._jobs_lock:
                    self.jobs[job_id] = {"status": "done", "result": result}
            except Exception as exc:  # job errors surface on poll
                with self._jobs_lock:
                    self.jobs[job_id] = {"status": "error", "message": str(exc)}

        threading.Thread(target=work, daemon=True).start()
        return 202, {"job_id": job_id, "status": "running"}

    def get_job(self, job_id: str) -> tuple[int, dict]:
        with self._jobs_lock:
            job = self.jobs.get(job_id)
        if job is None:
            return 404, _error("NotFound", f"no job {job_id}")
        return 200, {"job_id": job_id, **job}


def _error(code: str, message: str, detail: str | None = None) -> dict:
    return {"code": code, "message": message, "detail": detail}


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def service(self) -> NeymanService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status: int, body: dict) -> None:
        payload = json.dumps(body, sort_keys=True).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(payload)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(payload)

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b"{}"
        try:
            obj = json.loads(raw.decode("utf-8") or "{}")
        except json.JSONDecodeError as exc:
            raise ValueError(f"invalid JSON body: {exc}") from None
        if not isinstance(obj, dict):
            raise ValueError("request body must be a JSON object")
        return obj

    def do_OPTIONS(self):  # CORS preflight for the browser console
        self._send(204, {})

    def do_GET(self):
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        if len(parts) == 3 and parts[:2] == ["v1", "sessions"]:
            self._send(*self.service.get_session(parts[2]))
        elif len(parts) == 3 and parts[:2] == ["v1", "simulations"]:
            self._send(*self.service.get_job(parts[2]))
        else:
            self._send(404, _error("NotFound", f"no route {self.path}"))

    def do_POST(self):
        try:
            body = self._body()
        except ValueError as exc:
            self._send(400, _error("BadRequest", str(exc)))
            return
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        if parts == ["v1", "sessions"]:
            self._send(*self.service.create_session(body))
        elif len(parts) == 4 and parts[:2] == ["v1", "sessions"] and parts[3] == "stages":
            self._send(*self.service.submit_stage(parts[2], body))
        elif len(parts) == 4 and parts[:2] == ["v1", "sessions"] and parts[3] == "preview":
            self._send(*self.service.preview(parts[2], body))
        elif parts == ["v1", "simulations"]:
            self._send(*self.service.run_simulation(body))
        else:
            self._send(404, _error("NotFound", f"no route {self.path}"))


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True


def make_server(port: int, state_dir: str | Path, sim_workers: int = 1) -> _Server:
    server = _Server(("127.0.0.1", port), _Handler)
    server.service = NeymanService(state_dir, sim_workers)  # type: ignore[attr-defined]
    return server


def serve(port: int, state_dir: str | Path, sim_workers: int = 1) -> None:
    server = make_server(port, state_dir, sim_workers)
    host, bound_port = server.server_address
    print(f"listening on http://{host}:{bound_port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
