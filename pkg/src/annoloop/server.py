"""Local HTTP API for live conflict resolution.

Endpoints (JSON bodies mirror the file formats):

    GET  /api/state        iteration, conflict counts, schema
    GET  /api/conflicts    documents that carry conflicts, plus current resolutions
    POST /api/resolutions  list of resolution records; idempotent per conflict_id,
                           last write wins until the resolutions are applied
    GET  /api/doc/<id>     one document record

Anything outside /api is served from an optional static directory so a
built frontend can live on the same port. Readers always see a consistent
snapshot; writes are serialized through one lock and persisted atomically.
"""

from __future__ import annotations

import json
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Mapping
from urllib.parse import unquote, urlparse

from .errors import LoopError
from .merge import Resolution, conflict_to_dict, resolution_from_dict, resolution_to_dict
from .model import document_to_dict, payload_to_dict, schema_to_dict
from .store import ProjectStore


class ResolveSession:
    """One iteration's conflicts and the resolutions gathered so far."""

    def __init__(self, store: ProjectStore, iteration: int):
        self.store = store
        self.iteration = iteration
        self.state = store.read_state()
        self.docs = store.read_docs()
        self.merged = store.read_merges(iteration)
        self.conflicts = {c.conflict_id: c for md in self.merged for c in md.conflicts}
        self.resolutions: dict[str, Resolution] = {
            r.conflict_id: r for r in store.read_resolutions(iteration) if r.conflict_id in self.conflicts
        }
        self._lock = threading.Lock()

    def state_payload(self) -> dict[str, Any]:
        with self._lock:
            resolved = len(self.resolutions)
        total = len(self.conflicts)
        return {
            "iteration": self.iteration,
            "schema": schema_to_dict(self.state.manifest.schema),
            "total_conflicts": total,
            "resolved": resolved,
            "pending": total - resolved,
            "complete": resolved == total,
        }

    def conflicts_payload(self) -> dict[str, Any]:
        documents = []
        for md in self.merged:
            if not md.conflicts:
                continue
            doc = self.docs.get(md.doc_id)
            if doc is None:
                raise LoopError("unknown-doc", f"merged document {md.doc_id!r} not in the pool")
            entry: dict[str, Any] = {
                "doc_id": md.doc_id,
                "text": doc.text,
                "agreed": [payload_to_dict(p) for p in md.agreed],
                "conflicts": [conflict_to_dict(c) for c in md.conflicts],
            }
            if doc.text_b is not None:
                entry["text_b"] = doc.text_b
            documents.append(entry)
        with self._lock:
            resolutions = [resolution_to_dict(r) for r in self.resolutions.values()]
        resolutions.sort(key=lambda r: r["conflict_id"])
        return {"iteration": self.iteration, "documents": documents, "resolutions": resolutions}

    def submit(self, body: Any) -> dict[str, Any]:
        if not isinstance(body, list):
            raise LoopError("bad-record", "request body must be a JSON list of resolutions")
        accepted: list[Resolution] = []
        rejected: list[dict[str, str]] = []
        for record in body:
            cid = record.get("conflict_id", "") if isinstance(record, Mapping) else ""
            try:
                res = resolution_from_dict(record)
                if res.conflict_id not in self.conflicts:
                    raise LoopError("unknown-conflict", f"unknown conflict {res.conflict_id!r}")
            except LoopError as err:
                rejected.append({"conflict_id": str(cid), "code": err.code, "message": err.message})
                continue
            accepted.append(res)
        with self._lock:
            for res in accepted:
                self.resolutions[res.conflict_id] = res
            ordered = [self.resolutions[cid] for cid in sorted(self.resolutions)]
            self.store.write_resolutions(self.iteration, ordered)
            resolved = len(self.resolutions)
        return {
            "accepted": len(accepted),
            "rejected": rejected,
            "resolved": resolved,
            "total": len(self.conflicts),
        }


class _Handler(BaseHTTPRequestHandler):
    server: "ResolveServer"

    def log_message(self, format: str, *args: Any) -> None:
        pass  # keep CLI output to the command's own lines

    def _send(self, status: int, payload: Any) -> None:
        body = json.dumps(payload, ensure_ascii=False, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        self.end_headers()
        self.wfile.write(body)

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _error(self, status: int, code: str, message: str) -> None:
        self._send(status, {"error": {"code": code, "message": message}})

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self._cors()
        self.end_headers()

    def do_GET(self) -> None:
        path = urlparse(self.path).path
        session = self.server.session
        try:
            if path == "/api/state":
                self._send(200, session.state_payload())
            elif path == "/api/conflicts":
                self._send(200, session.conflicts_payload())
            elif path.startswith("/api/doc/"):
                doc_id = unquote(path[len("/api/doc/"):])
                doc = session.docs.get(doc_id)
                if doc is None:
                    self._error(404, "unknown-doc", f"no document {doc_id!r}")
                else:
                    self._send(200, document_to_dict(doc))
            elif path.startswith("/api/"):
                self._error(404, "unknown-endpoint", f"no endpoint {path}")
            else:
                self._static(path)
        except LoopError as err:
            self._error(400, err.code, err.message)

    def do_POST(self) -> None:
        path = urlparse(self.path).path
        if path != "/api/resolutions":
            self._error(404, "unknown-endpoint", f"no endpoint {path}")
            return
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._error(400, "bad-record", "request body is not valid JSON")
            return
        try:
            self._send(200, self.server.session.submit(body))
        except LoopError as err:
            self._error(400, err.code, err.message)

    def _static(self, path: str) -> None:
        ui_dir = self.server.ui_dir
        if ui_dir is None:
            self._error(404, "no-ui", "no static directory configured; use the /api endpoints")
            return
        name = path.lstrip("/") or "index.html"
        target = (ui_dir / name).resolve()
        if not str(target).startswith(str(ui_dir.resolve())) or not target.is_file():
            self._error(404, "not-found", f"no file {name}")
            return
        data = target.read_bytes()
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self._cors()
        self.end_headers()
        self.wfile.write(data)


class ResolveServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], session: ResolveSession, ui_dir: Path | None = None):
        super().__init__(address, _Handler)
        self.session = session
        self.ui_dir = ui_dir


def create_server(
    store: ProjectStore, iteration: int, host: str = "127.0.0.1", port: int = 8765, ui_dir: Path | None = None
) -> ResolveServer:
    session = ResolveSession(store, iteration)
    return ResolveServer((host, port), session, ui_dir)
