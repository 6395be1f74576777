"""HTTP prediction service over a loaded model bundle.

Routes:
    POST /v1/predict  {line_name, next_stop_name, distance_from_stop, timestamp}
                      -> 200 {trip_time_seconds, predicted_arrival,
                              model_version, clamped}
                      -> 400 malformed JSON or missing/invalid fields
                      -> 422 unknown line or out-of-domain values
    GET  /v1/health   -> 200 {status, model_version}

The bundle is immutable and shared read-only across handler threads; a new
bundle can be hot-swapped as a single attribute assignment between requests.
"""

from __future__ import annotations

import json
import logging
from datetime import datetime, timedelta
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import UnknownLineError
from .model_store import ModelBundle
from .neuralnet import predict

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ("line_name", "next_stop_name", "distance_from_stop", "timestamp")


class RequestProblem(Exception):
    def __init__(self, status: int, payload: dict):
        super().__init__(payload.get("error", ""))
        self.status = status
        self.payload = payload


def parse_predict_request(payload) -> tuple[str, str, float, datetime]:
    if not isinstance(payload, dict):
        raise RequestProblem(400, {"error": "request body must be a JSON object"})
    missing = [f for f in REQUIRED_FIELDS if f not in payload]
    if missing:
        raise RequestProblem(400, {"error": f"missing fields: {missing}"})
    line = payload["line_name"]
    stop = payload["next_stop_name"]
    if not isinstance(line, str) or not line:
        raise RequestProblem(400, {"error": "line_name must be a non-empty string"})
    if not isinstance(stop, str) or not stop:
        raise RequestProblem(400, {"error": "next_stop_name must be a non-empty string"})
    distance = payload["distance_from_stop"]
    if isinstance(distance, bool) or not isinstance(distance, (int, float)):
        raise RequestProblem(400, {"error": "distance_from_stop must be a number"})
    if distance < 0:
        raise RequestProblem(
            422, {"error": "distance_from_stop must be non-negative",
                  "distance_from_stop": distance}
        )
    if not isinstance(payload["timestamp"], str):
        raise RequestProblem(400, {"error": "timestamp must be an ISO timestamp string"})
    try:
        timestamp = datetime.fromisoformat(payload["timestamp"])
    except ValueError:
        raise RequestProblem(
            400, {"error": f"unparseable timestamp: {payload['timestamp']!r}"}
        ) from None
    return line, stop, float(distance), timestamp


def predict_trip(bundle: ModelBundle, line: str, stop: str, distance: float,
                 timestamp: datetime) -> dict:
    """Run one prediction; negative raw outputs clamp to zero with a flag.

    The reported trip time is quantized to microseconds so that
    ``predicted_arrival - timestamp`` equals it exactly.
    """
    try:
        x = bundle.pipeline.encode_request(line, stop, distance, timestamp)
    except UnknownLineError as exc:
        raise RequestProblem(
            422, {"error": "unknown line", "line_name": exc.line_name}
        ) from None
    raw = float(predict(bundle.network, x.reshape(1, -1))[0])
    clamped = raw < 0
    micros = max(0, round(raw * 1e6))
    arrival = timestamp + timedelta(microseconds=micros)
    return {
        "trip_time_seconds": micros / 1e6,
        "predicted_arrival": arrival.isoformat(sep=" "),
        "model_version": str(bundle.metadata.get("model_version", "unknown")),
        "clamped": clamped,
    }


class PredictionHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # route through logging, stay quiet by default
        logger.debug("%s - %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/v1/health":
            bundle = self.server.bundle  # type: ignore[attr-defined]
            version = str(bundle.metadata.get("model_version", "unknown"))
            self._send_json(200, {"status": "ok", "model_version": version})
        else:
            self._send_json(404, {"error": f"no such path: {self.path}"})

    def do_POST(self):
        if self.path != "/v1/predict":
            self._send_json(404, {"error": f"no such path: {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            self._send_json(400, {"error": "invalid Content-Length"})
            return
        body = self.rfile.read(length)
        try:
            payload = json.loads(body)
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._send_json(400, {"error": "malformed JSON"})
            return
        try:
            line, stop, distance, timestamp = parse_predict_request(payload)
            response = predict_trip(
                self.server.bundle, line, stop, distance, timestamp  # type: ignore[attr-defined]
            )
        except RequestProblem as problem:
            self._send_json(problem.status, problem.payload)
            return
        self._send_json(200, response)


class PredictionServer(ThreadingHTTPServer):
    """Threaded HTTP server holding an immutable, hot-swappable bundle."""

    daemon_threads = True

    def __init__(self, address: tuple[str, int], bundle: ModelBundle):
        super().__init__(address, PredictionHandler)
        self.bundle = bundle

    def swap_bundle(self, bundle: ModelBundle) -> None:
        self.bundle = bundle


def serve(bundle: ModelBundle, host: str = "127.0.0.1", port: int = 8340) -> None:
    """Run the prediction service until interrupted."""
    server = PredictionServer((host, port), bundle)
    logger.info("serving on %s:%d", *server.server_address[:2])
    try:
        server.serve_forever()
    finally:
        server.server_close()
