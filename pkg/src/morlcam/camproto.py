"""Mock camera control plane.

One JSON object per newline-terminated UTF-8 line, over TCP::

    -> {"seq": 1, "op": "SET_PARAMS", "settings": [40, 90, 60, 100]}
    <- {"seq": 1, "status": "OK", "payload": {"effective_ms": 200.0}}

Ops are ``SET_PARAMS``, ``GET_PARAMS`` and ``GET_FRAME``. Any request may
carry ``wait_ms``, which lets that much (virtual) time pass before the op is
handled; this is how a client models its own compute time.

Latencies are charged on a clock. The default virtual clock makes every
timing assertion exact; the wall clock sleeps for real. Camera state is owned
by one executor task that drains an ordered queue, so concurrent connections
can never interleave state changes.
"""

from __future__ import annotations

import asyncio
import json
import math
import socket
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from .camsim import Observation, PhaseSpec, ScenarioConfig, capture, measure, scene_at
from .core import DEFAULT_SETTINGS, SETTING_MAX, SETTING_MIN, CameraSettings, FrameMeasurements

SET_PARAMS = "SET_PARAMS"
GET_PARAMS = "GET_PARAMS"
GET_FRAME = "GET_FRAME"
OPS = (SET_PARAMS, GET_PARAMS, GET_FRAME)
OK = "OK"
ERROR = "ERROR"
NO_SEQ = -1
MAX_LINE = 64 * 1024


class ProtocolError(ValueError):
    """A line that is not a valid message."""

    def __init__(self, message: str, seq: int = NO_SEQ):
        super().__init__(message)
        self.seq = seq


class TimingError(RuntimeError):
    """The remote camera did not reach the requested state in time."""


# -- messages and codec ------------------------------------------------------------

@dataclass(frozen=True)
class Request:
    seq: int
    op: str
    settings: CameraSettings | None = None
    wait_ms: float | None = None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"seq": self.seq, "op": self.op}
        if self.settings is not None:
            d["settings"] = list(self.settings.as_tuple())
        if self.wait_ms is not None:
            d["wait_ms"] = self.wait_ms
        return d


@dataclass(frozen=True)
class Response:
    seq: int
    status: str
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"seq": self.seq, "status": self.status, "payload": self.payload}

    @property
    def ok(self) -> bool:
        return self.status == OK

    @classmethod
    def error(cls, seq: int, message: str) -> "Response":
        return cls(seq, ERROR, {"error": message})


def _no_duplicates(pairs):
    obj = {}
    for k, v in pairs:
        if k in obj:
            raise ProtocolError(f"duplicate key {k!r}")
        obj[k] = v
    return obj


def _reject_constant(name):
    raise ProtocolError(f"non-finite number {name}")


def _load(line: bytes | str) -> dict:
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"invalid UTF-8: {exc}") from None
    if line.endswith("\n"):
        line = line[:-1]
    if not line.strip():
        raise ProtocolError("empty line")
    if "\n" in line:
        raise ProtocolError("embedded newline")
    try:
        obj = json.loads(line, object_pairs_hook=_no_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"bad JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("message must be a JSON object")
    return obj


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v) -> bool:
    return (_is_int(v) or isinstance(v, float)) and math.isfinite(v)


def _settings(v, seq: int) -> CameraSettings:
    if (not isinstance(v, list) or len(v) != 4
            or not all(_is_int(x) and SETTING_MIN <= x <= SETTING_MAX for x in v)):
        raise ProtocolError("settings must be 4 integers in [0, 100]", seq)
    return CameraSettings.of(v)


def encode(message: Request | Response) -> bytes:
    text = json.dumps(message.to_dict(), separators=(",", ":"), ensure_ascii=False, allow_nan=False)
    return (text + "\n").encode("utf-8")


def decode_request(line: bytes | str) -> Request:
    obj = _load(line)
    seq = obj.get("seq")
    if not _is_int(seq) or seq < 0:
        raise ProtocolError("seq must be a non-negative integer")
    extra = set(obj) - {"seq", "op", "settings", "wait_ms"}
    if extra:
        raise ProtocolError(f"unknown field(s) {sorted(extra)}", seq)
    op = obj.get("op")
    if op not in OPS:
        raise ProtocolError(f"unknown op {op!r}", seq)
    settings = None
    if op == SET_PARAMS:
        if "settings" not in obj:
            raise ProtocolError("SET_PARAMS needs settings", seq)
        settings = _settings(obj["settings"], seq)
    elif "settings" in obj:
        raise ProtocolError(f"{op} takes no settings", seq)
    wait = obj.get("wait_ms")
    if wait is not None and (not _is_number(wait) or wait < 0):
        raise ProtocolError("wait_ms must be a non-negative number", seq)
    return Request(seq, op, settings, wait)


def decode_response(line: bytes | str) -> Response:
    obj = _load(line)
    if set(obj) != {"seq", "status", "payload"}:
        raise ProtocolError("response needs exactly seq, status, payload")
    if not _is_int(obj["seq"]) or obj["status"] not in (OK, ERROR) or not isinstance(obj["payload"], dict):
        raise ProtocolError("malformed response")
    return Response(obj["seq"], obj["status"], obj["payload"])


# -- latency and clocks ------------------------------------------------------------

@dataclass(frozen=True)
class LatencyModel:
    set_params_ms: float = 200.0
    frame_upload_ms: float = 39.7
    estimator_ms: float = 48.0
    aggregate_ms: float = 1.0

    def __post_init__(self):
        for name in ("set_params_ms", "frame_upload_ms", "estimator_ms", "aggregate_ms"):
            v = getattr(self, name)
            if not _is_number(v) or v < 0:
                raise ValueError(f"{name} must be a finite number >= 0, got {v!r}")

    def control_step_ms(self, n_aus: int) -> float:
        """Minimum step period for one full control step with ``n_aus`` estimators."""
        return self.set_params_ms + self.frame_upload_ms + n_aus * self.estimator_ms + self.aggregate_ms

    @classmethod
    def load(cls, path) -> "LatencyModel":
        import yaml

        data = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(data, dict):
            raise ValueError("latency file must be a mapping")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown latency key(s) {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})


def _us(ms: float) -> int:
    return int(round(ms * 1000))


class VirtualClock:
    """Integer-microsecond clock that only moves when told to."""

    virtual = True

    def __init__(self, start_ms: float = 0.0):
        self._us = _us(start_ms)

    def now_ms(self) -> float:
        return self._us / 1000

    def now_us(self) -> int:
        return self._us

    def advance(self, ms: float) -> None:
        if ms < 0:
            raise ValueError("cannot move the clock backwards")
        self._us += _us(ms)


class WallClock:
    """Real time since construction; ``advance`` sleeps."""

    virtual = False

    def __init__(self):
        self._t0 = time.monotonic()

    def now_us(self) -> int:
        return int((time.monotonic() - self._t0) * 1e6)

    def now_ms(self) -> float:
        return self.now_us() / 1000

    def advance(self, ms: float) -> None:
        if ms < 0:
            raise ValueError("cannot move the clock backwards")
        time.sleep(ms / 1000)


# -- the camera ----------------------------------------------------------------------

class CameraDevice:
    """Simulated camera whose scene advances one step every ``step_period_ms``."""

    def __init__(self, scenario: ScenarioConfig, latency: LatencyModel | None = None,
                 clock: VirtualClock | WallClock | None = None, step_period_ms: float = 1000.0):
        if not step_period_ms > 0:
            raise ValueError("step_period_ms must be > 0")
        self.scenario = scenario
        self.latency = latency or LatencyModel()
        self.clock = clock or VirtualClock()
        self.step_period_us = _us(step_period_ms)
        self.settings = DEFAULT_SETTINGS
        self._pending: list[tuple[int, CameraSettings]] = []

    def _settle(self) -> None:
        now = self.clock.now_us()
        while self._pending and self._pending[0][0] <= now:
            self.settings = self._pending.pop(0)[1]

    def step_at(self, now_us: int) -> int:
        return now_us // self.step_period_us

    def handle(self, req: Request) -> Response:
        if req.wait_ms:
            self.clock.advance(req.wait_ms)
        self._settle()
        now = self.clock.now_us()
        if req.op == SET_PARAMS:
            effective = now + _us(self.latency.set_params_ms)
            # effective times are non-decreasing, so later writers always apply last
            self._pending.append((effective, req.settings))
            return Response(req.seq, OK, {"effective_ms": effective / 1000})
        if req.op == GET_PARAMS:
            return Response(req.seq, OK, {"settings": list(self.settings.as_tuple()), "timestamp_ms": now / 1000})
        if req.op == GET_FRAME:
            t = self.step_at(now)
            latent, phase = scene_at(self.scenario, t)
            m = measure(capture(latent, self.settings))
            payload = {
                "timestamp_ms": now / 1000,
                "step": t,
                "phase": phase.name,
                "ambient": phase.ambient,
                "settings": list(self.settings.as_tuple()),
                "measurements": [float(v) for v in m],
            }
            self.clock.advance(self.latency.frame_upload_ms)
            self._settle()
            return Response(req.seq, OK, payload)
        return Response.error(req.seq, f"unknown op {req.op!r}")


# -- server --------------------------------------------------------------------------

class CameraServer:
    """asyncio TCP front end; all camera access goes through one executor task."""

    def __init__(self, device: CameraDevice):
        self.device = device
        self._queue: asyncio.Queue | None = None
        self._executor: asyncio.Task | None = None
        self._server: asyncio.base_events.Server | None = None

    async def start(self, host: str = "127.0.0.1", port: int = 0) -> tuple[str, int]:
        self._queue = asyncio.Queue()
        self._executor = asyncio.create_task(self._execute())
        self._server = await asyncio.start_server(self._connection, host, port, limit=MAX_LINE)
        return self._server.sockets[0].getsockname()[:2]

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        if self._executor is not None:
            self._executor.cancel()
            try:
                await self._executor
            except asyncio.CancelledError:
                pass

    async def serve_forever(self) -> None:
        await self._server.serve_forever()

    async def _execute(self) -> None:
        loop = asyncio.get_running_loop()
        while True:
            req, fut = await self._queue.get()
            try:
                if self.device.clock.virtual:
                    resp = self.device.handle(req)
                else:
                    resp = await loop.run_in_executor(None, self.device.handle, req)
            except Exception as exc:  # keep the executor alive whatever happens
                resp = Response.error(req.seq, f"internal error: {exc}")
            if not fut.cancelled():
                fut.set_result(resp)

    async def submit(self, req: Request) -> Response:
        fut = asyncio.get_running_loop().create_future()
        await self._queue.put((req, fut))
        return await fut

    async def _connection(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        last_seq = NO_SEQ
        try:
            while True:
                try:
                    line = await reader.readline()
                except ValueError:
                    # over-long line; the reader has discarded it
                    resp = Response.error(NO_SEQ, f"line exceeds {MAX_LINE} bytes")
                else:
                    if not line:
                        break
                    resp, accepted = await self._respond(line, last_seq)
                    if accepted:
                        last_seq = resp.seq
                writer.write(encode(resp))
                await writer.drain()
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            writer.close()
            try:
                await writer.wait_closed()
            except ConnectionError:
                pass

    async def _respond(self, line: bytes, last_seq: int) -> tuple[Response, bool]:
        try:
            req = decode_request(line)
        except ProtocolError as exc:
            return Response.error(exc.seq, str(exc)), False
        if req.seq <= last_seq:
            return Response.error(req.seq, f"sequence {req.seq} not above {last_seq}"), False
        return await self.submit(req), True


@contextmanager
def running_server(device: CameraDevice, host: str = "127.0.0.1", port: int = 0) -> Iterator[tuple[str, int]]:
    """Run a CameraServer on a background thread for the duration of the block."""
    loop = asyncio.new_event_loop()
    server = CameraServer(device)
    started = threading.Event()
    address: list = []

    def main():
        asyncio.set_event_loop(loop)
        address.extend(loop.run_until_complete(server.start(host, port)))
        started.set()
        loop.run_forever()

    thread = threading.Thread(target=main, name="camproto-server", daemon=True)
    thread.start()
    if not started.wait(10):
        raise RuntimeError("server did not start")
    try:
        yield address[0], address[1]
    finally:
        asyncio.run_coroutine_threadsafe(server.close(), loop).result(10)
        loop.call_soon_threadsafe(loop.stop)
        thread.join(10)
        loop.close()


def serve(device: CameraDevice, host: str, port: int, ready=None) -> None:
    """Blocking server entry point used by the CLI."""

    async def main():
        server = CameraServer(device)
        bound = await server.start(host, port)
        if ready is not None:
            ready(bound)
        try:
            await server.serve_forever()
        finally:
            await server.close()

    asyncio.run(main())


# -- client ------------------------------------------------------------------------

class CameraClient:
    """Blocking client; numbers requests itself."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self._rfile = self.sock.makefile("rb")
        self.seq = 0

    def close(self) -> None:
        self._rfile.close()
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def send_raw(self, data: bytes) -> Response:
        self.sock.sendall(data)
        line = self._rfile.readline()
        if not line:
            raise ConnectionError("server closed the connection")
        return decode_response(line)

    def request(self, op: str, settings: CameraSettings | None = None, wait_ms: float | None = None) -> Response:
        self.seq += 1
        resp = self.send_raw(encode(Request(self.seq, op, settings, wait_ms)))
        if resp.seq != self.seq:
            raise ProtocolError(f"response seq {resp.seq} != request seq {self.seq}")
        return resp

    def _ok(self, resp: Response) -> dict:
        if not resp.ok:
            raise ProtocolError(resp.payload.get("error", "request failed"), resp.seq)
        return resp.payload

    def set_params(self, settings: CameraSettings, wait_ms: float | None = None) -> float:
        return self._ok(self.request(SET_PARAMS, settings, wait_ms))["effective_ms"]

    def get_params(self, wait_ms: float | None = None) -> CameraSettings:
        return CameraSettings.of(self._ok(self.request(GET_PARAMS, wait_ms=wait_ms))["settings"])

    def get_frame(self, wait_ms: float | None = None) -> dict:
        return self._ok(self.request(GET_FRAME, wait_ms=wait_ms))


class RemoteCameraEnvironment:
    """The ``CameraEnvironment`` interface over the wire protocol (virtual clock).

    Step ``t`` is captured at exactly ``t * step_period_ms``. Between frames the
    client charges its own estimator and aggregation time, then sets the new
    parameters; the period must leave room for them to take effect.
    """

    def __init__(self, client: CameraClient, step_period_ms: float, n_aus: int = 1,
                 latency: LatencyModel | None = None):
        self.client = client
        self.period_us = _us(step_period_ms)
        self.latency = latency or LatencyModel()
        self.n_aus = n_aus
        self.now_us = 0
        self.t = 0
        self.settings = DEFAULT_SETTINGS

    def _frame(self, wait_us: int) -> Observation:
        if wait_us < 0:
            raise TimingError(f"step period too short: {-wait_us / 1000} ms behind schedule")
        p = self.client.get_frame(wait_ms=wait_us / 1000 if wait_us else None)
        got = CameraSettings.of(p["settings"])
        if got != self.settings:
            raise TimingError(f"frame at step {p['step']} captured with {got}, expected {self.settings}")
        if p["step"] != self.t:
            raise TimingError(f"captured step {p['step']}, expected {self.t}")
        self.now_us = _us(p["timestamp_ms"]) + _us(self.latency.frame_upload_ms)
        return Observation(self.t, got, FrameMeasurements(*p["measurements"]),
                           PhaseSpec(p["phase"], p["ambient"]))

    def observe(self) -> Observation:
        return self._frame(self.t * self.period_us - self.now_us)

    def reset(self) -> Observation:
        return self.observe()

    def apply(self, settings: CameraSettings) -> Observation:
        compute = _us(self.n_aus * self.latency.estimator_ms + self.latency.aggregate_ms)
        effective = _us(self.client.set_params(settings, wait_ms=compute / 1000 if compute else None))
        self.now_us += compute
        self.settings = settings
        self.t += 1
        target = self.t * self.period_us
        if effective > target:
            raise TimingError(f"settings effective at {effective / 1000} ms, after capture at {target / 1000} ms")
        return self._frame(target - self.now_us)

