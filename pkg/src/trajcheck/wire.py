"""Length-prefixed binary protocol and TCP service for frame assessment.

Every message is one frame::

    magic "TCK1" | version u8 | msg_type u8 | payload_len u32 | payload | crc32 u32

All integers are little-endian, physical quantities IEEE-754 binary64, and
the CRC-32 covers the payload only. The payload layouts are tabulated in the
README. A connection carries one outstanding request at a time.
"""
from __future__ import annotations

import socket
import socketserver
import struct
import threading
import zlib
from typing import List, Optional, Tuple

from .checker import ADVISORY, HARD, Assessment, TrajectoryAssessment, Violation, check_frame
from .config import CheckerConfig, defaults
from .dsl import ConstraintKind
from .policy import PolicyTree
from .world import ObstacleState, Trajectory, TrajectoryPoint, WorldFrame

MAGIC = b"TCK1"
VERSION = 1
MSG_REQUEST = 1
MSG_RESPONSE = 2
MSG_ERROR = 3
MAX_PAYLOAD = 16 * 1024 * 1024
DEFAULT_PORT = 9000
DEFAULT_MAX_CONNECTIONS = 4

HEADER = struct.Struct("<4sBBI")
CRC = struct.Struct("<I")

_U16 = struct.Struct("<H")
_REQ_HEAD = struct.Struct("<Qd")
_OBSTACLE = struct.Struct("<I7d")
_TRAJ_HEAD = struct.Struct("<IH")
_POINT = struct.Struct("<8d")
_RESP_HEAD = struct.Struct("<QdIH")
_TA_HEAD = struct.Struct("<II")
_VIOLATION = struct.Struct("<HdBBddIB")
_ERROR_HEAD = struct.Struct("<H")

_SEVERITY_CODE = {HARD: 0, ADVISORY: 1}
_SEVERITY_NAME = {v: k for k, v in _SEVERITY_CODE.items()}


class WireError(ValueError):
    code = 0


class BadMagicError(WireError):
    code = 1


class VersionMismatchError(WireError):
    code = 2


class TruncatedError(WireError):
    code = 3


class CrcError(WireError):
    code = 4


class CountOverflowError(WireError):
    code = 5


class InvalidPayloadError(WireError):
    code = 6


class CheckerFailure(WireError):
    code = 7


class OversizeError(WireError):
    code = 8


ERROR_TYPES = {cls.code: cls for cls in (BadMagicError, VersionMismatchError, TruncatedError,
                                         CrcError, CountOverflowError, InvalidPayloadError,
                                         CheckerFailure, OversizeError)}


class RemoteError(Exception):
    """Error frame returned by the server."""

    def __init__(self, code: int, message: str):
        super().__init__(f"server error {code}: {message}")
        self.code = code
        self.message = message


# --------------------------------------------------------------- framing

def encode_frame(msg_type: int, payload: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise OversizeError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return (HEADER.pack(MAGIC, VERSION, msg_type, len(payload)) + payload
            + CRC.pack(zlib.crc32(payload)))


def parse_header(header: bytes) -> Tuple[int, int]:
    """Validate a 10-byte header; returns ``(msg_type, payload_len)``."""
    if len(header) < HEADER.size:
        raise TruncatedError("incomplete header")
    magic, version, msg_type, length = HEADER.unpack_from(header)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"version {version}, expected {VERSION}")
    if length > MAX_PAYLOAD:
        raise OversizeError(f"payload length {length} exceeds {MAX_PAYLOAD}")
    return msg_type, length


def decode_frame(data: bytes) -> Tuple[int, bytes]:
    msg_type, length = parse_header(data)
    end = HEADER.size + length
    if len(data) < end + CRC.size:
        raise TruncatedError(f"frame needs {end + CRC.size} bytes, got {len(data)}")
    if len(data) > end + CRC.size:
        raise InvalidPayloadError("trailing bytes after frame")
    payload = bytes(data[HEADER.size:end])
    (crc,) = CRC.unpack_from(data, end)
    if crc != zlib.crc32(payload):
        raise CrcError("payload checksum mismatch")
    return msg_type, payload


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, st: struct.Struct) -> tuple:
        if self.pos + st.size > len(self.buf):
            raise TruncatedError("payload ends inside a record")
        out = st.unpack_from(self.buf, self.pos)
        self.pos += st.size
        return out

    def count(self, item_size: int) -> int:
        (n,) = self.take(_U16)
        if n * item_size > len(self.buf) - self.pos:
            raise CountOverflowError(f"count {n} exceeds the remaining payload")
        return n

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedError("payload ends inside a string")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise InvalidPayloadError(f"{len(self.buf) - self.pos} unexpected trailing bytes")


def _u16_count(n: int, what: str) -> bytes:
    if n > 0xFFFF:
        raise CountOverflowError(f"{n} {what} exceed the u16 limit")
    return _U16.pack(n)


def _pack_obstacle(o: ObstacleState) -> bytes:
    if not 0 <= o.id <= 0xFFFFFFFF:
        raise InvalidPayloadError(f"obstacle id {o.id} does not fit u32")
    return _OBSTACLE.pack(o.id, o.x, o.y, o.heading, o.v_long, o.v_lat, o.length, o.width)


# --------------------------------------------------------------- request

def request_payload(frame: WorldFrame) -> bytes:
    if not 0 <= frame.frame_id < 2 ** 64:
        raise InvalidPayloadError("frame_id does not fit u64")
    out = [_REQ_HEAD.pack(frame.frame_id, frame.timestamp), _pack_obstacle(frame.ego_state),
           _u16_count(len(frame.obstacles), "obstacles")]
    out.extend(_pack_obstacle(o) for o in frame.obstacles)
    out.append(_u16_count(len(frame.trajectories), "trajectories"))
    for traj in frame.trajectories:
        if not 0 <= traj.id <= 0xFFFFFFFF:
            raise InvalidPayloadError(f"trajectory id {traj.id} does not fit u32")
        if len(traj.points) > 0xFFFF:
            raise CountOverflowError(f"{len(traj.points)} points exceed the u16 limit")
        out.append(_TRAJ_HEAD.pack(traj.id, len(traj.points)))
        out.extend(_POINT.pack(*p.as_tuple()) for p in traj.points)
    return b"".join(out)


def encode_request(frame: WorldFrame) -> bytes:
    return encode_frame(MSG_REQUEST, request_payload(frame))


def parse_request_payload(payload: bytes) -> WorldFrame:
    r = _Reader(payload)
    frame_id, timestamp = r.take(_REQ_HEAD)
    try:
        ego = ObstacleState(*r.take(_OBSTACLE))
        obstacles = [ObstacleState(*r.take(_OBSTACLE)) for _ in range(r.count(_OBSTACLE.size))]
        trajs = []
        for _ in range(r.count(_TRAJ_HEAD.size)):
            tid, n = r.take(_TRAJ_HEAD)
            if n * _POINT.size > len(payload) - r.pos:
                raise CountOverflowError(f"point count {n} exceeds the remaining payload")
            pts = tuple(TrajectoryPoint(*r.take(_POINT)) for _ in range(n))
            trajs.append(Trajectory(tid, pts))
        r.done()
        return WorldFrame(frame_id, timestamp, ego, tuple(obstacles), tuple(trajs))
    except WireError:
        raise
    except (ValueError, TypeError) as exc:
        raise InvalidPayloadError(str(exc)) from None


def decode_request(data: bytes) -> WorldFrame:
    msg_type, payload = decode_frame(data)
    if msg_type != MSG_REQUEST:
        raise InvalidPayloadError(f"expected a request, got message type {msg_type}")
    return parse_request_payload(payload)


# -------------------------------------------------------------- response

def response_payload(a: Assessment) -> bytes:
    _u16_count(a.obstacle_count, "obstacles")
    if a.points_checked > 0xFFFFFFFF:
        raise CountOverflowError("points_checked exceeds the u32 limit")
    out = [_RESP_HEAD.pack(a.frame_id, a.elapsed_s, a.points_checked, a.obstacle_count),
           _u16_count(len(a.trajectories), "trajectories")]
    for ta in a.trajectories:
        out.append(_TA_HEAD.pack(ta.trajectory_id, len(ta.violations)))
        for v in ta.violations:
            if v.trajectory_id != ta.trajectory_id:
                raise InvalidPayloadError("violation filed under the wrong trajectory")
            names = [n.encode("utf-8") for n in v.rule_names]
            if len(names) > 0xFF or any(len(n) > 0xFF for n in names):
                raise CountOverflowError("rule names exceed the u8 limits")
            out.append(_VIOLATION.pack(v.point_index, v.time_offset, int(v.kind),
                                       _SEVERITY_CODE[v.severity], v.required, v.actual,
                                       v.obstacle_id, len(names)))
            for n in names:
                out.append(bytes((len(n),)) + n)
    return b"".join(out)


def encode_response(a: Assessment) -> bytes:
    return encode_frame(MSG_RESPONSE, response_payload(a))


def parse_response_payload(payload: bytes) -> Assessment:
    r = _Reader(payload)
    frame_id, elapsed, points, n_obs = r.take(_RESP_HEAD)
    try:
        tas = []
        for _ in range(r.count(_TA_HEAD.size)):
            tid, nv = r.take(_TA_HEAD)
            if nv * _VIOLATION.size > len(payload) - r.pos:
                raise CountOverflowError(f"violation count {nv} exceeds the remaining payload")
            vs = []
            for _ in range(nv):
                idx, offset, kind, sev, req, act, oid, nn = r.take(_VIOLATION)
                names = tuple(r.raw(r.raw(1)[0]).decode("utf-8") for _ in range(nn))
                vs.append(Violation(tid, idx, offset, ConstraintKind(kind), _SEVERITY_NAME[sev],
                                    req, act, oid, names))
            tas.append(TrajectoryAssessment(tid, tuple(vs)))
        r.done()
    except WireError:
        raise
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise InvalidPayloadError(str(exc)) from None
    return Assessment(frame_id, tuple(tas), points, n_obs, elapsed)


def decode_response(data: bytes) -> Assessment:
    msg_type, payload = decode_frame(data)
    if msg_type == MSG_ERROR:
        raise RemoteError(*parse_error_payload(payload))
    if msg_type != MSG_RESPONSE:
        raise InvalidPayloadError(f"expected a response, got message type {msg_type}")
    return parse_response_payload(payload)


def encode_error(code: int, message: str) -> bytes:
    return encode_frame(MSG_ERROR, _ERROR_HEAD.pack(code) + message.encode("utf-8")[:1024])


def parse_error_payload(payload: bytes) -> Tuple[int, str]:
    if len(payload) < _ERROR_HEAD.size:
        raise TruncatedError("error payload too short")
    (code,) = _ERROR_HEAD.unpack_from(payload)
    return code, payload[_ERROR_HEAD.size:].decode("utf-8", errors="replace")


# ---------------------------------------------------------------- stream

def _recv_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    chunks: List[bytes] = []
    remaining = n
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> Optional[Tuple[int, bytes, bool]]:
    """Read one frame; ``None`` on clean EOF.

    Returns ``(msg_type, payload, crc_ok)``. Header errors raise.
    """
    header = _recv_exact(sock, HEADER.size)
    if header is None:
        return None
    msg_type, length = parse_header(header)
    body = _recv_exact(sock, length + CRC.size)
    if body is None:
        raise TruncatedError("connection closed inside a frame")
    payload = body[:length]
    (crc,) = CRC.unpack_from(body, length)
    return msg_type, payload, crc == zlib.crc32(payload)


# ---------------------------------------------------------------- server

class _Handler(socketserver.BaseRequestHandler):
    server: "CheckServer"

    def handle(self) -> None:
        sock = self.request
        while True:
            try:
                got = read_frame(sock)
            except (BadMagicError, VersionMismatchError, OversizeError) as exc:
                self._send(encode_error(exc.code, str(exc)))
                return
            except (TruncatedError, OSError):
                return
            if got is None:
                return
            msg_type, payload, crc_ok = got
            if not crc_ok:
                reply = encode_error(CrcError.code, "payload checksum mismatch")
            elif msg_type != MSG_REQUEST:
                reply = encode_error(InvalidPayloadError.code, f"unexpected message type {msg_type}")
            else:
                reply = self.server.answer(payload)
            if not self._send(reply):
                return

    def _send(self, data: bytes) -> bool:
        try:
            self.request.sendall(data)
            return True
        except OSError:
            return False


class CheckServer(socketserver.ThreadingTCPServer):
    """Threaded server answering each request with ``check_frame``.

    At most ``max_connections`` connections are served at once; further
    clients wait in the accept queue.
    """

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: Tuple[str, int], policy: PolicyTree,
                 config: Optional[CheckerConfig] = None,
                 max_connections: int = DEFAULT_MAX_CONNECTIONS, backend: Optional[str] = None):
        if max_connections < 1:
            raise ValueError("max_connections must be >= 1")
        self.policy = policy
        self.config = config or defaults()
        self.backend = backend
        self._slots = threading.BoundedSemaphore(max_connections)
        self._stopping = threading.Event()
        super().__init__(address, _Handler)

    def answer(self, payload: bytes) -> bytes:
        try:
            frame = parse_request_payload(payload)
        except WireError as exc:
            return encode_error(exc.code, str(exc))
        try:
            assessment = check_frame(frame, self.policy, self.config, self.backend)
        except Exception as exc:  # reported to the client, never fatal
            return encode_error(CheckerFailure.code, f"{type(exc).__name__}: {exc}")
        return encode_response(assessment)

    def process_request(self, request, client_address):
        while not self._slots.acquire(timeout=0.05):
            if self._stopping.is_set():
                self.shutdown_request(request)
                return
        try:
            super().process_request(request, client_address)
        except Exception:
            self._slots.release()
            raise

    def process_request_thread(self, request, client_address):
        try:
            super().process_request_thread(request, client_address)
        finally:
            self._slots.release()

    def shutdown(self) -> None:
        self._stopping.set()
        super().shutdown()


def serve(address: Tuple[str, int], policy: PolicyTree, config: Optional[CheckerConfig] = None,
          max_connections: int = DEFAULT_MAX_CONNECTIONS) -> None:
    """Serve until interrupted."""
    with CheckServer(address, policy, config, max_connections) as server:
        server.serve_forever()


def start_background(policy: PolicyTree, config: Optional[CheckerConfig] = None,
                     host: str = "127.0.0.1", port: int = 0,
                     max_connections: int = DEFAULT_MAX_CONNECTIONS
                     ) -> Tuple[CheckServer, threading.Thread]:
    """Start a server on a daemon thread; ``port=0`` picks a free port."""
    server = CheckServer((host, port), policy, config, max_connections)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread


# ---------------------------------------------------------------- client

class Client:
    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)

    def close(self) -> None:
        self.sock.close()

    def __enter__(self) -> "Client":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def exchange(self, data: bytes) -> Tuple[int, bytes]:
        """Send raw bytes and read one reply frame."""
        self.sock.sendall(data)
        got = read_frame(self.sock)
        if got is None:
            raise ConnectionError("server closed the connection")
        msg_type, payload, crc_ok = got
        if not crc_ok:
            raise CrcError("reply checksum mismatch")
        return msg_type, payload

    def check(self, frame: WorldFrame) -> Assessment:
        msg_type, payload = self.exchange(encode_request(frame))
        if msg_type == MSG_ERROR:
            raise RemoteError(*parse_error_payload(payload))
        if msg_type != MSG_RESPONSE:
            raise InvalidPayloadError(f"unexpected message type {msg_type}")
        return parse_response_payload(payload)
