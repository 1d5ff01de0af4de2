"""Length-prefixed wire format shared by the TCP server and client.

One frame is: 4-byte big-endian length, then that many bytes, of which the
first is the opcode and the rest are a UTF-8 JSON body.  The length field
therefore counts opcode + body, never itself.
"""

from __future__ import annotations

import json
import struct

from ..errors import BrokerError

OP_CREATE = 1
OP_PRODUCE = 2
OP_POLL = 3
OP_COMMIT = 4
OP_ACK = 5
OP_ERR = 6

OPCODES = (OP_CREATE, OP_PRODUCE, OP_POLL, OP_COMMIT, OP_ACK, OP_ERR)

MAX_FRAME = 16 * 1024 * 1024


class ProtocolError(BrokerError):
    """Malformed frame on the wire."""


def encode_frame(opcode: int, body: dict) -> bytes:
    if opcode not in OPCODES:
        raise ProtocolError(f"bad opcode {opcode}")
    payload = bytes([opcode]) + json.dumps(body, separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME:
        raise ProtocolError(f"frame of {len(payload)} bytes exceeds {MAX_FRAME}")
    return struct.pack(">I", len(payload)) + payload


def _read_exact(sock, n: int) -> bytes:
    chunks = []
    while n > 0:
        chunk = sock.recv(n)
        if not chunk:
            raise ConnectionError("peer closed mid-frame" if chunks else "peer closed")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_frame(sock) -> tuple[int, dict]:
    """Read one frame from a connected socket; blocks until complete."""
    (length,) = struct.unpack(">I", _read_exact(sock, 4))
    if length < 1 or length > MAX_FRAME:
        raise ProtocolError(f"frame length {length} out of range")
    payload = _read_exact(sock, length)
    opcode = payload[0]
    if opcode not in OPCODES:
        raise ProtocolError(f"bad opcode {opcode}")
    try:
        body = json.loads(payload[1:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"bad body: {exc}") from None
    if not isinstance(body, dict):
        raise ProtocolError("body must be a JSON object")
    return opcode, body
