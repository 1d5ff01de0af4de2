"""Producer/consumer clients: one in-process, one speaking the TCP frames.

Both expose the same five calls (create_topic, produce, subscribe, poll,
commit) with the same error behavior, so everything downstream takes "a
client" and never cares which transport is underneath.
"""

from __future__ import annotations

import socket
import time

from ..errors import ERROR_REGISTRY, BrokerUnreachableError, MaliotError
from .core import Broker, Message
from .protocol import (
    OP_ACK,
    OP_COMMIT,
    OP_CREATE,
    OP_ERR,
    OP_POLL,
    OP_PRODUCE,
    ProtocolError,
    encode_frame,
    read_frame,
)


class InProcClient:
    """Thin veneer over a Broker object living in the same process."""

    def __init__(self, broker: Broker, consumer_id: str = "_default"):
        self.broker = broker
        self.consumer_id = consumer_id

    def create_topic(self, topic: str, partitions: int) -> None:
        self.broker.create_topic(topic, partitions)

    def produce(self, topic: str, key: str, value: str) -> tuple[int, int]:
        return self.broker.produce(topic, key, value)

    def subscribe(self, group: str, topic: str) -> None:
        self.broker.subscribe(group, topic, self.consumer_id)

    def leave(self, group: str, topic: str) -> None:
        self.broker.leave(group, topic, self.consumer_id)

    def poll(self, group: str, topic: str, max_messages: int = 100,
             timeout_ms: float = 0.0) -> list[Message]:
        return self.broker.poll(group, topic, max_messages, timeout_ms,
                                self.consumer_id)

    def commit(self, group: str, topic: str, offsets: dict[int, int]) -> None:
        self.broker.commit(group, topic, offsets)

    def close(self) -> None:
        pass


class TcpClient:
    """Blocking single-connection client for the D-frame protocol.

    Connection establishment retries a few times with a flat delay and
    then gives up loudly; a lost connection mid-call surfaces as the same
    error so callers treat both as "broker gone".
    """

    def __init__(self, host: str, port: int, consumer_id: str = "_default",
                 connect_retries: int = 3, retry_delay_s: float = 0.2,
                 timeout_s: float = 30.0):
        self.host = host
        self.port = port
        self.consumer_id = consumer_id
        self.connect_retries = connect_retries
        self.retry_delay_s = retry_delay_s
        self.timeout_s = timeout_s
        self._sock: socket.socket | None = None

    def _connect(self) -> socket.socket:
        if self._sock is not None:
            return self._sock
        last: Exception | None = None
        for attempt in range(self.connect_retries):
            try:
                sock = socket.create_connection(
                    (self.host, self.port), timeout=self.timeout_s
                )
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._sock = sock
                return sock
            except OSError as exc:
                last = exc
                if attempt + 1 < self.connect_retries:
                    time.sleep(self.retry_delay_s)
        raise BrokerUnreachableError(
            f"{self.host}:{self.port} after {self.connect_retries} attempts: {last}"
        )

    def _call(self, opcode: int, body: dict) -> dict:
        sock = self._connect()
        try:
            sock.sendall(encode_frame(opcode, body))
            op, reply = read_frame(sock)
        except (ConnectionError, OSError) as exc:
            self._drop()
            raise BrokerUnreachableError(f"{self.host}:{self.port}: {exc}") from None
        if op == OP_ERR:
            cls = ERROR_REGISTRY.get(reply.get("error", ""), MaliotError)
            raise cls(reply.get("message", ""))
        if op != OP_ACK:
            self._drop()
            raise ProtocolError(f"unexpected reply opcode {op}")
        return reply

    def _drop(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def create_topic(self, topic: str, partitions: int) -> None:
        self._call(OP_CREATE, {"topic": topic, "partitions": partitions})

    def produce(self, topic: str, key: str, value: str) -> tuple[int, int]:
        r = self._call(OP_PRODUCE, {"topic": topic, "key": key, "value": value})
        return int(r["partition"]), int(r["offset"])

    def subscribe(self, group: str, topic: str) -> None:
        self._call(OP_POLL, {
            "group": group, "topic": topic, "consumer": self.consumer_id,
            "subscribe": True, "max_messages": 0,
        })

    def leave(self, group: str, topic: str) -> None:
        self._call(OP_POLL, {
            "group": group, "topic": topic, "consumer": self.consumer_id,
            "leave": True,
        })

    def poll(self, group: str, topic: str, max_messages: int = 100,
             timeout_ms: float = 0.0) -> list[Message]:
        r = self._call(OP_POLL, {
            "group": group, "topic": topic, "consumer": self.consumer_id,
            "max_messages": max_messages, "timeout_ms": timeout_ms,
        })
        return [
            Message(m["topic"], int(m["partition"]), int(m["offset"]),
                    str(m["key"]), str(m["value"]))
            for m in r["messages"]
        ]

    def commit(self, group: str, topic: str, offsets: dict[int, int]) -> None:
        self._call(OP_COMMIT, {
            "group": group, "topic": topic,
            "offsets": {str(p): int(o) for p, o in offsets.items()},
        })

    def close(self) -> None:
        self._drop()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
