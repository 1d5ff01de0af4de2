"""Deterministic synthetic IoT traffic with benign and malicious profiles.

Every device draws from its own Philox substream keyed by (seed, device
index), so adding a tenth device never changes what the first nine emit.
Behavior assignment is a Bresenham walk over the anomaly fraction, which
keeps any given device's role stable as the fleet grows and makes the
malicious device count come out to round(fraction * n) exactly.
"""

from __future__ import annotations

import ipaddress
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import BadConfigError
from .flows import LABEL_ANOMALY, LABEL_BENIGN, FlowRecord, format_row, write_records

BEHAVIORS = (
    "benign_periodic",
    "benign_bursty",
    "mal_ddos",
    "mal_cnc_beacon",
    "mal_portscan",
)
_MALICIOUS = ("mal_ddos", "mal_cnc_beacon", "mal_portscan")
_BENIGN = ("benign_periodic", "benign_bursty")

# Address plan.  Devices live in 10.0.0.0/8; benign servers and the DDoS
# victim sit in one documentation block, the C2 host in another, so no
# benign flow ever shares the beacon's destination.
DEVICE_IP_BASE = int(ipaddress.IPv4Address("10.0.0.10"))
DNS_SERVER = "192.168.1.1"
HTTP_POOL = tuple(f"198.51.100.{i}" for i in range(1, 25))
SSL_POOL = tuple(f"198.51.100.{i}" for i in range(25, 49))
DDOS_TARGET = "198.51.100.200"
CNC_SERVER = "203.0.113.7"
CNC_PORT = 6667


@dataclass(frozen=True)
class DeviceProfile:
    device_id: str
    ip: str
    behavior: str
    rate_flows_per_s: float


@dataclass(frozen=True)
class SimConfig:
    n_devices: int = 9
    duration_s: float = 120.0
    anomaly_device_fraction: float = 0.349
    seed: int = 0
    rate_flows_per_s: float = 50.0
    # Probability that a malicious flow is camouflaged as benign traffic
    # (label unchanged).  0 keeps the classes cleanly separable.
    overlap: float = 0.0
    # The beacon hides inside the benign TLS size distribution by default;
    # set True for literally constant beacon sizes (much easier to spot).
    cnc_fixed_size: bool = False
    base_ts: float = 1_600_000_000.0


def _validate(config: SimConfig) -> None:
    if config.n_devices < 1:
        raise BadConfigError(f"n_devices must be >= 1, got {config.n_devices}")
    if not 0.0 <= config.anomaly_device_fraction <= 1.0:
        raise BadConfigError(
            f"anomaly_device_fraction outside [0,1]: {config.anomaly_device_fraction}"
        )
    if config.duration_s <= 0:
        raise BadConfigError(f"duration_s must be positive, got {config.duration_s}")
    if config.rate_flows_per_s <= 0:
        raise BadConfigError(f"rate must be positive, got {config.rate_flows_per_s}")
    if not 0.0 <= config.overlap <= 1.0:
        raise BadConfigError(f"overlap outside [0,1]: {config.overlap}")


def behavior_for_index(index: int, fraction: float) -> str:
    """Behavior of device ``index``, independent of fleet size.

    Device i is malicious when the rounded running total of expected
    malicious devices ticks up at i; malicious and benign roles then cycle
    through their respective behavior lists.
    """
    mal_before = round(fraction * index)
    malicious = round(fraction * (index + 1)) > mal_before
    if malicious:
        return _MALICIOUS[mal_before % len(_MALICIOUS)]
    return _BENIGN[(index - mal_before) % len(_BENIGN)]


def device_profiles(config: SimConfig) -> list[DeviceProfile]:
    _validate(config)
    profiles = []
    for i in range(config.n_devices):
        profiles.append(
            DeviceProfile(
                device_id=f"dev-{i:04d}",
                ip=str(ipaddress.IPv4Address(DEVICE_IP_BASE + i)),
                behavior=behavior_for_index(i, config.anomaly_device_fraction),
                rate_flows_per_s=config.rate_flows_per_s,
            )
        )
    return profiles


def _device_rng(seed: int, index: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _ephemeral_port(rng) -> int:
    return int(rng.integers(32768, 61000))


def _dns_flow(rng, ts, src_ip, src_port):
    orig = float(np.round(rng.lognormal(4.2, 0.3)))
    resp = float(np.round(rng.lognormal(4.8, 0.4)))
    return dict(
        ts=ts, src_ip=src_ip, src_port=src_port,
        dst_ip=DNS_SERVER, dst_port=53, proto="udp", service="dns",
        duration=float(rng.lognormal(-5.5, 0.4)),
        orig_bytes=orig, resp_bytes=resp, conn_state="SF", missed_bytes=0,
        orig_pkts=1, orig_ip_bytes=int(orig) + 28,
        resp_pkts=1, resp_ip_bytes=int(resp) + 28,
    )


def _http_flow(rng, ts, src_ip, src_port):
    orig = float(np.round(rng.lognormal(5.5, 0.5)))
    resp = float(np.round(rng.lognormal(7.5, 0.8)))
    op = int(rng.integers(4, 10))
    rp = int(rng.integers(4, 13))
    return dict(
        ts=ts, src_ip=src_ip, src_port=src_port,
        dst_ip=HTTP_POOL[int(rng.integers(0, len(HTTP_POOL)))], dst_port=80,
        proto="tcp", service="http",
        duration=float(rng.lognormal(-1.5, 0.6)),
        orig_bytes=orig, resp_bytes=resp, conn_state="SF", missed_bytes=0,
        orig_pkts=op, orig_ip_bytes=int(orig) + 52 * op,
        resp_pkts=rp, resp_ip_bytes=int(resp) + 52 * rp,
    )


def _ssl_body(rng, fixed_size: bool = False):
    """Duration, sizes and packet counts for one TLS-looking flow."""
    if fixed_size:
        return 0.5, 256.0, 512.0, 6, 6
    duration = float(rng.lognormal(0.2, 0.8))
    orig = float(np.round(rng.lognormal(7.0, 0.7)))
    resp = float(np.round(rng.lognormal(9.0, 1.0)))
    op = int(rng.integers(8, 41))
    rp = int(rng.integers(10, 61))
    return duration, orig, resp, op, rp


def _ssl_flow(rng, ts, src_ip, src_port, dst_ip, dst_port, fixed_size=False):
    duration, orig, resp, op, rp = _ssl_body(rng, fixed_size)
    missed = 0
    if rng.random() < 0.01:
        missed = int(rng.integers(40, 1460))
    return dict(
        ts=ts, src_ip=src_ip, src_port=src_port,
        dst_ip=dst_ip, dst_port=dst_port, proto="tcp", service="ssl",
        duration=duration, orig_bytes=orig, resp_bytes=resp,
        conn_state="SF", missed_bytes=missed,
        orig_pkts=op, orig_ip_bytes=int(orig) + 52 * op,
        resp_pkts=rp, resp_ip_bytes=int(resp) + 52 * rp,
    )


def _ddos_flow(rng, ts, src_ip, src_port):
    orig = float(np.round(rng.lognormal(8.5, 0.5)))
    op = int(rng.integers(200, 1200))
    return dict(
        ts=ts, src_ip=src_ip, src_port=src_port,
        dst_ip=DDOS_TARGET, dst_port=80, proto="tcp", service="none",
        duration=float(rng.exponential(0.002)),
        orig_bytes=orig, resp_bytes=0.0, conn_state="S0", missed_bytes=0,
        orig_pkts=op, orig_ip_bytes=int(orig) + 40 * op,
        resp_pkts=0, resp_ip_bytes=0,
    )


def _portscan_flow(rng, ts, src_ip, src_port):
    rejected = rng.random() < 0.6
    return dict(
        ts=ts, src_ip=src_ip, src_port=src_port,
        dst_ip=f"192.168.1.{int(rng.integers(2, 254))}",
        dst_port=int(rng.integers(1, 10000)),
        proto="tcp", service="none",
        duration=float(rng.exponential(0.0005)),
        orig_bytes=0.0, resp_bytes=0.0,
        conn_state="REJ" if rejected else "S0", missed_bytes=0,
        orig_pkts=int(rng.integers(1, 3)),
        orig_ip_bytes=40 * int(rng.integers(1, 3)),
        resp_pkts=1 if rejected else 0,
        resp_ip_bytes=40 if rejected else 0,
    )


def _benign_fields(rng, behavior, ts, src_ip, src_port):
    if behavior == "benign_periodic":
        if rng.random() < 0.7:
            return _dns_flow(rng, ts, src_ip, src_port)
        return _http_flow(rng, ts, src_ip, src_port)
    dst = SSL_POOL[int(rng.integers(0, len(SSL_POOL)))]
    return _ssl_flow(rng, ts, src_ip, src_port, dst, 443)


def _next_interval(rng, behavior, rate: float) -> float:
    if behavior in ("benign_periodic", "mal_cnc_beacon"):
        jitter = 0.9 + 0.2 * rng.random() if behavior == "benign_periodic" \
            else 0.98 + 0.04 * rng.random()
        return jitter / rate
    if behavior == "benign_bursty":
        # Short gaps most of the time, long pauses between bursts; the mix
        # keeps the mean at 1/rate.
        if rng.random() < 0.75:
            return float(rng.exponential(0.3 / rate))
        return float(rng.exponential(3.1 / rate))
    return float(rng.exponential(1.0 / rate))


def device_flows(profile: DeviceProfile, index: int, config: SimConfig) -> list[FlowRecord]:
    """All flows one device emits during the run, in timestamp order."""
    rng = _device_rng(config.seed, index)
    behavior = profile.behavior
    malicious = behavior in _MALICIOUS
    label = LABEL_ANOMALY if malicious else LABEL_BENIGN
    end = config.base_ts + config.duration_s
    out = []
    ts = config.base_ts + float(rng.random()) / profile.rate_flows_per_s
    while ts < end:
        src_port = _ephemeral_port(rng)
        camouflaged = malicious and config.overlap > 0 and rng.random() < config.overlap
        if not malicious or camouflaged:
            benign_like = behavior if not malicious else \
                _BENIGN[int(rng.integers(0, len(_BENIGN)))]
            fields = _benign_fields(rng, benign_like, ts, profile.ip, src_port)
        elif behavior == "mal_ddos":
            fields = _ddos_flow(rng, ts, profile.ip, src_port)
        elif behavior == "mal_cnc_beacon":
            fields = _ssl_flow(
                rng, ts, profile.ip, src_port, CNC_SERVER, CNC_PORT,
                fixed_size=config.cnc_fixed_size,
            )
        else:
            fields = _portscan_flow(rng, ts, profile.ip, src_port)
        out.append(FlowRecord(label=label, device_id=profile.device_id, **fields))
        ts += _next_interval(rng, behavior, profile.rate_flows_per_s)
    return out


def generate(config: SimConfig) -> list[FlowRecord]:
    """Synthesize the whole fleet's traffic, merged into timestamp order."""
    profiles = device_profiles(config)
    merged: list[FlowRecord] = []
    for i, profile in enumerate(profiles):
        merged.extend(device_flows(profile, i, config))
    merged.sort(key=lambda r: r.ts)
    return merged


def generate_to_file(config: SimConfig, path) -> int:
    return write_records(generate(config), path)


def replay(records: list[FlowRecord], client, topic: str,
           rate_multiplier: float = math.inf) -> int:
    """Produce rows to a broker keyed by device, pacing by timestamp gaps.

    An infinite multiplier sends as fast as possible.  Returns the number
    of rows produced.
    """
    produced = 0
    prev_ts = None
    for r in records:
        if prev_ts is not None and math.isfinite(rate_multiplier):
            gap = (r.ts - prev_ts) / rate_multiplier
            if gap > 0:
                time.sleep(gap)
        prev_ts = r.ts
        client.produce(topic, key=r.device_id, value=format_row(r))
        produced += 1
    return produced
