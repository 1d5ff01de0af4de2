"""Flow-record featurization with fitted normalization statistics.

Two regimes:

* ``full``          -- every flow field except the timestamp. Endpoint
  addresses are encoded privacy-stably as (CRC-32 hash scaled to [0,1],
  private-range indicator) pairs so the width never depends on which IPs
  a capture happens to contain.
* ``de_identified`` -- additionally drops the originator/responder
  addresses and ports (every endpoint-derived dimension).

Numerics are z-scored with statistics fitted on training data; missing
values encode as 0.0, i.e. at the training mean. Categoricals one-hot
onto fixed vocabularies with an ``other`` bucket for unknowns, so the
encoded width is a constant per regime (40 full, 34 de-identified).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDatasetError
from .flows import CONN_STATES, PROTOS, SERVICES, FlowRecord, LABEL_ANOMALY
from .hashing import hash_to_unit, is_private_ip

FEATURE_SETS = ("full", "de_identified")

# unlabeled records encode with this label value in batch arrays
UNLABELED = -1

CODEC_FORMAT_VERSION = 1

_ENDPOINT_NUMERICS = (
    "src_ip_hash", "src_ip_private", "src_port",
    "dst_ip_hash", "dst_ip_private", "dst_port",
)
_COMMON_NUMERICS = (
    "duration", "orig_bytes", "resp_bytes", "missed_bytes",
    "orig_pkts", "orig_ip_bytes", "resp_pkts", "resp_ip_bytes",
)


def numeric_feature_names(feature_set: str) -> tuple[str, ...]:
    if feature_set == "full":
        return _ENDPOINT_NUMERICS + _COMMON_NUMERICS
    if feature_set == "de_identified":
        return _COMMON_NUMERICS
    raise ValueError(f"unknown feature set {feature_set!r}")


def _numeric_columns(records: list[FlowRecord], feature_set: str) -> np.ndarray:
    """Raw numeric matrix (n, k) with NaN for missing values."""
    nan = float("nan")
    cols = []
    if feature_set == "full":
        cols.append([hash_to_unit(r.src_ip) for r in records])
        cols.append([float(is_private_ip(r.src_ip)) for r in records])
        cols.append([float(r.src_port) for r in records])
        cols.append([hash_to_unit(r.dst_ip) for r in records])
        cols.append([float(is_private_ip(r.dst_ip)) for r in records])
        cols.append([float(r.dst_port) for r in records])
    cols.append([nan if r.duration is None else float(r.duration) for r in records])
    cols.append([nan if r.orig_bytes is None else float(r.orig_bytes) for r in records])
    cols.append([nan if r.resp_bytes is None else float(r.resp_bytes) for r in records])
    cols.append([float(r.missed_bytes) for r in records])
    cols.append([float(r.orig_pkts) for r in records])
    cols.append([float(r.orig_ip_bytes) for r in records])
    cols.append([float(r.resp_pkts) for r in records])
    cols.append([float(r.resp_ip_bytes) for r in records])
    return np.array(cols, dtype=np.float64).T


@dataclass
class FeatureCodec:
    """Immutable after fit; encoding is pure and thread-safe."""

    feature_set: str
    vocab_proto: tuple[str, ...]
    vocab_service: tuple[str, ...]
    vocab_conn_state: tuple[str, ...]
    numeric_means: np.ndarray
    numeric_stddevs: np.ndarray

    def __post_init__(self):
        self.numeric_means = np.asarray(self.numeric_means, dtype=np.float64)
        self.numeric_stddevs = np.asarray(self.numeric_stddevs, dtype=np.float64)
        self._proto_idx = {v: i for i, v in enumerate(self.vocab_proto)}
        self._service_idx = {v: i for i, v in enumerate(self.vocab_service)}
        self._state_idx = {v: i for i, v in enumerate(self.vocab_conn_state)}

    @property
    def width(self) -> int:
        return (len(self.numeric_means) + len(self.vocab_proto)
                + len(self.vocab_service) + len(self.vocab_conn_state))

    def to_doc(self) -> dict:
        return {
            "format_version": CODEC_FORMAT_VERSION,
            "feature_set": self.feature_set,
            "numeric_features": list(numeric_feature_names(self.feature_set)),
            "vocab_proto": list(self.vocab_proto),
            "vocab_service": list(self.vocab_service),
            "vocab_conn_state": list(self.vocab_conn_state),
            "numeric_means": [float(x) for x in self.numeric_means],
            "numeric_stddevs": [float(x) for x in self.numeric_stddevs],
            "width": self.width,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "FeatureCodec":
        return cls(
            feature_set=doc["feature_set"],
            vocab_proto=tuple(doc["vocab_proto"]),
            vocab_service=tuple(doc["vocab_service"]),
            vocab_conn_state=tuple(doc["vocab_conn_state"]),
            numeric_means=np.array(doc["numeric_means"], dtype=np.float64),
            numeric_stddevs=np.array(doc["numeric_stddevs"], dtype=np.float64),
        )

    def fingerprint(self) -> str:
        doc = json.dumps(self.to_doc(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(doc.encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_doc(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FeatureCodec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_doc(json.load(fh))


@dataclass
class FeatureVector:
    values: np.ndarray
    label: int | None  # 0 benign, 1 anomaly, None unlabeled


def fit_codec(records: list[FlowRecord], feature_set: str) -> FeatureCodec:
    """Fit normalization statistics; deterministic for a given sequence.

    Means/stddevs are computed over non-missing values only; columns with
    zero variance (or no observed values) store stddev 1 so encoding never
    divides by zero.
    """
    records = list(records)
    if len(records) < 2:
        raise EmptyDatasetError("fit_codec needs at least 2 records")
    if feature_set not in FEATURE_SETS:
        raise ValueError(f"unknown feature set {feature_set!r}")
    raw = _numeric_columns(records, feature_set)
    with np.errstate(invalid="ignore"):
        means = np.nanmean(raw, axis=0)
        stds = np.nanstd(raw, axis=0)
    means = np.nan_to_num(means, nan=0.0)
    stds = np.nan_to_num(stds, nan=0.0)
    stds[stds < 1e-12] = 1.0
    return FeatureCodec(
        feature_set=feature_set,
        vocab_proto=PROTOS,
        vocab_service=SERVICES,
        vocab_conn_state=CONN_STATES,
        numeric_means=means,
        numeric_stddevs=stds,
    )


def encode_batch(records: list[FlowRecord], codec: FeatureCodec):
    """Encode records to (X, y) arrays.

    X is (n, codec.width) float64 with no NaN/Inf; y is (n,) int8 with
    0 benign, 1 anomaly, UNLABELED (-1) for records without a label.
    Row i equals encode(records[i]).values exactly.
    """
    records = list(records)
    n = len(records)
    k = len(codec.numeric_means)
    X = np.zeros((n, codec.width), dtype=np.float64)
    if n == 0:
        return X, np.zeros(0, dtype=np.int8)

    raw = _numeric_columns(records, codec.feature_set)
    z = (raw - codec.numeric_means) / codec.numeric_stddevs
    X[:, :k] = np.nan_to_num(z, nan=0.0, posinf=0.0, neginf=0.0)

    rows = np.arange(n)
    pi, si, ci = codec._proto_idx, codec._service_idx, codec._state_idx
    p_other = pi["other"]
    s_other = si["other"]
    c_other = ci["other"]
    off = k
    X[rows, off + np.fromiter(
        (pi.get(r.proto, p_other) for r in records), dtype=np.int64, count=n)] = 1.0
    off += len(codec.vocab_proto)
    X[rows, off + np.fromiter(
        (si.get(r.service, s_other) for r in records), dtype=np.int64, count=n)] = 1.0
    off += len(codec.vocab_service)
    X[rows, off + np.fromiter(
        (ci.get(r.conn_state, c_other) for r in records), dtype=np.int64, count=n)] = 1.0

    y = np.fromiter(
        (UNLABELED if r.label is None else int(r.label == LABEL_ANOMALY)
         for r in records),
        dtype=np.int8, count=n)
    return X, y


def encode(record: FlowRecord, codec: FeatureCodec) -> FeatureVector:
    """Encode one record; total over valid FlowRecords."""
    X, y = encode_batch([record], codec)
    label = None if y[0] == UNLABELED else int(y[0])
    return FeatureVector(values=X[0], label=label)
