"""Synthetic data, agent shards, the principal's held-out pool and private signals."""

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from pael.errors import InvalidArgumentError, InvalidStateError
from pael.model import HypothesisSpec, check_parameter, predict_many

SHARD_MODES = ("partition", "bootstrap-with-replacement", "bootstrap-without-replacement", "replicate")
HELDOUT_MODES = ("fixed-first", "fresh-each-round")
SIGNAL_PROVENANCES = ("iid-gaussian", "shard-summary")


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DataShard:
    X: np.ndarray
    y: np.ndarray
    shard_id: int
    indices: np.ndarray = field(default=None)

    def __post_init__(self):
        X, y = _frozen(self.X), _frozen(self.y)
        if y.ndim != 1 or y.size == 0:
            raise InvalidArgumentError("a shard needs a nonempty 1-D target vector")
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise InvalidArgumentError("shard inputs must be an (n, d_x) array matching y")
        idx = np.arange(y.size) if self.indices is None else self.indices
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "indices", _frozen(idx, dtype=np.int64))

    @property
    def n(self) -> int:
        return int(self.y.shape[0])


@dataclass(frozen=True, eq=False)
class HeldOutStream:
    X: np.ndarray
    y: np.ndarray
    mode: str = "fresh-each-round"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in HELDOUT_MODES:
            raise InvalidArgumentError(f"unknown held-out mode {self.mode!r}")
        object.__setattr__(self, "X", _frozen(np.atleast_2d(self.X) if np.size(self.X) else np.empty((0, 1))))
        object.__setattr__(self, "y", _frozen(self.y))

    @property
    def size(self) -> int:
        return int(self.y.shape[0])


@dataclass(frozen=True, eq=False)
class PrivateSignals:
    s: np.ndarray
    provenance: str = "iid-gaussian"

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        if s.ndim == 1:
            s = s.reshape(-1, 1)
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
            raise InvalidArgumentError("signals must be a (k, d_s) array with k, d_s >= 1")
        if not np.all(np.isfinite(s)):
            raise InvalidArgumentError("signals must be finite")
        object.__setattr__(self, "s", _frozen(s))

    @property
    def k(self) -> int:
        return int(self.s.shape[0])


@dataclass(frozen=True)
class GeneratorConfig:
    theta_star: tuple
    spec: HypothesisSpec = HypothesisSpec()
    noise_std: float = 0.1
    n: int = 400
    k: int = 4
    shard_mode: str = "partition"
    heldout_size: int = 200
    heldout_mode: str = "fresh-each-round"
    signals: str = "shard-summary"
    signal_dim: int = 2
    box: tuple = (-2.0, 2.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta_star", tuple(float(v) for v in np.atleast_1d(self.theta_star)))
        check_parameter(self.spec, self.theta_star)
        if not self.noise_std > 0:
            raise InvalidArgumentError("noise_std must be > 0")
        if self.k < 1 or self.n < self.k:
            raise InvalidArgumentError("need k >= 1 and n >= k")
        if self.heldout_size < 1:
            raise InvalidArgumentError("heldout_size must be >= 1")
        if self.shard_mode not in SHARD_MODES:
            raise InvalidArgumentError(f"unknown shard mode {self.shard_mode!r}")
        if self.heldout_mode not in HELDOUT_MODES:
            raise InvalidArgumentError(f"unknown held-out mode {self.heldout_mode!r}")
        if self.signals not in SIGNAL_PROVENANCES:
            raise InvalidArgumentError(f"unknown signal provenance {self.signals!r}")
        if self.signal_dim < 1:
            raise InvalidArgumentError("signal_dim must be >= 1")
        lo, hi = self.box
        if not lo < hi:
            raise InvalidArgumentError("input box must satisfy low < high")


class SyntheticData(NamedTuple):
    shards: tuple
    heldout: HeldOutStream
    signals: PrivateSignals


def _shard_indices(config, rng):
    n, k = config.n, config.k
    perm = rng.permutation(n)
    parts = np.array_split(perm, k)
    if config.shard_mode == "partition":
        return parts
    if config.shard_mode == "replicate":
        return [parts[0]] * k
    sizes = [len(p) for p in parts]
    if config.shard_mode == "bootstrap-with-replacement":
        return [rng.integers(0, n, size=m) for m in sizes]
    return [rng.choice(n, size=m, replace=False) for m in sizes]


def shard_summary(shard: DataShard) -> np.ndarray:
    """Signal built from a shard: (mean target, mean input norm)."""
    return np.array([shard.y.mean(), np.linalg.norm(shard.X, axis=1).mean()])


def generate(config: GeneratorConfig) -> SyntheticData:
    """Draw the source sample, split it into shards and build the principal's data.

    Every random draw comes from one generator seeded by ``config.seed``:
    inputs, noise, shard indices, then (for ``iid-gaussian``) the signals.
    The held-out pool is drawn alongside the source sample and never enters
    any shard.
    """
    rng = np.random.default_rng(config.seed)
    spec = config.spec
    total = config.n + config.heldout_size
    lo, hi = config.box
    X = rng.uniform(lo, hi, size=(total, spec.input_dim))
    y = predict_many(spec, np.array(config.theta_star), X) + config.noise_std * rng.standard_normal(total)

    shards = tuple(
        DataShard(X[idx], y[idx], shard_id=i + 1, indices=idx)
        for i, idx in enumerate(_shard_indices(config, rng))
    )
    pool = slice(config.n, total)
    heldout = HeldOutStream(X[pool], y[pool], mode=config.heldout_mode, seed=config.seed)

    if config.signals == "shard-summary":
        s = np.vstack([shard_summary(sh) for sh in shards])
    else:
        s = rng.standard_normal((config.k, config.signal_dim))
    return SyntheticData(shards, heldout, PrivateSignals(s, provenance=config.signals))


def heldout_index(stream: HeldOutStream, round_index: int) -> int:
    if round_index < 0:
        raise InvalidArgumentError("round must be >= 0")
    if stream.size == 0:
        raise InvalidStateError("held-out pool is empty")
    return 0 if stream.mode == "fixed-first" else round_index % stream.size


def draw_heldout(stream: HeldOutStream, round_index: int):
    """The principal's out-of-sample pair ``(x, y)`` for a round."""
    i = heldout_index(stream, round_index)
    return stream.X[i].copy(), float(stream.y[i])


def pooled(shards):
    """Concatenate shard samples as (X, y)."""
    return np.vstack([s.X for s in shards]), np.concatenate([s.y for s in shards])


def dump_csv(path, shards, heldout: HeldOutStream):
    """Write shards and the held-out pool (``shard_id = 0``) as CSV."""
    d = shards[0].X.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x_{j + 1}" for j in range(d)] + ["y", "shard_id"])
        for shard in shards:
            for x, y in zip(shard.X, shard.y):
                writer.writerow([format(v, ".17g") for v in x] + [format(y, ".17g"), shard.shard_id])
        for x, y in zip(heldout.X, heldout.y):
            writer.writerow([format(v, ".17g") for v in x] + [format(y, ".17g"), 0])


def load_csv(path, heldout_mode="fresh-each-round", seed=0):
    """Inverse of :func:`dump_csv`; returns ``(shards, heldout)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-2:] != ["y", "shard_id"]:
            raise InvalidArgumentError("CSV header must end with y, shard_id")
        rows = [r for r in reader if r]
    d = len(header) - 2
    groups = {}
    for r in rows:
        groups.setdefault(int(r[-1]), []).append([float(v) for v in r[: d + 1]])
    pool = np.array(groups.pop(0, []), dtype=float).reshape(-1, d + 1)
    shards = tuple(
        DataShard(np.array(groups[i])[:, :d], np.array(groups[i])[:, d], shard_id=i) for i in sorted(groups)
    )
    return shards, HeldOutStream(pool[:, :d], pool[:, d], mode=heldout_mode, seed=seed)
