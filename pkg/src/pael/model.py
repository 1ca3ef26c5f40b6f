"""Hypothesis functions, squared-loss local risk and its analytic gradient.

Two families share one interface:

* ``linear-basis``: ``h(x; theta) = theta @ phi(x)`` where ``phi`` is one of
  ``raw`` (bias + coordinates), ``polynomial`` (bias + per-coordinate powers
  up to ``degree``) or ``fourier`` (bias + ``order`` random cosine features
  with frequencies drawn from ``feature_seed``).
* ``one-hidden-layer``: ``h(x; theta) = v @ tanh(W x + b) + c`` with the
  parameters packed as ``[W.ravel(), b, v, c]``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from pael.errors import InvalidArgumentError, InvalidStateError, NumericOverflowError

FAMILIES = ("linear-basis", "one-hidden-layer")
FEATURE_MAPS = ("raw", "polynomial", "fourier")
LOSSES = ("squared",)


@dataclass(frozen=True)
class HypothesisSpec:
    family: str = "linear-basis"
    feature_map: str = "raw"
    input_dim: int = 1
    degree: int = 2
    order: int = 8
    hidden: int = 4
    feature_seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgumentError(f"unknown hypothesis family {self.family!r}")
        if self.feature_map not in FEATURE_MAPS:
            raise InvalidArgumentError(f"unknown feature map {self.feature_map!r}")
        for name in ("input_dim", "degree", "order", "hidden"):
            if int(getattr(self, name)) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")

    @property
    def n_params(self) -> int:
        d = self.input_dim
        if self.family == "one-hidden-layer":
            return self.hidden * (d + 2) + 1
        if self.feature_map == "raw":
            return d + 1
        if self.feature_map == "polynomial":
            return 1 + d * self.degree
        return 1 + self.order

    @cached_property
    def _fourier(self):
        rng = np.random.default_rng(self.feature_seed)
        omega = rng.standard_normal((self.order, self.input_dim))
        phase = rng.uniform(0.0, 2.0 * np.pi, self.order)
        return omega, phase


def check_parameter(spec: HypothesisSpec, theta) -> np.ndarray:
    """Return ``theta`` as a finite float vector of length ``spec.n_params``."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.shape[0] != spec.n_params:
        raise InvalidArgumentError(f"parameter vector must have length {spec.n_params}, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise InvalidArgumentError("parameter vector has non-finite entries")
    return theta


def _check_inputs(spec, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if spec.input_dim == 1 else X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise InvalidArgumentError(f"inputs must have {spec.input_dim} columns, got shape {X.shape}")
    return X


def features(spec: HypothesisSpec, X) -> np.ndarray:
    """Design matrix ``phi(X)`` of shape ``(n, n_params)`` for a linear-basis spec."""
    if spec.family != "linear-basis":
        raise InvalidArgumentError("features are only defined for the linear-basis family")
    X = _check_inputs(spec, X)
    ones = np.ones((X.shape[0], 1))
    if spec.feature_map == "raw":
        return np.hstack([ones, X])
    if spec.feature_map == "polynomial":
        return np.hstack([ones] + [X**p for p in range(1, spec.degree + 1)])
    omega, phase = spec._fourier
    return np.hstack([ones, np.cos(X @ omega.T + phase)])


def _unpack_network(spec, theta):
    h, d = spec.hidden, spec.input_dim
    W = theta[: h * d].reshape(h, d)
    b = theta[h * d : h * d + h]
    v = theta[h * d + h : h * d + 2 * h]
    c = theta[-1]
    return W, b, v, c


def predict_many(spec: HypothesisSpec, theta, X) -> np.ndarray:
    theta = check_parameter(spec, theta)
    X = _check_inputs(spec, X)
    if spec.family == "linear-basis":
        return features(spec, X) @ theta
    W, b, v, c = _unpack_network(spec, theta)
    return np.tanh(X @ W.T + b) @ v + c


def predict(spec: HypothesisSpec, theta, x) -> float:
    """Evaluate ``h(x; theta)`` at a single input vector."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.shape[0] != spec.input_dim:
        raise InvalidArgumentError(f"input must have length {spec.input_dim}, got shape {x.shape}")
    return float(predict_many(spec, theta, x.reshape(1, -1))[0])


@dataclass(frozen=True)
class LocalObjective:
    """Mean squared loss of one shard under a hypothesis spec.

    ``shard`` only needs ``X`` and ``y`` attributes.
    """

    shard: object
    spec: HypothesisSpec
    loss: str = "squared"

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise InvalidArgumentError(f"unsupported loss {self.loss!r}")

    def _data(self):
        X = np.asarray(self.shard.X, dtype=float)
        y = np.asarray(self.shard.y, dtype=float)
        if y.size == 0:
            raise InvalidStateError("local objective over an empty shard")
        return X, y

    def risk(self, theta) -> float:
        X, y = self._data()
        resid = predict_many(self.spec, theta, X) - y
        return float(np.mean(resid**2))

    def gradient(self, theta) -> np.ndarray:
        X, y = self._data()
        theta = check_parameter(self.spec, theta)
        n = y.shape[0]
        if self.spec.family == "linear-basis":
            Phi = features(self.spec, X)
            grad = (2.0 / n) * (Phi.T @ (Phi @ theta - y))
        else:
            W, b, v, c = _unpack_network(self.spec, theta)
            act = np.tanh(X @ W.T + b)
            e = (2.0 / n) * (act @ v + c - y)
            delta = np.outer(e, v) * (1.0 - act**2)
            grad = np.concatenate([(delta.T @ X).ravel(), delta.sum(axis=0), act.T @ e, [e.sum()]])
        if not np.all(np.isfinite(grad)):
            raise NumericOverflowError("non-finite gradient")
        return grad


def local_risk(obj: LocalObjective, theta) -> float:
    return obj.risk(theta)


def risk_gradient(obj: LocalObjective, theta) -> np.ndarray:
    return obj.gradient(theta)


def growth_diagnostic(obj: LocalObjective, sample) -> float:
    """Empirical Lipschitz-growth constant ``max |grad J|^2 / (1 + |theta|^2)``.

    A reported estimate over the given sample, not a bound.
    """
    sample = [np.asarray(t, dtype=float) for t in sample]
    if not sample:
        raise InvalidArgumentError("growth diagnostic needs a nonempty sample")
    best = 0.0
    for theta in sample:
        g = obj.gradient(theta)
        best = max(best, float(g @ g) / (1.0 + float(theta @ theta)))
    return best
