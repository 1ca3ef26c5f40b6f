"""Kernel weights over the principal's private signals.

Vector signals are compared through ``psi(||s_i - s_j|| / h)`` with a radial
profile ``psi``; rows are normalized to sum to one.
"""

from dataclasses import dataclass

import numpy as np

from pael.errors import BandwidthUndefinedError, DegenerateRowError, InvalidArgumentError

KERNELS = ("gaussian", "epanechnikov")
BANDWIDTH_RULES = ("fixed", "silverman")


@dataclass(frozen=True)
class KernelSpec:
    kernel: str = "gaussian"
    bandwidth: str = "fixed"
    h: float = 1.0

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise InvalidArgumentError(f"unknown kernel {self.kernel!r}")
        if self.bandwidth not in BANDWIDTH_RULES:
            raise InvalidArgumentError(f"unknown bandwidth rule {self.bandwidth!r}")
        if self.bandwidth == "fixed" and not self.h > 0:
            raise InvalidArgumentError("fixed bandwidth must be > 0")


def gaussian(u):
    return np.exp(-0.5 * np.square(u))


def epanechnikov(u):
    return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - np.square(u)), 0.0)


_PROFILES = {"gaussian": gaussian, "epanechnikov": epanechnikov}


def _signal_array(signals):
    s = getattr(signals, "s", signals)
    s = np.asarray(s, dtype=float)
    return s.reshape(-1, 1) if s.ndim == 1 else s


def silverman_bandwidth(signals) -> float:
    """``1.06 * sd * k**(-1/5)`` with ``sd`` pooled over all signal coordinates."""
    s = _signal_array(signals)
    k = s.shape[0]
    if k < 2:
        raise BandwidthUndefinedError("silverman bandwidth needs at least two signals")
    sd = float(np.std(s.ravel(), ddof=1))
    if not sd > 0:
        raise BandwidthUndefinedError("silverman bandwidth undefined for identical signals")
    return 1.06 * sd * k ** (-0.2)


def resolve_bandwidth(signals, spec: KernelSpec) -> float:
    return spec.h if spec.bandwidth == "fixed" else silverman_bandwidth(signals)


def kernel_matrix(signals, spec: KernelSpec) -> np.ndarray:
    """Unnormalized ``psi(||s_i - s_j|| / h)``."""
    s = _signal_array(signals)
    h = resolve_bandwidth(s, spec)
    dist = np.linalg.norm(s[:, None, :] - s[None, :, :], axis=-1)
    return _PROFILES[spec.kernel](dist / h)


def normalize_rows(K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    totals = K.sum(axis=1)
    bad = np.flatnonzero(~(totals > 0))
    if bad.size:
        raise DegenerateRowError(f"kernel rows {bad.tolist()} have no mass inside the kernel support")
    return K / totals[:, None]


def kernel_weights(signals, spec: KernelSpec = KernelSpec()) -> np.ndarray:
    """Row-stochastic ``k x k`` similarity weights between private signals.

    Gaussian rows are normalized in the log domain and floored at the
    smallest normal float, so far-apart signals keep a strictly positive
    (if negligible) weight instead of underflowing to zero.
    """
    if spec.kernel != "gaussian":
        return normalize_rows(kernel_matrix(signals, spec))
    s = _signal_array(signals)
    h = resolve_bandwidth(s, spec)
    dist = np.linalg.norm(s[:, None, :] - s[None, :, :], axis=-1)
    log_k = -0.5 * np.square(dist / h)
    K = np.maximum(np.exp(log_k - log_k.max(axis=1, keepdims=True)), np.finfo(float).tiny)
    return normalize_rows(K)
