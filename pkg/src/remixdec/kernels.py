"""Hot numeric kernels with optional numba acceleration.

Every kernel exists in two flavours: a pure-numpy implementation
(``*_np``) and, when numba is importable, an ``@njit``-compiled one
(``*_nb``). The public names (``splitmix64_unit``, ``js_divergence_raw``,
``joint_marginals_raw``) are bound to one flavour at import time,
selected by the ``REMIXDEC_BACKEND`` environment variable:

    REMIXDEC_BACKEND=numpy   force the pure-numpy path
    REMIXDEC_BACKEND=numba   force numba (error if unavailable)

unset: numba when importable, numpy otherwise.
"""

from __future__ import annotations

import os

import numpy as np

_SM64_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM64_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM64_M2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / (1 << 53)

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False


def _select_backend() -> str:
    env = os.environ.get("REMIXDEC_BACKEND", "").strip().lower()
    if env == "numpy":
        return "numpy"
    if env == "numba":
        if not NUMBA_AVAILABLE:
            raise RuntimeError("REMIXDEC_BACKEND=numba but numba is not importable")
        return "numba"
    if env:
        raise RuntimeError(f"unknown REMIXDEC_BACKEND value: {env!r}")
    return "numba" if NUMBA_AVAILABLE else "numpy"


BACKEND = _select_backend()


# ---------------------------------------------------------------------------
# splitmix64 stream -> floats in [0, 1)
#
# k-th output (1-based) is mix(seed + k * GAMMA) mod 2^64; the float is the
# top 53 bits of the mixed word as a binary fraction. Bit-exact across
# backends and platforms, so golden files apply to both paths.
# ---------------------------------------------------------------------------

def splitmix64_unit_np(count: int, seed: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        k = np.arange(1, count + 1, dtype=np.uint64)
        z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + k * _SM64_GAMMA
        z = (z ^ (z >> np.uint64(30))) * _SM64_M1
        z = (z ^ (z >> np.uint64(27))) * _SM64_M2
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * _U53


# ---------------------------------------------------------------------------
# Jensen-Shannon divergence, base-2 logs, unchecked inputs.
# ---------------------------------------------------------------------------

def js_divergence_raw_np(p: np.ndarray, q: np.ndarray) -> float:
    m = 0.5 * (p + q)
    pm = p > 0.0
    qm = q > 0.0
    kl_p = np.sum(p[pm] * np.log2(p[pm] / m[pm]))
    kl_q = np.sum(q[qm] * np.log2(q[qm] / m[qm]))
    return 0.5 * (kl_p + kl_q)


# ---------------------------------------------------------------------------
# Weighted completion-table marginals.
#
# marg[i, v] = sum over completions c with c[i] == v of
#              w_c * prod_{j != i} lik[j, c[j]]
# Unnormalized; the caller normalizes and handles all-zero rows.
# ---------------------------------------------------------------------------

def joint_marginals_raw_np(comps: np.ndarray, weights: np.ndarray,
                           lik: np.ndarray) -> np.ndarray:
    n_comp, n_pos = comps.shape
    vocab = lik.shape[1]
    # per-completion likelihood at each position, then leave-one-out products
    vals = lik[np.arange(n_pos)[None, :], comps]          # (n_comp, n_pos)
    left = np.ones_like(vals)
    np.cumprod(vals[:, :-1], axis=1, out=left[:, 1:])
    right = np.ones_like(vals)
    np.cumprod(vals[:, :0:-1], axis=1, out=right[:, -2::-1])
    excl = weights[:, None] * left * right                # (n_comp, n_pos)
    marg = np.zeros((n_pos, vocab))
    np.add.at(marg, (np.arange(n_pos)[None, :], comps), excl)
    return marg


if NUMBA_AVAILABLE:

    @njit(cache=True)
    def splitmix64_unit_nb(count, seed):  # pragma: no cover - jitted
        out = np.empty(count, dtype=np.float64)
        gamma = np.uint64(0x9E3779B97F4A7C15)
        m1 = np.uint64(0xBF58476D1CE4E5B9)
        m2 = np.uint64(0x94D049BB133111EB)
        s = np.uint64(seed)
        for i in range(count):
            s = s + gamma
            z = s
            z = (z ^ (z >> np.uint64(30))) * m1
            z = (z ^ (z >> np.uint64(27))) * m2
            z = z ^ (z >> np.uint64(31))
            out[i] = np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)
        return out

    @njit(cache=True)
    def js_divergence_raw_nb(p, q):  # pragma: no cover - jitted
        acc = 0.0
        for i in range(p.shape[0]):
            m = 0.5 * (p[i] + q[i])
            if p[i] > 0.0:
                acc += 0.5 * p[i] * np.log2(p[i] / m)
            if q[i] > 0.0:
                acc += 0.5 * q[i] * np.log2(q[i] / m)
        return acc

    @njit(cache=True)
    def joint_marginals_raw_nb(comps, weights, lik):  # pragma: no cover - jitted
        n_comp, n_pos = comps.shape
        vocab = lik.shape[1]
        marg = np.zeros((n_pos, vocab))
        for c in range(n_comp):
            for i in range(n_pos):
                prod = weights[c]
                for j in range(n_pos):
                    if j != i:
                        prod *= lik[j, comps[c, j]]
                marg[i, comps[c, i]] += prod
        return marg


if BACKEND == "numba":
    def splitmix64_unit(count: int, seed: int) -> np.ndarray:
        return splitmix64_unit_nb(count, np.uint64(seed & 0xFFFFFFFFFFFFFFFF))

    js_divergence_raw = js_divergence_raw_nb
    joint_marginals_raw = joint_marginals_raw_nb
else:
    splitmix64_unit = splitmix64_unit_np
    js_divergence_raw = js_divergence_raw_np
    joint_marginals_raw = joint_marginals_raw_np
