"""Counter-based uniforms: a splitmix64 hash of ``(seed, stream, t, i)``.

Each draw is a pure function of its coordinates, so particle ``i`` at step
``t`` sees the same number however work is split across threads. The same
function body runs under numba (scalars) and numpy (uint64 arrays).
"""

import numpy as np

from ._accel import jit

GENERATOR_NAME = "splitmix64-counter/v1"

STREAM_PROPOSE = 1
STREAM_RESAMPLE = 2
STREAM_PMMH_SMC = 3
STREAM_EXPERIMENT = 4
STREAM_SELECT = 5

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_ONE = np.uint64(1)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_INV53 = 2.0 ** -53


def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _key(seed, stream, t, i):
    h = _mix(seed + _GAMMA * (stream + _ONE))
    h = _mix(h + _GAMMA * (t + _ONE))
    return _mix(h + _GAMMA * (i + _ONE))


def _uniform(seed, stream, t, i):
    return (_key(seed, stream, t, i) >> _S11) * _INV53


mix_jit = jit(_mix)


@jit
def uniform_jit(seed, stream, t, i):
    """Scalar twin of :func:`_uniform` for compiled kernels."""
    h = mix_jit(seed + _GAMMA * (stream + _ONE))
    h = mix_jit(h + _GAMMA * (t + _ONE))
    h = mix_jit(h + _GAMMA * (i + _ONE))
    return (h >> _S11) * _INV53


def as_seed(seed) -> np.uint64:
    return np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)


def uniforms(seed, stream, t, idx):
    """Vectorised uniforms in [0, 1) for particle indices ``idx``."""
    idx = np.asarray(idx, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _uniform(as_seed(seed), np.uint64(stream), np.uint64(t), idx)


def derive_seed(seed, stream, a=0, b=0) -> int:
    """Child seed for coordinates ``(a, b)`` of ``stream``; a Python int."""
    with np.errstate(over="ignore"):
        h = _key(as_seed(seed), np.uint64(stream), np.uint64(a), np.array([b], dtype=np.uint64))
    return int(h[0])
