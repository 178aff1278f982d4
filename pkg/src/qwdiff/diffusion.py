"""Categorical forward process driven by walk kernels.

Kernels and transition matrices use the column convention of the walkers:
``Q[t][i, j] = q(x_t = i | x_{t-1} = j)`` and ``Qbar[t] = Q[t] @ Qbar[t-1]``
with ``Qbar[0] = I``, so ``q(x_t | x_0)`` is column ``x_0`` of ``Qbar[t]``.

Images are integer arrays of levels in ``0 .. K-1``; a trajectory stacks
``x_0 .. x_T`` along a new leading axis.
"""
from dataclasses import dataclass
import struct

import numpy as np

from .errors import (DegeneratePosteriorError, FormatError, ParameterError,
                     ShapeError)

TRAJ_MAGIC = b"QDT1"


def check_levels(x, k: int) -> np.ndarray:
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.integer):
        raise ShapeError(f"levels must be integers, got {x.dtype}")
    if x.size and (x.min() < 0 or x.max() >= k):
        raise ParameterError(f"levels must lie in 0..{k - 1}")
    return x


@dataclass(frozen=True)
class QSchedule:
    q: np.ndarray      # (T, K, K), q[t - 1] drives step t
    q_bar: np.ndarray  # (T + 1, K, K), q_bar[0] = identity

    @property
    def t_steps(self) -> int:
        return self.q.shape[0]

    @property
    def k(self) -> int:
        return self.q.shape[1]

    def marginal(self, x0: int, t: int) -> np.ndarray:
        """``q(x_t | x_0)`` as a length-K vector."""
        return self.q_bar[t][:, x0]


def q_schedule_from_kernels(kernels) -> QSchedule:
    mats = [np.asarray(k, dtype=float) for k in kernels]
    if len({m.shape for m in mats}) != 1:
        raise ShapeError("kernels differ in size")
    q = np.array(mats)
    if q.ndim != 3 or q.shape[1] != q.shape[2]:
        raise ShapeError(f"kernels must be a list of square matrices of one size, got {q.shape}")
    if np.any(q < -1e-12) or np.abs(q.sum(axis=1) - 1.0).max() > 1e-9:
        raise ParameterError("every kernel must be column stochastic")
    q = np.clip(q, 0.0, None)
    q_bar = np.empty((len(q) + 1,) + q.shape[1:])
    q_bar[0] = np.eye(q.shape[1])
    for t in range(len(q)):
        q_bar[t + 1] = q[t] @ q_bar[t]
    return QSchedule(q, q_bar)


def _sample_columns(cdf, x, rng):
    u = rng.random(x.shape)
    return (u[np.newaxis] >= cdf[:, x]).sum(axis=0).astype(x.dtype)


def _cdfs(sched: QSchedule):
    cdf = np.cumsum(sched.q, axis=1)
    cdf[:, -1, :] = 1.0
    return cdf


def forward_sample(x0, sched: QSchedule, seed=None) -> np.ndarray:
    """Run every pixel of ``x0`` through the chain; returns ``(T + 1, *x0.shape)``.

    Pixels are independent walkers: at step ``t`` each draws its next level
    from column ``x_{t-1}`` of ``Q[t]``.
    """
    x = check_levels(x0, sched.k).astype(np.uint8)
    rng = np.random.default_rng(seed)
    cdf = _cdfs(sched)
    out = np.empty((sched.t_steps + 1,) + x.shape, dtype=np.uint8)
    out[0] = x
    for t in range(sched.t_steps):
        out[t + 1] = _sample_columns(cdf[t], out[t], rng)
    return out


def image_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(index)])


def forward_dataset(images, sched: QSchedule, seed: int = 0) -> np.ndarray:
    """Trajectories for a stack of images, ``(count, T + 1, H, W)``.

    Image ``i`` uses its own stream derived from ``(seed, i)``, so results
    do not depend on how the work is split.
    """
    images = np.asarray(images)
    out = np.empty((len(images), sched.t_steps + 1) + images.shape[1:], dtype=np.uint8)
    for i, img in enumerate(images):
        out[i] = forward_sample(img, sched, image_seed(seed, i))
    return out


def shift_remap(dist, start: int) -> np.ndarray:
    """Re-express a distribution measured from node 0 for a walker starting at ``start``."""
    return np.roll(np.asarray(dist), int(start))


def posterior(x_t, x_0, t: int, sched: QSchedule) -> np.ndarray:
    """``q(x_{t-1} | x_t, x_0)``; broadcasts over arrays of levels (last axis is K)."""
    if not 1 <= t <= sched.t_steps:
        raise ParameterError(f"t must lie in 1..{sched.t_steps}, got {t}")
    x_t = np.asarray(x_t)
    x_0 = np.asarray(x_0)
    # q(x_t | x_{t-1} = k) * q(x_{t-1} = k | x_0)
    num = sched.q[t - 1][x_t, :] * np.moveaxis(sched.q_bar[t - 1][:, x_0], 0, -1)
    den = sched.q_bar[t][x_t, x_0]
    if np.any(den <= 0):
        raise DegeneratePosteriorError(f"q(x_t | x_0) = 0 at step {t}")
    return num / np.asarray(den)[..., np.newaxis]


def pixel_histograms(trajectories, k: int) -> np.ndarray:
    """Per-step level frequencies over a whole trajectory set, ``(T + 1, K)``."""
    tr = np.asarray(trajectories)
    steps = np.moveaxis(tr, 1, 0).reshape(tr.shape[1], -1)
    counts = np.stack([np.bincount(s, minlength=k) for s in steps]).astype(float)
    return counts / counts.sum(axis=1, keepdims=True)


def write_trajectories(f, trajectories, k: int):
    """Binary layout: ``QDT1`` then K, T, width, height, count (little-endian
    int32), then per image, per step, ``height * width`` level bytes."""
    tr = np.ascontiguousarray(trajectories, dtype=np.uint8)
    count, steps, height, width = tr.shape
    f.write(TRAJ_MAGIC + struct.pack("<5i", k, steps - 1, width, height, count))
    f.write(tr.tobytes())


def read_trajectories(f):
    """Inverse of ``write_trajectories``; returns ``(trajectories, k)``."""
    head = f.read(24)
    if len(head) < 24 or head[:4] != TRAJ_MAGIC:
        raise FormatError("not a trajectory file")
    k, t_steps, width, height, count = struct.unpack("<5i", head[4:])
    n = count * (t_steps + 1) * height * width
    payload = f.read(n)
    if len(payload) != n:
        raise FormatError(f"trajectory payload truncated: {len(payload)} of {n} bytes")
    tr = np.frombuffer(payload, dtype=np.uint8).reshape(count, t_steps + 1, height, width)
    return tr.copy(), k
