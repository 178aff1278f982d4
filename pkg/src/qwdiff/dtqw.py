"""Coined discrete-time quantum walk on a cycle, clean and with idle-time noise.

State vectors of length ``2 n`` are indexed ``coin * n + node`` with coin 0
the "up" state (moves to ``node + 1``) and coin 1 "down". For ``n = 2**m``
that index is also the big-endian bit string of a register holding one coin
qubit followed by ``m`` position qubits, which is how the noisy simulation
applies single-qubit channels.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import ParameterError

UP, DOWN = 0, 1


def hadamard_coin() -> np.ndarray:
    return np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)


def shift_operator(n: int) -> np.ndarray:
    if n < 3:
        raise ParameterError(f"cycle needs at least 3 nodes, got {n}")
    s = np.zeros((2 * n, 2 * n))
    v = np.arange(n)
    s[UP * n + (v + 1) % n, UP * n + v] = 1.0
    s[DOWN * n + (v - 1) % n, DOWN * n + v] = 1.0
    return s


def step_unitary(n: int) -> np.ndarray:
    return shift_operator(n) @ np.kron(hadamard_coin(), np.eye(n))


def coined_state(n: int, node: int = 0, coin: int = UP) -> np.ndarray:
    psi = np.zeros(2 * n, dtype=complex)
    psi[coin * n + node] = 1.0
    return psi


def position_marginal(psi) -> np.ndarray:
    amp = np.abs(np.asarray(psi)) ** 2
    return amp.reshape(2, -1).sum(axis=0)


def evolve_pure(psi0, t: int) -> np.ndarray:
    """Position distribution after ``t`` noiseless steps."""
    if t < 0:
        raise ParameterError("number of steps must be non-negative")
    psi = np.asarray(psi0, dtype=complex)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-12:
        raise ParameterError(f"state is not normalised (|psi| = {norm})")
    u = step_unitary(len(psi) // 2)
    for _ in range(t):
        psi = u @ psi
    return position_marginal(psi)


def spread(p, centre: int) -> float:
    """Standard deviation of the position around ``centre`` (no wrap-around)."""
    x = np.arange(len(p)) - centre
    p = np.asarray(p)
    mean = np.sum(p * x)
    return float(np.sqrt(np.sum(p * x * x) - mean * mean))


@dataclass(frozen=True)
class NoiseSchedule:
    c: float = 5e4
    dt_seconds: float = 5e-10
    t1_seconds: float = 200e-6
    t2_seconds: float = 150e-6
    total_steps: int = 20
    shots: int = 0  # 0 keeps the exact marginals
    qubit_mask: tuple | None = None  # qubits that idle during the delay; None means all
    seed: int = 0

    def __post_init__(self):
        if min(self.dt_seconds, self.t1_seconds, self.t2_seconds) <= 0 or self.c < 0:
            raise ParameterError("noise schedule times must be positive")
        if self.t2_seconds > 2 * self.t1_seconds:
            raise ParameterError(
                f"T2 = {self.t2_seconds} exceeds 2 T1 = {2 * self.t1_seconds}")
        if self.total_steps < 2:
            raise ParameterError("noise schedule needs at least two steps")


def delay_samples(t: int, sched: NoiseSchedule) -> int:
    if not 0 <= t <= sched.total_steps - 1:
        raise ParameterError(f"step {t} outside 0..{sched.total_steps - 1}")
    s2 = math.sin(0.5 * math.pi * t / (sched.total_steps - 1)) ** 2
    return int(math.floor(sched.c * s2 / 8.0)) * 8


def delay_schedule(t: int, sched: NoiseSchedule) -> float:
    """Idle time in seconds inserted after step ``t``; a multiple of ``8 dt``."""
    return delay_samples(t, sched) * sched.dt_seconds


@dataclass(frozen=True)
class Channel:
    kraus_ops: tuple

    def completeness_error(self) -> float:
        total = sum(k.conj().T @ k for k in self.kraus_ops)
        return float(np.abs(total - np.eye(2)).max())

    def apply(self, rho):
        return sum(k @ rho @ k.conj().T for k in self.kraus_ops)


def amplitude_damping_kraus(gamma: float):
    return (np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - gamma)]]),
            np.array([[0.0, math.sqrt(gamma)], [0.0, 0.0]]))


def phase_damping_kraus(lam: float):
    return (np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - lam)]]),
            np.array([[0.0, 0.0], [0.0, math.sqrt(lam)]]))


def damping_rates(delay: float, sched: NoiseSchedule):
    """``(gamma, lambda)`` for amplitude and pure-phase damping over ``delay`` seconds."""
    if delay < 0:
        raise ParameterError("delay must be non-negative")
    t1, t2 = sched.t1_seconds, sched.t2_seconds
    if t2 > 2 * t1:
        raise ParameterError(f"T2 = {t2} exceeds 2 T1 = {2 * t1}")
    gamma = -math.expm1(-delay / t1)
    lam = -math.expm1(-2.0 * delay * (1.0 / t2 - 0.5 / t1))
    return gamma, lam


def damping_channel(delay: float, sched: NoiseSchedule) -> Channel:
    """Amplitude damping followed by pure dephasing on one qubit."""
    gamma, lam = damping_rates(delay, sched)
    ops = [p @ a for p in phase_damping_kraus(lam) for a in amplitude_damping_kraus(gamma)]
    return Channel(tuple(op for op in ops if np.any(op)))


def apply_channel_to_qubit(rho, channel: Channel, qubit: int, n_qubits: int):
    """Apply a one-qubit channel to qubit ``qubit`` (0 = most significant) of a register."""
    shape = (2,) * (2 * n_qubits)
    r = np.asarray(rho).reshape(shape)
    out = np.zeros_like(r, dtype=complex)
    for k in channel.kraus_ops:
        tmp = np.moveaxis(np.tensordot(k, r, axes=([1], [qubit])), 0, qubit)
        tmp = np.moveaxis(np.tensordot(tmp, k.conj(), axes=([n_qubits + qubit], [1])),
                          -1, n_qubits + qubit)
        out += tmp
    dim = 2 ** n_qubits
    return out.reshape(dim, dim)


def circulant_from_column(col) -> np.ndarray:
    """Kernel whose column ``j`` is ``col`` rotated forward by ``j``."""
    col = np.asarray(col, dtype=float)
    n = len(col)
    idx = (np.arange(n)[:, np.newaxis] - np.arange(n)[np.newaxis, :]) % n
    return col[idx]


def noisy_step_marginal(n: int, delay: float, sched: NoiseSchedule) -> np.ndarray:
    """Position distribution after one walk step plus idle noise, starting from up, node 0."""
    m = int(round(math.log2(n)))
    if n < 4 or 2 ** m != n:
        raise ParameterError(f"node count must be a power of two >= 4, got {n}")
    n_qubits = m + 1
    psi = step_unitary(n) @ coined_state(n)
    rho = np.outer(psi, psi.conj())
    if delay > 0:
        channel = damping_channel(delay, sched)
        qubits = range(n_qubits) if sched.qubit_mask is None else sched.qubit_mask
        for q in qubits:
            rho = apply_channel_to_qubit(rho, channel, q, n_qubits)
    p = np.clip(np.diagonal(rho).real, 0.0, None).reshape(2, n).sum(axis=0)
    return p / p.sum()


def noisy_walk_kernels(n: int = 8, sched: NoiseSchedule | None = None) -> list:
    """Per-step forward kernels of the noisy walk, one per diffusion step.

    Kernel ``i`` (diffusion step ``i + 1``) is one noisy step at delay
    ``delay_schedule(i)`` from node 0, rotated to every start node.
    """
    sched = sched or NoiseSchedule()
    rng = np.random.default_rng(sched.seed) if sched.shots else None
    kernels = []
    for t in range(sched.total_steps):
        col = noisy_step_marginal(n, delay_schedule(t, sched), sched)
        if rng is not None:
            col = rng.multinomial(sched.shots, col) / sched.shots
        kernels.append(circulant_from_column(col))
    return kernels
