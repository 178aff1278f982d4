"""Quantum stochastic walks: the omega-interpolated GKSL generator on a graph.

The generator mixes coherent hopping with classical incoherent hopping::

    L[rho] = -(1 - omega) i [H, rho] + omega * sum_k (L_k rho L_k^+ - 1/2 {L_k^+ L_k, rho})

with one jump operator per directed edge ``j -> i``. Integration is classic
RK4 on the density matrix; see ``propagate``.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import NumericalInstabilityError, ParameterError
from .graphs import Graph, cycle_graph, transition_matrix
from .metrics import kl_divergence

CONVENTIONS = ("sqrt", "linear")
HAMILTONIANS = ("adjacency", "laplacian")

# default RK4 step; 128 substeps per 0.6 time units keeps the
# expm discrepancy below 1e-8 up to tau = 6 for every omega
MAX_STEP = 0.6 / 128


@dataclass(frozen=True)
class Liouvillian:
    omega: float
    hamiltonian: np.ndarray
    lindblad_ops: np.ndarray  # (n_ops, dim, dim)
    amplitude_convention: str = "sqrt"

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def __post_init__(self):
        ops = np.asarray(self.lindblad_ops, dtype=complex)
        # sum_k L_k^+ L_k, cached for the anticommutator
        object.__setattr__(self, "_jump_norm", np.einsum("kji,kjl->il", ops.conj(), ops))
        object.__setattr__(self, "_ops_dag", np.ascontiguousarray(np.swapaxes(ops.conj(), 1, 2)))
        object.__setattr__(self, "lindblad_ops", ops)

    def coherent(self, rho):
        h = self.hamiltonian
        return -1j * (h @ rho - rho @ h)

    def dissipative(self, rho):
        ops = self.lindblad_ops
        jump = (ops @ rho[..., np.newaxis, :, :] @ self._ops_dag).sum(axis=-3)
        g = self._jump_norm
        return jump - 0.5 * (g @ rho + rho @ g)

    def superoperator(self) -> np.ndarray:
        """Matrix ``M`` with ``l(rho).ravel() == M @ rho.ravel()`` (row-major vec)."""
        n = self.dim
        units = np.eye(n * n, dtype=complex).reshape(n * n, n, n)
        return self(units).reshape(n * n, n * n).T

    def __call__(self, rho):
        """Time derivative of ``rho``; accepts a stack of matrices."""
        rho = np.asarray(rho, dtype=complex)
        out = np.zeros_like(rho)
        if self.omega < 1.0:
            out += (1.0 - self.omega) * self.coherent(rho)
        if self.omega > 0.0:
            out += self.omega * self.dissipative(rho)
        return out


def hamiltonian_for(g: Graph, kind: str = "adjacency") -> np.ndarray:
    a = g.adjacency.astype(float)
    if kind == "adjacency":
        return a
    if kind == "laplacian":
        return np.diag(g.degrees.astype(float)) - a
    raise ParameterError(f"unknown hamiltonian {kind!r}; expected one of {HAMILTONIANS}")


def build_generator(g: Graph, omega: float, convention: str = "sqrt",
                    hamiltonian: str = "adjacency") -> Liouvillian:
    if not 0.0 <= omega <= 1.0:
        raise ParameterError(f"omega must lie in [0, 1], got {omega}")
    if convention not in CONVENTIONS:
        raise ParameterError(f"unknown amplitude convention {convention!r}")
    s = transition_matrix(g)
    amp = s if convention == "linear" else np.sqrt(s)
    n = g.n_nodes
    rows, cols = np.nonzero(s)
    ops = np.zeros((len(rows), n, n))
    ops[np.arange(len(rows)), rows, cols] = amp[rows, cols]
    return Liouvillian(float(omega), hamiltonian_for(g, hamiltonian), ops, convention)


def basis_state(n: int, i: int) -> np.ndarray:
    rho = np.zeros((n, n), dtype=complex)
    rho[i, i] = 1.0
    return rho


def check_density_matrix(rho, atol=1e-10, eig_tol=1e-8):
    """Raise ``NumericalInstabilityError`` unless ``rho`` (or each matrix of a stack) is a state."""
    rho = np.asarray(rho)
    herm = np.abs(rho - np.swapaxes(rho.conj(), -1, -2)).max()
    if herm > atol:
        raise NumericalInstabilityError(f"state lost Hermiticity ({herm:.2e})")
    tr = np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1.0).max()
    if tr > atol:
        raise NumericalInstabilityError(f"state lost unit trace ({tr:.2e})")
    lam = np.linalg.eigvalsh(rho).min()
    if lam < -eig_tol:
        raise NumericalInstabilityError(
            f"state has eigenvalue {lam:.2e}; increase the number of substeps")


def _tidy(rho):
    rho = 0.5 * (rho + np.swapaxes(rho.conj(), -1, -2))
    tr = np.trace(rho, axis1=-2, axis2=-1).real
    return rho / tr[..., np.newaxis, np.newaxis]


def propagate(l: Liouvillian, rho, tau: float, substeps: int | None = None):
    """Integrate ``drho/dt = l(rho)`` over ``tau`` with fixed-step RK4.

    ``substeps`` defaults to ``ceil(tau / MAX_STEP)``. Each substep is
    followed by Hermitian symmetrisation and trace renormalisation.
    Works on a single matrix or a stack of them.
    """
    if tau <= 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    if substeps is None:
        substeps = max(1, math.ceil(tau / MAX_STEP - 1e-9))
    if substeps < 1:
        raise ParameterError("substeps must be a positive integer")
    rho = np.array(rho, dtype=complex)
    shape = rho.shape
    n2 = l.dim * l.dim
    # right-multiplying row vectors by M^T applies the generator to a whole stack
    mt = l.superoperator().T
    v = rho.reshape(-1, n2)
    h = tau / substeps
    for _ in range(substeps):
        k1 = v @ mt
        k2 = (v + 0.5 * h * k1) @ mt
        k3 = (v + 0.5 * h * k2) @ mt
        k4 = (v + h * k3) @ mt
        v = v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        v = _tidy(v.reshape(-1, l.dim, l.dim)).reshape(-1, n2)
    rho = v.reshape(shape)
    check_density_matrix(rho)
    return rho


def populations(rho) -> np.ndarray:
    """Diagonal of ``rho`` with negative round-off clamped and the mass renormalised."""
    p = np.clip(np.diagonal(np.asarray(rho), axis1=-2, axis2=-1).real, 0.0, None)
    return p / p.sum(axis=-1, keepdims=True)


def step_kernel(l: Liouvillian, tau: float, substeps: int | None = None) -> np.ndarray:
    """One evolve-then-measure step as a column-stochastic matrix.

    Column ``j`` holds the populations reached from ``|j><j|`` after ``tau``.
    """
    n = l.dim
    starts = np.zeros((n, n, n), dtype=complex)
    starts[np.arange(n), np.arange(n), np.arange(n)] = 1.0
    return populations(propagate(l, starts, tau, substeps)).T


def kl_trace(omega: float, n: int = 8, t_steps: int = 20, tau: float = 0.6,
             convention: str = "sqrt", hamiltonian: str = "adjacency",
             substeps: int | None = None) -> np.ndarray:
    """KL(populations || uniform) of a single walker started at node 0.

    The walker is never measured: entry ``t - 1`` is taken after ``t * tau``
    of uninterrupted evolution, for ``t = 1 .. t_steps``.
    """
    l = build_generator(cycle_graph(n), omega, convention, hamiltonian)
    rho = basis_state(n, 0)
    uniform = np.full(n, 1.0 / n)
    out = np.empty(t_steps)
    for t in range(t_steps):
        rho = propagate(l, rho, tau, substeps)
        out[t] = kl_divergence(populations(rho), uniform)
    return out


def qsw_kernels(omega: float, n: int = 8, t_steps: int = 20, tau: float = 0.6,
                convention: str = "sqrt", hamiltonian: str = "adjacency",
                substeps: int | None = None) -> list:
    """Per-step kernels of the QSW forward chain; the generator is time independent."""
    l = build_generator(cycle_graph(n), omega, convention, hamiltonian)
    k = step_kernel(l, tau, substeps)
    return [k.copy() for _ in range(t_steps)]
