"""Backward model: a shared head layer and one two-layer tail per time step.

The input is the concatenated one-hot encoding of every pixel of ``x_t``
(length ``P * K`` for ``P`` pixels); the output holds ``P`` blocks of ``K``
logits for ``x_{t-1}``. Everything is float64 numpy.
"""
from dataclasses import dataclass, field
import math
import struct

import numba
import numpy as np

from .errors import FormatError, ParameterError, ShapeError

CKPT_MAGIC = b"QDNP"
CKPT_VERSION = 1
OBJECTIVES = ("cross-entropy", "posterior-kl")
T_SAMPLING = ("per-batch", "per-sample")


@dataclass
class DenoiserParams:
    width: int
    height: int
    k: int
    head_w: np.ndarray   # (P*K, hidden)
    head_b: np.ndarray   # (hidden,)
    tail1_w: np.ndarray  # (T, hidden, hidden)
    tail1_b: np.ndarray  # (T, hidden)
    tail2_w: np.ndarray  # (T, hidden, P*K)
    tail2_b: np.ndarray  # (T, P*K)

    @property
    def t_steps(self) -> int:
        return self.tail1_w.shape[0]

    @property
    def hidden(self) -> int:
        return self.head_b.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    @property
    def in_width(self) -> int:
        return self.head_w.shape[0]

    def arrays(self):
        """Parameter arrays in checkpoint order (tails interleaved per step)."""
        yield self.head_w
        yield self.head_b
        for t in range(self.t_steps):
            yield self.tail1_w[t]
            yield self.tail1_b[t]
            yield self.tail2_w[t]
            yield self.tail2_b[t]

    def copy(self):
        return DenoiserParams(self.width, self.height, self.k,
                              *(a.copy() for a in (self.head_w, self.head_b, self.tail1_w,
                                                   self.tail1_b, self.tail2_w, self.tail2_b)))


def _dims(width, height, k, t_steps, hidden):
    if min(width, height, k, t_steps, hidden) < 1:
        raise ParameterError("denoiser dimensions must be positive")
    return width * height * k


def zero_params(width, height, k, t_steps, hidden=800) -> DenoiserParams:
    d = _dims(width, height, k, t_steps, hidden)
    return DenoiserParams(width, height, k,
                          np.zeros((d, hidden)), np.zeros(hidden),
                          np.zeros((t_steps, hidden, hidden)), np.zeros((t_steps, hidden)),
                          np.zeros((t_steps, hidden, d)), np.zeros((t_steps, d)))


def init_params(width, height, k, t_steps, seed=0, hidden=800) -> DenoiserParams:
    """Weights uniform in ``+-1/sqrt(fan_in)``, biases zero."""
    p = zero_params(width, height, k, t_steps, hidden)
    rng = np.random.default_rng(seed)

    def fill(a):
        bound = 1.0 / math.sqrt(a.shape[-2])
        a[...] = rng.uniform(-bound, bound, size=a.shape)

    fill(p.head_w)
    for t in range(t_steps):
        fill(p.tail1_w[t])
        fill(p.tail2_w[t])
    return p


def one_hot(x, k: int) -> np.ndarray:
    """``(B, H, W)`` levels -> ``(B, H*W*K)`` concatenated per-pixel one-hot rows."""
    x = np.asarray(x).reshape(len(x), -1)
    out = np.zeros((x.shape[0], x.shape[1] * k))
    cols = np.arange(x.shape[1]) * k + x
    out[np.arange(x.shape[0])[:, np.newaxis], cols] = 1.0
    return out


def _check_t(p, t):
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > p.t_steps):
        raise ParameterError(f"t must lie in 1..{p.t_steps}")


def _tail(p, a0, t):
    z1 = a0 @ p.tail1_w[t - 1] + p.tail1_b[t - 1]
    a1 = np.maximum(z1, 0.0)
    return z1, a1, a1 @ p.tail2_w[t - 1] + p.tail2_b[t - 1]


def forward_logits(p: DenoiserParams, x_t, t: int) -> np.ndarray:
    """Logits ``(B, P, K)`` of ``p(x_{t-1} | x_t)`` for a batch of images at step ``t``."""
    _check_t(p, t)
    x_t = np.asarray(x_t)
    if x_t.ndim == 2:
        x_t = x_t[np.newaxis]
    a0 = np.maximum(one_hot(x_t, p.k) @ p.head_w + p.head_b, 0.0)
    return _tail(p, a0, t)[2].reshape(len(x_t), p.n_pixels, p.k)


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


@dataclass
class Grads:
    head_w: np.ndarray
    head_b: np.ndarray
    tails: dict = field(default_factory=dict)  # t -> (w1, b1, w2, b2)


def _loss_and_grads(p, x_t, t, target, norm):
    """Shared backward pass; ``target`` is ``(B, P, K)`` probabilities.

    Loss is ``sum target * (log target - log softmax) / norm``, i.e. the
    per-pixel KL (cross-entropy for one-hot targets) averaged over ``norm``.
    """
    x_t = np.asarray(x_t)
    t = np.broadcast_to(np.asarray(t), (len(x_t),))
    _check_t(p, t)
    xin = one_hot(x_t, p.k)
    z0 = xin @ p.head_w + p.head_b
    a0 = np.maximum(z0, 0.0)
    da0 = np.zeros_like(a0)
    grads = Grads(None, None)
    loss = 0.0
    for step in np.unique(t):
        rows = np.nonzero(t == step)[0]
        z1, a1, logits = _tail(p, a0[rows], step)
        logits = logits.reshape(len(rows), p.n_pixels, p.k)
        logq = log_softmax(logits)
        tgt = target[rows]
        pos = tgt > 0
        loss += float(np.sum(tgt[pos] * (np.log(tgt[pos]) - logq[pos])))
        dlogits = ((np.exp(logq) - tgt) / norm).reshape(len(rows), -1)
        gw2 = a1.T @ dlogits
        gb2 = dlogits.sum(axis=0)
        dz1 = (dlogits @ p.tail2_w[step - 1].T) * (z1 > 0)
        gw1 = a0[rows].T @ dz1
        gb1 = dz1.sum(axis=0)
        da0[rows] = dz1 @ p.tail1_w[step - 1].T
        grads.tails[int(step)] = (gw1, gb1, gw2, gb2)
    dz0 = da0 * (z0 > 0)
    grads.head_w = xin.T @ dz0
    grads.head_b = dz0.sum(axis=0)
    return loss / norm, grads


def _target_one_hot(levels, k):
    levels = np.asarray(levels).reshape(len(levels), -1)
    return np.eye(k)[levels]


def ce_loss_and_grads(p: DenoiserParams, x_t, x_prev, t, norm=None):
    """Mean per-pixel cross-entropy of predicting ``x_prev`` from ``x_t`` at steps ``t``.

    ``t`` is a scalar or one step per sample. ``norm`` overrides the
    divisor (default: number of samples times pixels).
    """
    x_t = np.asarray(x_t)
    norm = norm or len(x_t) * p.n_pixels
    return _loss_and_grads(p, x_t, t, _target_one_hot(x_prev, p.k), norm)


def posterior_targets(x_t, x_0, t, sched):
    from .diffusion import posterior

    x_t = np.asarray(x_t).reshape(len(x_t), -1)
    x_0 = np.asarray(x_0).reshape(len(x_0), -1)
    t = np.broadcast_to(np.asarray(t), (len(x_t),))
    return np.stack([posterior(a, b, int(s), sched) for a, b, s in zip(x_t, x_0, t)])


def posterior_kl_loss_and_grads(p: DenoiserParams, x_t, x_0, t, sched, norm=None):
    """Mean per-pixel ``KL(q(x_{t-1} | x_t, x_0) || p_theta(x_{t-1} | x_t))``."""
    x_t = np.asarray(x_t)
    norm = norm or len(x_t) * p.n_pixels
    return _loss_and_grads(p, x_t, t, posterior_targets(x_t, x_0, t, sched), norm)


def posterior_kl_loss(p, x_t, x_0, t, sched) -> float:
    return posterior_kl_loss_and_grads(p, x_t, x_0, t, sched)[0]


@numba.njit(cache=True)
def _adam_kernel(w, g, m, v, lr, b1, b2, eps, c1, c2):
    w = w.ravel()
    g = g.ravel()
    m = m.ravel()
    v = v.ravel()
    for i in range(w.size):
        mi = b1 * m[i] + (1.0 - b1) * g[i]
        vi = b2 * v[i] + (1.0 - b2) * g[i] * g[i]
        m[i] = mi
        v[i] = vi
        w[i] -= lr * (mi / c1) / (math.sqrt(vi / c2) + eps)


class AdamState:
    """Adam moments with one step counter per parameter group.

    Groups are the head and each tail. A tail that receives no gradient in a
    step is left untouched, moments and counter included.
    """

    def __init__(self, p: DenoiserParams, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        # np.zeros pages are only committed once a tail is first updated
        self.m = [np.zeros_like(a) for a in (p.head_w, p.head_b, p.tail1_w, p.tail1_b,
                                             p.tail2_w, p.tail2_b)]
        self.v = [np.zeros_like(a) for a in self.m]
        self.head_steps = 0
        self.tail_steps = np.zeros(p.t_steps, dtype=np.int64)

    def _update(self, w, g, m, v, step):
        if w.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {w.shape}")
        c1 = 1.0 - self.beta1 ** step
        c2 = 1.0 - self.beta2 ** step
        _adam_kernel(w, np.ascontiguousarray(g), m, v, self.lr, self.beta1, self.beta2,
                     self.eps, c1, c2)


def adam_step(p: DenoiserParams, grads: Grads, state: AdamState):
    """Bias-corrected Adam update of ``p`` in place; returns ``(p, state)``."""
    state.head_steps += 1
    state._update(p.head_w, grads.head_w, state.m[0], state.v[0], state.head_steps)
    state._update(p.head_b, grads.head_b, state.m[1], state.v[1], state.head_steps)
    for t, (gw1, gb1, gw2, gb2) in sorted(grads.tails.items()):
        i = t - 1
        state.tail_steps[i] += 1
        n = state.tail_steps[i]
        state._update(p.tail1_w[i], gw1, state.m[2][i], state.v[2][i], n)
        state._update(p.tail1_b[i], gb1, state.m[3][i], state.v[3][i], n)
        state._update(p.tail2_w[i], gw2, state.m[4][i], state.v[4][i], n)
        state._update(p.tail2_b[i], gb2, state.m[5][i], state.v[5][i], n)
    return p, state


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    lr: float = 1e-3
    objective: str = "cross-entropy"
    seed: int = 0
    hidden: int = 800
    t_sampling: str = "per-batch"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0 or self.hidden < 1:
            raise ParameterError("epochs, batch size, lr and hidden width must be positive")
        if self.objective not in OBJECTIVES:
            raise ParameterError(f"unknown objective {self.objective!r}")
        if self.t_sampling not in T_SAMPLING:
            raise ParameterError(f"unknown t sampling {self.t_sampling!r}")


def train(trajectories, cfg: TrainConfig, k: int = 8, sched=None, params=None,
          progress=None):
    """Fit the denoiser to ``(count, T + 1, H, W)`` trajectories.

    Each epoch visits every trajectory once in shuffled order, in minibatches
    of ``cfg.batch_size``; every visit contributes one ``(x_t, x_{t-1}, t)``
    pair with ``t`` uniform on ``1..T``. Under ``per-batch`` sampling a
    minibatch shares one ``t``, so each Adam step touches a single tail.
    ``trajectories`` may also be a callable ``epoch -> array`` to redraw the
    forward chain every epoch. Returns ``(params, per-epoch mean loss)``.
    """
    source = trajectories if callable(trajectories) else None
    tr = np.asarray(source(0) if source else trajectories)
    if len(tr) == 0:
        raise ParameterError("training set is empty")
    if cfg.objective == "posterior-kl" and sched is None:
        raise ParameterError("posterior-kl objective needs the forward schedule")
    count, steps, height, width = tr.shape
    t_steps = steps - 1
    rng = np.random.default_rng(cfg.seed)
    if params is None:
        params = init_params(width, height, k, t_steps, rng.integers(2**63), cfg.hidden)
    state = AdamState(params, lr=cfg.lr)
    curve = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        if source is not None and epoch:
            tr = np.asarray(source(epoch))
        order = rng.permutation(count)
        total, seen = 0.0, 0
        for start in range(0, count, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if cfg.t_sampling == "per-batch":
                t = np.full(len(idx), rng.integers(1, t_steps + 1))
            else:
                t = rng.integers(1, t_steps + 1, size=len(idx))
            x_t = tr[idx, t]
            if cfg.objective == "cross-entropy":
                loss, grads = ce_loss_and_grads(params, x_t, tr[idx, t - 1], t)
            else:
                loss, grads = posterior_kl_loss_and_grads(params, x_t, tr[idx, 0], t, sched)
            adam_step(params, grads, state)
            total += loss * len(idx)
            seen += len(idx)
        curve[epoch] = total / seen
        if progress is not None:
            progress(epoch, curve[epoch])
    return params, curve


def generate(p: DenoiserParams, n: int, seed=0, chunk: int = 256) -> np.ndarray:
    """Ancestral sampling from uniform noise; returns ``(n, H, W)`` levels ``x_0``.

    Image ``i`` draws all of its randomness from ``SeedSequence([seed, i])``,
    so the output does not depend on ``chunk``.
    """
    shape = (p.height, p.width)
    out = np.empty((n,) + shape, dtype=np.uint8)
    for start in range(0, n, chunk):
        b = min(chunk, n - start)
        rngs = [np.random.default_rng(np.random.SeedSequence([seed, i]))
                for i in range(start, start + b)]
        x = np.stack([r.integers(0, p.k, size=shape) for r in rngs]).astype(np.uint8)
        for t in range(p.t_steps, 0, -1):
            probs = softmax(forward_logits(p, x, t))
            cdf = np.cumsum(probs, axis=-1)
            cdf[..., -1] = 1.0
            u = np.stack([r.random((p.height * p.width, 1)) for r in rngs])
            x = (u >= cdf).sum(axis=-1).astype(np.uint8).reshape((b,) + shape)
        out[start:start + b] = x
    return out


def save_checkpoint(f, p: DenoiserParams):
    """``QDNP``, version, then W, H, K, T (u32 little-endian) and the
    float64 arrays of ``DenoiserParams.arrays`` in order."""
    f.write(CKPT_MAGIC + struct.pack("<5I", CKPT_VERSION, p.width, p.height, p.k, p.t_steps))
    for a in p.arrays():
        f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _hidden_from_count(n_floats, d, t_steps):
    # n = d h + h + T (h^2 + h + h d + d)
    a, b, c = t_steps, d + 1 + t_steps * (1 + d), t_steps * d - n_floats
    h = int(round((-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)))
    if h < 1 or a * h * h + b * h + c != 0:
        raise FormatError("checkpoint payload does not match its dimensions")
    return h


def load_checkpoint(f) -> DenoiserParams:
    head = f.read(24)
    if len(head) < 24 or head[:4] != CKPT_MAGIC:
        raise FormatError("not a denoiser checkpoint")
    version, width, height, k, t_steps = struct.unpack("<5I", head[4:])
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    payload = f.read()
    if len(payload) % 8:
        raise FormatError("checkpoint payload is not a whole number of float64 values")
    d = width * height * k
    hidden = _hidden_from_count(len(payload) // 8, d, t_steps)
    p = zero_params(width, height, k, t_steps, hidden)
    flat = np.frombuffer(payload, dtype="<f8")
    pos = 0
    for a in p.arrays():
        a[...] = flat[pos:pos + a.size].reshape(a.shape)
        pos += a.size
    return p
