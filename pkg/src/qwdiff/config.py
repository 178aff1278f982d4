"""Experiment configuration: one flat ``key = value`` file.

Every key has a default; where the original experiments fixed a value the
default equals it, otherwise it is a desk-scale choice. ``explain()`` lists
both.
"""
import configparser
from dataclasses import dataclass, field, fields, replace
import hashlib

from .errors import ParameterError

MODES = ("qsw", "dtqw-noisy", "classical")


def _f(default, doc, published=None):
    return field(default=default, metadata={"doc": doc, "published": published})


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = _f("qsw", "forward dynamics: qsw, dtqw-noisy or classical")
    omega: float = _f(1.0, "coherent/incoherent mixing of the stochastic walk")
    omegas: tuple = _f(tuple(round(0.1 * i, 1) for i in range(11)),
                       "omega values visited by sweep", "0, 0.1, ..., 1")
    n_nodes: int = _f(8, "cycle length = number of grey levels K", 8)
    t_steps: int = _f(20, "diffusion steps T", 20)
    tau: float = _f(0.6, "walk evolution time per diffusion step", 0.6)
    substeps: int = _f(0, "RK4 substeps per step (0 = automatic)")
    amplitude: str = _f("sqrt", "jump amplitude: sqrt (rates S_ij) or linear (rates S_ij^2)")
    hamiltonian: str = _f("adjacency", "coherent generator: adjacency or laplacian")
    c: float = _f(5e4, "delay scale, in device samples", 5e4)
    dt: float = _f(5e-10, "device sample length in seconds", 5e-10)
    t1: float = _f(200e-6, "emulated amplitude-damping time T1 (s)")
    t2: float = _f(150e-6, "emulated coherence time T2 (s)")
    shots: int = _f(0, "shots per kernel column (0 = exact)", "1e5 simulator, 1e4 device")
    qubit_mask: tuple = _f((), "qubits idling during delays (empty = all)")
    digit: int = _f(0, "MNIST digit to model", 0)
    images: str = _f("data/mnist5k/images-idx3-ubyte.gz", "IDX image file")
    labels: str = _f("data/mnist5k/labels-idx1-ubyte.gz", "IDX label file")
    split: str = _f("train", "train, or combined to append the test files")
    test_images: str = _f("", "IDX test image file (split = combined)")
    test_labels: str = _f("", "IDX test label file (split = combined)")
    n_images: int = _f(500, "training images kept (0 = all)", 6903)
    hidden: int = _f(800, "width of the head and tail layers", 800)
    epochs: int = _f(200, "training epochs", 10000)
    batch_size: int = _f(16, "minibatch size", 16)
    lr: float = _f(1e-3, "Adam learning rate", 1e-3)
    objective: str = _f("cross-entropy", "cross-entropy or posterior-kl", "cross-entropy")
    t_sampling: str = _f("per-batch", "draw t per-batch or per-sample")
    n_generate: int = _f(0, "images generated (0 = as many as training images)")
    repetitions: int = _f(10, "sweep repetitions per omega", 10)
    resample_forward: bool = _f(False, "redraw forward trajectories every epoch")
    seed: int = _f(0, "master seed")
    workers: int = _f(1, "parallel sweep cells (ignored with --serial)")
    out: str = _f("run", "output directory")

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.omega <= 1.0:
            raise ParameterError(f"omega must lie in [0, 1], got {self.omega}")
        if any(not 0.0 <= w <= 1.0 for w in self.omegas):
            raise ParameterError("every sweep omega must lie in [0, 1]")
        if self.n_nodes < 3 or self.t_steps < 2 or self.tau <= 0:
            raise ParameterError("need n_nodes >= 3, t_steps >= 2 and tau > 0")
        if self.split not in ("train", "combined"):
            raise ParameterError(f"split must be train or combined, got {self.split!r}")
        if self.repetitions < 1 or self.workers < 1 or self.shots < 0 or self.n_images < 0:
            raise ParameterError("repetitions and workers must be positive, shots and n_images >= 0")

    def with_(self, **kw):
        return replace(self, **kw)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def stage_seed(self, stage: str) -> int:
        return derive_seed(self.seed, stage)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from any printable parts."""
    digest = hashlib.sha256(":".join(repr(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _convert(name, kind, raw):
    raw = raw.strip()
    if kind is tuple:
        items = [s for s in raw.replace(",", " ").split() if s]
        cast = int if name == "qubit_mask" else float
        return tuple(cast(s) for s in items)
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ParameterError(f"{name}: expected a boolean, got {raw!r}")
    if kind is int:
        return int(float(raw))
    return kind(raw)


def parse_config(text: str, **overrides) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    parser.read_string("[experiment]\n" + text)
    kinds = {f.name: type(f.default) for f in fields(ExperimentConfig)}
    values = {}
    for key, raw in parser["experiment"].items():
        key = key.replace("-", "_")
        if key not in kinds:
            raise ParameterError(f"unknown config key {key!r}")
        try:
            values[key] = _convert(key, kinds[key], raw)
        except ValueError as e:
            raise ParameterError(f"{key}: {e}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path=None, **overrides) -> ExperimentConfig:
    text = ""
    if path is not None:
        with open(path) as f:
            text = f.read()
    return parse_config(text, **overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def explain() -> str:
    rows = []
    for f in fields(ExperimentConfig):
        d = f.default
        if isinstance(d, tuple):
            d = ", ".join(str(x) for x in d) or "(all)"
        published = f.metadata["published"]
        note = f"   [published: {published}]" if published is not None else ""
        rows.append(f"{f.name:<17} = {d!s:<36} {f.metadata['doc']}{note}")
    return "\n".join(rows) + "\n"
