"""File-based experiment stages: kernels, forward, train, generate, evaluate, sweep.

Each stage reads the files written by the previous one inside the output
directory, so any stage can be re-run on its own. ``manifest.json`` records
the configuration, the seeds, a SHA-256 for every artifact and per-stage
timings.
"""
from concurrent.futures import ProcessPoolExecutor
import csv
import hashlib
import json
import logging
from pathlib import Path
import time

import numpy as np

from . import __version__, data, denoiser, diffusion, dtqw, graphs, lindblad, metrics
from .config import ExperimentConfig, derive_seed, dump_config
from .errors import InsufficientSamplesError, StageError

log = logging.getLogger(__name__)

KERNELS = "kernels.csv"
KL_TRACE = "kl_trace.csv"
TRAJECTORIES = "trajectories.qdt"
FORWARD_HIST = "forward_hist.csv"
CHECKPOINT = "checkpoint.qdnp"
LOSS = "loss.csv"
GENERATED = "generated"
GENERATED_HIST = "generated_hist.csv"
METRICS = "metrics.json"
SWEEP = "sweep.csv"
BOX_STATS = "box_stats.json"
MANIFEST = "manifest.json"


# -- dynamics ---------------------------------------------------------------

def build_kernels(cfg: ExperimentConfig, omega=None) -> list:
    omega = cfg.omega if omega is None else omega
    if cfg.mode == "qsw":
        return lindblad.qsw_kernels(omega, cfg.n_nodes, cfg.t_steps, cfg.tau, cfg.amplitude,
                                    cfg.hamiltonian, cfg.substeps or None)
    if cfg.mode == "classical":
        k = graphs.ctrw_kernel(graphs.cycle_graph(cfg.n_nodes), cfg.tau)
        return [k.copy() for _ in range(cfg.t_steps)]
    sched = dtqw.NoiseSchedule(c=cfg.c, dt_seconds=cfg.dt, t1_seconds=cfg.t1,
                               t2_seconds=cfg.t2, total_steps=cfg.t_steps, shots=cfg.shots,
                               qubit_mask=cfg.qubit_mask or None,
                               seed=cfg.stage_seed("shots"))
    return dtqw.noisy_walk_kernels(cfg.n_nodes, sched)


def kl_series(cfg: ExperimentConfig, kernels, omega=None) -> np.ndarray:
    """KL-to-uniform per step of a walker started at node 0.

    For QSW the walker evolves without measurement; for the other modes the
    series follows the measured chain, column 0 of the cumulative kernel.
    """
    omega = cfg.omega if omega is None else omega
    if cfg.mode == "qsw":
        return lindblad.kl_trace(omega, cfg.n_nodes, cfg.t_steps, cfg.tau, cfg.amplitude,
                                 cfg.hamiltonian, cfg.substeps or None)
    sched = diffusion.q_schedule_from_kernels(kernels)
    u = np.full(cfg.n_nodes, 1.0 / cfg.n_nodes)
    return np.array([metrics.kl_divergence(sched.q_bar[t][:, 0], u)
                     for t in range(1, sched.t_steps + 1)])


def load_training_images(cfg: ExperimentConfig) -> np.ndarray:
    ds = data.load_idx(cfg.images, cfg.labels)
    if cfg.split == "combined":
        ds = data.concat(ds, data.load_idx(cfg.test_images, cfg.test_labels))
    ds = data.filter_digit(ds, cfg.digit)
    x0 = data.quantize(ds.images, cfg.n_nodes)
    if cfg.n_images:
        x0 = x0[:cfg.n_images]
    if len(x0) == 0:
        raise StageError(f"no images of digit {cfg.digit} in {cfg.images}")
    return x0


def train_config(cfg: ExperimentConfig, seed=None) -> denoiser.TrainConfig:
    return denoiser.TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr,
                                objective=cfg.objective, hidden=cfg.hidden,
                                t_sampling=cfg.t_sampling,
                                seed=cfg.stage_seed("train") if seed is None else seed)


def trajectory_source(tr, sched, seed, resample):
    """Training data for ``denoiser.train``: fixed, or redrawn from ``x_0`` each epoch."""
    if not resample:
        return tr

    def source(epoch):
        if epoch == 0:
            return tr
        return diffusion.forward_dataset(tr[:, 0], sched, derive_seed(seed, epoch))
    return source


def fit(cfg, x0, sched, seed_forward, seed_train, progress=None):
    """Forward trajectories plus a trained denoiser, in memory."""
    tr = diffusion.forward_dataset(x0, sched, seed_forward)
    source = trajectory_source(tr, sched, seed_forward, cfg.resample_forward)
    params, curve = denoiser.train(source, train_config(cfg, seed_train), k=cfg.n_nodes,
                                   sched=sched, progress=progress)
    return tr, params, curve


def evaluation(train_x0, generated, k, seed) -> dict:
    a = np.asarray(train_x0).reshape(len(train_x0), -1)
    g = np.asarray(generated).reshape(len(generated), -1)
    noise = np.random.default_rng(seed).integers(0, k, size=g.shape)
    h_train = metrics.histogram(a, k)
    return {
        "fid_proxy": metrics.frechet_distance(a, g),
        "fid_noise_baseline": metrics.frechet_distance(a, noise),
        "kl_generated_vs_train": metrics.kl_divergence(metrics.histogram(g, k), h_train),
        "kl_uniform_vs_train": metrics.kl_divergence(np.full(k, 1.0 / k), h_train),
    }


# -- files ------------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_kernels(path, kernels):
    rows = [(t + 1, i, j, _fmt(k[i, j]))
            for t, k in enumerate(kernels) for i in range(k.shape[0]) for j in range(k.shape[1])]
    write_csv(path, ("step", "row", "col", "prob"), rows)


def read_kernels(path) -> list:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    steps = max(int(r["step"]) for r in rows)
    n = max(int(r["row"]) for r in rows) + 1
    out = np.zeros((steps, n, n))
    for r in rows:
        out[int(r["step"]) - 1, int(r["row"]), int(r["col"])] = float(r["prob"])
    return list(out)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise StageError(f"{path} not found; run the '{stage}' stage first")
    return path


class Run:
    """Output directory plus its manifest."""

    def __init__(self, cfg: ExperimentConfig, out=None):
        self.cfg = cfg
        self.dir = Path(out or cfg.out)
        self.dir.mkdir(parents=True, exist_ok=True)
        mpath = self.dir / MANIFEST
        self.manifest = json.loads(mpath.read_text()) if mpath.exists() else {"stages": {}}

    def path(self, name) -> Path:
        return self.dir / name

    def record(self, stage, artifacts, seconds, results=None, seeds=None):
        entry = {
            "artifacts": {str(Path(a).relative_to(self.dir)): sha256(a) for a in artifacts},
            "seconds": round(seconds, 3),
        }
        if results:
            entry["metrics"] = results
        if seeds:
            entry["seeds"] = seeds
        m = self.manifest
        m["code_version"] = __version__
        m["config"] = self.cfg.as_dict()
        m["stages"][stage] = entry
        (self.dir / "config.txt").write_text(dump_config(self.cfg))
        self.path(MANIFEST).write_text(json.dumps(m, indent=2, sort_keys=True, default=list) + "\n")


# -- stages -----------------------------------------------------------------

def cmd_kernels(run: Run):
    cfg, t0 = run.cfg, time.perf_counter()
    kernels = build_kernels(cfg)
    write_kernels(run.path(KERNELS), kernels)
    series = kl_series(cfg, kernels)
    write_csv(run.path(KL_TRACE), ("t", "kl"),
              [(t + 1, _fmt(v)) for t, v in enumerate(series)])
    run.record("kernels", [run.path(KERNELS), run.path(KL_TRACE)], time.perf_counter() - t0,
               seeds={"shots": cfg.stage_seed("shots")})
    return kernels, series


def cmd_forward(run: Run):
    cfg, t0 = run.cfg, time.perf_counter()
    sched = diffusion.q_schedule_from_kernels(read_kernels(_require(run.path(KERNELS), "kernels")))
    x0 = load_training_images(cfg)
    seed = cfg.stage_seed("forward")
    tr = diffusion.forward_dataset(x0, sched, seed)
    with open(run.path(TRAJECTORIES), "wb") as f:
        diffusion.write_trajectories(f, tr, sched.k)
    hist = diffusion.pixel_histograms(tr, sched.k)
    u = np.full(sched.k, 1.0 / sched.k)
    rows = [(t, *map(_fmt, h), _fmt(metrics.kl_divergence(h, u))) for t, h in enumerate(hist)]
    write_csv(run.path(FORWARD_HIST), ("step", *(f"p{i}" for i in range(sched.k)), "kl_uniform"),
              rows)
    final_kl = metrics.kl_divergence(hist[-1], u)
    run.record("forward", [run.path(TRAJECTORIES), run.path(FORWARD_HIST)],
               time.perf_counter() - t0, {"final_kl_uniform": final_kl}, {"forward": seed})
    return tr, hist


def _load_trajectories(run: Run):
    with open(_require(run.path(TRAJECTORIES), "forward"), "rb") as f:
        return diffusion.read_trajectories(f)


def cmd_train(run: Run, progress=None):
    cfg, t0 = run.cfg, time.perf_counter()
    tr, k = _load_trajectories(run)
    sched = None
    if cfg.objective == "posterior-kl" or cfg.resample_forward:
        sched = diffusion.q_schedule_from_kernels(read_kernels(_require(run.path(KERNELS), "kernels")))
    tcfg = train_config(cfg)
    source = trajectory_source(tr, sched, cfg.stage_seed("forward"), cfg.resample_forward)
    params, curve = denoiser.train(source, tcfg, k=k, sched=sched, progress=progress)
    with open(run.path(CHECKPOINT), "wb") as f:
        denoiser.save_checkpoint(f, params)
    write_csv(run.path(LOSS), ("epoch", "loss"), [(e + 1, _fmt(v)) for e, v in enumerate(curve)])
    run.record("train", [run.path(CHECKPOINT), run.path(LOSS)], time.perf_counter() - t0,
               {"final_loss": float(curve[-1])}, {"train": tcfg.seed})
    return params, curve


def cmd_generate(run: Run):
    cfg, t0 = run.cfg, time.perf_counter()
    with open(_require(run.path(CHECKPOINT), "train"), "rb") as f:
        params = denoiser.load_checkpoint(f)
    tr, k = _load_trajectories(run)
    n = cfg.n_generate or len(tr)
    seed = cfg.stage_seed("generate")
    images = denoiser.generate(params, n, seed)
    gdir = run.path(GENERATED)
    gdir.mkdir(exist_ok=True)
    for old in gdir.glob("*.pgm"):
        old.unlink()
    paths = []
    for i, img in enumerate(images):
        p = gdir / f"gen_{i:05d}.pgm"
        p.write_bytes(data.write_pgm(img, k))
        paths.append(p)
    h_gen = metrics.histogram(images, k)
    h_train = metrics.histogram(tr[:, 0], k)
    write_csv(run.path(GENERATED_HIST), ("level", "generated", "train"),
              [(i, _fmt(a), _fmt(b)) for i, (a, b) in enumerate(zip(h_gen, h_train))])
    run.record("generate", paths + [run.path(GENERATED_HIST)], time.perf_counter() - t0,
               seeds={"generate": seed})
    return images


def read_generated(run: Run) -> np.ndarray:
    paths = sorted(_require(run.path(GENERATED), "generate").glob("gen_*.pgm"))
    if not paths:
        raise StageError("no generated images; run the 'generate' stage first")
    return np.stack([data.read_pgm(p.read_bytes())[0] for p in paths])


def cmd_evaluate(run: Run):
    cfg, t0 = run.cfg, time.perf_counter()
    tr, k = _load_trajectories(run)
    seed = cfg.stage_seed("evaluate")
    results = evaluation(tr[:, 0], read_generated(run), k, seed)
    run.path(METRICS).write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")
    run.record("evaluate", [run.path(METRICS)], time.perf_counter() - t0, results,
               {"evaluate": seed})
    return results


def cmd_run_all(run: Run, progress=None):
    cmd_kernels(run)
    cmd_forward(run)
    cmd_train(run, progress)
    cmd_generate(run)
    return cmd_evaluate(run)


def sweep_cell(cfg: ExperimentConfig, omega: float, rep: int, x0=None) -> float:
    """Train and score one (omega, repetition) cell entirely in memory."""
    cell = derive_seed(cfg.seed, float(omega), int(rep))
    if x0 is None:
        x0 = load_training_images(cfg)
    sched = diffusion.q_schedule_from_kernels(build_kernels(cfg, omega))
    _, params, _ = fit(cfg, x0, sched, derive_seed(cell, "forward"), derive_seed(cell, "train"))
    generated = denoiser.generate(params, cfg.n_generate or len(x0), derive_seed(cell, "generate"))
    a = x0.reshape(len(x0), -1)
    return metrics.frechet_distance(a, generated.reshape(len(generated), -1))


def _cell_job(args):
    cfg, omega, rep = args
    return sweep_cell(cfg, omega, rep)


def cmd_sweep(run: Run, serial=False):
    cfg, t0 = run.cfg, time.perf_counter()
    if cfg.repetitions < 5:
        raise InsufficientSamplesError(
            f"box statistics need at least 5 repetitions, got {cfg.repetitions}")
    cells = [(float(w), r) for w in cfg.omegas for r in range(cfg.repetitions)]
    if serial or cfg.workers == 1:
        x0 = load_training_images(cfg)
        fids = [sweep_cell(cfg, w, r, x0) for w, r in cells]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            fids = list(pool.map(_cell_job, [(cfg, w, r) for w, r in cells]))
    rows, stats = [], {}
    for w in dict.fromkeys(c[0] for c in cells):
        vals = [f for (cw, r), f in zip(cells, fids) if cw == w]
        rows += [(w, r, _fmt(f)) for r, f in enumerate(vals)]
        box = metrics.boxplot_stats(vals)
        rows.append((w, "mean", _fmt(box.mean)))
        stats[repr(w)] = box.to_dict()
    write_csv(run.path(SWEEP), ("omega", "repetition", "fid"), rows)
    run.path(BOX_STATS).write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    run.record("sweep", [run.path(SWEEP), run.path(BOX_STATS)], time.perf_counter() - t0,
               seeds={f"{w}/{r}": derive_seed(cfg.seed, w, r) for w, r in cells})
    return stats
