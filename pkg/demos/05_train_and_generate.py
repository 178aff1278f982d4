"""Train a small denoiser on MNIST zeros and sample new digits from noise.

This is the desk-scale experiment at reduced size so it finishes in about a
minute: 100 images, a 200-unit MLP and 150 epochs. Raise the flags to reach
the full setting (500 images, 800 units, 200 epochs, roughly half an hour on
one core). The printout compares the generated set with the training set and
with uniform noise.
"""
import argparse
from pathlib import Path

import numpy as np

from qwdiff import data, denoiser, diffusion, lindblad, metrics

parser = argparse.ArgumentParser()
parser.add_argument("--images", type=int, default=100)
parser.add_argument("--hidden", type=int, default=200)
parser.add_argument("--epochs", type=int, default=150)
parser.add_argument("--omega", type=float, default=1.0)
parser.add_argument("--out", default="demo_generated")
args = parser.parse_args()

root = Path(__file__).resolve().parents[1] / "data" / "mnist5k"
ds = data.filter_digit(data.load_idx(root / "images-idx3-ubyte.gz",
                                     root / "labels-idx1-ubyte.gz"), 0)
x0 = data.quantize(ds.images[:args.images], 8)
sched = diffusion.q_schedule_from_kernels(lindblad.qsw_kernels(args.omega))
traj = diffusion.forward_dataset(x0, sched, seed=0)

cfg = denoiser.TrainConfig(epochs=args.epochs, hidden=args.hidden)
params, curve = denoiser.train(
    traj, cfg, progress=lambda e, loss: print(f"epoch {e + 1:3d}  loss {loss:.4f}")
    if (e + 1) % 25 == 0 else None)

samples = denoiser.generate(params, len(x0), seed=1)
noise = np.random.default_rng(2).integers(0, 8, size=samples.shape)
flat = x0.reshape(len(x0), -1)
print(f"\nFrechet proxy to training set: generated {metrics.frechet_distance(flat, samples.reshape(len(x0), -1)):.1f}, "
      f"noise {metrics.frechet_distance(flat, noise.reshape(len(x0), -1)):.1f}")
h = metrics.histogram(x0, 8)
print(f"KL of pixel histograms to training: generated {metrics.kl_divergence(metrics.histogram(samples, 8), h):.2e}, "
      f"uniform {metrics.kl_divergence(np.full(8, 1 / 8), h):.3f}")

out = Path(args.out)
out.mkdir(exist_ok=True)
for i, img in enumerate(samples[:16]):
    (out / f"sample_{i:02d}.pgm").write_bytes(data.write_pgm(img, 8))
print(f"wrote 16 samples to {out}/")
