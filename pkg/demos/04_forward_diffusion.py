"""Forward diffusion of MNIST zeros: every pixel is an independent walker.

Pixel intensities are quantised to 8 grey levels, one per node of cycle(8).
We push 500 digit-0 images through 20 steps of the omega = 1 walk and write a
few trajectories as PGM files, next to the pixel-value histogram per step.
"""
import argparse
from pathlib import Path

import numpy as np

from qwdiff import data, diffusion, lindblad, metrics

parser = argparse.ArgumentParser()
parser.add_argument("--omega", type=float, default=1.0)
parser.add_argument("--out", default="demo_forward")
args = parser.parse_args()

root = Path(__file__).resolve().parents[1] / "data" / "mnist5k"
ds = data.filter_digit(data.load_idx(root / "images-idx3-ubyte.gz",
                                     root / "labels-idx1-ubyte.gz"), 0)
x0 = data.quantize(ds.images, 8)
sched = diffusion.q_schedule_from_kernels(lindblad.qsw_kernels(args.omega))
traj = diffusion.forward_dataset(x0, sched, seed=0)

out = Path(args.out)
out.mkdir(exist_ok=True)
for t in (0, 1, 2, 5, 10, 20):
    (out / f"image0_t{t:02d}.pgm").write_bytes(data.write_pgm(traj[0, t], 8))

uniform = np.full(8, 1 / 8)
for t, h in enumerate(diffusion.pixel_histograms(traj, 8)):
    print(f"t={t:2d}  {np.array2string(h, precision=3)}  KL to uniform {metrics.kl_divergence(h, uniform):.4f}")
print(f"\nwrote PGM snapshots of the first image to {out}/")
