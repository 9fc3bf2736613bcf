"""Classical-pipeline RMSE under the three corruption kinds.

Each noisy B-scan is migrated and compared against the migration of its clean
version. Prints one row per noise kind.
"""

import argparse

import numpy as np

from gprsurvey import metrics
from gprsurvey.datasets import SlabConfig, random_slab, simulate_lines
from gprsurvey.forward import NoiseSpec, corrupt_bscan, wave_velocity
from gprsurvey.migration import migrate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scans", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--levels", type=float, nargs="+", default=[0.05, 0.1, 0.2, 0.5])
    args = ap.parse_args()

    cfg = SlabConfig(scan_lines=1)
    rng = np.random.default_rng(args.seed)
    scans = []
    for _ in range(args.scans):
        slab = random_slab(cfg, rng)
        ((b, _),) = simulate_lines(slab, [cfg.width / 2])
        v = wave_velocity(slab)
        scans.append((b, v, migrate(b, v).grid))

    print("kind         " + "".join(f"{lv:>10g}" for lv in args.levels))
    for kind in ("gaussian", "salt_pepper", "speckle"):
        row = []
        for lv in args.levels:
            errs = [metrics.rmse_image(migrate(corrupt_bscan(b, NoiseSpec(kind, lv, seed=k)), v).grid, clean) for k, (b, v, clean) in enumerate(scans)]
            row.append(np.mean(errs))
        print(f"{kind:<13}" + "".join(f"{x:10.4f}" for x in row))


if __name__ == "__main__":
    main()
