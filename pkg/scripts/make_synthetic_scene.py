#!/usr/bin/env python3
"""Generate a synthetic ground-truth scene plus a camera-like response CSV,
ready for `hsifuse simulate` / `hsifuse run`. Untested convenience tooling.

Example:
    python scripts/make_synthetic_scene.py --out data/desk --bands 16 \
        --size 64 --msi-bands 4 --blobs 80 --seed 7
"""

import argparse
from pathlib import Path

from hsifuse.cube import save_cube
from hsifuse.degradation import make_gaussian_srf, random_blob_cube


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--bands", type=int, default=16)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--msi-bands", type=int, default=4)
    parser.add_argument("--blobs", type=int, default=80)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--sigma-min", type=float, default=1.0)
    parser.add_argument("--sigma-max", type=float, default=3.0)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = random_blob_cube(
        args.bands,
        args.size,
        args.size,
        blobs=args.blobs,
        seed=args.seed,
        sigma_range=(args.sigma_min, args.sigma_max),
    )
    save_cube(scene, out / "scene")
    srf = make_gaussian_srf(args.msi_bands, args.bands)
    rows = ["," .join(repr(float(v)) for v in row) for row in srf.weights]
    (out / "srf.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote {out / 'scene.hsc.json'} and {out / 'srf.csv'}")


if __name__ == "__main__":
    main()
