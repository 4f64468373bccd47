"""Rate/task-loss sweep over a synthetic corpus.

Writes one CSV row per (image, q, lam, layer) and prints corpus means per
operating point. Example::

    python scripts/rd_sweep.py --q 8 16 --lam 1 10 100 --out sweep.csv
"""

import argparse
from collections import defaultdict

import numpy as np

from layercodec.sweep import rd_sweep, rows_to_csv
from layercodec.synthetic import image_corpus


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--images", type=int, default=16)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--channels", type=int, choices=(1, 3), default=1)
    ap.add_argument("--layers", type=int, default=2)
    ap.add_argument("--q", type=float, nargs="+", default=[8.0, 16.0])
    ap.add_argument("--lam", type=float, nargs="+", default=[1.0, 10.0, 100.0])
    ap.add_argument("--task", choices=("A", "B"), default="A")
    ap.add_argument("--no-tune", action="store_true", help="use the default keep fractions")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default=None, help="CSV path (default: stdout summary only)")
    args = ap.parse_args(argv)

    corpus = image_corpus(args.images, (args.size, args.size), args.channels)
    rows = rd_sweep(corpus, args.q, args.lam, args.layers, args.task,
                    tune=not args.no_tune, jobs=args.jobs)
    if args.out:
        with open(args.out, "w") as f:
            f.write(rows_to_csv(rows))

    groups = defaultdict(list)
    for r in rows:
        groups[(r["q"], r["lam"], str(r["layer"]))].append(r)
    print(f"{'q':>6} {'lam':>7} {'layer':>6} {'bpp':>8} {'psnr':>8} {'task':>10}")
    for (q, lam, layer), rs in groups.items():
        m = {k: float(np.mean([r[k] for r in rs])) for k in ("bpp", "psnr", "task_loss")}
        print(f"{q:6g} {lam:7g} {layer:>6} {m['bpp']:8.4f} {m['psnr']:8.2f} {m['task_loss']:10.4f}")


if __name__ == "__main__":
    main()
