"""Two-stage tuning on a synthetic corpus: keep fractions, then the pixel adapter.

Stage I picks the sigma-topk keep fraction for the task; stage II searches the
adapter weights on the layer-1 decodes. Example::

    python scripts/tune_adapter.py --task A --q 8 --lam 10 --budget 300 --save adapter.eacw
"""

import argparse

from layercodec.adapters import AdapterWeights, TaskHead, adapt_image
from layercodec.image import decode_image, encode_image
from layercodec.objectives import mse
from layercodec.partition import PredictorConfig
from layercodec.synthetic import image_corpus
from layercodec.tuning import AdapterCase, tune_stage1, tune_stage2


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--images", type=int, default=16)
    ap.add_argument("--holdout", type=int, default=8)
    ap.add_argument("--task", choices=("A", "B"), default="A")
    ap.add_argument("--q", type=float, default=8.0)
    ap.add_argument("--lam", type=float, default=10.0)
    ap.add_argument("--budget", type=int, default=200)
    ap.add_argument("--init-scale", type=float, default=0.0,
                    help="std of the random start (0 starts from the identity)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--save", default=None)
    args = ap.parse_args(argv)

    head = TaskHead(args.task)
    train = image_corpus(args.images)
    test = image_corpus(args.holdout, seed=1)

    s1 = tune_stage1(train, 2, args.lam, PredictorConfig(keep=(0.25,)), head, q=args.q)
    print(f"stage I: keep {s1.config.keep[0]:.2f}, loss {s1.initial_loss:.4f} -> {s1.loss:.4f}")

    def cases(images):
        return [AdapterCase(decode_image(encode_image(im, 2, s1.config, q=args.q).data, 1), head(im))
                for im in images]

    train_cases, test_cases = cases(train), cases(test)
    start = (AdapterWeights.random(1, seed=args.seed, scale=args.init_scale) if args.init_scale
             else AdapterWeights.zeros(1))
    s2 = tune_stage2(train_cases, start, head, budget=args.budget)
    print(f"stage II: {s2.evaluations} evaluations, loss {s2.initial_loss:.4f} -> {s2.loss:.4f}")

    def held_out(w):
        return sum(mse(head(adapt_image(c.xhat, w)), c.target) for c in test_cases) / len(test_cases)

    print(f"held-out task loss: start {held_out(start):.4f}, tuned {held_out(s2.weights):.4f}")
    if args.save:
        s2.weights.save(args.save)
        print(f"saved adapter weights to {args.save}")


if __name__ == "__main__":
    main()
