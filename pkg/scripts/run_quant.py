"""Search for float32 vs binary16 disagreements near test images, one campaign per seed image.

    python scripts/run_quant.py --out runs/quant
"""

from _common import compare, load_or_train, parser, train_digits
from nnfuzz.experiments import DEFAULTS, QUANT_RECIPE, image_seeds
from nnfuzz.models.data import load_digits_split
from nnfuzz.numeric import make_rng


def main():
    p = parser(__doc__.splitlines()[0], runs=20)
    args = p.parse_args()
    data = load_digits_split()
    _, _, xte, yte = data
    model, ckpt = load_or_train(args, lambda: train_digits(QUANT_RECIPE, data))
    cfg = DEFAULTS["quant"].fuzz_config(**({"iterations": args.iterations} if args.iterations else {}))
    picks = make_rng(7).choice(len(xte), args.runs, replace=False)
    compare("quant", model, ckpt, cfg, lambda r: image_seeds(xte[picks[r]:picks[r] + 1],
                                                              yte[picks[r]:picks[r] + 1], 1, 0),
            args.out, args.runs, args.random_iterations)


if __name__ == "__main__":
    main()
