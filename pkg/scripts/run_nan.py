"""Hunt for non-finite losses in a digits MLP trained through a naive softmax.

    python scripts/run_nan.py --out runs/nan
"""

from _common import compare, load_or_train, parser, train_digits
from nnfuzz.experiments import DEFAULTS, NAN_RECIPE, image_seeds
from nnfuzz.models.data import load_digits_split


def main():
    p = parser(__doc__.splitlines()[0], runs=10)
    args = p.parse_args()
    data = load_digits_split()
    _, _, xte, yte = data
    model, ckpt = load_or_train(args, lambda: train_digits(NAN_RECIPE, data))
    d = DEFAULTS["nan"]
    cfg = d.fuzz_config(**({"iterations": args.iterations} if args.iterations else {}))
    compare("nan", model, ckpt, cfg, lambda r: image_seeds(xte, yte, d.num_seeds, r), args.out, args.runs,
            args.random_iterations or 2 * cfg.iterations)


if __name__ == "__main__":
    main()
