"""Look for blacklisted or repeated words in samples from a character-level LSTM.

    python scripts/run_text.py --out runs/text
"""

from dataclasses import asdict

from _common import compare, load_or_train, parser
from nnfuzz.experiments import (DEFAULT_BLACKLIST, DEFAULTS, TEXT_CORPUS_SIZE, TEXT_RECIPE, text_seeds,
                                train_text_model)
from nnfuzz.models.data import make_text_corpus


def main():
    p = parser(__doc__.splitlines()[0], runs=5)
    args = p.parse_args()
    corpus = make_text_corpus(TEXT_CORPUS_SIZE)
    model, ckpt = load_or_train(args, lambda: (train_text_model(TEXT_RECIPE, corpus), asdict(TEXT_RECIPE)))
    d = DEFAULTS["text"]
    cfg = d.fuzz_config(**({"iterations": args.iterations} if args.iterations else {}))
    seeds = text_seeds(model, d.num_seeds, corpus)
    compare("text", model, ckpt, cfg, lambda r: seeds, args.out, args.runs, args.random_iterations,
            blacklist=list(DEFAULT_BLACKLIST))


if __name__ == "__main__":
    main()
