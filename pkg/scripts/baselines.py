"""Logistic regression, random forest, boosting and the blended ensemble on
matched LOOCV folds, with McNemar tests against the ensemble."""

import argparse

from haorcast import features as F
from haorcast.synthetic import generate_bundled_dataset
from haorcast.validation import Trainer, baseline_compare


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--eval", choices=("real", "all"), default="real")
    ap.add_argument("--full", action="store_true")
    args = ap.parse_args()

    events = generate_bundled_dataset(args.seed)
    if args.eval == "real":
        events = [e for e in events if e.provenance == F.REAL_SAR]
    rows = baseline_compare(events, args.seed, Trainer() if args.full else Trainer.fast())
    print(f"{'model':<22}{'acc':>7}{'f1':>7}{'auc':>7}   mcnemar vs ensemble")
    for r in rows:
        mc = r.get("mcnemar_vs_ensemble")
        tail = "" if mc is None else f"   chi2={mc['chi2']:.3f} p={mc['p']:.3f} (b={mc['b']}, c={mc['c']})"
        f1 = float("nan") if r["f1"] is None else r["f1"]
        print(f"{r['model']:<22}{r['accuracy']:>7.3f}{f1:>7.3f}{r['auc_roc']:>7.3f}{tail}")


if __name__ == "__main__":
    main()
