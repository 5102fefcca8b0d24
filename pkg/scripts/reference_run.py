"""Reference LOOCV run: seed 42, published tree counts, real-SAR events.

Prints the metric summary and elapsed time; ``--report`` keeps the full
per-fold JSON. This is the run that pins the accuracy band used by the
acceptance suite.
"""

import argparse
import json
import time

from haorcast import features as F
from haorcast.synthetic import generate_bundled_dataset
from haorcast.validation import Trainer, run_protocol


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--protocol", default="loocv")
    ap.add_argument("--eval", choices=("real", "all"), default="real")
    ap.add_argument("--fast", action="store_true")
    ap.add_argument("--with-layers", action="store_true")
    ap.add_argument("--report", default=None)
    args = ap.parse_args()

    events = generate_bundled_dataset(args.seed)
    if args.eval == "real":
        events = [e for e in events if e.provenance == F.REAL_SAR]
    trainer = Trainer.fast() if args.fast else Trainer()
    t0 = time.perf_counter()
    rep = run_protocol(args.protocol, events, trainer=trainer, seed=args.seed,
                       layers_enabled=args.with_layers)
    elapsed = time.perf_counter() - t0

    print(f"{rep.protocol} on {rep.matrix.total} events, seed {args.seed}, {elapsed:.1f} s")
    print("confusion", rep.matrix)
    print("metrics  ", rep.metrics.rounded(3))
    print(f"auc       {rep.auc_roc:.3f}")
    for key in ("fold_accuracy_sd", "uncertain", "accuracy_mean", "hard_cases"):
        if key in rep.extras:
            print(f"{key:<10}", json.dumps(rep.extras[key]))
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(rep.to_text())


if __name__ == "__main__":
    main()
