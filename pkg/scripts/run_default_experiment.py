#!/usr/bin/env python3
"""Full default experiment: synthesize the cohort, train local / federated /
central under 5-fold CV, run the fixed-horizon comparison suite, and emit
every report file.

Equivalent to:
    fedhorizon synth --data-dir <out>/data
    fedhorizon compare-fixed --data-dir <out>/data --out <out>

but kept in one process so the cohort is not re-read from CSV.
"""

import argparse
import time

from fedhorizon import experiment
from fedhorizon.config import config_hash, resolve_config
from fedhorizon.synthgen import generate_cohort


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", help="optional config file")
    parser.add_argument("--seed", type=int, help="master seed (default 42)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--skip-fixed", action="store_true",
                        help="skip the fixed-horizon suite (faster)")
    args = parser.parse_args()

    cfg = resolve_config(args.config, {"seed": args.seed, "out_dir": args.out})
    print(f"config hash {config_hash(cfg)}  seed {cfg.seed}  "
          f"settings {','.join(cfg.settings)}  folds {cfg.folds}")

    t0 = time.time()
    partition = generate_cohort(cfg.synth)
    n = len(partition.all_stays())
    septic = sum(s.septic for s in partition.all_stays())
    print(f"cohort: {n} stays, prevalence {septic / n:.3f} "
          f"({time.time() - t0:.1f}s)")

    t0 = time.time()
    result = experiment.run_all_folds(partition, cfg,
                                      include_fixed=not args.skip_fixed)
    print(f"training + evaluation: {time.time() - t0:.0f}s")

    paths = experiment.emit_reports(result, cfg.out_dir)
    for name, path in sorted(paths.items()):
        print(f"  {name}: {path}")

    mean = result.aggregate.mean
    print("\nfold-mean F1 (overall):")
    for setting in cfg.settings:
        key = (setting, "overall")
        if key in mean:
            print(f"  {setting:10s} {mean[key]['f1']:.4f}")
    fed = mean.get(("federated", "overall"), {})
    if "fir" in fed:
        print(f"\noverall FIR {fed['fir']}  EDA {fed['eda']:.2f}h")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
