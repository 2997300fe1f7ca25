"""Certificate pass frequencies over window sizes for one experiment config.

    python3 scripts/run_convergence.py configs/converge_level.json --out results/level
"""
import argparse
import json
import time
from pathlib import Path

from ergodic_qt.harness import ExperimentConfig, run_convergence


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("config")
    p.add_argument("--out", type=Path, default=None, help="directory for converge.csv / summary.json")
    p.add_argument("--seeds", type=int, default=None, help="override the seed count")
    args = p.parse_args()

    doc = json.loads(Path(args.config).read_text())
    if args.seeds is not None:
        doc["seeds"] = args.seeds
    cfg = ExperimentConfig.from_json(doc)
    t0 = time.perf_counter()
    rep = run_convergence(cfg)
    s = rep.summary

    print(f"field={s['field']['kind']} sizes={s['sizes']} f*={s['fstar']['method']} "
          f"band={s['fstar']['band']:.4g}")
    for e, freq in s["frequencies"].items():
        print(f"  eps={e}: beta={s['beta_eps'][e]:.4g} pass frequency by window {freq}")
    for j, m in s["max_observed"].items():
        print(f"  j={j}: max observed {m:.4g}")
    print(f"gates passed: {s['gates_passed']}  ({time.perf_counter() - t0:.1f} s)")

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "converge.csv").write_text(rep.to_csv())
        (args.out / "summary.json").write_text(rep.to_json())


if __name__ == "__main__":
    main()
