"""Large-volume estimate of the normalized eigenvalue counting function
(integrated density of states) for a Bernoulli potential, written as CSV."""
import argparse

import numpy as np

from ergodic_qt.fields import eigenvalue_count_field
from ergodic_qt.geometry import FolnerSpec, Group
from ergodic_qt.harness import estimate_fstar
from ergodic_qt.model import ColorDistribution, RandomModel


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--index", type=int, default=60)
    p.add_argument("--check-index", type=int, default=40)
    p.add_argument("--seeds", type=int, default=4)
    p.add_argument("--coupling", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=41, help="number of energies in the CSV")
    args = p.parse_args()

    g = Group.zd(args.d)
    fld = eigenvalue_count_field(g, args.coupling)
    model = RandomModel(ColorDistribution.bernoulli(0.5))
    est = estimate_fstar(fld, model, "large_volume", folner=FolnerSpec(g, [], "box"),
                         index=args.index, check_index=args.check_index, seeds=args.seeds)
    lo = -2 * args.d - 0.5
    hi = 2 * args.d + args.coupling + 0.5
    print(f"# self-consistency {est.self_consistency:.4g}, band {est.band:.4g}")
    print("E,N(E)")
    for E in np.linspace(lo, hi, args.grid):
        print(f"{E:.4f},{est.f(E):.6f}")


if __name__ == "__main__":
    main()
