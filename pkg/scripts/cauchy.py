"""Distance between reference assemblies at two tolerances, over a grid of (eps, delta)."""
import argparse
import itertools

from ergodic_qt.fields import eigenvalue_count_field, level_count_field
from ergodic_qt.geometry import Group
from ergodic_qt.harness import cauchy_diagnostic
from ergodic_qt.model import ColorDistribution, RandomModel


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--field", choices=["level_count", "eigenvalue_count"], default="level_count")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--p", type=float, default=0.5, help="Bernoulli parameter")
    p.add_argument("--eps", type=float, nargs="+", default=[0.09, 0.07, 0.05])
    p.add_argument("--path", choices=["quasi", "exact"], default="quasi")
    args = p.parse_args()

    g = Group.zd(args.d)
    fld = level_count_field() if args.field == "level_count" else eigenvalue_count_field(g)
    model = RandomModel(ColorDistribution.bernoulli(args.p))
    print("eps,delta,observed,bound,triangle_bound,passed")
    for e, dl in itertools.combinations(sorted(args.eps, reverse=True), 2):
        r = cauchy_diagnostic(fld, model, e, dl, group=g, path=args.path)
        print(f"{e},{dl},{r.observed:.6g},{r.bound:.6g},{r.triangle_bound:.6g},{r.passed}")


if __name__ == "__main__":
    main()
