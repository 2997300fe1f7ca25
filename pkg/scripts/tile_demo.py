"""Greedy quasi tiling of a Z^d box and its verification table."""
import argparse

from ergodic_qt.errors import TilingInfeasible
from ergodic_qt.geometry import Group, box
from ergodic_qt.tiling import center_density_gap, construct_quasi_tiling, n_of_eps, select_tiles


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--side", type=int, default=10_000)
    p.add_argument("--eps", type=float, default=0.09)
    p.add_argument("--max-tile", type=int, default=399)
    p.add_argument("--order-seed", type=int, default=None)
    args = p.parse_args()

    g = Group.zd(args.d)
    lam = box(g, args.side)
    print(f"|Lambda|={len(lam)} eps={args.eps} N(eps)={n_of_eps(args.eps)}")
    try:
        tiles = select_tiles([box(g, k) for k in range(1, args.max_tile + 1)], len(lam), args.eps)
    except TilingInfeasible as exc:
        print(f"below empirical j0: {exc}")
        return
    qt = construct_quasi_tiling(lam, tiles, args.eps, order_seed=args.order_seed, strict=False)
    print(qt.diagnostics.table())
    worst = max(gap / bound for gap, bound in
                (center_density_gap(qt, i) for i in range(1, len(tiles) + 1)))
    print(f"max center gap / bound: {worst:.3f}")


if __name__ == "__main__":
    main()
