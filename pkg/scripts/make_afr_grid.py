"""Write the synthetic array-fed-reflector grid used by the demo scenarios."""

import argparse

from htssim.array import save_feed_table, synthetic_feed_table


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--feeds", type=int, default=4)
    p.add_argument("--out", default="scenarios/afr_grid.csv")
    args = p.parse_args()
    save_feed_table(synthetic_feed_table(args.feeds), args.out)
    print(args.out)


if __name__ == "__main__":
    main()
