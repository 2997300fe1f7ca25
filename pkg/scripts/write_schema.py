"""Write the experiment config JSON schema (default: docs/config_schema.json)."""
import argparse
from pathlib import Path

from ergodic_qt.harness import write_schema


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out", nargs="?", default=str(Path(__file__).resolve().parent.parent
                                                 / "docs" / "config_schema.json"))
    args = p.parse_args()
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_schema(args.out)
    print(args.out)


if __name__ == "__main__":
    main()
