"""Search for the divergence showcase instance and freeze it as a test fixture.

    python scripts/find_divergence_instance.py [--out tests/fixtures/divergence_instance.json]
"""
import argparse
import sys
from pathlib import Path

from agnsim import divergence

DEFAULT_OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "divergence_instance.json"


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = parser.parse_args(argv)

    instance = divergence.search()
    if instance is None:
        print("no showcase instance on the search grid", file=sys.stderr)
        return 1
    divergence.save(instance, args.out)
    print(f"found {instance}")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
