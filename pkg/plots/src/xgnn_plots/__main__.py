import argparse
import sys

from . import KINDS, MissingInput, render


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="xgnn_plots", description="Render figures from an xgnn run directory"
    )
    parser.add_argument("run_dir")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", help="image directory (default RUN_DIR/figures)")
    args = parser.parse_args(argv)
    try:
        for path in render(args.run_dir, args.kind, args.out):
            print(path)
    except MissingInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
