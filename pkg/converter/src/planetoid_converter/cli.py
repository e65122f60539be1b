"""convert-planetoid: one-shot dataset conversion command.

Exit codes: 0 success, 2 bad usage or malformed sources, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import shutil
import subprocess
import sys

from .convert import DATASETS, ConversionError, convert


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convert-planetoid",
        description="convert a Planetoid distribution into the graph-unlearn "
                    "dataset directory format",
    )
    parser.add_argument("--name", required=True, choices=sorted(DATASETS))
    parser.add_argument("--src", required=True,
                        help="directory holding the ind.<name>.* files")
    parser.add_argument("--out", required=True, help="output dataset directory")
    parser.add_argument("--validate", action="store_true",
                        help="run `graph-unlearn dataset-validate` on the output")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = convert(args.name, args.src, args.out)
    except ConversionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"nodes={manifest.num_nodes} "
          f"undirected_edges={manifest.num_undirected_edges} "
          f"features={manifest.num_features} classes={manifest.num_classes}")
    print(f"train/val/test={manifest.num_train}/{manifest.num_val}/"
          f"{manifest.num_test}")
    print(f"matches_expected={manifest.matches_expected}")
    print(f"manifest={args.out}/manifest.json")
    if args.validate:
        tool = shutil.which("graph-unlearn")
        command = [tool, "dataset-validate", args.out] if tool else [
            sys.executable, "-m", "graph_unlearn", "dataset-validate", args.out
        ]
        result = subprocess.run(command)
        if result.returncode != 0:
            print("error: converted output failed dataset-validate",
                  file=sys.stderr)
            return 1
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
