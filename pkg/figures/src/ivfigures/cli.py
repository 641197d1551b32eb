"""``render`` command: curve file in, figure panels out.

Exit codes: 0 on success, 2 on schema or usage errors.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .curves import SchemaError
from .plots import render


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="render",
        description="Render estimator curve files (curves.csv) into figures.",
    )
    parser.add_argument("--curves", required=True, help="path to the curve file")
    parser.add_argument("--out", required=True, help="output directory for images")
    parser.add_argument("--mode", choices=("scalar", "401k"), default="scalar",
                        help="styling: synthetic study or survey education panel")
    args = parser.parse_args(argv)
    try:
        written = render(args.curves, args.out, mode=args.mode)
    except SchemaError as exc:
        print(f"error: {args.curves}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(f"wrote {path}")
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
