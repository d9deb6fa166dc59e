#!/usr/bin/env python3
"""
Compare MLE, uniform, LM and coaching bridges over several seeds, or sweep
the coaching temperature.

    python scripts/compare_bridges.py --config exp.cfg --seeds 1 2 3
    python scripts/compare_bridges.py --config exp.cfg --tau-sweep
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from dotenv import load_dotenv  # noqa: E402

from app.core.exceptions import GBNError  # noqa: E402
from app.core.logging import setup_logging  # noqa: E402
from app.harness.experiments import COMPARED, compare_bridges, tau_sweep  # noqa: E402
from app.schemas.config import COACHING_TAU_GRID, build_config, load_config, parse_overrides  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config")
    parser.add_argument("--set", nargs="*", default=[], metavar="KEY=VALUE")
    parser.add_argument("--seeds", nargs="+", type=int, default=[1, 2, 3])
    parser.add_argument("--systems", nargs="+", choices=COMPARED, default=list(COMPARED))
    parser.add_argument("--tau-sweep", action="store_true", help="Coaching over the temperature grid instead")
    parser.add_argument("--taus", nargs="+", type=float, default=list(COACHING_TAU_GRID))
    args = parser.parse_args()

    load_dotenv()
    setup_logging()
    try:
        overrides = parse_overrides(args.set)
        config = load_config(args.config, overrides) if args.config else build_config({}, overrides)
        if args.tau_sweep:
            result = {str(tau): s.model_dump() for tau, s in tau_sweep(config, args.taus).items()}
        else:
            result = {name: r.model_dump() for name, r in compare_bridges(config, args.seeds, args.systems).items()}
    except GBNError as e:
        print(json.dumps({"status": "error", "code": e.code, "message": e.message}))
        return 2
    print(json.dumps({"status": "ok", "results": result}, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
