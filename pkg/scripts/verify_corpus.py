"""Run every derivative check over the bundled corpus and print one line per run.

    python scripts/verify_corpus.py [--n 50] [--seed 0] [--out reports/]
"""

import argparse
import json
import sys
import time
from pathlib import Path

from dualnum.corpus import load_corpus
from dualnum.harness import CheckConfig, check_cross, check_forward, check_reverse, check_sign_modes

CHECKS = [
    ("forward", check_forward, {"k": "1"}),
    ("forward-s", check_forward, {"k": "s"}),
    ("reverse", check_reverse, {"k": "inf"}),
    ("cross", check_cross, {"k": "inf"}),
    ("signmode", check_sign_modes, {}),
]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, help="directory for per-check JSON reports")
    args = ap.parse_args()

    programs = load_corpus()
    ok = True
    for label, check, extra in CHECKS:
        cfg = CheckConfig(n=args.n, seed=args.seed, **extra)
        t0 = time.perf_counter()
        reports = [check(p, cfg) for p in programs]
        for r in reports:
            print(r.summary())
            ok &= r.ok
        print(f"-- {label}: {time.perf_counter() - t0:.1f}s\n")
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / f"{label}.json").write_text(json.dumps([r.to_json() for r in reports], indent=2) + "\n")
    print("all checks passed" if ok else "SOME CHECKS FAILED")
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
