#!/usr/bin/env python3
"""Run every registered experiment with its defaults and write all reports
and plot series under out/ (one directory per experiment)."""

import sys
from pathlib import Path

from fairsim.experiments import EXPERIMENTS


def main() -> int:
    out_root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out")
    for name, spec in EXPERIMENTS.items():
        values = {k: p.default for k, p in spec.params.items()}
        report = spec.run(values)
        written = report.write(out_root / name, fmt="doc")
        holds = {v: report.verdicts[v].holds for v in report.verdicts}
        print(f"{name}: wrote {len(written)} files to {out_root / name}")
        for verdict, ok in holds.items():
            print(f"  {verdict}: {'holds' if ok else 'fails'} "
                  f"(magnitude {report.verdicts[verdict].magnitude:.6g})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
