"""Regenerate the bundled synthetic cohort (src/clinbench/data/cohort).

    python scripts/make_cohort.py [--seed 0] [--out DIR]
"""

from __future__ import annotations

import argparse
from collections import Counter
from pathlib import Path

from clinbench.synth import SynthConfig, synthesize_cohort, write_cohort

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "clinbench" / "data" / "cohort"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = ap.parse_args()
    packets, manifest = synthesize_cohort(SynthConfig(seed=args.seed))
    write_cohort(packets, manifest, args.out)
    print(f"wrote {len(packets)} packets to {args.out}")
    for key in ("gender", "age_group", "race_ethnicity", "education", "ses"):
        counts = Counter(p.demographics()[key] for p in packets)
        print(f"  {key}: {dict(sorted(counts.items()))}")


if __name__ == "__main__":
    main()
