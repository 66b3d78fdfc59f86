"""Desk-scale reproduction of the stage comparison protocol.

Synthesizes a few datasets, benchmarks the primitive baseline against
single-stage and monotone profiles on paired splits, then emits the
trimmed-mean, tournament and synergy tables.

Ten paired splits per dataset by default: the exact Wilcoxon test needs
at least six pairs before any difference can reach significance at 0.05.

Usage: python scripts/compare_stages.py [--out comparison] [--splits 10]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from stagedml.cli import main as cli_main

DATASETS = [
    ("madelon_like", 200, 20),
    ("scale_sensitive", 150, 6),
    ("separable", 150, 5),
]

SINGLES = ["single-scaling", "single-filtering", "single-meta", "single-tuning"]
RANGES = {
    "monotone-filtering": ["single-scaling", "single-filtering"],
    "monotone-meta": ["single-scaling", "single-filtering", "single-meta"],
    "monotone-tuning": SINGLES,
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="comparison")
    parser.add_argument("--splits", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_paths = []
    for kind, n, d in DATASETS:
        path = out / f"{kind}.csv"
        code = cli_main([
            "synth", "--kind", kind, "--n", str(n), "--d", str(d),
            "--seed", str(args.seed), "--out", str(path),
        ])
        if code != 0:
            return code
        data_paths.append(path)

    bench_args = ["bench", "--label", "label", "--splits", str(args.splits),
                  "--seed", str(args.seed), "--out", str(out / "bench"),
                  "--tuning-max-evals", "8",
                  "--stage-time-limit", "meta=30", "--stage-time-limit", "tuning=30"]
    for path in data_paths:
        bench_args += ["--data", str(path)]
    for preset in ["primitive", *SINGLES, *RANGES]:
        bench_args += ["--preset", preset]
    code = cli_main(bench_args)
    if code != 0:
        return code

    report_args = [
        "report", "--results", str(out / "bench" / "results.csv"),
        "--baseline", "primitive", "--out", str(out / "tables"),
    ]
    for range_id, singles in RANGES.items():
        report_args += ["--range", f"{range_id}={','.join(singles)}"]
    code = cli_main(report_args)
    if code != 0:
        return code

    for name in ("mean_table.txt", "tournament.txt", "synergy.txt"):
        print(f"\n=== {name} ===")
        print((out / "tables" / name).read_text(encoding="utf-8"))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
