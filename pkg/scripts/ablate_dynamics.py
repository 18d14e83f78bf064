"""Same scenes with entities moving vs. parked: how much do dynamics cost each policy?

    python3 scripts/ablate_dynamics.py --seeds 20 --policies greedy oracle random
    python3 scripts/ablate_dynamics.py --scenes scenes/*.json --policies greedy model:openai/gpt-4o-mini

Writes dynamic.csv, static.csv and a combined summary.txt under --out.
"""

import argparse
import time
from pathlib import Path

from warenav.episodes import run_bench
from warenav.world import generate_scene, load_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--scenes", type=Path, nargs="*", help="scene files; default is freshly generated seeds")
    ap.add_argument("--seeds", type=int, default=20, help="number of generated scenes when --scenes is absent")
    ap.add_argument("--policies", nargs="+", default=["greedy", "oracle"])
    ap.add_argument("--parallelism", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("out/ablate_dynamics"))
    args = ap.parse_args()

    scenes = [load_scene(p) for p in args.scenes] if args.scenes else [generate_scene(s) for s in range(args.seeds)]
    args.out.mkdir(parents=True, exist_ok=True)
    summary = []
    for label, batch in (("dynamic", scenes), ("static", [s.static() for s in scenes])):
        t0 = time.perf_counter()
        res = run_bench(batch, args.policies, parallelism=args.parallelism, out_dir=args.out / label)
        (args.out / f"{label}.csv").write_text(res.report.to_csv(), encoding="utf-8")
        summary.append(f"== {label} ({time.perf_counter() - t0:.1f}s)\n{res.report.to_table()}")
        if res.aborted:
            summary.append(f"   {len(res.aborted)} aborted cells excluded\n")
    text = "\n".join(summary)
    (args.out / "summary.txt").write_text(text, encoding="utf-8")
    print(text, end="")


if __name__ == "__main__":
    main()
