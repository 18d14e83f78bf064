"""Prompt ablation: full prompt vs. no movement history vs. added top-down minimap.

Scripted policies ignore the prompt, so this is only informative for model
policies (model:<id>), which need the endpoint's API key in the environment.

    OPENROUTER_API_KEY=... python3 scripts/ablate_history.py --policies model:openai/gpt-4o-mini --seeds 4
"""

import argparse
from pathlib import Path

from warenav.episodes import run_bench
from warenav.protocol import VARIANTS, ModelEndpointConfig
from warenav.world import generate_scene, load_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--scenes", type=Path, nargs="*")
    ap.add_argument("--seeds", type=int, default=4)
    ap.add_argument("--policies", nargs="+", required=True)
    ap.add_argument("--variants", nargs="+", default=list(VARIANTS), choices=VARIANTS)
    ap.add_argument("--parallelism", type=int, default=4)
    ap.add_argument("--base-url", default=ModelEndpointConfig.base_url)
    ap.add_argument("--out", type=Path, default=Path("out/ablate_history"))
    args = ap.parse_args()

    scenes = [load_scene(p) for p in args.scenes] if args.scenes else [generate_scene(s) for s in range(args.seeds)]
    endpoint = ModelEndpointConfig(base_url=args.base_url)
    for variant in args.variants:
        res = run_bench(
            scenes,
            args.policies,
            parallelism=args.parallelism,
            out_dir=args.out / variant,
            endpoint=endpoint,
            variant=variant,
        )
        (args.out / variant / "report.csv").write_text(res.report.to_csv(), encoding="utf-8")
        print(f"== {variant}\n{res.report.to_table()}", end="")
        for cell in res.aborted:
            print(f"   aborted {cell}: {res.results[cell].error}")


if __name__ == "__main__":
    main()
