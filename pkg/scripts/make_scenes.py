"""Generate a fixed set of warehouse scenes and validate each one.

    python3 scripts/make_scenes.py --out scenes --count 12
"""

import argparse
from pathlib import Path

from warenav.world import GeneratorParams, generate_scene, serialize_scene, validate_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path("scenes"))
    ap.add_argument("--count", type=int, default=12)
    ap.add_argument("--first-seed", type=int, default=0)
    ap.add_argument("--entity-count", type=int, default=GeneratorParams.entity_count)
    ap.add_argument("--clutter-density", type=float, default=GeneratorParams.clutter_density)
    args = ap.parse_args()

    params = GeneratorParams(entity_count=args.entity_count, clutter_density=args.clutter_density)
    args.out.mkdir(parents=True, exist_ok=True)
    for seed in range(args.first_seed, args.first_seed + args.count):
        scene = generate_scene(seed, params)
        assert validate_scene(scene) == [] and validate_scene(scene.static()) == []
        path = args.out / f"scene_{seed:03d}.json"
        path.write_text(serialize_scene(scene), encoding="utf-8")
        diffs = ",".join(p.difficulty for p in scene.pairs)
        print(f"{path}  obstacles={len(scene.obstacles)} entities={len(scene.entities)} pairs={diffs}")


if __name__ == "__main__":
    main()
