"""Command-line entry point.

    warenav run --scene S.json --pair 0 --policy greedy --out runs/
    warenav bench --scenes a.json b.json --policies greedy oracle --out bench/
    warenav report --logs bench/logs
    warenav render-traj --log runs/x.jsonl --scene S.json --out x.svg
    warenav gen-scene --seed 7 --out S.json
    warenav validate S.json ...

Option precedence: command-line flags > --config JSON file > built-in defaults.
Exit codes: 0 ok, 2 invalid scene or arguments, 3 aborted episode, 4 replay divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .episodes import (
    EpisodeConfig,
    LogError,
    ReplayDivergence,
    policy_label,
    read_log,
    run_bench,
    run_episode,
    run_record_from_log,
)
from .metrics import aggregate_report
from .protocol import ModelClient, ModelEndpointConfig
from .sensors import WarningConfig
from .trajectory import render_trajectory_svg
from .world import GeneratorParams, GenerationError, SceneError, generate_scene, load_scene, serialize_scene, validate_scene

EXIT_OK, EXIT_SCENE, EXIT_ABORTED, EXIT_DIVERGED = 0, 2, 3, 4

DEFAULTS = {
    "max_steps": 70,
    "delta": 20.0,
    "history_len": 10,
    "warning_threshold_m": 1.0,
    "roi_half_angle": 15.0,
    "fov": 90.0,
    "parallelism": 1,
    "seed": 0,
    "base_url": "https://openrouter.ai/api/v1",
    "api_key_env": "OPENROUTER_API_KEY",
    "timeout_s": 60.0,
    "max_retries": 3,
    "max_in_flight": 4,
    "temperature": 0.0,
}

log = logging.getLogger("warenav")


def _episode_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with option defaults")
    p.add_argument("--no-history", action="store_true", help="drop the movement history from the prompt")
    p.add_argument("--with-topdown", action="store_true", help="attach the top-down minimap to the prompt")
    p.add_argument("--static", action="store_true", help="freeze every dynamic entity (speed 0)")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--delta", type=float, help="success radius in px")
    p.add_argument("--history-len", type=int)
    p.add_argument("--warning-threshold-m", type=float)
    p.add_argument("--roi-half-angle", type=float)
    p.add_argument("--fov", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--base-url")
    p.add_argument("--api-key-env", help="name of the environment variable holding the API key")
    p.add_argument("--timeout-s", type=float)
    p.add_argument("--max-retries", type=int)
    p.add_argument("--max-in-flight", type=int)
    p.add_argument("--temperature", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="warenav", description="Warehouse PointGoal navigation harness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one episode")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--pair", type=int, default=0)
    p.add_argument("--policy", default="greedy", help="greedy | oracle | random | stop | forward | model:<id>")
    p.add_argument("--out", type=Path, default=Path("runs"))
    p.add_argument("--save-frames", action="store_true", help="write per-step PPM frames")
    _episode_options(p)

    p = sub.add_parser("bench", help="run a scenes x pairs x policies matrix")
    p.add_argument("--scenes", type=Path, nargs="+", required=True)
    p.add_argument("--policies", nargs="+", default=["greedy"])
    p.add_argument("--out", type=Path, default=Path("bench"))
    p.add_argument("--parallelism", type=int)
    _episode_options(p)

    p = sub.add_parser("report", help="rebuild the metrics table from episode logs")
    p.add_argument("--logs", type=Path, required=True, help="directory searched recursively for *.jsonl")
    p.add_argument("--out", type=Path, help="write report.txt and report.csv here")
    p.add_argument("--delta", type=float)

    p = sub.add_parser("render-traj", help="draw a logged episode as SVG")
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("gen-scene", help="generate a warehouse scene")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    defaults = GeneratorParams()
    p.add_argument("--aisle-count", type=int, default=defaults.aisle_count)
    p.add_argument("--shelf-rows", type=int, default=defaults.shelf_rows)
    p.add_argument("--clutter-density", type=float, default=defaults.clutter_density)
    p.add_argument("--entity-count", type=int, default=defaults.entity_count)
    p.add_argument("--pairs", type=int, default=defaults.n_pairs)

    p = sub.add_parser("validate", help="check scene files")
    p.add_argument("scenes", type=Path, nargs="+")
    p.add_argument("--delta", type=float, default=DEFAULTS["delta"])
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge flags over the --config file over DEFAULTS."""
    file_opts = {}
    if getattr(args, "config", None):
        file_opts = json.loads(Path(args.config).read_text(encoding="utf-8"))
        unknown = set(file_opts) - set(DEFAULTS)
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    merged = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        merged[key] = flag if flag is not None else file_opts.get(key, default)
    return merged


def _variant(args) -> str:
    if args.no_history and args.with_topdown:
        raise SystemExit("--no-history and --with-topdown are separate ablations; pick one")
    if args.no_history:
        return "no-history"
    return "odometry+topdown" if args.with_topdown else "odometry"


def _episode_kwargs(args, opts) -> dict:
    return {
        "max_steps": opts["max_steps"],
        "delta": opts["delta"],
        "history_len": opts["history_len"],
        "variant": _variant(args),
        "seed": opts["seed"],
        "fov": opts["fov"],
        "warning": WarningConfig(threshold_m=opts["warning_threshold_m"], roi_half_angle=opts["roi_half_angle"]),
    }


def _endpoint(opts) -> ModelEndpointConfig:
    return ModelEndpointConfig(
        base_url=opts["base_url"],
        api_key_env=opts["api_key_env"],
        timeout_s=opts["timeout_s"],
        max_retries=opts["max_retries"],
        max_in_flight=opts["max_in_flight"],
        temperature=opts["temperature"],
    )


def _load_valid_scene(path: Path, delta: float, static: bool = False):
    try:
        scene = load_scene(path)
    except FileNotFoundError:
        print(f"error: scene file not found: {path}", file=sys.stderr)
        return None
    except SceneError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return None
    problems = validate_scene(scene, delta)
    if problems:
        for v in problems:
            print(f"error: {path}: {v}", file=sys.stderr)
        return None
    return scene.static() if static else scene


def _write_meta(out: Path, args: argparse.Namespace) -> None:
    out.mkdir(parents=True, exist_ok=True)
    meta = {"created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()), "argv": sys.argv[1:]}
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def _runs_csv(rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "scene", "pair_index", "T", "d_final", "D_init", "C", "F", "W", "terminated_by"])
    for model, r in rows:
        w.writerow([model, r.scene, r.pair_index, r.T, repr(r.d_final), repr(r.D_init), r.C, r.F, r.W, r.terminated_by])
    return buf.getvalue()


def cmd_run(args) -> int:
    opts = resolve_options(args)
    scene = _load_valid_scene(args.scene, opts["delta"], args.static)
    if scene is None:
        return EXIT_SCENE
    if not 0 <= args.pair < len(scene.pairs):
        print(f"error: pair {args.pair} out of range ({len(scene.pairs)} pairs)", file=sys.stderr)
        return EXIT_SCENE
    cfg = EpisodeConfig(scene=scene, pair_index=args.pair, policy=args.policy, **_episode_kwargs(args, opts))
    client = None
    if args.policy.startswith("model:"):
        client = ModelClient(replace(_endpoint(opts), model_id=policy_label(args.policy)))
    try:
        result = run_episode(
            cfg,
            log_dir=args.out,
            client=client,
            frames_dir=args.out / "frames" if args.save_frames else None,
        )
    finally:
        if client is not None:
            client.close()
    _write_meta(args.out, args)
    if result.aborted:
        print(f"aborted: {cfg.episode_id}: {result.error} (partial log {result.log_path})", file=sys.stderr)
        return EXIT_ABORTED
    r = result.run
    print(
        f"scene={r.scene} pair={r.pair_index} policy={args.policy} T={r.T} d_final={r.d_final:.2f} "
        f"D_init={r.D_init:.2f} C={r.C} F={r.F} W={r.W} terminated_by={r.terminated_by} "
        f"success={str(result.success).lower()} log={result.log_path}"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    opts = resolve_options(args)
    scenes = []
    for path in args.scenes:
        scene = _load_valid_scene(path, opts["delta"], args.static)
        if scene is None:
            return EXIT_SCENE
        scenes.append(scene)
    result = run_bench(
        scenes,
        args.policies,
        parallelism=opts["parallelism"],
        out_dir=args.out,
        endpoint=_endpoint(opts),
        **_episode_kwargs(args, opts),
    )
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(result.report.to_csv(), encoding="utf-8")
    (out / "report.txt").write_text(result.report.to_table(), encoding="utf-8")
    rows = [(policy_label(spec), r.run) for (spec, _, _), r in result.results.items() if r.run is not None]
    (out / "runs.csv").write_text(_runs_csv(rows), encoding="utf-8")
    _write_meta(out, args)
    print(result.report.to_table(), end="")
    for cell in result.aborted:
        print(f"aborted: {cell[0]} {cell[1]} pair {cell[2]}: {result.results[cell].error}", file=sys.stderr)
    return EXIT_ABORTED if result.aborted else EXIT_OK


def cmd_report(args) -> int:
    runs: dict[str, list] = {}
    expected: dict[str, int] = {}
    delta = args.delta
    for path in sorted(args.logs.rglob("*.jsonl")):
        log_ = read_log(path)
        label = policy_label(log_.header["policy"])
        expected[label] = expected.get(label, 0) + 1
        delta = delta if delta is not None else log_.header["delta"]
        if log_.header.get("status") == "complete":
            runs.setdefault(label, []).append(run_record_from_log(log_))
    if not runs:
        print(f"error: no complete episode logs under {args.logs}", file=sys.stderr)
        return EXIT_SCENE
    complete = all(len(runs.get(m, [])) == n for m, n in expected.items())
    report = aggregate_report(runs, delta, expected=expected, strict=complete)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
        (args.out / "report.txt").write_text(report.to_table(), encoding="utf-8")
    print(report.to_table(), end="")
    return EXIT_OK if complete else EXIT_ABORTED


def cmd_render_traj(args) -> int:
    try:
        scene = load_scene(args.scene)
        log_ = read_log(args.log)
        svg = render_trajectory_svg(log_, scene)
    except (SceneError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENE
    except (ReplayDivergence, LogError) as exc:
        print(f"error: {args.log}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(svg, encoding="utf-8")
    print(args.out)
    return EXIT_OK


def cmd_gen_scene(args) -> int:
    params = GeneratorParams(
        aisle_count=args.aisle_count,
        shelf_rows=args.shelf_rows,
        clutter_density=args.clutter_density,
        entity_count=args.entity_count,
        n_pairs=args.pairs,
    )
    try:
        scene = generate_scene(args.seed, params)
    except (ValueError, GenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENE
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(serialize_scene(scene), encoding="utf-8")
    print(args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    status = EXIT_OK
    for path in args.scenes:
        if _load_valid_scene(path, args.delta) is None:
            status = EXIT_SCENE
        else:
            print(f"ok: {path}")
    return status


COMMANDS = {
    "run": cmd_run,
    "bench": cmd_bench,
    "report": cmd_report,
    "render-traj": cmd_render_traj,
    "gen-scene": cmd_gen_scene,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
