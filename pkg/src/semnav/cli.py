"""``semnav`` command line: gen-scenes | train | eval | replay."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import BadRecord, ConfigError, InvariantViolation, ParseError, SemnavError

log = logging.getLogger("semnav")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
_VALIDATION_ERRORS = (ConfigError, ParseError, InvariantViolation, BadRecord)


def _scene_files(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise ConfigError(f"paths.scenes_dir: {str(d)!r} is not a directory")
    return sorted(d.glob("*.json"))


def cmd_gen_scenes(args) -> int:
    from .priors import derive_prior_graph, save_prior_graph
    from .scene import GenerationParams, generate_scene, save_scene

    kw = {}
    if args.dims:
        kw["dims"] = tuple(args.dims)
    if args.rooms is not None:
        kw["rooms"] = args.rooms
    if args.density is not None:
        kw["object_density"] = args.density
    params = GenerationParams(**kw)
    params.validate()
    if args.count < 0:
        raise ConfigError(f"count: must be >= 0, got {args.count}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest, scenes = [], []
    for i in range(args.count):
        scene = generate_scene(args.seed + i, params, scene_id=f"scene_{args.seed}_{i}")
        path = save_scene(scene, out / f"scene_{args.seed}_{i}.json")
        scenes.append(scene)
        manifest.append({"file": path.name, "id": scene.id, "objects": len(scene.objects),
                         "categories": len(scene.category_table)})
    if args.prior_graph:
        if not scenes:
            raise ConfigError("prior-graph: needs at least one generated scene")
        save_prior_graph(derive_prior_graph(scenes, args.min_weight), args.prior_graph)
    print(json.dumps({"scenes": manifest}, indent=2))
    return EXIT_OK


def _load_config(args):
    from .config import load_config

    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    p = cfg.paths
    for key in ("scenes_dir", "prior_graph", "checkpoint", "output_dir"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(p, key, value)
    return cfg


def _load_scene_list(cfg):
    from .scene import load_scene

    files = _scene_files(cfg.paths.scenes_dir)
    if not files:
        raise ConfigError(f"paths.scenes_dir: no scene files in {cfg.paths.scenes_dir!r}")
    return [load_scene(f) for f in files]


def cmd_train(args) -> int:
    from .comms import codec_bytes, train_learned_codec
    from .policy.checkpoint import load_training_state, save_checkpoint
    from .policy.training import TrainConfig, train_high_level
    from .priors import load_prior_graph

    cfg = _load_config(args)
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    if args.episodes_per_epoch is not None:
        cfg.train.episodes_per_epoch = args.episodes_per_epoch
    if args.flat_policy:
        cfg.policy.variant = "flat"
    elif cfg.policy.variant not in ("learned", "flat"):
        cfg.policy.variant = "learned"
    if args.codec:
        cfg.comms.codec = args.codec
    cfg.validate(require=("scenes_dir",) + (("prior_graph",) if cfg.paths.prior_graph else ()))
    if args.resume and not Path(args.resume).exists():
        raise ConfigError(f"resume: {args.resume!r} does not exist")
    scenes = _load_scene_list(cfg)
    graph = load_prior_graph(cfg.paths.prior_graph) if cfg.paths.prior_graph else None
    out = Path(cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.json").write_text(cfg.dumps())
    tc = TrainConfig(epochs=cfg.train.epochs, episodes_per_epoch=cfg.train.episodes_per_epoch, M=tuple(cfg.train.M),
                     N=cfg.train.N, seed=cfg.seed, variant=cfg.policy.variant)
    resume = load_training_state(args.resume) if args.resume else None
    ec = cfg.episode_config()
    codec_trace = []
    if cfg.comms.codec == "learned":
        codec_trace = _train_codec(cfg, scenes, out, codec_bytes, train_learned_codec)
        ec = replace(ec, codec="quantized")  # policy rollouts use the fixed codec while the learned one trains

    def progress(e, ret):
        log.info("epoch %d mean return %.4f", e, ret)

    state = train_high_level(scenes, tc, cfg.hyperparams(), ec, graph, resume, progress)
    ckpt = Path(cfg.paths.checkpoint or out / "policy.ckpt")
    save_checkpoint(state, ckpt)
    with open(out / "training.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "epoch", "value"])
        for i, v in enumerate(state.trace):
            w.writerow(["policy_mean_return", i + 1, repr(float(v))])
        for i, v in enumerate(codec_trace):
            w.writerow(["codec_loss", i, repr(float(v))])
    print(json.dumps({"checkpoint": str(ckpt), "epochs": len(state.trace),
                      "final_mean_return": state.trace[-1] if state.trace else None}))
    return EXIT_OK


def _train_codec(cfg, scenes, out, codec_bytes, train_learned_codec):
    """Fit the learned codec on own-maps collected from greedy rollouts."""
    import numpy as np

    from .evaluation.episode import run_episode
    from .policy.highlevel import GreedyPolicy
    from .scene import sample_task

    maps = []
    rng = np.random.default_rng([cfg.seed, 7])
    k = 0
    while len(maps) < cfg.train.codec_maps:
        scene = scenes[k % len(scenes)]
        task = sample_task(scene, 1, 1, int(rng.integers(2**31)))
        ec = replace(cfg.episode_config(), comm=False, max_steps=int(rng.integers(20, cfg.simulation.max_steps + 1)))
        run_episode(scene, task, GreedyPolicy(), ec, seed=task.seed, record_maps=maps)
        k += 1
    codec, trace = train_learned_codec(maps[: cfg.train.codec_maps], cfg.train.codec_epochs, budget=cfg.comms.budget)
    (out / "codec.bin").write_bytes(codec_bytes(codec))
    return trace


def _variants(cfg, args):
    from .evaluation.benchmark import VariantSpec

    policy = cfg.policy.variant
    if args.flat_policy:
        policy = "flat"
    if policy in ("learned", "flat"):
        if not cfg.paths.checkpoint:
            raise ConfigError(f"policy '{policy}' needs --checkpoint (create one with 'semnav train')")
        if not Path(cfg.paths.checkpoint).exists():
            raise ConfigError(f"paths.checkpoint: {cfg.paths.checkpoint!r} does not exist "
                              f"(create one with 'semnav train')")
    name = policy
    for flag, tag in ((not cfg.comms.enabled, "no-comm"), (not cfg.policy.priors, "no-priors"),
                      (cfg.policy.central, "central")):
        if flag:
            name += "+" + tag
    return [VariantSpec(name, policy, cfg.comms.enabled, cfg.policy.central, cfg.policy.priors,
                        cfg.paths.checkpoint if policy in ("learned", "flat") else None)]


def cmd_eval(args) -> int:
    from .evaluation.benchmark import SuiteConfig, format_summary, run_benchmark, write_csv

    cfg = _load_config(args)
    if args.policy:
        cfg.policy.variant = args.policy
    if args.no_comm:
        cfg.comms.enabled = False
    if args.no_priors:
        cfg.policy.priors = False
    if args.central:
        cfg.policy.central = True
    if args.workers is not None:
        cfg.suite.workers = args.workers
    for key in ("N", "M", "seeds"):
        v = getattr(args, key.lower() if key == "seeds" else key)
        if v:
            setattr(cfg.suite, key, v)
    if args.tasks_per_scene is not None:
        cfg.suite.tasks_per_scene = args.tasks_per_scene
    if args.split:
        cfg.suite.split = args.split
    cfg.validate(require=("scenes_dir",) + (("prior_graph",) if cfg.paths.prior_graph else ()))
    variants = _variants(cfg, args)
    ec = cfg.episode_config()
    codec = None
    if cfg.comms.codec == "learned":
        codec = _load_learned_codec(args.codec_file)
    files = [str(f) for f in _scene_files(cfg.paths.scenes_dir)] + list(args.scene or [])
    if not files:
        raise ConfigError(f"paths.scenes_dir: no scene files in {cfg.paths.scenes_dir!r}")
    suite = SuiteConfig(
        name="eval", scene_files=files, prior_file=cfg.paths.prior_graph,
        derive_prior=None if cfg.paths.prior_graph else {"count": 30, "seed": 10_000, "min_weight": 0.15},
        M=list(cfg.suite.M), N=list(cfg.suite.N), seeds=[cfg.seed + s for s in cfg.suite.seeds],
        tasks_per_scene=cfg.suite.tasks_per_scene, split=cfg.suite.split, known_fraction=cfg.suite.known_fraction,
        variants=variants, episode=ec, workers=cfg.suite.workers, record_dir=args.records, codec=codec,
    )
    out = Path(cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.json").write_text(cfg.dumps())
    report = run_benchmark(suite)
    csv_path = Path(args.out) if args.out else out / "report.csv"
    write_csv(report["rows"], csv_path)
    print(format_summary(report["summary"]))
    print(f"report: {csv_path}")
    failed = [r for r in report["rows"] if r["status"] != "ok"]
    if failed:
        print(f"{len(failed)} cell(s) failed to run; see the status column", file=sys.stderr)
    return EXIT_OK


def _load_learned_codec(path):
    from .comms import codec_from_bytes

    if not path:
        raise ConfigError("comms.codec = 'learned' needs --codec-file (written by 'semnav train')")
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"codec-file: {path!r} does not exist")
    return codec_from_bytes(p.read_bytes())


def cmd_replay(args) -> int:
    from .evaluation.replay import load_record, render_svg, text_frames

    rec = load_record(args.record)
    if args.format == "svg":
        text = render_svg(rec, args.scale)
    else:
        text = "\f\n".join(text_frames(rec))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors (exit 1), not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_VALIDATION)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="semnav", description="Multi-agent semantic navigation simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenes", help="generate scene JSON files")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="scenes")
    g.add_argument("--dims", type=int, nargs=2, metavar=("L", "W"))
    g.add_argument("--rooms", type=int)
    g.add_argument("--density", type=float, help="objects per square metre of floor")
    g.add_argument("--prior-graph", help="also derive a prior graph from the generated scenes into this file")
    g.add_argument("--min-weight", type=float, default=0.15)
    g.set_defaults(func=cmd_gen_scenes)

    def common(sp):
        sp.add_argument("--config", help="TOML or JSON run config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--scenes", dest="scenes_dir")
        sp.add_argument("--prior-graph", dest="prior_graph")
        sp.add_argument("--checkpoint")
        sp.add_argument("--output-dir", dest="output_dir")
        sp.add_argument("--flat-policy", action="store_true", help="learned policy emits primitive actions directly")

    t = sub.add_parser("train", help="train the learned high-level (or flat) policy")
    common(t)
    t.add_argument("--epochs", type=int)
    t.add_argument("--episodes-per-epoch", type=int)
    t.add_argument("--resume", help="checkpoint to continue training from")
    t.add_argument("--codec", choices=("quantized", "learned"), help="'learned' also trains the map codec")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="run a benchmark suite and write the report CSV")
    common(e)
    e.add_argument("--policy", choices=("greedy", "random", "learned", "flat", "random-actions"))
    e.add_argument("--no-comm", action="store_true")
    e.add_argument("--no-priors", action="store_true")
    e.add_argument("--central", action="store_true")
    e.add_argument("--workers", type=int)
    e.add_argument("--N", type=int, nargs="+")
    e.add_argument("--M", type=int, nargs="+")
    e.add_argument("--seeds", type=int, nargs="+")
    e.add_argument("--tasks-per-scene", type=int)
    e.add_argument("--split", choices=("all", "known", "unknown"))
    e.add_argument("--scene", action="append", help="extra scene file (repeatable)")
    e.add_argument("--codec-file", help="learned codec written by 'semnav train --codec learned'")
    e.add_argument("--records", help="directory for per-episode replay records")
    e.add_argument("--out", help="report CSV path (default: <output-dir>/report.csv)")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="render an episode record")
    r.add_argument("record")
    r.add_argument("--format", choices=("text", "svg"), default="text")
    r.add_argument("--scale", type=int, default=6, help="SVG pixels per cell")
    r.add_argument("--out")
    r.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:  # output piped into e.g. head
        sys.stderr.close()
        return EXIT_OK
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SemnavError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
