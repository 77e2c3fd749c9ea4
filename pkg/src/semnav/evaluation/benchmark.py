"""Benchmark suites: task generation, episode sweeps and the report CSV."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .. import categories as cat
from ..errors import ConfigError, InsufficientCategories, InsufficientSpawns, SemnavError
from ..perception import NoiseParams, SensorParams
from ..priors import PriorGraph, derive_prior_graph, load_prior_graph
from ..scene import GenerationParams, Scene, TaskSpec, generate_scene, load_scene, sample_task
from .episode import EpisodeConfig, EpisodeResult, run_episode
from .metrics import compute_ei, compute_spl, compute_sr, ei_term, spl_term
from .oracle import oracle_makespan

CSV_COLUMNS = (
    ["task_id", "scene_id", "variant", "N", "M", "seed", "success", "D", "L", "spl_term", "ei_term"]
    + [f"steps_agent_{i}" for i in range(5)]
    + ["bandwidth_total", "msgs_dropped", "status"]
)


@dataclass(frozen=True)
class VariantSpec:
    name: str
    policy: str = "greedy"
    comm: bool = True
    central: bool = False
    priors: bool = True
    checkpoint: str | None = None


@dataclass
class SuiteConfig:
    name: str = "suite"
    scene_files: list = field(default_factory=list)
    generate: dict | None = None  # {count, seed, dims, rooms, object_density}
    prior_file: str | None = None
    derive_prior: dict | None = None  # {count, seed, min_weight}
    M: list = field(default_factory=lambda: [1, 2, 3])
    N: list = field(default_factory=lambda: [1, 2, 3])
    seeds: list = field(default_factory=lambda: [0])
    tasks_per_scene: int = 1
    split: str = "all"  # all | known | unknown
    known_fraction: float = 0.7
    split_seed: int = 0
    variants: list = field(default_factory=lambda: [VariantSpec("greedy")])
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    workers: int = 1
    record_dir: str | None = None  # write a replay record per episode here
    codec: object = None  # fitted codec shared by all episodes (default: built from episode.codec)

    def validate(self):
        if not self.scene_files and not self.generate:
            raise ConfigError("scenes: give scene_files or a generate block")
        if self.split not in ("all", "known", "unknown"):
            raise ConfigError(f"split: expected all/known/unknown, got {self.split!r}")
        if not 0 < self.known_fraction < 1:
            raise ConfigError(f"known_fraction: must be in (0, 1), got {self.known_fraction}")
        for n in self.N:
            if not 1 <= n <= 5:
                raise ConfigError(f"N: values must be in 1..5, got {n}")
        for m in self.M:
            if not 1 <= m <= 5:
                raise ConfigError(f"M: values must be in 1..5, got {m}")
        if self.tasks_per_scene < 1:
            raise ConfigError("tasks_per_scene: must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise ConfigError(f"variants: duplicate names in {names}")
        self.episode.validate()

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "SuiteConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"suite: unknown keys {sorted(unknown)}")
        if "variants" in d:
            d["variants"] = [VariantSpec(**v) if isinstance(v, dict) else VariantSpec(v) for v in d["variants"]]
        if "episode" in d and isinstance(d["episode"], dict):
            d["episode"] = episode_config_from_dict(d["episode"])
        if base_dir is not None:
            d["scene_files"] = [str((base_dir / p)) for p in d.get("scene_files", [])]
            if d.get("prior_file"):
                d["prior_file"] = str(base_dir / d["prior_file"])
        return cls(**d)


def episode_config_from_dict(d: dict) -> EpisodeConfig:
    d = dict(d)
    known = {f.name for f in fields(EpisodeConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"episode: unknown keys {sorted(unknown)}")
    if isinstance(d.get("sensor"), dict):
        d["sensor"] = SensorParams(**d["sensor"])
    if isinstance(d.get("noise"), dict):
        d["noise"] = NoiseParams(**d["noise"])
    return EpisodeConfig(**d)


def known_categories(fraction: float = 0.7, seed: int = 0) -> frozenset:
    """Categories used as targets during training; the rest are 'unknown'."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(cat.K_TOTAL)
    k = int(round(fraction * cat.K_TOTAL))
    return frozenset(int(c) for c in order[:k])


def target_pool(split: str, fraction: float = 0.7, seed: int = 0):
    if split == "all":
        return None
    known = known_categories(fraction, seed)
    if split == "known":
        return known
    return frozenset(range(cat.K_TOTAL)) - known


def load_scenes(suite: SuiteConfig) -> tuple[list[Scene], list[tuple[str, str]]]:
    """Scenes plus ``(source, diagnostic)`` pairs for the ones that failed to load."""
    scenes, failures = [], []
    for f in suite.scene_files:
        try:
            scenes.append(load_scene(f))
        except (OSError, SemnavError) as exc:
            failures.append((str(f), f"{type(exc).__name__}: {exc}"))
    if suite.generate:
        g = dict(suite.generate)
        count = int(g.pop("count", 0))
        base = int(g.pop("seed", 0))
        if "dims" in g:
            g["dims"] = tuple(g["dims"])
        params = GenerationParams(**g)
        for i in range(count):
            scenes.append(generate_scene(base + i, params, scene_id=f"scene_{base}_{i}"))
    return scenes, failures


def load_graph(suite: SuiteConfig) -> PriorGraph | None:
    if suite.prior_file:
        return load_prior_graph(suite.prior_file)
    if suite.derive_prior:
        d = dict(suite.derive_prior)
        params = GenerationParams(**{k: (tuple(v) if k == "dims" else v) for k, v in d.get("params", {}).items()})
        base = int(d.get("seed", 10_000))
        train = [generate_scene(base + i, params) for i in range(int(d.get("count", 30)))]
        return derive_prior_graph(train, float(d.get("min_weight", 0.15)))
    return None


def build_tasks(suite: SuiteConfig, scenes: list[Scene]) -> list[tuple[Scene, TaskSpec, dict]]:
    """Sample tasks at the largest N and keep those whose oracle makespan is finite.

    Returns ``(scene, task, {N: L})`` triples; runs with fewer agents use the
    first N spawns of the same task.
    """
    pool = target_pool(suite.split, suite.known_fraction, suite.split_seed)
    n_max = max(suite.N + [1])
    out = []
    for seed in suite.seeds:
        for si, scene in enumerate(scenes):
            for M in suite.M:
                for t in range(suite.tasks_per_scene):
                    task_seed = ((seed * 1000 + si) * 10 + M) * 1000 + t
                    try:
                        task = sample_task(scene, M, n_max, task_seed, pool)
                    except (InsufficientCategories, InsufficientSpawns):
                        continue
                    Ls = {n: oracle_makespan(scene, task.with_agents(n), suite.episode.sensor)
                          for n in sorted(set(suite.N) | {1})}
                    if not all(math.isfinite(v) for v in Ls.values()):
                        continue
                    out.append((scene, task, Ls))
    return out


def _make_policy(v: VariantSpec):
    from ..policy.highlevel import make_policy

    return make_policy(v.policy, v.checkpoint)


def _episode_config(suite: SuiteConfig, v: VariantSpec) -> EpisodeConfig:
    return replace(suite.episode, comm=v.comm, central=v.central, use_priors=v.priors)


def _run_job(job):
    scene, task, n, v, cfg, graph, L, codec, record_dir = job
    try:
        policy = _make_policy(v)
        sub = task.with_agents(n)
        res = run_episode(scene, sub, policy, cfg, seed=task.seed, graph=graph, codec=codec, L=L, variant=v.name,
                          trace=record_dir is not None)
    except SemnavError as exc:
        return f"failed-to-run: {type(exc).__name__}: {exc}"
    if record_dir is not None:
        from .replay import make_record, save_record

        name = f"{task.task_id}_{v.name}_N{n}".replace("/", "_").replace("+", "_")
        save_record(make_record(scene, sub, res), Path(record_dir) / f"{name}.json")
        res.trace = res.subgoals = None
    return res


def run_benchmark(suite: SuiteConfig, progress=None) -> dict:
    """Run every (task, variant, N) cell; returns ``{"rows", "results", "summary"}``."""
    suite.validate()
    scenes, failures = load_scenes(suite)
    graph = load_graph(suite)
    tasks = build_tasks(suite, scenes)
    ns = sorted(set(suite.N))
    if suite.record_dir is not None:
        Path(suite.record_dir).mkdir(parents=True, exist_ok=True)
    run_ns = sorted(set(ns) | ({1} if any(n > 1 for n in ns) else set()))
    jobs, keys = [], []
    for scene, task, Ls in tasks:
        for v in suite.variants:
            # the single-agent pairing for EI is the same variant at N = 1
            cfg = _episode_config(suite, v)
            for n in run_ns:
                jobs.append((scene, task, n, v, cfg, graph, Ls[n], suite.codec, suite.record_dir))
                keys.append((task.task_id, v.name, n))
    if suite.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=suite.workers) as ex:
            outcomes = list(ex.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * suite.workers))))
    else:
        outcomes = []
        for i, job in enumerate(jobs):
            outcomes.append(_run_job(job))
            if progress:
                progress(i + 1, len(jobs))
    by_key = dict(zip(keys, outcomes))
    meta = {t.task_id: (s, t) for s, t, _ in tasks}
    rows, results = [], []
    for (tid, vname, n), out in sorted(by_key.items()):
        if n not in ns:
            continue
        scene, task = meta[tid]
        if isinstance(out, str):
            rows.append(_failed_row(tid, scene.id, vname, n, task.M, task.seed, out))
            continue
        results.append(out)
        single = by_key.get((tid, vname, 1))
        ei = ""
        if n > 1 and isinstance(single, EpisodeResult) and out.success and single.success:
            ei = ei_term(out.D, single.D)
        rows.append(_row(out, ei))
    for src, diag in failures:
        for v in suite.variants:
            for n in ns:
                rows.append(_failed_row(Path(src).stem, "", v.name, n, "", "", f"failed-to-run: {diag}"))
    return {"rows": rows, "results": results, "summary": summarize(results, by_key)}


def _row(r: EpisodeResult, ei) -> dict:
    steps = list(r.per_agent_steps) + [""] * (5 - len(r.per_agent_steps))
    return {
        "task_id": r.task_id, "scene_id": r.scene_id, "variant": r.variant, "N": r.N, "M": r.M, "seed": r.seed,
        "success": int(r.success), "D": r.D, "L": _num(r.L), "spl_term": _num(spl_term(r.success, r.L, r.D)),
        "ei_term": _num(ei), **{f"steps_agent_{i}": steps[i] for i in range(5)},
        "bandwidth_total": r.bandwidth["total_values_sent"], "msgs_dropped": r.bandwidth["dropped_msgs"],
        "status": "ok",
    }


def _failed_row(tid, scene_id, variant, n, m, seed, diag) -> dict:
    row = {c: "" for c in CSV_COLUMNS}
    row.update(task_id=tid, scene_id=scene_id, variant=variant, N=n, M=m, seed=seed, status=diag)
    return row


def _num(v):
    if v == "" or v is None:
        return ""
    if isinstance(v, float) and v.is_integer():
        return int(v)
    return f"{v:.6f}" if isinstance(v, float) else v


def summarize(results: list[EpisodeResult], by_key=None) -> list[dict]:
    groups: dict[tuple[str, int], list[EpisodeResult]] = {}
    for r in results:
        groups.setdefault((r.variant, r.N), []).append(r)
    singles = {}
    if by_key:
        for (tid, v, n), out in by_key.items():
            if n == 1 and isinstance(out, EpisodeResult):
                singles.setdefault(v, []).append(out)
    out = []
    for (v, n), rs in sorted(groups.items()):
        ei = compute_ei(rs, singles.get(v, [])) if n > 1 and singles.get(v) else None
        out.append({"variant": v, "N": n, "tasks": len(rs), "SR": compute_sr(rs), "SPL": compute_spl(rs), "EI": ei})
    return out


def write_csv(rows: list[dict], path=None) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def format_summary(summary: list[dict]) -> str:
    lines = [f"{'variant':<22} {'N':>2} {'tasks':>5} {'SR':>7} {'SPL':>7} {'EI':>7}"]
    for s in summary:
        ei = "-" if s["EI"] is None else f"{100 * s['EI']:6.2f}%"
        lines.append(f"{s['variant']:<22} {s['N']:>2} {s['tasks']:>5} {100 * s['SR']:6.2f}% {100 * s['SPL']:6.2f}% {ei:>7}")
    return "\n".join(lines)
