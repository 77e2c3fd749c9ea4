"""One test per acceptance criterion; each records a pass/fail line shown in the terminal summary."""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from semnav import categories as cat
from semnav.comms import QuantizedCodec, select_recipients, train_learned_codec
from semnav.evaluation.benchmark import SuiteConfig, VariantSpec, run_benchmark, write_csv
from semnav.evaluation.episode import EpisodeConfig, run_episode
from semnav.evaluation.metrics import compute_ei, compute_spl
from semnav.evaluation.oracle import oracle_makespan
from semnav.perception import Pose, SensorParams
from semnav.policy.checkpoint import checkpoint_bytes
from semnav.policy.flat import RandomActionPolicy
from semnav.policy.highlevel import GreedyPolicy, Hyperparams, RandomSubgoalPolicy, subgoal_reward
from semnav.policy.lowlevel import arrived, plan_low_level
from semnav.policy.training import TrainConfig, evaluate_returns, train_high_level
from semnav.scene import GenerationParams, generate_scene, sample_task
from semnav.semantic_map import SemanticMap, project_observation

from conftest import ACCEPTANCE
from oracles import EI_CASES, SPL_CASES, joint_walk_makespan, lattice_dijkstra, point_sector_distance
from test_comms import blob_map, category_iou
from test_oracle import _found_from, _instance
from test_semantic_map import LAPTOP, _ray_obs

pytestmark = pytest.mark.acceptance


def record(n, ok, detail):
    ACCEPTANCE.append((n, bool(ok), detail))
    assert ok, detail


def test_1_metric_exactness():
    t = time.perf_counter()
    bad = [c for c in SPL_CASES if compute_spl([{"task_id": "t", "success": c[0], "L": c[1], "D": c[2]}], True) != c[3]]
    bad += [c for c in EI_CASES if compute_ei([{"task_id": "t", "success": True, "D": c[1]}],
                                              [{"task_id": "t", "success": True, "D": c[0]}], True) != c[2]]
    dt = time.perf_counter() - t
    n = len(SPL_CASES) + len(EI_CASES)
    record(1, not bad and n == 20 and dt < 1, f"{n - len(bad)}/{n} hand-substituted SPL/EI cases exact, {dt:.3f}s")


def test_2_planner_optimality():
    rng = np.random.default_rng(2024)
    t = time.perf_counter()
    agree = total = 0
    while total < 100:
        free = rng.random((30, 30)) >= 0.25
        cells = np.argwhere(free)
        a, g = (tuple(map(int, c)) for c in cells[rng.choice(len(cells), 2, replace=False)])
        h = int(rng.choice([0, 90, 180, 270]))
        ref = lattice_dijkstra(free, a, h, lambda c: arrived(c, g) and free[c])
        if not math.isfinite(ref):
            continue
        total += 1
        agree += plan_low_level(free, a, h, g).cost == ref
    dt = time.perf_counter() - t
    record(2, agree == 100 and dt < 5, f"{agree}/100 random 30x30 maps match unit-weight Dijkstra, {dt:.2f}s")


def test_3_oracle_soundness():
    t = time.perf_counter()
    agree = 0
    for seed in range(20):
        scene, task = _instance(seed)
        agree += oracle_makespan(scene, task) == joint_walk_makespan(scene, task, _found_from(scene))
    dt = time.perf_counter() - t
    record(3, agree == 20 and dt < 60, f"{agree}/20 tiny instances equal exhaustive joint-walk search, {dt:.2f}s")


def test_4_geometry():
    t = time.perf_counter()
    m = SemanticMap((60, 20))
    project_observation(m, _ray_obs((5, 10), 1.0))
    cell_ok = m.counts[25, 10, LAPTOP] == 1 and m.categories.sum() == 1
    rng = np.random.default_rng(4)
    sensor = SensorParams()
    agree = 0
    for _ in range(1000):
        a = rng.integers(0, 240, 2) * 0.05
        b = rng.integers(0, 240, 2) * 0.05
        h = int(rng.choice([0, 90, 180, 270]))
        got = 1 in select_recipients(0, [Pose(*a, h, 0), Pose(*b, 0, 0)], sensor)
        agree += got == (point_sector_distance(a, h, sensor.fov / 2, sensor.max_range, b) <= 1.0)
    dt = time.perf_counter() - t
    record(4, cell_ok and agree == 1000 and dt < 5,
           f"1.0 m hit at +20 cells: {cell_ok}; {agree}/1000 pose pairs match sector oracle, {dt:.2f}s")


def test_5_codec_contracts():
    t = time.perf_counter()
    rng = np.random.default_rng(5)
    maps = [blob_map(rng, int(rng.integers(1, 4))) for _ in range(200)]
    q = QuantizedCodec(256, (80, 80), cat.K_TOTAL).fit()
    ious, lengths = [], set()
    for m in maps:
        v = q.encode(m)
        lengths.add(len(v))
        ious.extend(category_iou(m, q.decode(v)))
    codec, trace = train_learned_codec(maps, 500)
    lengths |= {len(codec.encode(m)) for m in maps}
    drop = 1 - trace[-1] / trace[0]
    dt = time.perf_counter() - t
    ok = lengths == {256} and min(ious) >= 0.5 and drop >= 0.5 and dt < 120
    record(5, ok, f"lengths {sorted(lengths)}; quantized min IoU {min(ious):.3f} over {len(ious)} blobs; "
                  f"learned loss -{100 * drop:.1f}% in 500 epochs; {dt:.1f}s")


def test_6_reward_algebra():
    t = time.perf_counter()
    a, b = Fraction(7, 10), Fraction(3, 10)
    rng = np.random.default_rng(6)
    exact = tele = 0
    for _ in range(50):
        dto = rng.integers(0, 60, (10, 10)).astype(float)
        dko = rng.integers(0, 60, (10, 10)).astype(float)
        new, prev = (tuple(rng.integers(0, 10, 2)) for _ in range(2))
        exact += subgoal_reward(new, prev, dto, dko, a, b) == a * int(dto[prev] - dto[new]) + b * int(dko[prev] - dko[new])
        chain = [tuple(rng.integers(0, 10, 2)) for _ in range(int(rng.integers(2, 10)))]
        s = sum(subgoal_reward(chain[i + 1], chain[i], dto, dko, a, b) for i in range(len(chain) - 1))
        f, l = chain[0], chain[-1]
        tele += s == a * int(dto[f] - dto[l]) + b * int(dko[f] - dko[l])
    dt = time.perf_counter() - t
    record(6, exact == 50 and tele == 50 and dt < 1, f"{exact}/50 exact, {tele}/50 chains telescope, {dt:.3f}s")


# desk suite, scaled to fit the time budget on one core (see the decisions ledger)
SUITE_SCENES = 4
SUITE_SEEDS = range(5)
SR_TOL = 0.02


def _suite(seed):
    return SuiteConfig(
        name=f"desk{seed}", generate={"count": SUITE_SCENES, "seed": 500}, derive_prior={"count": 30, "seed": 10_000},
        M=[1, 2, 3], N=[1, 2, 3], seeds=[seed], tasks_per_scene=1,
        variants=[VariantSpec("greedy"), VariantSpec("no-comm", comm=False), VariantSpec("central", central=True),
                  VariantSpec("no-priors", priors=False)],
    )


@pytest.mark.slow
def test_7_directional_table():
    t = time.perf_counter()
    per_seed, results = [], []
    for s in SUITE_SEEDS:
        out = run_benchmark(_suite(s))
        per_seed.append({(x["variant"], x["N"]): x for x in out["summary"]})
        results.extend(out["results"])
    dt = time.perf_counter() - t

    def pooled(variant, ns, metric):
        rs = [r for r in results if r.variant == variant and r.N in ns]
        return np.mean([r.success for r in rs]) if metric == "SR" else compute_spl(rs)

    sr = lambda sm, v, n: sm[(v, n)]["SR"]
    a = all(sr(sm, "greedy", 2) >= sr(sm, "greedy", 1) - SR_TOL and sr(sm, "greedy", 3) >= sr(sm, "greedy", 2) - SR_TOL
            for sm in per_seed)
    single = [r for r in results if r.variant == "greedy" and r.N == 1]
    ei = {n: compute_ei([r for r in results if r.variant == "greedy" and r.N == n], single) for n in (2, 3)}
    b = all(v is not None and v > 0.10 for v in ei.values())
    c = pooled("greedy", (2, 3), "SR") >= pooled("no-comm", (2, 3), "SR")
    d = pooled("central", (2, 3), "SR") >= pooled("greedy", (2, 3), "SR") - SR_TOL
    e = pooled("greedy", (1, 2, 3), "SPL") >= pooled("no-priors", (1, 2, 3), "SPL")
    srs = {n: pooled("greedy", (n,), "SR") for n in (1, 2, 3)}
    detail = (f"(a) SR N1/2/3 {srs[1]:.2f}/{srs[2]:.2f}/{srs[3]:.2f} per-seed monotone: {a}; "
              f"(b) EI N2 {100 * ei[2]:.1f}% N3 {100 * ei[3]:.1f}%: {b}; "
              f"(c) SR comm {pooled('greedy', (2, 3), 'SR'):.2f} vs off {pooled('no-comm', (2, 3), 'SR'):.2f}: {c}; "
              f"(d) SR central {pooled('central', (2, 3), 'SR'):.2f}: {d}; "
              f"(e) SPL priors {pooled('greedy', (1, 2, 3), 'SPL'):.3f} vs off "
              f"{pooled('no-priors', (1, 2, 3), 'SPL'):.3f}: {e}; "
              f"{len(single)} tasks x 4 variants x N 1-3, {dt:.0f}s")
    record(7, a and b and c and d and e and dt < 900, detail)


# desk-scale training settings for the learned policy (see the decisions ledger)
TRAIN_LR = 0.03
TRAIN_EPOCHS = 60


@pytest.mark.slow
def test_8_learned_policy_sanity():
    t = time.perf_counter()
    scenes = [generate_scene(100 + i, GenerationParams(rooms=1)) for i in range(10)]
    cfg = TrainConfig(epochs=TRAIN_EPOCHS, episodes_per_epoch=8, seed=0)
    state = train_high_level(scenes, cfg, Hyperparams(learning_rate=TRAIN_LR), EpisodeConfig())
    train_s = time.perf_counter() - t
    ret_l, sr_l = evaluate_returns(scenes, state.policy, cfg, episodes=100)
    ret_r, sr_r = evaluate_returns(scenes, RandomSubgoalPolicy(), cfg, episodes=100)
    ret_a, sr_a = evaluate_returns(scenes, RandomActionPolicy(), cfg, episodes=100)
    ok = ret_l >= ret_r and ret_l >= ret_a and sr_l >= 3 * sr_a and train_s < 1800
    record(8, ok, f"return learned {ret_l:.1f} vs random sub-goals {ret_r:.1f} / random actions {ret_a:.1f}; "
                  f"SR learned {sr_l:.2f} vs random actions {sr_a:.2f} (random sub-goals {sr_r:.2f}); "
                  f"training {train_s:.0f}s")


def test_9_determinism():
    t = time.perf_counter()
    scene = generate_scene(900, GenerationParams(dims=(48, 48), rooms=1))
    task = sample_task(scene, 2, 2, 1)
    ep = [run_episode(scene, task, GreedyPolicy(), seed=7, trace=True).to_json() for _ in range(2)]
    cfg = TrainConfig(epochs=2, episodes_per_epoch=2, seed=3)
    tr = [checkpoint_bytes(train_high_level([scene], cfg, Hyperparams(learning_rate=0.03))) for _ in range(2)]
    suite = lambda: SuiteConfig(generate={"count": 1, "seed": 901, "dims": [48, 48], "rooms": 1},
                                derive_prior={"count": 3, "seed": 902, "dims": [48, 48], "rooms": 1},
                                M=[1, 2], N=[1, 2], seeds=[0, 1])
    bench = [write_csv(run_benchmark(suite())["rows"]) for _ in range(2)]
    dt = time.perf_counter() - t
    ok = ep[0] == ep[1] and tr[0] == tr[1] and bench[0] == bench[1] and dt < 300
    record(9, ok, f"episode {ep[0] == ep[1]}, training {tr[0] == tr[1]}, benchmark {bench[0] == bench[1]} "
                  f"byte-identical, {dt:.1f}s")
