import csv
import io

import pytest

from semnav.errors import ConfigError
from semnav.evaluation.benchmark import (
    CSV_COLUMNS, SuiteConfig, VariantSpec, build_tasks, format_summary, known_categories, load_scenes,
    run_benchmark, target_pool, write_csv,
)
from semnav.scene import save_scene, generate_scene, GenerationParams


def _suite(**kw):
    base = dict(generate={"count": 1, "seed": 300, "dims": [48, 48], "rooms": 1},
                derive_prior={"count": 3, "seed": 900, "dims": [48, 48], "rooms": 1},
                M=[1], N=[1, 2], seeds=[0], tasks_per_scene=1)
    base.update(kw)
    return SuiteConfig.from_dict(base)


@pytest.fixture(scope="module")
def small_run():
    return run_benchmark(_suite())


def test_rows_and_ei_pairing(small_run):
    rows = small_run["rows"]
    assert [(r["N"], r["variant"]) for r in rows] == [(1, "greedy"), (2, "greedy")]
    one, two = rows
    assert one["task_id"] == two["task_id"] and one["ei_term"] == ""
    if one["success"] and two["success"]:
        assert float(two["ei_term"]) == pytest.approx((one["D"] - two["D"]) / one["D"], abs=1e-6)
    for r in rows:
        assert r["status"] == "ok"
        assert r["D"] == max(s for s in (r[f"steps_agent_{i}"] for i in range(5)) if s != "")
    assert {s["N"] for s in small_run["summary"]} == {1, 2}


def test_csv_is_stable(small_run):
    text = write_csv(small_run["rows"])
    assert text.splitlines()[0].split(",") == CSV_COLUMNS
    assert write_csv(run_benchmark(_suite())["rows"]) == text
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert len(parsed) == 2
    assert "greedy" in format_summary(small_run["summary"])


def test_workers_do_not_change_results(small_run):
    assert write_csv(run_benchmark(_suite(workers=2))["rows"]) == write_csv(small_run["rows"])


def test_missing_scene_file_gives_failed_rows(tmp_path):
    good = tmp_path / "good.json"
    save_scene(generate_scene(301, GenerationParams(dims=(48, 48), rooms=1)), good)
    suite = _suite(generate=None, scene_files=[str(good), str(tmp_path / "missing.json")], N=[1])
    rows = run_benchmark(suite)["rows"]
    failed = [r for r in rows if r["status"] != "ok"]
    assert len(failed) == 1 and failed[0]["task_id"] == "missing"
    assert failed[0]["status"].startswith("failed-to-run")
    assert any(r["status"] == "ok" for r in rows)


def test_variants_share_tasks():
    out = run_benchmark(_suite(N=[1], variants=[{"name": "a"}, {"name": "b", "comm": False}]))
    a = [r for r in out["rows"] if r["variant"] == "a"]
    b = [r for r in out["rows"] if r["variant"] == "b"]
    assert [r["task_id"] for r in a] == [r["task_id"] for r in b]
    # a single agent never sends maps, so the comm switch is a no-op at N = 1
    assert [r["D"] for r in a] == [r["D"] for r in b]


def test_tasks_have_finite_oracle_for_every_n():
    suite = _suite(M=[1, 2], N=[1, 3], tasks_per_scene=2)
    scenes, _ = load_scenes(suite)
    for _, task, Ls in build_tasks(suite, scenes):
        assert set(Ls) == {1, 3} and task.N == 3
        assert Ls[3] <= Ls[1]


def test_known_unknown_split():
    known = known_categories(0.7, 0)
    assert len(known) == 17
    assert target_pool("all") is None
    assert target_pool("known") | target_pool("unknown") == frozenset(range(24))
    assert not target_pool("known") & target_pool("unknown")


@pytest.mark.parametrize("bad", [
    {"N": [0]}, {"M": [6]}, {"split": "odd"}, {"workers": 0}, {"variants": [{"name": "x"}, {"name": "x"}]},
    {"bogus": 1}, {"generate": None},
])
def test_bad_suites(bad):
    with pytest.raises(ConfigError):
        s = _suite(**bad)
        s.validate()


def test_variant_spec_defaults():
    v = VariantSpec("x")
    assert (v.policy, v.comm, v.central, v.priors) == ("greedy", True, False, True)
