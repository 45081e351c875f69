import json

import numpy as np
import pytest

from mobo import gp, runner
from mobo.config import (
    Algorithm,
    ConfigError,
    apply_overrides,
    dump_config,
    parse_batch_config,
    parse_run_config,
)
from mobo.problems import ProblemSpec, evaluate, lhs_sample

FAST = {"ga": {"population": 10, "generations": 4}, "gp_restarts": 1,
        "mc_counts": {"search": 50, "report": 200}, "gumbel_sample_count": 50}


def small(algorithm, seed=0, budget=14, init=10, **extra):
    data = {"problem": {"name": "DTLZ2", "num_objectives": 2, "num_variables": 3},
            "algorithm": algorithm, "seed": seed, "init_size": init, "budget": budget, **FAST, **extra}
    return parse_run_config(data)


class TestConfig:
    def test_defaults_follow_dimension(self):
        cfg = parse_run_config({"problem": {"name": "dtlz7", "num_variables": 4}, "algorithm": "MonoEI"})
        assert (cfg.init_size, cfg.budget) == (40, 120)
        assert cfg.problem.name == "DTLZ7"
        assert cfg.ga.population == 100 and cfg.rho == 0.05

    def test_budget_must_exceed_init(self):
        with pytest.raises(ConfigError, match="budget"):
            small("MonoEI", budget=10, init=10)

    def test_unknown_field_named(self):
        with pytest.raises(ConfigError, match="ga.popsize"):
            parse_run_config({"problem": {"name": "DTLZ2"}, "algorithm": "MonoEI", "ga": {"popsize": 4}})

    def test_missing_problem_named(self):
        with pytest.raises(ConfigError, match="problem"):
            parse_run_config({"algorithm": "MonoEI"})

    def test_bad_algorithm(self):
        with pytest.raises(ConfigError, match="algorithm"):
            parse_run_config({"problem": {"name": "DTLZ2"}, "algorithm": "qEI"})

    def test_overrides(self):
        data = apply_overrides({"seed": 1, "ga": {"population": 10}}, ["seed=7", "ga.generations=3", "problem.name=DTLZ5"])
        assert data == {"seed": 7, "ga": {"population": 10, "generations": 3}, "problem": {"name": "DTLZ5"}}
        with pytest.raises(ConfigError):
            apply_overrides({}, ["seed"])

    def test_hash_tracks_content(self):
        a, b = small("MonoEI"), small("MonoEI")
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != small("MonoEI", seed=1).config_hash()
        assert parse_run_config(dump_config(a)) == a

    def test_batch_expand(self):
        batch = parse_batch_config({"problems": [{"name": "DTLZ2"}, {"name": "DTLZ5"}],
                                    "algorithms": ["MonoEI", "RandomSearch"], "seeds": [0, 1, 2], "budget": 60})
        runs = batch.expand()
        assert len(runs) == 12
        assert all(r.budget == 60 for r in runs)
        assert len({r.run_name() for r in runs}) == 12


class TestRun:
    @pytest.mark.parametrize("algorithm", [a.value for a in Algorithm])
    def test_budget_and_invariants(self, algorithm):
        cfg = small(algorithm)
        records = runner.run(cfg)
        assert len(records) == cfg.budget - cfg.init_size
        assert records[-1].eval_index == cfg.budget
        its = [r.iteration for r in records]
        assert its == sorted(set(its))
        hv = [r.hypervolume_so_far for r in records]
        assert np.all(np.diff(hv) >= 0)
        spec = cfg.problem.spec()
        for r in records:
            x = np.array(r.chosen_x)
            assert np.all((x >= 0) & (x <= 1))
            np.testing.assert_array_equal(r.objectives, evaluate(spec, x))
            assert not r.fallback
            assert np.isfinite(r.acquisition_value) and r.acquisition_value >= 0

    def test_single_step(self):
        assert len(runner.run(small("MonoEI", budget=11))) == 1

    def test_weights_match_across_algorithms(self):
        a = runner.run(small("MonoEI", seed=3))
        b = runner.run(small("RandomSearch", seed=3))
        c = runner.run(small("MultiEiGumbel", seed=3))
        for ra, rb, rc in zip(a, b, c):
            assert ra.weights == rb.weights == rc.weights
            assert abs(sum(ra.weights) - 1) <= 1e-12

    def test_hypervolume_matches_archive(self):
        cfg = small("RandomSearch", seed=2)
        records = runner.run(cfg)
        spec = cfg.problem.spec()
        X0 = lhs_sample(3, 10, runner.stream(2, "init"))
        F = np.vstack([evaluate(spec, X0), [r.objectives for r in records]])
        from mobo.metrics import hypervolume_of
        assert records[-1].hypervolume_so_far == hypervolume_of(F, spec.reference_point())

    def test_random_search_is_uniform(self):
        xs = np.array([r.chosen_x for r in runner.run(small("RandomSearch", budget=410))])
        assert xs.shape == (400, 3)
        assert np.all(np.abs(xs.mean(axis=0) - 0.5) < 0.05)

    def test_deterministic(self):
        for algo in ("MultiEiGumbel", "MultiEHVI", "MonoEI"):
            a = [r.result_row() for r in runner.run(small(algo, seed=5))]
            b = [r.result_row() for r in runner.run(small(algo, seed=5))]
            assert json.dumps(a) == json.dumps(b)

    def test_fit_failure_falls_back(self, monkeypatch):
        def broken(*args, **kwargs):
            raise gp.GpFitError("forced")

        monkeypatch.setattr(gp, "fit", broken)
        records = runner.run(small("MonoEI", budget=12))
        assert all(r.fallback for r in records)
        assert all(np.all((np.array(r.chosen_x) >= 0) & (np.array(r.chosen_x) <= 1)) for r in records)

    def test_duplicate_proposal_is_perturbed(self, monkeypatch):
        cfg = small("RandomSearch", budget=11)
        X0 = lhs_sample(3, 10, runner.stream(0, "init"))
        monkeypatch.setattr(runner, "_propose", lambda *a: (X0[0].copy(), 0.0, False, 0.0, 0.0))
        x = np.array(runner.run(cfg)[0].chosen_x)
        assert 0 < np.max(np.abs(x - X0[0])) <= runner.PERTURB_BOX / 2


class TestPersistence:
    def test_files_identical(self, tmp_path):
        cfg = small("MultiEiGumbel", seed=1)
        a = runner.write_records(runner.run(cfg), tmp_path / "a.jsonl")
        b = runner.write_records(runner.run(cfg), tmp_path / "b.jsonl")
        assert a.read_bytes() == b.read_bytes()
        rows = runner.read_records(a)
        assert "wall_time_model_fit" not in rows[0]
        timing = runner.read_records(runner.timing_path(a))
        assert len(timing) == len(rows) and "wall_time_acquisition" in timing[0]

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        runner._atomic_write(tmp_path / "x.txt", "hello")
        assert [p.name for p in tmp_path.iterdir()] == ["x.txt"]

    def test_batch_and_resume(self, tmp_path):
        batch = parse_batch_config({"problems": [{"name": "DTLZ2", "num_variables": 3}], "algorithms": ["RandomSearch"],
                                    "seeds": [0, 1, 2], "init_size": 10, "budget": 13, **FAST})
        entries = runner.run_batch(batch, tmp_path)
        assert len(entries) == 3 and all(e["status"] == "complete" for e in entries)
        assert len(list(tmp_path.glob("*__seed?.jsonl"))) == 3
        manifest = json.loads((tmp_path / "manifest.json").read_text())["runs"]
        assert {e["seed"] for e in manifest} == {0, 1, 2}
        assert set(manifest[0]) >= {"config_hash", "seed", "problem", "algorithm", "path", "status"}

        calls = []
        original = runner._batch_worker
        runner._batch_worker = lambda *a: calls.append(a) or original(*a)
        try:
            runner.run_batch(batch, tmp_path, resume=True)
        finally:
            runner._batch_worker = original
        assert calls == []

    def test_extension_flag(self, tmp_path):
        entry = runner.manifest_entry(small("MultiEiExactMC"), tmp_path / "r.jsonl", "complete")
        assert entry["extension"] is True
        assert "extension" not in runner.manifest_entry(small("MonoEI"), tmp_path / "r.jsonl", "complete")

    def test_batch_isolates_failures(self, tmp_path, monkeypatch):
        batch = parse_batch_config({"problems": [{"name": "DTLZ2", "num_variables": 3}], "algorithms": ["RandomSearch"],
                                    "seeds": [0, 1], "init_size": 10, "budget": 12, **FAST})
        original = runner.run_to_file

        def flaky(cfg, out_dir):
            if cfg.seed == 1:
                raise OSError("disk full")
            return original(cfg, out_dir)

        monkeypatch.setattr(runner, "run_to_file", flaky)
        entries = runner.run_batch(batch, tmp_path)
        status = {e["seed"]: e["status"] for e in entries}
        assert status == {0: "complete", 1: "failed"}
        assert "disk full" in entries[1]["error"]


def fake_results(tmp_path, values_by_algo, grid=(11, 12, 13)):
    """Write synthetic runs; ``values_by_algo[algo]`` is a list of per-seed HV lists."""
    entries = []
    for algo, runs in values_by_algo.items():
        for seed, hv in enumerate(runs):
            name = f"DTLZ2_m2_n5__{algo}__seed{seed}.jsonl"
            rows = [{"eval_index": e, "hypervolume_so_far": v} for e, v in zip(grid, hv)]
            (tmp_path / name).write_text("".join(json.dumps(r) + "\n" for r in rows))
            timing = [{"wall_time_model_fit": 0.1 * seed, "wall_time_acquisition": 0.2 * seed} for _ in rows]
            runner.timing_path(tmp_path / name).write_text("".join(json.dumps(r) + "\n" for r in timing))
            entries.append({"config_hash": "x", "seed": seed, "problem": "DTLZ2_m2_n5", "algorithm": algo,
                            "path": name, "status": "complete"})
    runner.write_manifest(tmp_path, entries)


class TestAggregate:
    def test_single_run(self, tmp_path):
        fake_results(tmp_path, {"MonoEI": [[0.1, 0.2, 0.3]]})
        rows = runner.aggregate(tmp_path)
        assert [r["hv_median"] for r in rows] == [0.1, 0.2, 0.3]
        assert all(r["hv_lo"] == r["hv_hi"] == r["hv_median"] for r in rows)

    def test_median_of_three(self, tmp_path):
        fake_results(tmp_path, {"MonoEI": [[1.0] * 3, [2.0] * 3, [3.0] * 3]})
        assert all(r["hv_median"] == 2.0 for r in runner.aggregate(tmp_path))

    def test_percentiles_match_sorted_oracle(self, tmp_path, rng):
        values = rng.random((11, 3))
        fake_results(tmp_path, {"MultiEiGumbel": values.tolist()})
        rows = runner.aggregate(tmp_path)
        for j, row in enumerate(rows):
            s = np.sort(values[:, j])
            # linear interpolation at rank q*(n-1): 2.5% -> 0.25, 97.5% -> 9.75
            assert row["hv_median"] == pytest.approx(s[5])
            assert row["hv_lo"] == pytest.approx(s[0] + 0.25 * (s[1] - s[0]))
            assert row["hv_hi"] == pytest.approx(s[9] + 0.75 * (s[10] - s[9]))

    def test_inconsistent_grid(self, tmp_path):
        fake_results(tmp_path, {"MonoEI": [[0.1, 0.2, 0.3]]})
        (tmp_path / "DTLZ2_m2_n5__MonoEI__seed0.jsonl").write_text('{"eval_index": 11, "hypervolume_so_far": 0.1}\n')
        entries = runner.read_manifest(tmp_path)
        extra = dict(entries[0], seed=1, path="DTLZ2_m2_n5__MonoEI__seed1.jsonl")
        (tmp_path / extra["path"]).write_text('{"eval_index": 11, "hypervolume_so_far": 0.1}\n'
                                              '{"eval_index": 12, "hypervolume_so_far": 0.2}\n')
        runner.write_manifest(tmp_path, entries + [extra])
        with pytest.raises(runner.AggregateError, match="MonoEI"):
            runner.aggregate(tmp_path)

    def test_empty(self, tmp_path):
        with pytest.raises(runner.AggregateError):
            runner.aggregate(tmp_path)

    def test_timing_summary(self, tmp_path):
        fake_results(tmp_path, {"MonoEI": [[0.1] * 3] * 3})
        (row,) = runner.timing_summary(tmp_path)
        assert row["median_fit_s"] == pytest.approx(0.1) and row["median_acq_s"] == pytest.approx(0.2)
