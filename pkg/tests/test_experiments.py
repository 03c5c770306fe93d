import numpy as np
import pytest

from polysparse.basis import enumerate_basis
from polysparse.experiments import (RESULT_FIELDS, ExperimentConfig, ResultWriter,
                                    lift_support, load_config, read_results,
                                    run_experiment, run_task, summarize, tasks)


def small(kind="phase_transition", **kw):
    base = dict(kind=kind, n=[20, 40], p=[4], k=4, ell=3, ell_fit=[1, 2, 3, 4],
                seeds=[0, 1], time_limit=10.0, n_validation=20, n_test=20)
    base.update(kw)
    return ExperimentConfig(**base).validate()


class TestConfig:
    def test_ini_and_overrides(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[experiment]\nkind = path\nn = 150\nell_fit = 2..5\nseeds = 0, 3\n")
        cfg = load_config(path, ["snr=100", "p=6", "k=3"])
        assert cfg.kind == "path" and cfg.n == [150] and cfg.ell_fit == [2, 3, 4, 5]
        assert cfg.seeds == [0, 3] and cfg.snr == 100.0 and cfg.p == [6]

    def test_roundtrip_digest(self, tmp_path):
        cfg = small()
        path = tmp_path / "c.ini"
        path.write_text(cfg.as_ini())
        again = load_config(path)
        assert again == cfg and again.digest() == cfg.digest()

    @pytest.mark.parametrize("override", ["k=9", "ell=0", "kind=nope", "snr=-1",
                                          "time_limit=0", "seeds=", "p_prime=2"])
    def test_invalid(self, override):
        with pytest.raises(ValueError):
            load_config(None, [override, "p=6", "k=3"] if override != "k=9" else [override, "p=6"])

    def test_missing_section(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[other]\nx = 1\n")
        with pytest.raises(ValueError):
            load_config(path)

    def test_tasks_cover_grid(self):
        assert tasks(small()) == [(4, 20, 0), (4, 20, 1), (4, 40, 0), (4, 40, 1)]


def test_lift_support():
    full = enumerate_basis(4, 2)
    sub = enumerate_basis(2, 2)
    # x1*x2 on inputs (1, 3) is x2*x4 in the full catalog
    j = sub.index_of([1, 1])
    assert full.labels()[lift_support(sub, [1, 3], full, [j])[0]] == "x2*x4"


class TestRuns:
    def test_phase_rows(self, tmp_path):
        rows = run_experiment(small(), tmp_path / "r.csv")
        assert len(rows) == 8
        assert {r["method"] for r in rows} == {"exact", "lasso"}
        for r in rows:
            assert 0 <= r["accuracy"] <= 100 and r["error"] == ""
        assert read_results(tmp_path / "r.csv")[0].keys() == set(RESULT_FIELDS)

    def test_deterministic(self, tmp_path):
        a = run_experiment(small(), tmp_path / "a.csv")
        b = run_experiment(small(), tmp_path / "b.csv")
        strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_seconds"} for r in rows]
        assert strip(a) == strip(b)

    def test_path_nested_accuracy(self, tmp_path):
        rows = run_experiment(small("path", n=[80], seeds=[0]), tmp_path / "p.csv")
        exact = [r for r in rows if r["method"] == "exact"]
        acc = [r["accuracy"] for r in sorted(exact, key=lambda r: r["ell"])]
        assert all(a <= b for a, b in zip(acc, acc[1:]))
        lasso = [r for r in rows if r["method"] == "lasso"]
        for e, l in zip(exact, lasso):
            assert abs(l["support_size"] - e["support_size"]) <= 1

    def test_coverage(self, tmp_path):
        cfg = small("ranking_coverage", p=[12], k=3, ell=4, n=[100])
        rows = run_experiment(cfg, tmp_path / "c.csv")
        assert all(3 <= r["p_prime"] <= 12 for r in rows)

    def test_failure_recorded(self, monkeypatch):
        def boom(*a, **k):
            raise RuntimeError("solver exploded")
        monkeypatch.setattr("polysparse.experiments.solve", boom)
        rows = run_task(small(), (4, 20, 0))
        assert rows[0]["termination"] == "error" and "exploded" in rows[0]["error"]

    def test_process_pool_matches_serial(self, tmp_path):
        a = run_experiment(small(seeds=[0]), tmp_path / "a.csv")
        b = run_experiment(small(seeds=[0], workers=2), tmp_path / "b.csv")
        assert [r["accuracy"] for r in a] == [r["accuracy"] for r in b]

    def test_prefix_valid_after_interrupt(self, tmp_path):
        path = tmp_path / "r.csv"

        def stop(task, batch):
            raise KeyboardInterrupt

        with pytest.raises(KeyboardInterrupt):
            run_experiment(small(), path, progress=stop)
        rows = read_results(path)
        assert len(rows) == 2 and rows[0]["method"] == "exact"


def test_summarize_groups_and_errors():
    rows = [{"experiment": "e", "method": "m", "n": "1", "p": "2", "p_prime": "2",
             "ell": "3", "accuracy": str(a), "error": err, "termination": "optimal"}
            for a, err in ((50, ""), (100, ""), (0, "boom"))]
    (rec,) = summarize(rows)
    assert rec["runs"] == 3 and rec["errors"] == 1
    assert rec["accuracy_mean"] == 75 and rec["accuracy_std"] == 25


def test_writer_flushes(tmp_path):
    path = tmp_path / "w.csv"
    writer = ResultWriter(path, ["a", "b"], ["# head"])
    writer.write({"a": 1, "b": np.float64(0.5)})
    assert path.read_text().splitlines() == ["# head", "a,b", "1,0.5"]
    writer.close()
