import json

import numpy as np
import pytest

from degparabolic.harness import (PROBLEMS, ExperimentConfig, StageError, build_problem,
                                  comparison_suite, convergence_study, presets, run_experiment)
from degparabolic.harness.cli import main
from degparabolic.harness.suites import jsonable
from degparabolic.operators import Problem
from degparabolic.solver import solve_cauchy_dirichlet


def small_config(**analyses):
    return ExperimentConfig.from_dict({
        "name": "small",
        "problem": {"catalog": "remark14", "gamma": 0.5, "horizon": 0.25},
        "grid": {"h": 1 / 8},
        "analyses": analyses,
    })


def test_config_round_trip():
    for name, cfg in presets().items():
        back = ExperimentConfig.from_json(cfg.to_json())
        assert back == cfg, name
        assert back.validate() is back


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_dict({"nmae": "x"})
    with pytest.raises(ValueError, match="unknown keys in 'grid'"):
        ExperimentConfig.from_dict({"grid": {"hh": 0.1}})


@pytest.mark.parametrize("patch,match", [
    ({"problem": {"catalog": "nope"}}, "catalog"),
    ({"problem": {"gamma": 1.0}}, "gamma"),
    ({"problem": {"operator": "mystery"}}, "operator"),
    ({"grid": {"h": -1.0}}, "grid.h"),
    ({"seed": -3}, "seed"),
    ({"analyses": {"fits": [{"order": 3}]}}, "order"),
    ({"analyses": {"bounds": ["harnack"]}}, "bound"),
    ({"analyses": {"certificates": [{"kind": "x"}]}}, "certificate"),
    ({"analyses": {"convergence": {"resolutions": [0.1, 0.05]}}}, "3 resolutions"),
])
def test_validation_fails_before_compute(patch, match):
    cfg = ExperimentConfig.from_dict(patch)
    with pytest.raises(ValueError, match=match):
        cfg.validate()
    with pytest.raises(ValueError, match=match):
        run_experiment(cfg)


def test_stage_error_names_the_stage():
    cfg = ExperimentConfig.from_dict({"problem": {"catalog": "positive-forcing", "gamma": 0.5},
                                      "grid": {"h": 1 / 8},
                                      "analyses": {"fits": [{"order": 1, "source": "exact"}]}})
    with pytest.raises(StageError) as info:
        run_experiment(cfg, stages=["solve", "fit"])
    assert info.value.stage == "fit"
    bad = ExperimentConfig.from_dict({"problem": {"catalog": "singular-forcing", "gamma": -1.0,
                                                  "params": {"alpha": 0.5}}})
    with pytest.raises(StageError) as info:
        run_experiment(bad, stages=["solve"])
    assert info.value.stage == "setup"
    assert "alpha + gamma" in str(info.value)


def test_every_catalog_problem_builds_and_solves():
    for name in PROBLEMS:
        gamma = 0.0 if name == "heat-sines" else 0.5
        prob, red = build_problem(name, gamma, horizon=0.125)
        res = solve_cauchy_dirichlet(prob, prob.grid(1 / 8))
        assert np.all(np.isfinite(res.field.values))
        if prob.exact is not None:
            assert set(red) <= {1, 2}


def test_catalog_drops_exact_for_other_operators():
    prob, _ = build_problem("remark14", 0.5, "pucci+", (1, 2))
    assert prob.exact is None
    prob, _ = build_problem("linear-normal", 0.5, "pucci+", (1, 2))
    assert prob.exact is not None


def test_linear_normal_is_reproduced_exactly():
    prob, _ = build_problem("linear-normal", 0.5, "pucci-", (1, 2), params={"slope": 2.0,
                                                                             "rate": -0.5})
    grid = prob.grid(1 / 16)
    res = solve_cauchy_dirichlet(prob, grid)
    ref = prob.exact(grid.coords, grid.times[:, None, None])
    assert np.max(np.abs(res.field.values - ref)) < 1e-12


def test_convergence_study_rows():
    prob, _ = build_problem("heat-sines", 0.0, horizon=0.125)
    rows = convergence_study(prob, [1 / 4, 1 / 8, 1 / 16])
    assert [r["h"] for r in rows] == [1 / 4, 1 / 8, 1 / 16]
    assert rows[0]["order"] is None
    assert all(r["order"] > 1.5 for r in rows[1:])
    with pytest.raises(ValueError, match="exact"):
        convergence_study(Problem(0.5, prob.op, prob.forcing, prob.boundary), [1, 2, 3])


def test_comparison_suite_small_and_seeded():
    base, _ = build_problem("positive-forcing", 0.5, horizon=0.125)
    rep = comparison_suite(base, trials=3, seed=7, h=1 / 8)
    assert rep.passed
    again = comparison_suite(base, trials=3, seed=7, h=1 / 8)
    other = comparison_suite(base, trials=3, seed=8, h=1 / 8)
    key = lambda r: r.checks[0].measured["min_u1_minus_u2"]
    assert key(rep) == key(again)
    assert key(rep) != key(other)
    with pytest.raises(ValueError):
        comparison_suite(base, trials=0)


def test_artifacts_are_deterministic(tmp_path):
    cfg = small_config(fits=[{"order": 1, "levels": [1, 2]}], max_error=1e-1)
    run_experiment(cfg, tmp_path / "a", ["solve", "fit"])
    run_experiment(cfg, tmp_path / "b", ["solve", "fit"])
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert {"summary.json", "timing.json", "checks.csv", "config.json",
            "solution_final.csv"} <= set(names)
    for name in names:
        if name != "timing.json":
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["schema_version"] == "1.0"
    assert "runtime" not in json.dumps(summary)


def test_jsonable_handles_nonfinite():
    out = jsonable({"a": np.float64(np.inf), "b": [np.int64(3), np.bool_(True)], "c": np.nan})
    assert out == {"a": "inf", "b": [3, True], "c": "nan"}
    json.dumps(out)


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["--list-catalog"]) == 0
    assert "pucci+" in capsys.readouterr().out
    assert main(["--list-presets"]) == 0
    assert "remark14-gamma05" in capsys.readouterr().out
    assert main(["solve", "--config", "no-such-preset"]) == 2
    cfg = small_config(max_error=1e-1)
    path = tmp_path / "ok.json"
    path.write_text(cfg.to_json())
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "ok")]) == 0
    assert (tmp_path / "ok" / "summary.json").exists()
    # an unattainable error tolerance is a failing check, not an error
    tight = small_config(max_error=1e-12)
    path = tmp_path / "tight.json"
    path.write_text(tight.to_json())
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "tight")]) == 1
    assert main(["fit", "--config", str(path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"problem": {"catalog": "nope"}}))
    assert main(["solve", "--config", str(bad)]) == 2
    assert main(["solve", "--config", str(path), "--seed", "-1"]) == 2


def test_cli_dump_config_applies_seed(capsys):
    assert main(["suite", "--config", "comparison", "--seed", "42", "--dump-config"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 42


def test_cli_stage_error_exit(tmp_path, capsys):
    cfg = ExperimentConfig.from_dict({"problem": {"catalog": "positive-forcing", "gamma": 0.5},
                                      "grid": {"h": 1 / 8},
                                      "analyses": {"fits": [{"order": 1, "source": "exact"}]}})
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert main(["fit", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "[fit]" in capsys.readouterr().err
