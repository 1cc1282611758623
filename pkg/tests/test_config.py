import json

import pytest

from mfg.config import (ParseError, ValidationError, parse_config,
                        parse_bench_config, validate_config)


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


def test_minimal_config_gets_global_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, {"problem": "example1_quadratic"}))
    assert cfg.problem == "example1_quadratic"
    assert cfg.N_h == 32 and cfg.N_T == 64
    assert cfg.nu == 0.5 and cfg.T == 1.0
    assert cfg.solver == "newton"
    assert cfg.seed == 0
    assert cfg.params == {} and cfg.solver_params == {}


def test_entry_defaults_fill_then_user_wins(tmp_path):
    cfg = parse_config(_write(tmp_path, {"problem": "ergodic_demo"}))
    assert cfg.nu == 0.001 and cfg.N_T == 32 and cfg.T == 2.0
    assert cfg.solver == "picard"
    cfg = parse_config(_write(tmp_path, {"problem": "ergodic_demo",
                                         "nu": 0.01, "solver": "newton"}))
    assert cfg.nu == 0.01 and cfg.solver == "newton"


def test_unknown_top_level_keys_listed():
    with pytest.raises(ValidationError) as err:
        validate_config({"problem": "example1_quadratic", "Nh": 3, "zz": 1})
    assert "Nh" in str(err.value) and "zz" in str(err.value)


def test_unknown_problem_names_known_ones():
    with pytest.raises(ValidationError) as err:
        validate_config({"problem": "example99"})
    assert "example1_quadratic" in str(err.value)


def test_unknown_solver_names_allowed_set():
    with pytest.raises(ValidationError) as err:
        validate_config({"problem": "two_population", "solver": "newton"})
    assert "picard" in str(err.value)


def test_cp_step_product_must_stay_below_one():
    base = {"problem": "example1_quadratic", "solver": "cp"}
    cfg = validate_config({**base, "solver_params": {"r": 0.975, "s": 0.975}})
    assert cfg.solver_params["r"] == 0.975
    with pytest.raises(ValidationError):
        validate_config({**base, "solver_params": {"r": 1.0, "s": 1.0}})


def test_solver_params_validated_per_solver():
    with pytest.raises(ValidationError) as err:
        validate_config({"problem": "example1_quadratic", "solver": "picard",
                         "solver_params": {"step": 0.1}})
    assert "step" in str(err.value)


def test_problem_params_checked_against_entry():
    cfg = validate_config({"problem": "example1_quadratic",
                           "params": {"dim": 2}})
    assert cfg.params == {"dim": 2}
    with pytest.raises(ValidationError) as err:
        validate_config({"problem": "example1_quadratic",
                         "params": {"dims": 2}})
    assert "dims" in str(err.value)


def test_size_and_sign_checks():
    for bad in ({"N_h": 0}, {"N_h": "32"}, {"N_T": -4}, {"nu": 0.0},
                {"T": -1.0}, {"seed": True}, {"nu": True}):
        with pytest.raises(ValidationError):
            validate_config({"problem": "example1_quadratic", **bad})


def test_multigrid_block_checked():
    cfg = validate_config({"problem": "example1_quadratic",
                           "multigrid": {"mode": "semi", "levels": 3}})
    assert cfg.multigrid["mode"] == "semi"
    with pytest.raises(ValidationError):
        validate_config({"problem": "example1_quadratic",
                         "multigrid": {"mode": "diagonal"}})


def test_parse_error_carries_line(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "problem": oops\n}')
    with pytest.raises(ParseError) as err:
        parse_config(p)
    assert "line 2" in str(err.value)


def test_missing_file_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        parse_config(tmp_path / "nope.json")


def test_bench_jobs(tmp_path):
    p = _write(tmp_path, {"jobs": [
        {"mode": "semi", "N": 32, "nu": 0.6},
        {"mode": "full", "N": 64, "N_T": 32, "nu": 0.2},
    ], "seed": 3})
    jobs, out, seed = parse_bench_config(p)
    assert seed == 3 and out is None
    assert jobs[0] == {"mode": "semi", "N": 32, "N_T": 32, "nu": 0.6}
    assert jobs[1]["N_T"] == 32 and jobs[1]["mode"] == "full"

    assert parse_bench_config(_write(tmp_path, {"jobs": []}))[0] == []
    for bad in ({"jobs": [{"mode": "up", "N": 32, "nu": 1.0}]},
                {"jobs": [{"mode": "semi", "N": 33, "nu": 1.0}]},
                {"jobs": [{"mode": "semi", "N": 32}]},
                {"jobs": [{"mode": "semi", "N": 32, "nu": 1.0, "q": 2}]}):
        with pytest.raises(ValidationError):
            parse_bench_config(_write(tmp_path, bad, "b.json"))
