"""Run-configuration parsing and validation for the command line.

A config is a JSON object. Anything not set falls back first to the problem
entry's documented defaults, then to the global table below, so the minimal
config {"problem": "example1_quadratic"} runs at nu=0.5, N_h=32, N_T=64 with
the newton solver.
"""

import json
from dataclasses import dataclass, field

from mfg import problems


class ParseError(Exception):
    """The config file is missing or is not well-formed JSON."""


class ValidationError(Exception):
    """The config parsed but contains unknown keys or inconsistent values."""


GLOBAL_DEFAULTS = {"N_h": 32, "N_T": 64, "nu": 0.5, "T": 1.0,
                   "solver": "newton", "seed": 0}

# tunables forwarded to each solver entry point
SOLVER_PARAMS = {
    "newton": ("tol", "max_iter", "inner_tol", "inner_maxiter"),
    "picard": ("delta", "tol", "max_iter"),
    "recursive": ("K", "J", "tol", "delta"),
    "admm": ("r", "tol", "max_iter", "residual_target"),
    "cp": ("r", "s", "tau", "tol", "max_iter", "residual_target"),
}

MULTIGRID_KEYS = ("mode", "levels", "eta1", "eta2")

TOP_KEYS = ("problem", "N_h", "N_T", "nu", "T", "solver", "solver_params",
            "params", "multigrid", "out", "seed")


@dataclass
class RunConfig:
    problem: str
    N_h: int
    N_T: int
    nu: float
    T: float
    solver: str
    solver_params: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    multigrid: dict = field(default_factory=dict)
    out: str = None
    seed: int = 0

    def effective(self):
        """The fully-resolved config as a plain dict (what gets echoed)."""
        return {"problem": self.problem, "N_h": self.N_h, "N_T": self.N_T,
                "nu": self.nu, "T": self.T, "solver": self.solver,
                "solver_params": dict(self.solver_params),
                "params": dict(self.params),
                "multigrid": dict(self.multigrid),
                "out": self.out, "seed": self.seed}


def _load_json(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError("cannot read config %s: %s" % (path, exc)) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("%s: line %d column %d: %s"
                         % (path, exc.lineno, exc.colno, exc.msg)) from exc


def _require(cond, msg):
    if not cond:
        raise ValidationError(msg)


def validate_config(raw):
    """Turn a decoded JSON object into a RunConfig, or raise."""
    _require(isinstance(raw, dict), "config root must be a JSON object")
    unknown = sorted(set(raw) - set(TOP_KEYS))
    _require(not unknown, "unknown config keys: %s" % ", ".join(unknown))
    _require("problem" in raw, "config must name a problem")

    name = raw["problem"]
    try:
        entry = problems.get_entry(name)
    except KeyError as exc:
        raise ValidationError(str(exc)) from exc

    merged = dict(GLOBAL_DEFAULTS)
    merged.update(entry.defaults)
    merged.update({k: v for k, v in raw.items() if k != "problem"})

    for key in ("N_h", "N_T", "seed"):
        v = merged.get(key, GLOBAL_DEFAULTS.get(key))
        _require(isinstance(v, int) and not isinstance(v, bool)
                 and (v >= 0 if key == "seed" else v > 0),
                 "%s must be a positive integer, got %r" % (key, v))
        merged[key] = v
    for key in ("nu", "T"):
        v = merged[key]
        _require(isinstance(v, (int, float)) and not isinstance(v, bool)
                 and v > 0, "%s must be a positive number, got %r" % (key, v))
        merged[key] = float(v)

    solver = merged["solver"]
    _require(solver in entry.solvers,
             "solver %r not available for %s; allowed: %s"
             % (solver, name, ", ".join(entry.solvers)))

    sp = merged.get("solver_params", {})
    _require(isinstance(sp, dict), "solver_params must be an object")
    bad = sorted(set(sp) - set(SOLVER_PARAMS[solver]))
    _require(not bad, "unknown solver_params for %s: %s"
             % (solver, ", ".join(bad)))
    if solver == "cp" and "r" in sp and "s" in sp:
        _require(sp["r"] * sp["s"] < 1.0,
                 "cp step sizes need r*s < 1, got r*s = %g"
                 % (sp["r"] * sp["s"]))

    pp = merged.get("params", {})
    _require(isinstance(pp, dict), "params must be an object")
    bad = sorted(set(pp) - set(entry.params))
    _require(not bad, "unknown parameters for %s: %s (known: %s)"
             % (name, ", ".join(bad), ", ".join(entry.params) or "none"))

    mg = merged.get("multigrid", {})
    _require(isinstance(mg, dict), "multigrid must be an object")
    bad = sorted(set(mg) - set(MULTIGRID_KEYS))
    _require(not bad, "unknown multigrid keys: %s" % ", ".join(bad))
    if "mode" in mg:
        _require(mg["mode"] in ("semi", "full"),
                 "multigrid mode must be semi or full, got %r" % (mg["mode"],))

    out = merged.get("out")
    _require(out is None or isinstance(out, str), "out must be a string path")

    return RunConfig(problem=name, N_h=merged["N_h"], N_T=merged["N_T"],
                     nu=merged["nu"], T=merged["T"], solver=solver,
                     solver_params=dict(sp), params=dict(pp),
                     multigrid=dict(mg), out=out, seed=merged["seed"])


def parse_config(path):
    return validate_config(_load_json(path))


def parse_bench_config(path):
    """Benchmark job list: {"jobs": [{mode, N, N_T, nu}, ...]}.

    N_T defaults to N (a space-time cube); eta defaults to (2, 2).
    """
    raw = _load_json(path)
    _require(isinstance(raw, dict) and set(raw) <= {"jobs", "out", "seed"},
             "bench config must be an object with keys jobs[, out, seed]")
    jobs = raw.get("jobs", [])
    _require(isinstance(jobs, list), "jobs must be a list")
    parsed = []
    for k, job in enumerate(jobs):
        _require(isinstance(job, dict), "job %d must be an object" % k)
        bad = sorted(set(job) - {"mode", "N", "N_T", "nu"})
        _require(not bad, "job %d has unknown keys: %s" % (k, ", ".join(bad)))
        for key in ("mode", "N", "nu"):
            _require(key in job, "job %d is missing %r" % (k, key))
        _require(job["mode"] in ("semi", "full"),
                 "job %d mode must be semi or full" % k)
        N = job["N"]
        _require(isinstance(N, int) and N >= 4 and (N & (N - 1)) == 0,
                 "job %d grid size must be a power of two >= 4" % k)
        parsed.append({"mode": job["mode"], "N": N,
                       "N_T": int(job.get("N_T", N)),
                       "nu": float(job["nu"])})
    return parsed, raw.get("out"), int(raw.get("seed", 0))
