"""Command-line driver: ``etd simulate|order-study|check|estimate --config FILE``.

Heavy modules are imported after ``--threads`` has set the BLAS thread
environment, so the cap takes effect.
"""
from __future__ import annotations

import argparse
import json
import os
import re
import sys
from importlib import resources
from pathlib import Path

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
               "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS")

DEFAULTS = {
    "simulate": {"T": 10.0, "tau": 0.05, "snapshot_every": 1.0},
    "order_study": {"schemes": ["euler", "cox_matthews", "krogstad", "hochbruck_ostermann"],
                    "tau": 0.05, "levels": 3, "T": 5.0, "seeds": [0, 1, 2],
                    "reference": "krogstad", "reference_factor": 0.5, "obs_every": 1.0},
    "check": {"samples": 3, "steps": 10, "tau": 0.1, "directions": 3, "fd_eps": 1e-6,
              "gradient_eps": 1e-4, "fd_tol": 1e-6, "adjoint_tol": 1e-10,
              "gradient_tol": 1e-5, "tableau_tol": 1e-12},
    "estimate": {"T": 10.0, "tau": 0.25, "beta": 10.0, "huber_eps": 1e-3,
                 "lbfgs_memory": 20, "max_iters": 100,
                 "bounds": {"r": [0.01, 2.3], "g": [-1.2, 1.2]},
                 "initial": {"r": 1.0, "g": 0.0}},
}
OBS_DEFAULTS = {"every": 0.5, "until": 10.0, "noise_frac": 0.05, "noise_seed": 0}
TABLEAU_POINTS = (0.0, -0.5, -3.0, -20.0)


class ConfigError(Exception):
    pass


def load_schema():
    return json.loads(resources.files("etdkit").joinpath("config_schema.json").read_text())


def _line_of(text, path, extra_key=None):
    """Best-effort line number of the JSON element addressed by ``path``."""
    pos = 0
    keys = [k for k in path if isinstance(k, str)]
    if extra_key:
        keys.append(extra_key)
    for key in keys:
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            break
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def load_config(path):
    """Parse and validate a JSON config; raises :class:`ConfigError` with a line number."""
    import jsonschema

    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    validator = jsonschema.Draft7Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        extra = None
        m = re.search(r"\('([^']+)' was unexpected\)", err.message)
        if m:
            extra = m.group(1)
        line = _line_of(text, list(err.absolute_path), extra)
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{path}:{line}: {where}: {err.message}")
    return cfg


def _section(cfg, name):
    out = json.loads(json.dumps(DEFAULTS[name]))
    out.update(cfg.get(name, {}))
    return out


def _phi_config(cfg):
    from .phi import ContourSpec, PhiConfig

    p = cfg.get("phi", {})
    contour = ContourSpec(kind=p.get("contour", "parabola"), num_points=p.get("num_points", 32))
    return PhiConfig(series_threshold=p.get("series_threshold", 1.0), contour=contour)


def _rosenbrock(cfg):
    return cfg.get("mode", "fixed_L") == "rosenbrock"


def build_model(cfg, seed=None):
    """Return (problem, y0, m, sh_config or None)."""
    from .operators import CapabilityError
    from .problem import ToyProblem
    from .swift_hohenberg import SHConfig, build_problem

    model = cfg["model"]
    seed = cfg.get("seed", 0) if seed is None else seed
    if model["kind"] == "toy":
        import numpy as np

        p = ToyProblem(model.get("size", 8), model.get("problem_seed", 0),
                       state_dependent=_rosenbrock(cfg), stiffness=model.get("stiffness", 20.0))
        return p, p.initial_state(np.random.default_rng(seed)), p.default_model(), None
    keys = ("nx", "ny", "lx", "ly", "amplitude", "r_outer", "r_inner", "g_outer", "g_inner")
    try:
        sh = SHConfig(seed=seed, **{k: model[k] for k in keys if k in model})
        p = build_problem(sh, _rosenbrock(cfg))
    except (ValueError, CapabilityError) as exc:
        raise ConfigError(f"model: {exc}") from exc
    return p, p.initial_state(), p.stripe_model(), sh


def _grid(T, tau):
    from .schemes import TimeGrid

    try:
        return TimeGrid.uniform(T, tau)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _steps_every(grid, every, until=None):
    import math

    end = grid.times[-1] if until is None else min(until, grid.times[-1])
    count = int(math.floor(end / every + 1e-9))
    try:
        return [grid.index_of(every * (i + 1)) for i in range(count)]
    except ValueError as exc:
        raise ConfigError(f"observation spacing {every} is not a multiple of the step") from exc


def _mode(cfg):
    return "rosenbrock" if _rosenbrock(cfg) else "fixed"


def _field_shape(problem, sh):
    return sh.shape if sh is not None else (problem.state_dim,)


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg, out):
    import numpy as np

    from . import io
    from .schemes import integrate, make_tableau

    sec = _section(cfg, "simulate")
    problem, y0, m, sh = build_model(cfg)
    tab = make_tableau(cfg.get("scheme", "krogstad"))
    grid = _grid(sec["T"], sec["tau"])
    snaps = _steps_every(grid, sec["snapshot_every"])
    trace = integrate(problem, tab, y0, m, grid, _phi_config(cfg), mode=_mode(cfg),
                      keep_factorizations=False)
    shape = _field_shape(problem, sh)
    imag = 0.0
    peak = 0.0
    written = []
    for k in [0] + snaps:
        y = trace.states[k]
        field = problem.observe(y).reshape(shape)
        if sh is not None:
            imag = max(imag, float(np.max(np.abs(np.imag(problem.field(y))))))
        peak = max(peak, float(np.max(np.abs(field))))
        t = float(grid.times[k])
        name = f"snapshots/y_{k:06d}.bin"
        io.write_field(out / name, field, time=t, step=k, units="field value")
        written.append({"step": k, "time": t, "file": name})
    final = problem.observe(trace.final).reshape(shape)
    lo, hi = io.write_pgm(out / "final.pgm", final)
    io.write_field(out / "final.bin", final, time=float(grid.times[-1]), image_min=lo, image_max=hi)
    io.write_json(out / "trace.json", {
        "scheme": tab.name, "mode": _mode(cfg), "T": sec["T"], "tau": sec["tau"],
        "steps": grid.steps, "field_shape": list(shape), "snapshots": written,
        "max_abs_field": peak, "max_imag_residue": imag})
    return EXIT_OK


def cmd_order_study(cfg, out):
    from . import io
    from .order_study import OUTLIER_SCHEMES, order_study

    sec = _section(cfg, "order_study")
    use_filter = sec.get("outlier_filter", not _rosenbrock(cfg))
    build_model(cfg)  # validate the model block before the long run

    def setup(seed):
        problem, y0, m, _ = build_model(cfg, seed)
        return problem, y0, m

    for j in range(sec["levels"]):
        _grid(sec["T"], sec["tau"] * 2 ** j)
    _grid(sec["T"], sec["tau"] * sec["reference_factor"])
    res = order_study(setup, sec["schemes"], sec["tau"], sec["levels"], sec["T"], sec["seeds"],
                      reference_scheme=sec["reference"], reference_factor=sec["reference_factor"],
                      obs_every=sec["obs_every"], phi_config=_phi_config(cfg),
                      outlier_schemes=OUTLIER_SCHEMES if use_filter else ())
    io.write_csv(out / "order_study.csv", ["scheme", "quantity", "pair", "p"], res.rows)
    err_rows = [(s, seed, mult, q, e[q]) for (s, seed, mult), e in sorted(res.errors.items())
                for q in ("y", "lambda", "grad")]
    io.write_csv(out / "errors.csv", ["scheme", "seed", "tau_multiple", "quantity", "error"], err_rows)
    io.write_json(out / "order_study.json", {
        "mode": _mode(cfg), "tau": sec["tau"], "levels": sec["levels"], "T": sec["T"],
        "seeds": sec["seeds"], "reference": sec["reference"], "outlier_filter": use_filter,
        "invalid_levels": [list(k) for k in res.invalid],
        "rows": [list(r) for r in res.rows]})
    return EXIT_OK


def gradient_fd_check(trace_builder, problem, m, obs_steps, rng, directions, eps):
    """Relative differences between adjoint and central-FD directional derivatives
    of 0.5 * sum of squared observations."""
    import numpy as np

    from .adjoint import sensitivity_transpose

    def value(mm):
        tr = trace_builder(mm)
        return 0.5 * sum(float(np.sum(problem.observe(tr.states[k]) ** 2)) for k in obs_steps)

    trace = trace_builder(m)
    weights = [problem.observe(trace.states[k]) for k in obs_steps]
    grad, _ = sensitivity_transpose(trace, weights, obs_steps)
    out = []
    for _ in range(directions):
        w = rng.standard_normal(m.size)
        w /= np.linalg.norm(w)
        fd = (value(m + eps * w) - value(m - eps * w)) / (2 * eps)
        ad = float(np.dot(grad, w))
        out.append(abs(fd - ad) / max(abs(fd), abs(ad), 1e-300))
    return out


def dot_identity_check(trace, problem, obs_steps, rng, directions):
    import numpy as np

    from .adjoint import sensitivity_transpose
    from .tangent import sensitivity_apply

    out = []
    for _ in range(directions):
        w = rng.standard_normal(problem.model_dim)
        u = [rng.standard_normal(np.shape(problem.observe(trace.states[k]))) for k in obs_steps]
        jw = sensitivity_apply(trace, w, obs_steps)
        jtu, _ = sensitivity_transpose(trace, u, obs_steps)
        lhs = sum(float(np.sum(a * b)) for a, b in zip(jw, u))
        rhs = float(np.dot(w, jtu))
        out.append(abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    return out


def cmd_check(cfg, out):
    import numpy as np

    from . import io
    from .problem import check_problem
    from .schemes import integrate, make_tableau

    sec = _section(cfg, "check")
    problem, y0, m, _ = build_model(cfg)
    tab = make_tableau(cfg.get("scheme", "krogstad"))
    if "perturb" in sec:
        st = sec["perturb"]["stage"]
        if st >= tab.stages:
            raise ConfigError(f"check/perturb/stage: {tab.name} has only {tab.stages} stages")
        tab = tab.perturbed(st, sec["perturb"]["delta"])
    rng = np.random.default_rng(cfg.get("seed", 0))
    report = {"scheme": tab.name, "mode": _mode(cfg)}

    rep = check_problem(problem, samples=sec["samples"], seed=cfg.get("seed", 0), eps=sec["fd_eps"],
                        adjoint_tol=sec["adjoint_tol"], fd_tol=sec["fd_tol"])
    report["problem"] = rep.as_dict()

    tab_err = 0.0
    for z in TABLEAU_POINTS:
        tab_err = max(tab_err, *tab.consistency_errors(z))
    report["tableau"] = {"points": list(TABLEAU_POINTS), "max_error": tab_err,
                         "tol": sec["tableau_tol"], "passed": tab_err <= sec["tableau_tol"]}

    grid = _grid(sec["steps"] * sec["tau"], sec["tau"])
    phi_cfg = _phi_config(cfg)

    def build(mm):
        return integrate(problem, tab, y0, mm, grid, phi_cfg)

    trace = build(m)
    steps = list(range(1, grid.steps + 1))
    dots = dot_identity_check(trace, problem, steps, rng, sec["directions"])
    report["dot_identity"] = {"errors": dots, "tol": sec["adjoint_tol"],
                              "passed": max(dots) <= sec["adjoint_tol"]}
    grads = gradient_fd_check(build, problem, m, steps, rng, sec["directions"], sec["gradient_eps"])
    report["gradient"] = {"errors": grads, "eps": sec["gradient_eps"], "tol": sec["gradient_tol"],
                          "passed": max(grads) <= sec["gradient_tol"]}
    passed = all(report[k]["passed"] for k in ("problem", "tableau", "dot_identity", "gradient"))
    report["passed"] = passed
    io.write_json(out / "check.json", report)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _load_observations(spec, grid, shape):
    import numpy as np

    from . import io
    from .swift_hohenberg import ObservationSet

    data, meta = io.read_field(spec["file"])
    times = meta.get("times")
    if times is None or len(times) != data.shape[0]:
        raise ConfigError("observation file sidecar needs a 'times' list matching the first axis")
    if tuple(data.shape[1:]) != tuple(shape):
        raise ConfigError(f"observation fields have shape {data.shape[1:]}, model has {shape}")
    try:
        steps = [grid.index_of(t) for t in times]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ObservationSet(np.asarray(times, float), [d for d in data],
                          float(meta.get("noise_frac", 0.0)), steps)


def cmd_estimate(cfg, out):
    import numpy as np

    from . import io
    from .inverse import LOG_FIELDS, Objective, ObjectiveConfig, lbfgs_bounded
    from .schemes import integrate, make_tableau
    from .swift_hohenberg import make_observations, pack_model, unpack_model

    if cfg["model"]["kind"] != "swift_hohenberg":
        raise ConfigError("model/kind: estimation is available for the swift_hohenberg model only")
    sec = _section(cfg, "estimate")
    obs_spec = dict(OBS_DEFAULTS)
    obs_spec.update(sec.get("observations", {}))
    bounds = dict(DEFAULTS["estimate"]["bounds"])
    bounds.update(sec.get("bounds", {}))
    init = dict(DEFAULTS["estimate"]["initial"])
    init.update(sec.get("initial", {}))
    problem, y0, truth, sh = build_model(cfg)
    tab = make_tableau(cfg.get("scheme", "krogstad"))
    grid = _grid(sec["T"], sec["tau"])
    phi_cfg = _phi_config(cfg)
    if "file" in obs_spec:
        obs = _load_observations(obs_spec, grid, sh.shape)
        have_truth = False
    else:
        _steps_every(grid, obs_spec["every"], obs_spec["until"])
        trace = integrate(problem, tab, y0, truth, grid, phi_cfg)
        obs = make_observations(trace, obs_spec["every"], obs_spec["until"],
                                obs_spec["noise_frac"], obs_spec["noise_seed"])
        have_truth = True
    if len(obs) == 0:
        raise ConfigError("estimate/observations: no observation time inside the run")
    try:
        ocfg = ObjectiveConfig(beta=sec["beta"], huber_eps=sec["huber_eps"],
                               bounds=[tuple(bounds["r"]), tuple(bounds["g"])],
                               lbfgs_memory=sec["lbfgs_memory"], max_iters=sec["max_iters"])
    except ValueError as exc:
        raise ConfigError(f"estimate: {exc}") from exc
    objective = Objective(problem, tab, y0, grid, obs, ocfg, sh.shape, phi_cfg)
    lo, hi = objective.bounds()
    n = sh.size
    m0 = pack_model(np.full(n, float(init["r"])), np.full(n, float(init["g"])))
    result = lbfgs_bounded(objective, m0, lo, hi, max_iters=ocfg.max_iters, memory=ocfg.lbfgs_memory)
    io.write_csv(out / "iterations.csv", list(LOG_FIELDS),
                 [[row[k] for k in LOG_FIELDS] for row in result.log])
    r_est, g_est = unpack_model(result.x, sh)
    for name, fld in (("r", r_est), ("g", g_est)):
        io.write_field_with_image(out / f"{name}_recovered", fld, parameter=name)
    summary = {"status": result.status, "iterations": result.iterations,
               "evaluations": result.evaluations,
               "initial_objective": result.log[0]["objective"],
               "initial_misfit": result.log[0]["misfit"],
               "final_objective": result.value, "final_misfit": result.log[-1]["misfit"],
               "observation_count": len(obs)}
    if have_truth:
        r_true, g_true = unpack_model(truth, sh)
        r0, g0 = unpack_model(m0, sh)

        def rel(a, b):
            return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))

        summary.update({"r_relative_error": rel(r_est, r_true), "g_relative_error": rel(g_est, g_true),
                        "r_initial_relative_error": rel(r0, r_true),
                        "g_initial_relative_error": rel(g0, g_true)})
    io.write_json(out / "summary.json", summary)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "order-study": cmd_order_study,
            "check": cmd_check, "estimate": cmd_estimate}


def build_parser():
    parser = argparse.ArgumentParser(prog="etd", description="Exponential integrator experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--threads", type=int, default=None, help="cap on worker threads")
        p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.threads is not None:
        if args.threads < 1:
            print("config error: --threads must be positive", file=sys.stderr)
            return EXIT_CONFIG
        for var in THREAD_VARS:
            os.environ[var] = str(args.threads)
    try:
        cfg = load_config(args.config)
        out = Path(args.out or cfg.get("output") or f"etd-{args.command}")
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, RuntimeError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
