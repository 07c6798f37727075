"""Config-driven experiment runner.

One experiment per JSON config file.  The runner validates everything up
front (field presence, contraction and nondegeneracy probes, kernel
positivity), then dispatches to the task implementations and writes CSV
results with a JSON sidecar and a manifest.  Numeric outputs depend only on
(config, seed): worker threads change scheduling, never results, and CSV
floats are rendered with 17 significant digits so files are byte-identical
across runs.

Exit codes: 0 success, 2 validation failure, 3 numerics failure.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__, brackets, coeffs, heatkernel, levy, malliavin
from . import operators, reversal, testfunctions
from .errors import ConfigError, LevyLabError, NumericsError
from .flow import SimConfig, batch_simulate, dump_jsonl, max_inverse_defect

__all__ = ["run", "load_config", "config_hash", "canonical_json", "TASKS"]

TASKS = (
    "simulate", "check-uh", "malliavin-scan", "reversal-check",
    "apply-operator", "semigroup", "density", "duhamel",
    "generator-check", "gradient-scan",
)


# ---------------------------------------------------------------------------
# config parsing and validation
# ---------------------------------------------------------------------------

def canonical_json(obj) -> str:
    """Stable serialization: sorted keys, no whitespace, repr floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fp:
            return json.load(fp)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")


def _need(cfg: dict, path: str):
    node = cfg
    walked = []
    for key in path.split("."):
        walked.append(key)
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"missing required config field: "
                              f"{'.'.join(walked)}")
        node = node[key]
    return node


def _build_levy(section) -> levy.LevyModel | None:
    if section is None:
        return None
    kwargs = {
        "dim": int(_need({"levy": section}, "levy.dim")),
        "alpha": float(_need({"levy": section}, "levy.alpha")),
        "delta": float(_need({"levy": section}, "levy.delta")),
        "trunc_low": (float(section["trunc_low"])
                      if section.get("trunc_low") is not None else None),
    }
    cut = section.get("cutoff")
    if cut is not None:
        kind = cut.get("kind", "smooth")
        if kind == "smooth":
            kwargs["cutoff"] = levy.SmoothTruncation(kwargs["delta"])
        elif kind == "hard":
            kwargs["cutoff"] = levy.HardTruncation(
                kwargs["delta"], float(_need({"c": cut}, "c.radius")))
        else:
            raise ConfigError(f"unknown cutoff kind: levy.cutoff.kind={kind!r}")
    return levy.LevyModel(**kwargs)


def _build_system(section) -> coeffs.CoefficientSet:
    name = _need({"system": section}, "system.name")
    params = section.get("params", {})
    return coeffs.make_system(name, **params)


def _build_sim(section) -> SimConfig:
    return SimConfig(
        t_end=float(section.get("t_end", 1.0)),
        dt_max=float(section.get("dt_max", 1e-3)),
        n_paths=int(section.get("n_paths", 1)),
        seed=int(section.get("seed", 0)),
        record_jacobians=bool(section.get("record_jacobians", True)),
        chunk_size=int(section.get("chunk_size", 256)),
        n_workers=int(section.get("n_workers", 1)),
    )


_FUNCTIONS = {
    "constant": lambda p: testfunctions.constant(p.get("value", 1.0)),
    "linear": lambda p: testfunctions.linear(p["coeffs"]),
    "square": lambda p: testfunctions.square_coordinate(p.get("index", 0)),
    "cos": lambda p: testfunctions.cos_coordinate(p.get("index", 0)),
    "tanh": lambda p: testfunctions.tanh_coordinate(
        p.get("index", 0), p.get("scale", 1.0)),
    "bump": lambda p: testfunctions.gaussian_bump(p["center"], p["width"]),
    "step": lambda p: testfunctions.smoothed_indicator(
        p.get("index", 0), p.get("edge", 0.0), p.get("scale", 0.01)),
}


def _build_function(section) -> testfunctions.SmoothFunction:
    name = _need({"function": section}, "function.name")
    if name not in _FUNCTIONS:
        raise ConfigError(f"unknown test function: function.name={name!r}")
    return _FUNCTIONS[name](section)


def _validate_system(c: coeffs.CoefficientSet,
                     model: levy.LevyModel | None) -> None:
    if model is None:
        return
    if c.dim != model.dim:
        raise ConfigError("system.dim and levy.dim disagree")
    contraction = coeffs.probe_contraction(c, model.delta)
    if contraction > 0.5 + 1e-9:
        raise ConfigError(
            f"|grad_x sigma| = {contraction:.3f} exceeds 1/2 on the probe "
            "grid; the jump map is not a certified contraction")
    det = coeffs.probe_jump_determinant(c, model.delta)
    if det <= 0:
        raise ConfigError("det(I + grad_x sigma) is not positive on the "
                          "probe grid")
    probe_z = np.full(model.dim, 0.1 * model.delta / np.sqrt(model.dim))
    if levy.density(model, probe_z) <= 0:
        raise ConfigError("jump kernel is not positive inside the plateau")
    if c.compensator_free:
        resid = coeffs.probe_compensator_free(c, model)
        if resid > 1e-8:
            raise ConfigError(
                f"compensator_free is set but int sigma d nu = {resid:.2e}")


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write(",".join(header) + "\n")
        for row in rows:
            fp.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(obj, fp, sort_keys=True, indent=1)
        fp.write("\n")


def _sidecar(cfg: dict, sim: SimConfig, extra: dict) -> dict:
    out = {"config_hash": config_hash(cfg), "seed": sim.seed,
           "n_paths": sim.n_paths}
    out.update(extra)
    return out


# ---------------------------------------------------------------------------
# task implementations
# ---------------------------------------------------------------------------

def _task_simulate(cfg, c, model, sim, params, outdir):
    x0 = np.asarray(_need(params, "x0"), dtype=float)
    rows = []
    records = []
    for rec in batch_simulate(c, model, sim, x0):
        defect = (max_inverse_defect(rec) if rec.jacobian is not None
                  else float("nan"))
        rows.append([rec.rng_tag[1], *rec.final_state, len(rec.jumps),
                     defect])
        if params.get("dump_paths", False):
            records.append(rec)
    header = (["path_index"] + [f"x{i}" for i in range(c.dim)]
              + ["n_jumps", "max_jk_defect"])
    _write_csv(outdir / "paths_summary.csv", header, rows)
    if records:
        with open(outdir / "paths.jsonl", "w", encoding="utf-8") as fp:
            dump_jsonl(records, fp)
    return {"n_paths": sim.n_paths}


def _task_check_uh(cfg, c, model, sim, params, outdir):
    j0 = int(_need(params, "j0"))
    convention = params.get("convention", "NABLA_B_LEFT")
    grid_spec = _need(params, "grid")
    grid = brackets.GridSpec(lo=tuple(_need(grid_spec, "lo")),
                             hi=tuple(_need(grid_spec, "hi")),
                             shape=tuple(_need(grid_spec, "shape")))
    chain = brackets.bracket_chain(c, j0, convention)
    report = brackets.check_uh(chain, grid,
                               int(params.get("sphere_samples", 512)))
    _write_json(outdir / "check_uh.json", report.as_dict())
    return report.as_dict()


def _task_malliavin_scan(cfg, c, model, sim, params, outdir):
    if model is None:
        raise ConfigError("malliavin-scan needs a levy section")
    u = np.asarray(_need(params, "u"), dtype=float)
    lambdas = np.asarray(_need(params, "lambdas"), dtype=float)
    t = float(_need(params, "t"))
    which = params.get("which", "jump")
    x0 = np.asarray(params.get("x0", np.zeros(c.dim)), dtype=float)
    scan = malliavin.laplace_scan(c, model, sim, u, lambdas, t,
                                  which=which, x0=x0)
    _write_csv(outdir / "laplace_scan.csv",
               ["lambda", "estimate", "stderr"],
               zip(scan.abscissae, scan.ordinates, scan.stderr))
    summary = {
        "gamma_hat": scan.fitted_exponent,
        "gamma_stderr": scan.exponent_stderr,
        "fit_range": list(scan.fit_window),
        "monotone": scan.extras["monotone"],
        "monotone_beyond_4se": scan.extras["monotone_beyond_4se"],
        "which": which,
    }
    _write_json(outdir / "laplace_scan_summary.json",
                _sidecar(cfg, sim, summary))
    return summary


def _task_reversal_check(cfg, c, model, sim, params, outdir):
    x0 = np.asarray(_need(params, "x0"), dtype=float)
    errs = []
    for rec in batch_simulate(c, model, sim, x0):
        errs.append(reversal.reverse_and_check(c, model, rec).roundtrip_error)
    errs = np.asarray(errs)
    out = {"n_paths": int(sim.n_paths),
           "max_roundtrip_error": float(errs.max()),
           "mean_roundtrip_error": float(errs.mean())}
    _write_json(outdir / "reversal_check.json", out)
    return out


def _task_apply_operator(cfg, c, model, sim, params, outdir):
    if model is None:
        raise ConfigError("apply-operator needs a levy section")
    kind = _need(params, "kind")
    f = _build_function(_need(params, "function"))
    pts = np.atleast_2d(np.asarray(_need(params, "points"), dtype=float))
    spec = operators.OperatorSpec(
        kind, model, c,
        pv_inner_cut=params.get("pv_inner_cut"),
        quad_tol=float(params.get("quad_tol", 1e-10)),
        n_sphere=params.get("n_sphere"),
    )
    rows = [[*x, operators.apply(spec, f, x)] for x in pts]
    _write_csv(outdir / "operator.csv",
               [f"x{i}" for i in range(c.dim)] + ["value"], rows)
    return {"kind": kind, "n_points": len(pts)}


def _task_semigroup(cfg, c, model, sim, params, outdir):
    f = _build_function(_need(params, "function"))
    t = float(_need(params, "t"))
    x_grid = np.atleast_2d(np.asarray(_need(params, "x_grid"), dtype=float))
    est = heatkernel.semigroup(c, model, sim, f, t, x_grid)
    _write_csv(outdir / "semigroup.csv",
               [f"x{i}" for i in range(c.dim)] + ["value", "stderr"],
               [[*x, v, s] for x, v, s in
                zip(est.x_grid, est.values, est.stderr)])
    summary = {"t": t, "function": f.name}
    _write_json(outdir / "semigroup_summary.json",
                _sidecar(cfg, sim, summary))
    return summary


def _task_density(cfg, c, model, sim, params, outdir):
    t = float(_need(params, "t"))
    x = np.asarray(_need(params, "x"), dtype=float)
    est = heatkernel.density(c, model, sim, t, x,
                             bandwidth=params.get("bandwidth"),
                             n_grid=int(params.get("n_grid", 64)))
    mesh = np.meshgrid(*est.axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    _write_csv(outdir / "density.csv",
               [f"y{i}" for i in range(c.dim)] + ["rho"],
               [[*y, r] for y, r in zip(pts, est.rho.ravel())])
    summary = {"t": t, "mass": est.mass,
               "bandwidth": est.bandwidth.tolist()}
    _write_json(outdir / "density_summary.json", _sidecar(cfg, sim, summary))
    return summary


def _task_duhamel(cfg, c, model, sim, params, outdir):
    if model is None:
        raise ConfigError("duhamel needs a levy section")
    f = _build_function(_need(params, "function"))
    t = float(_need(params, "t"))
    x_grid = np.atleast_2d(np.asarray(_need(params, "x_grid"), dtype=float))
    include_big = bool(params.get("include_big_jumps", True))
    spec = (operators.OperatorSpec("BIG_JUMP_SCRIPT_L", model, c)
            if include_big else None)
    axes = None
    if include_big:
        axes = [np.asarray(a, dtype=float)
                for a in _need(params, "grid_axes")]
    est = heatkernel.duhamel(
        c, model, sim, f, t, x_grid, spec,
        n_time_nodes=int(params.get("n_time_nodes", 5)),
        axes=axes,
        n_inner_paths=int(params.get("n_inner_paths", 300)),
        r_max=float(params.get("r_max", 40.0)),
        n_replicates=int(params.get("n_replicates", 2)),
    )
    _write_csv(outdir / "duhamel.csv",
               [f"x{i}" for i in range(c.dim)]
               + ["value", "stderr", "base_value"],
               [[*x, v, s, b] for x, v, s, b in
                zip(est.x_grid, est.values, est.stderr, est.base_values)])
    summary = {"t": t, "sweeps": est.sweeps, "tail_mass": est.tail_mass}
    _write_json(outdir / "duhamel_summary.json", _sidecar(cfg, sim, summary))
    return summary


def _task_generator_check(cfg, c, model, sim, params, outdir):
    if model is None:
        raise ConfigError("generator-check needs a levy section")
    f = _build_function(_need(params, "function"))
    t = float(_need(params, "t"))
    h = float(params.get("h", 0.01))
    x_grid = np.atleast_2d(np.asarray(_need(params, "x_grid"), dtype=float))
    axes = [np.asarray(a, dtype=float) for a in _need(params, "grid_axes")]
    full = bool(params.get("full_generator", False))
    if full:
        if not (c.drift_is_zero and c.dsigma_dx_is_zero
                and c.name.startswith("additive")):
            raise ConfigError("task_params.full_generator requires the "
                              "additive system (translation invariance)")
        rep = heatkernel.additive_full_generator_residual(
            model, sim, f, t, x_grid, h=h, smoothing_axes=axes,
            fit_degree=int(params.get("fit_degree", 4)),
            fit_window=params.get("fit_window"), dim=c.dim)
    else:
        spec = operators.OperatorSpec("SMALL_JUMP_L0", model, c)
        rep = heatkernel.generator_residual(
            c, model, sim, f, t, x_grid, spec, h=h, smoothing_axes=axes,
            fit_degree=int(params.get("fit_degree", 4)),
            fit_window=params.get("fit_window"))
    _write_csv(outdir / "generator_residual.csv",
               [f"x{i}" for i in range(c.dim)]
               + ["time_derivative", "operator_value", "residual",
                  "noise_se", "bias_estimate"],
               [[*x, dt, op, r, se, b] for x, dt, op, r, se, b in
                zip(rep.x_grid, rep.time_derivative, rep.operator_value,
                    rep.residual, rep.noise_se, rep.bias_estimate)])
    summary = {"max_residual": rep.max_residual,
               "operator_scale": rep.operator_scale,
               "relative_residual": rep.max_residual / rep.operator_scale
               if rep.operator_scale > 0 else None}
    _write_json(outdir / "generator_summary.json",
                _sidecar(cfg, sim, summary))
    return summary


def _task_gradient_scan(cfg, c, model, sim, params, outdir):
    f = _build_function(_need(params, "function"))
    t_list = np.asarray(_need(params, "t_list"), dtype=float)
    order = int(params.get("order", 1))
    axes = [np.asarray(a, dtype=float) for a in _need(params, "grid_axes")]
    scan = heatkernel.gradient_decay_scan(
        c, model, sim, f, t_list, order, axes,
        fit_window=params.get("fit_window"))
    _write_csv(outdir / "gradient_scan.csv", ["t", "sup_norm"],
               zip(scan.abscissae, scan.ordinates))
    summary = {"exponent": scan.fitted_exponent,
               "exponent_stderr": scan.exponent_stderr,
               "fit_window": list(scan.fit_window), "order": order}
    _write_json(outdir / "gradient_scan_summary.json",
                _sidecar(cfg, sim, summary))
    return summary


_TASK_IMPL = {
    "simulate": _task_simulate,
    "check-uh": _task_check_uh,
    "malliavin-scan": _task_malliavin_scan,
    "reversal-check": _task_reversal_check,
    "apply-operator": _task_apply_operator,
    "semigroup": _task_semigroup,
    "density": _task_density,
    "duhamel": _task_duhamel,
    "generator-check": _task_generator_check,
    "gradient-scan": _task_gradient_scan,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def run(config_path, threads: int | None = None, out: str | None = None,
        stderr=None) -> int:
    """Execute one experiment config; returns the process exit code."""
    stderr = stderr or sys.stderr
    started = time.time()
    try:
        cfg = load_config(config_path)
        task = _need(cfg, "task")
        if task not in TASKS:
            raise ConfigError(f"unknown task {task!r}; valid: {TASKS}")
        c = _build_system(_need(cfg, "system"))
        model = _build_levy(cfg.get("levy"))
        sim = _build_sim(cfg.get("sim", {}))
        if threads is not None:
            sim = replace(sim, n_workers=int(threads))
        _validate_system(c, model)
        out_dir = (out or os.environ.get("LEVYLAB_OUT")
                   or cfg.get("output", "results"))
        outdir = Path(out_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        params = cfg.get("task_params", {})
        summary = _TASK_IMPL[task](cfg, c, model, sim, params, outdir)
        manifest = {
            "config_hash": config_hash(cfg),
            "task": task,
            "seed": sim.seed,
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "levylab": __version__,
            },
            "wall_time": time.time() - started,
        }
        _write_json(outdir / "manifest.json", manifest)
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=stderr)
        return 2
    except (NumericsError, LevyLabError) as exc:
        print(f"numerics error: {exc}", file=stderr)
        return 3
