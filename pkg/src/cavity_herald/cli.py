"""Command-line front end.

Every subcommand takes its parameters from (lowest to highest precedence)
built-in defaults, a ``--config`` file, and command-line flags.  A config
file is either flat ``key = value`` text or a JSON result file written by
this tool, whose embedded ``config`` block is reused.

Exit codes: 0 success, 2 configuration error, 3 solver did not converge,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

from . import __version__
from .cesium import effective_couplings, write_cg_csv
from .closed import closed_solution, entangle_probability, p_max, peak_times
from .experiments import (
    CESIUM_D_LINE,
    CESIUM_MASS,
    SweepSpec,
    failure_curve,
    gnuplot_matrix,
    lamb_dicke_min_depth,
    max_temperature,
    sweep_csv,
    sweep_p,
    TrapParams,
)
from .lindblad import IntegrationError, IntegratorConfig, steady_state_p
from .model import SystemParams
from .trajectories import JumpLocationError, ProtocolConfig, run_ensemble, write_jsonl

SCHEMA_VERSION = 1
EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_NUMERICAL = 2, 3, 4
PRESETS = {"cesium-g1": 1, "cesium-g0": 0}


class ConfigError(ValueError):
    pass


class NotConverged(RuntimeError):
    pass


def _nonneg(v):
    return v >= 0, "must be >= 0"


def _pos(v):
    return v > 0, "must be > 0"


def _unit(v):
    return 0 <= v <= 1, "must lie in [0, 1]"


def _at_least_one(v):
    return v >= 1, "must be >= 1"


def _choice(*opts):
    return lambda v: (v in opts, f"must be one of {', '.join(opts)}")


def _opt(check):
    return lambda v: (True, "") if v is None else check(v)


# name: (type, default, check, help)
_COMMON = {
    "output": (str, None, None, "data file to write"),
    "format": (str, "json", _choice("json", "csv"), "output format"),
    "workers": (int, None, _opt(_at_least_one), "worker processes (default: CPU count)"),
}
_COUPLING = {
    "gl": (float, 1.0, _nonneg, "left coupling g_L"),
    "gr": (float, 1.0, _nonneg, "right coupling g_R"),
    "kappa": (float, 1.0, _pos, "cavity decay rate"),
    "g0": (float, None, _opt(_nonneg), "cesium single-photon coupling; used with --preset"),
    "preset": (str, None, _opt(_choice(*PRESETS)), "cesium level scheme"),
}
_INTEGRATOR = {
    "method": (str, "rk4", _choice("rk4", "rk45"), "integrator"),
    "step": (float, None, _opt(_pos), "RK4 step (default 0.005/max rate, at most 0.02/max rate)"),
    "rtol": (float, 1e-10, lambda v: (0 < v <= 1e-8, "must lie in (0, 1e-8]"), "RK45 relative tolerance"),
    "t_max": (float, None, _opt(_pos), "integration horizon (default 50/kappa)"),
    "criterion": (float, 1e-10, _pos, "residual intracavity excitation threshold"),
}
_PROTOCOL = {
    "n": (int, 10_000, _at_least_one, "number of trajectories"),
    "seed": (int, 0, _nonneg, "master seed"),
    "eta_d": (float, 1.0, _unit, "detector efficiency"),
    "eta_f": (float, 1.0, _unit, "feedback efficiency"),
    "dead_time": (float, 0.0, _nonneg, "feedback dead time"),
}

COMMANDS = {
    "closed": {
        "gl": (float, 1.0, _pos, "left coupling g_L"),
        "gr": (float, None, _opt(_nonneg), "right coupling g_R (default beta * g_L)"),
        "beta": (float, None, _opt(_nonneg), "coupling ratio g_R/g_L"),
        "report": (str, "pmax", _choice("pmax", "probability", "state"), "quantity to report"),
        "t": (float, None, _opt(_nonneg), "time (default: first peak pi/alpha)"),
    },
    "master": {**_COUPLING, **_INTEGRATOR},
    "sweep": {
        "gl_min": (float, 0.2, _pos, "lowest g_L/kappa"),
        "gl_max": (float, 6.0, _pos, "highest g_L/kappa"),
        "gr_min": (float, 0.2, _pos, "lowest g_R/kappa"),
        "gr_max": (float, 6.0, _pos, "highest g_R/kappa"),
        "points": (int, None, _opt(_at_least_one), "points per axis (sets both)"),
        "gl_points": (int, 30, _at_least_one, "points along g_L"),
        "gr_points": (int, 30, _at_least_one, "points along g_R"),
        "matrix": (str, None, None, "also write a gnuplot nonuniform matrix here"),
        **{k: v for k, v in _INTEGRATOR.items() if k != "t_max"},
        "t_max": (float, None, _opt(_pos), "integration horizon (default 50)"),
    },
    "trajectories": {**_COUPLING, **_PROTOCOL,
                     "max_rounds": (int, 1, _at_least_one, "rounds before giving up (1 = no feedback)"),
                     "events": (str, None, None, "write per-trajectory JSON lines here")},
    "feedback": {**_COUPLING, **_PROTOCOL,
                 "n_max": (int, 10, _at_least_one, "largest round count on the curve")},
    "cesium": {
        "g0": (float, 1.0, _nonneg, "single-photon coupling"),
        "m_f": (int, 1, None, "initial ground sublevel m_F"),
        "kappa": (float, 1.0, _pos, "cavity decay rate for the p estimate"),
        "cg_table": (str, None, None, "write the F=3 Clebsch-Gordan table (CSV) here"),
    },
    "trap": {
        "lambda_t": (float, 869e-9, _pos, "FORT wavelength (m)"),
        "lam": (float, CESIUM_D_LINE, _pos, "atomic transition wavelength (m)"),
        "mass": (float, CESIUM_MASS, _pos, "atomic mass (kg)"),
        "v0": (float, 45e6, _nonneg, "trap depth (Hz; energy h*V0)"),
    },
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: dict

    def __getattr__(self, name):
        try:
            return self.params[name]
        except KeyError:
            raise AttributeError(name) from None

    def to_dict(self) -> dict:
        return {"command": self.command, **self.params}


def _table(command: str) -> dict:
    return {**COMMANDS[command], **_COMMON}


def _convert(command: str, key: str, raw):
    table = _table(command)
    key = key.strip().replace("-", "_")
    if key not in table:
        raise ConfigError(f"unknown key {key!r} for '{command}'")
    typ = table[key][0]
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("none", "null", "")):
        return key, None
    try:
        if typ is int:
            val = int(raw) if not isinstance(raw, float) or raw.is_integer() else None
            if val is None:
                raise ValueError
        else:
            val = typ(raw.strip() if isinstance(raw, str) else raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None
    return key, val


def read_config_file(command: str, path: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from None
    stripped = text.lstrip()
    values = {}
    if stripped.startswith("{"):
        doc = json.loads(text)
        block = doc.get("config", doc)
        block = dict(block)
        cmd = block.pop("command", command)
        if cmd != command:
            raise ConfigError(f"config file is for '{cmd}', not '{command}'")
        for k, v in block.items():
            key, val = _convert(command, k, v)
            values[key] = val
        return values
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        key, val = _convert(command, k, v)
        values[key] = val
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavity-herald", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="key = value file or a previous JSON result")
        for key, (typ, default, _, help_) in _table(name).items():
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, type=str, metavar=typ.__name__.upper(),
                           help=f"{help_} (default: {default})")
    return parser


def _validate(command: str, values: dict) -> None:
    for key, (_, _, check, _) in _table(command).items():
        if check is None:
            continue
        ok, why = check(values[key])
        if not ok:
            raise ConfigError(f"{key}: {why} (got {values[key]!r})")


def parse_config(argv=None) -> RunConfig:
    parser = build_parser()
    try:
        ns, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        if exc.code:
            raise ConfigError("invalid command line") from None
        raise
    if extra:
        raise ConfigError(f"unknown option {extra[0]!r}")
    if ns.command is None:
        raise ConfigError("a subcommand is required: " + ", ".join(COMMANDS))
    command = ns.command
    values = {k: v[1] for k, v in _table(command).items()}
    given = vars(ns)
    if "config" in given:
        values.update(read_config_file(command, given.pop("config")))
    for key, raw in given.items():
        if key == "command":
            continue
        k, v = _convert(command, key, raw)
        values[k] = v
    _derive(command, values)
    _validate(command, values)
    return RunConfig(command, values)


def _derive(command: str, values: dict) -> None:
    if command == "closed" and values.get("gr") is None:
        values["gr"] = values["gl"] * (values["beta"] if values.get("beta") is not None else 1.0)
    if command == "sweep" and values.get("points") is not None:
        values["gl_points"] = values["gr_points"] = values["points"]
    if values.get("preset") is not None:
        if values.get("g0") is None:
            raise ConfigError("g0: required when a preset is selected")
        c = effective_couplings(values["g0"], PRESETS[values["preset"]])
        values["gl"], values["gr"] = c.g_L, c.g_R


def _params(cfg: RunConfig) -> SystemParams:
    return SystemParams(cfg.gl, cfg.gr, cfg.kappa)


def _integrator(cfg: RunConfig) -> IntegratorConfig:
    return IntegratorConfig(method=cfg.method, step=cfg.step, rtol=cfg.rtol,
                            t_max=cfg.t_max, criterion=cfg.criterion)


def _protocol(cfg: RunConfig, max_rounds: int) -> ProtocolConfig:
    return ProtocolConfig(detector_efficiency=cfg.eta_d, feedback_efficiency=cfg.eta_f,
                          max_rounds=max_rounds, rng_seed=cfg.seed, dead_time=cfg.dead_time)


def _run_closed(cfg):
    params = SystemParams(cfg.gl, cfg.gr, 0.0)
    sol = closed_solution(params)
    t = cfg.t if cfg.t is not None else float(peak_times(params, 1)[0])
    res = {"alpha": sol.alpha, "beta": params.beta, "p_max": p_max(params), "t": t,
           "probability": float(entangle_probability(params, t))}
    if cfg.report == "state":
        amps = sol.amplitudes(t)
        res["amplitudes"] = {"LL;L": [amps[0].real, amps[0].imag], "eL;0": [amps[1].real, amps[1].imag],
                             "Le;0": [amps[2].real, amps[2].imag], "RL;R": [amps[3].real, amps[3].imag],
                             "LR;R": [amps[4].real, amps[4].imag]}
    value = res["p_max"] if cfg.report == "pmax" else res["probability"]
    label = "P_max" if cfg.report == "pmax" else f"P(t={t:.6g})"
    return res, f"{label} = {value:.6g} (beta = {params.beta:.6g}, alpha = {sol.alpha:.6g})"


def _run_master(cfg):
    res = steady_state_p(_params(cfg), _integrator(cfg))
    out = {"p": res.p, "p_failure": res.p_failure, "t_converged": res.t_converged,
           "residual": res.residual, "converged": res.converged, "fidelity": res.fidelity,
           "g_L": cfg.gl, "g_R": cfg.gr, "kappa": cfg.kappa}
    summary = (f"p = {res.p:.4f}, converged at t = {res.t_converged * cfg.kappa:.4g}/kappa "
               f"(residual {res.residual:.2e})")
    if not res.converged:
        raise NotConverged(summary.replace("converged at", "not converged by"), out)
    return out, summary


def _run_sweep(cfg):
    spec = SweepSpec(cfg.gl_min, cfg.gl_max, cfg.gl_points, cfg.gr_min, cfg.gr_max, cfg.gr_points,
                     IntegratorConfig(method=cfg.method, step=cfg.step, rtol=cfg.rtol,
                                      t_max=cfg.t_max, criterion=cfg.criterion))
    result = sweep_p(spec, workers=cfg.workers)
    best = result.max_point()
    bad = sum(not pt.converged for pt in result.points)
    out = {"points": [[pt.gl, pt.gr, pt.p, pt.converged, pt.t_converged] for pt in result.points],
           "columns": ["gL_over_kappa", "gR_over_kappa", "p", "converged", "t_converged"],
           "max": {"gL_over_kappa": best.gl, "gR_over_kappa": best.gr, "p": best.p},
           "ridge": result.ridge(), "unconverged": bad}
    if cfg.matrix:
        with open(cfg.matrix, "w") as fh:
            fh.write(gnuplot_matrix(result))
    summary = (f"max p = {best.p:.4f} at gL/kappa = {best.gl:.4g}, gR/kappa = {best.gr:.4g} "
               f"({len(result.points)} points, {bad} unconverged)")
    return out, summary, result


def _run_trajectories(cfg):
    params = _params(cfg)
    stats = run_ensemble(params, _protocol(cfg, cfg.max_rounds), cfg.n, workers=cfg.workers,
                         keep_records=bool(cfg.events))
    if cfg.events:
        write_jsonl(stats.records, cfg.events)
    summary = (f"p = {stats.p_estimate:.4f} ± {stats.p_stderr:.4f}, success fraction = "
               f"{stats.success_fraction:.4f} ± {stats.success_stderr:.4f} (n = {cfg.n})")
    return stats.to_dict(), summary


def _run_feedback(cfg):
    params = _params(cfg)
    res = steady_state_p(params)
    curve = failure_curve(params, _protocol(cfg, cfg.n_max), cfg.n_max, cfg.n, p=res.p,
                          workers=cfg.workers)
    out = {"p": res.p, "curve": [[c.n, c.analytic, c.empirical, c.stderr] for c in curve],
           "columns": ["n", "analytic", "empirical", "stderr"]}
    last = curve[-1]
    summary = (f"p = {res.p:.4f}; failure after {last.n} rounds: analytic {last.analytic:.4g}, "
               f"Monte Carlo {last.empirical:.4g} ± {last.stderr:.2g}")
    return out, summary


def _run_cesium(cfg):
    try:
        c = effective_couplings(cfg.g0, cfg.m_f)
    except ValueError as exc:
        raise ConfigError(f"m_f: {exc}") from None
    out = {"g0": c.g0, "initial_m_F": c.initial_m_F, "g_L": c.g_L, "g_R": c.g_R,
           "cg_left": c.cg_left, "cg_right": c.cg_right,
           "levels": [str(c.ground_left), str(c.excited), str(c.ground_right)]}
    summary = (f"|g_{c.initial_m_F}>: g_L = {c.g_L / max(c.g0, 1e-300):.6g} g0, "
               f"g_R = {c.g_R / max(c.g0, 1e-300):.6g} g0, entangled pair "
               f"({c.ground_right}, {c.ground_left})")
    if c.g0 > 0:
        res = steady_state_p(SystemParams(c.g_L, c.g_R, cfg.kappa))
        out["p"] = res.p
        summary += f", p = {res.p:.4f} at g0/kappa = {c.g0 / cfg.kappa:.4g}"
    if cfg.cg_table:
        write_cg_csv(cfg.cg_table)
    return out, summary


def _run_trap(cfg):
    trap = TrapParams(cfg.lambda_t, cfg.lam, cfg.mass, cfg.v0)
    v0_min = lamb_dicke_min_depth(trap)
    t_max = max_temperature(trap)
    out = {"lamb_dicke_min_depth_hz": v0_min, "max_temperature_k": t_max}
    return out, f"Lamb-Dicke: V0 >> {v0_min:.4g} Hz; ground-state loading: T <= {t_max * 1e6:.4g} uK"


_RUNNERS = {
    "closed": _run_closed, "master": _run_master, "sweep": _run_sweep,
    "trajectories": _run_trajectories, "feedback": _run_feedback, "cesium": _run_cesium,
    "trap": _run_trap,
}


def _flat_rows(prefix, value):
    if isinstance(value, dict):
        for k, v in value.items():
            yield from _flat_rows(f"{prefix}.{k}" if prefix else k, v)
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            yield from _flat_rows(f"{prefix}[{i}]", v)
    else:
        yield prefix, value


def _csv_text(cfg: RunConfig, results: dict, extra=None) -> str:
    header = [f"schema_version: {SCHEMA_VERSION}", "config: " + json.dumps(cfg.to_dict())]
    if cfg.command == "sweep":
        return sweep_csv(extra, header)
    lines = [f"# {h}" for h in header]
    if "curve" in results:
        lines.append(",".join(results["columns"]))
        lines += [",".join(repr(x) for x in row) for row in results["curve"]]
    else:
        lines.append("key,value")
        lines += [f"{k},{v!r}" for k, v in _flat_rows("", results)]
    return "\n".join(lines) + "\n"


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def run(cfg: RunConfig) -> int:
    runner = _RUNNERS[cfg.command]
    try:
        ret = runner(cfg)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except NotConverged as exc:
        summary, partial = exc.args
        _write(cfg, partial, None, status="not_converged")
        print(summary)
        return _fail("not_converged", summary, EXIT_NONCONVERGED)
    except (IntegrationError, JumpLocationError) as exc:
        return _fail("numerical", str(exc), EXIT_NUMERICAL)
    results, summary, extra = (ret + (None,))[:3]
    _write(cfg, results, extra)
    print(summary)
    return 0


def _write(cfg: RunConfig, results: dict, extra, status: str = "ok") -> None:
    if not cfg.output:
        return
    if cfg.format == "csv":
        text = _csv_text(cfg, results, extra)
    else:
        doc = {"schema_version": SCHEMA_VERSION, "status": status, "config": cfg.to_dict(),
               "results": results}
        text = json.dumps(_json_safe(doc), indent=1) + "\n"
    with open(cfg.output, "w") as fh:
        fh.write(text)


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"status": "error", "kind": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except ValueError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    if cfg.workers is None:
        cfg.params["workers"] = os.cpu_count() or 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
