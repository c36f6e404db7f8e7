"""Command-line front end: config validation, task fan-out, figure-data output."""
from __future__ import annotations

import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
import hashlib
import json
import logging
import math
import os
from pathlib import Path
import sys
import time
from importlib import resources, metadata

import jsonschema
import numpy as np

from . import analysis, cavity, dicke, noise, protocol, wigner

log = logging.getLogger("satinsim")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4
WORKERS_ENV = "SATINSIM_WORKERS"
SCHEMA_VERSION = 1
MODES = ("simulate", "sweep-q", "sweep-untwist", "sweep-n", "amplify", "ramsey", "wigner", "allan", "optimize")

_num = {"type": "number"}
_num_list = {"type": "array", "items": _num, "minItems": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "mode", "name"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "mode": {"enum": list(MODES)},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "n_atoms": {"type": "integer", "minimum": 1, "maximum": 2000},
        "n_list": {"type": "array", "items": {"type": "integer", "minimum": 10, "maximum": 2000}, "minItems": 2},
        "q_tilde": _num,
        "q_list": _num_list,
        "q_minus_list": _num_list,
        "phi_list": _num_list,
        "shots": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "model": {"enum": ["none", "cavity"]},
                "sigma_meas_sq": {"type": "number", "minimum": 0},
                "sigma_d_sq": {"type": "number", "minimum": 0},
            },
        },
        "cavity": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eta": {"type": "number", "exclusiveMinimum": 0},
                "kappa_hz": {"type": "number", "exclusiveMinimum": 0},
                "gamma_hz": {"type": "number", "exclusiveMinimum": 0},
                "finesse": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_polar": {"type": "integer", "minimum": 8},
                "n_azimuth": {"type": "integer", "minimum": 8},
                "binary": {"type": "boolean"},
            },
        },
        "record": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_points": {"type": "integer", "minimum": 4},
                "sample_period_s": {"type": "number", "exclusiveMinimum": 0},
                "sigma": {"type": "number", "minimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"format": {"enum": ["csv", "json"]}},
        },
    },
    "allOf": [
        {"if": {"properties": {"mode": {"const": m}}}, "then": {"required": req}}
        for m, req in [
            ("simulate", ["n_atoms", "q_list", "phi_list"]),
            ("sweep-q", ["n_atoms", "q_list"]),
            ("sweep-untwist", ["n_atoms", "q_tilde", "q_minus_list"]),
            ("sweep-n", ["n_list"]),
            ("amplify", ["n_atoms", "q_list"]),
            ("ramsey", ["n_atoms", "shots"]),
            ("wigner", ["n_atoms", "q_tilde"]),
            ("allan", ["record"]),
            ("optimize", ["n_atoms", "q_list"]),
        ]
    ],
}


class ConfigError(Exception):
    pass


# -- config loading -----------------------------------------------------------

def _line_of(raw: str, path) -> int:
    """Best-effort line of the JSON key at the end of an error path."""
    keys = [p for p in path if isinstance(p, str)]
    lines = raw.splitlines()
    start = 0
    for key in keys:
        needle = f'"{key}"'
        for i in range(start, len(lines)):
            if needle in lines[i]:
                start = i
                break
    return start + 1


def bundled_configs():
    root = resources.files("satinsim") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _read_config_text(path: str):
    p = Path(path)
    if not p.exists() and not p.suffix and path in bundled_configs():
        res = resources.files("satinsim") / "configs" / f"{path}.json"
        return res.read_text(encoding="utf-8"), f"<bundled:{path}>"
    try:
        return p.read_text(encoding="utf-8"), str(p)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc


def load_config(path: str):
    raw, label = _read_config_text(path)
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{label}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(e.path), list(map(str, e.path))))
    if errors:
        msgs = []
        for err in errors:
            path = list(err.absolute_path)
            if err.validator == "additionalProperties":
                extra = set(err.instance) - set(err.schema.get("properties", {}))
                path = path + sorted(extra)[:1]
            where = "/".join(map(str, path)) or "<root>"
            msgs.append(f"{label}:{_line_of(raw, path)}: {where}: {err.message}")
        raise ConfigError("\n".join(msgs))
    return cfg, raw


def _cavity_base(cfg) -> cavity.CavityConfig:
    c = cfg.get("cavity", {})
    base = cavity.CavityConfig()
    return replace(
        base,
        eta=c.get("eta", base.eta),
        kappa=2 * math.pi * c["kappa_hz"] if "kappa_hz" in c else base.kappa,
        gamma=2 * math.pi * c["gamma_hz"] if "gamma_hz" in c else base.gamma,
        finesse=c.get("finesse", base.finesse),
        n_atoms=cfg.get("n_atoms", base.n_atoms),
    )


def _noise_opts(cfg):
    n = cfg.get("noise", {})
    return (n.get("model", "cavity"), n.get("sigma_meas_sq", noise.SIGMA_MEAS_SQ),
            n.get("sigma_d_sq", noise.SIGMA_D_SQ))


def task_seeds(root_seed: int, n_tasks: int):
    """Task i always gets child i of SeedSequence(root), whatever the pool size."""
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(root_seed).spawn(n_tasks)]


# -- per-task workers (module level so they pickle) ----------------------------

def _noise_for(base, q_plus, model, sig_meas):
    if model == "none" or q_plus == 0:
        return noise.NoiseBudget(sigma_meas_sq=sig_meas if model != "none" else 0.0)
    cfg = cavity.optimize_detuning(base, q_plus, sig_meas)
    return noise.NoiseBudget.from_cavity(cfg, q_plus, -q_plus, sig_meas)


def _simulate_task(args):
    base, q, phi, model, sig_meas, shots, seed = args
    nb = _noise_for(base, q, model, sig_meas)
    res = protocol.run_sequence(protocol.satin_sequence(q, phi), base.n_atoms, nb,
                                seed if shots else None, max(shots, 1))
    row = [q, phi, res.mean_sy_norm, res.sigma_y_sq]
    if shots:
        row += [res.ci["mean_sy_norm"][0], res.ci["mean_sy_norm"][1], res.ci["mean_sy_norm"][2]]
    return row


def _sweep_q_task(args):
    base, q, sig_meas = args
    pt = protocol.model_point(base, q, sig_meas)
    ideal = protocol.ideal_gain_db(q, base.n_atoms)
    return [q, ideal, pt.gain_db, pt.contrast, pt.i_tot, pt.sigma_y_sq]


def _amplify_task(args):
    base, q, sig_meas = args
    n = base.n_atoms
    m_model = protocol.model_point(base, q, sig_meas).m
    return [q, protocol.amplification_exact(q, n), protocol.amplification_analytic(q, n), m_model]


def _untwist_task(args):
    base_opt, q_plus, q_minus, model, sig_meas = args
    n = base_opt.n_atoms
    mom = dicke.moments(protocol.evolve(protocol.satin_sequence(q_plus, 0.0, q_minus), n))
    if model == "none":
        return [q_minus, mom.sigma_y_sq, mom.sigma_y_sq, mom.sigma_y_sq]
    pred = noise.predict_untwist_variance(base_opt, q_plus, q_minus, sig_meas)
    nb = noise.NoiseBudget.from_cavity(base_opt, q_plus, q_minus, sig_meas)
    _, overlay = noise.apply_overlay(0.0, mom.sigma_y_sq, nb)
    return [q_minus, overlay, pred.sigma_y_sq, pred.sigma_y_sq_hp]


def _sweep_n_task(args):
    base, n, model, sig_meas = args
    q_id, g_id = protocol.optimize_ideal_q(n)
    row = [n, q_id, g_id, 10 * math.log10(n) - g_id]
    if model == "cavity":
        pt = protocol.optimize_model_q(replace(base, n_atoms=n), sig_meas)
        row += [pt.q_plus, pt.gain_db, 10 * math.log10(n) - pt.gain_db]
    return row


def _optimize_task(args):
    base, q, sig_meas = args
    cfg = cavity.optimize_detuning(base, q, sig_meas)
    b = cavity.twist_budget(cfg)
    return [q, cfg.x_a, cfg.x_c, cfg.n_tr_tot, b.n_scattered,
            cavity.model_gain_db(cfg, q, sig_meas), b.excess_broadening]


def _ramsey_task(args):
    n, q, nb, shots, seed = args
    res = protocol.ramsey_echo_run(q, 0.0, n, nb, seed, shots)
    return res.amplification_m, res.sigma_y_sq, res.gain_db, protocol.phase_record(res, n)


# -- mode runners -------------------------------------------------------------

def _run_mode(cfg, seed, pool_map):
    mode = cfg["mode"]
    model, sig_meas, sig_d = _noise_opts(cfg)
    base = _cavity_base(cfg)
    shots = cfg.get("shots", 0)
    summary = {}

    if mode == "simulate":
        tasks = [(q, phi) for q in cfg["q_list"] for phi in cfg["phi_list"]]
        seeds = task_seeds(seed, len(tasks)) if shots else [None] * len(tasks)
        rows = list(pool_map(_simulate_task, [
            (base, q, phi, model, sig_meas, shots, s) for (q, phi), s in zip(tasks, seeds)
        ]))
        cols = ["q_plus", "phi_rad", "mean_sy_norm", "sigma_y_sq_sql"]
        if shots:
            cols += ["shot_mean_sy_norm", "shot_mean_lo_1sigma", "shot_mean_hi_1sigma"]
    elif mode == "sweep-q":
        rows = list(pool_map(_sweep_q_task, [(base, q, sig_meas) for q in cfg["q_list"]]))
        cols = ["q_plus", "gain_ideal_db", "gain_model_db", "contrast", "excess_broadening_sql", "sigma_y_sq_model_sql"]
    elif mode == "amplify":
        rows = list(pool_map(_amplify_task, [(base, q, sig_meas) for q in cfg["q_list"]]))
        cols = ["q_plus", "m_exact", "m_analytic", "m_model"]
    elif mode == "sweep-untwist":
        q_plus = cfg["q_tilde"]
        opt = cavity.optimize_detuning(base, q_plus, sig_meas) if model == "cavity" else base
        rows = list(pool_map(_untwist_task, [(opt, q_plus, qm, model, sig_meas) for qm in cfg["q_minus_list"]]))
        cols = ["q_minus", "sigma_y_sq_sql", "sigma_y_sq_model_sql", "sigma_y_sq_hp_sql"]
        if model == "cavity":
            summary["decomposition"] = noise.untwist_decomposition(opt, q_plus, sig_meas)
        summary["q_minus_at_min"] = rows[int(np.argmin([r[1] for r in rows]))][0]
    elif mode == "sweep-n":
        ns = cfg["n_list"]
        rows = list(pool_map(_sweep_n_task, [(base, n, model, sig_meas) for n in ns]))
        cols = ["n_atoms", "q_opt_ideal", "gain_ideal_db", "hl_distance_ideal_db"]
        x = 10 * np.log10(ns)
        summary["fit_slope_ideal"] = float(np.polyfit(x, [r[2] for r in rows], 1)[0])
        if model == "cavity":
            cols += ["q_opt_model", "gain_model_db", "hl_distance_model_db"]
            summary["fit_slope_model"] = float(np.polyfit(x, [r[5] for r in rows], 1)[0])
    elif mode == "optimize":
        rows = list(pool_map(_optimize_task, [(base, q, sig_meas) for q in cfg["q_list"]]))
        cols = ["q_plus", "x_a", "x_c", "photons_transmitted", "photons_scattered", "gain_model_db", "excess_broadening_sql"]
    elif mode == "ramsey":
        n = cfg["n_atoms"]
        if "q_tilde" in cfg:
            q = cfg["q_tilde"]
        else:
            q = protocol.optimize_model_q(base, sig_meas).q_plus
        nb = _noise_for(base, q, model, sig_meas)
        s_satin, s_css = task_seeds(seed, 2)
        runs = list(pool_map(_ramsey_task, [
            (n, q, nb, shots, s_satin),
            # SQL reference: noiseless CSS Ramsey, m = 1
            (n, 0.0, None, shots, s_css),
        ]))
        period = cfg.get("record", {}).get("sample_period_s", 1.0)
        taus, ad_satin = analysis.allan_deviation(runs[0][3], period)
        _, ad_css = analysis.allan_deviation(runs[1][3], period)
        rows = [[t, a, b] for t, a, b in zip(taus, ad_satin, ad_css)]
        cols = ["tau_s", "adev_satin_rad", "adev_css_rad"]
        summary.update({
            "q_tilde": q,
            "amplification_m": runs[0][0],
            "sigma_y_sq_sql": runs[0][1],
            "gain_db": runs[0][2],
            "adev_ratio_tau0": float(ad_satin[0] / ad_css[0]),
            "slope_satin": analysis.white_noise_fit(taus, ad_satin, shots * period)[0],
            "slope_css": analysis.white_noise_fit(taus, ad_css, shots * period)[0],
        })
    elif mode == "allan":
        rec = cfg["record"]
        n_pts = rec.get("n_points", 10000)
        period = rec.get("sample_period_s", 1.0)
        data = np.random.default_rng(task_seeds(seed, 1)[0]).normal(0.0, rec.get("sigma", 1.0), n_pts)
        taus, adev = analysis.allan_deviation(data, period)
        rows = [[t, a] for t, a in zip(taus, adev)]
        cols = ["tau_s", "adev_rad"]
        summary["slope"] = analysis.white_noise_fit(taus, adev, n_pts * period)[0]
    elif mode == "wigner":
        g = cfg.get("grid", {})
        psi = dicke.oat_evolve(dicke.css_x(cfg["n_atoms"]), cfg["q_tilde"])
        grid = wigner.wigner_grid(psi, g.get("n_polar", 64), g.get("n_azimuth", 128))
        tt, pp = np.meshgrid(grid.theta, grid.phi, indexing="ij")
        rows = np.column_stack([tt.ravel(), pp.ravel(), grid.values.ravel()]).tolist()
        cols = ["theta_rad", "phi_rad", "W_per_sr"]
        summary["integral"] = grid.integrate()
        summary["grid"] = grid if g.get("binary") else None
    else:  # pragma: no cover - schema forbids
        raise ConfigError(f"unknown mode {mode}")
    return cols, rows, summary


def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def _check_finite(rows):
    for r in rows:
        for v in r:
            if isinstance(v, float) and math.isnan(v):
                raise FloatingPointError("NaN in results")


def write_outputs(out_dir: Path, name: str, fmt: str, cols, rows, summary):
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    grid = summary.pop("grid", None)
    if fmt == "csv":
        path = out_dir / f"{name}.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(cols) + "\n")
            for r in rows:
                fh.write(",".join(_fmt(v) for v in r) + "\n")
        written.append(path)
        if summary:
            spath = out_dir / f"{name}_summary.json"
            spath.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n", encoding="utf-8")
            written.append(spath)
    else:
        path = out_dir / f"{name}.json"
        doc = {"columns": cols, "rows": _jsonable(rows), "summary": _jsonable(summary)}
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
    if grid is not None:
        bpath = out_dir / f"{name}.bin"
        wigner.write_binary(grid, bpath)
        written.append(bpath)
    return written


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.1.0"


def build_parser():
    p = argparse.ArgumentParser(prog="satinsim", description="SATIN twist/untwist simulator")
    p.add_argument("--config", help="config JSON path or bundled name (see --list-configs)")
    p.add_argument("--seed", type=int, help="root seed; overrides the config")
    p.add_argument("--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--format", choices=["csv", "json"], help="output format; overrides the config")
    p.add_argument("--list-configs", action="store_true", help="list bundled configs and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(config_path, seed=None, workers=None, out="out", fmt=None) -> int:
    t0 = time.perf_counter()
    try:
        cfg, raw = load_config(config_path)
        if seed is not None and not (0 <= seed < 2**64):
            raise ConfigError(f"--seed must be in [0, 2^64), got {seed}")
        seed = cfg.get("seed") if seed is None else seed
        if cfg.get("shots", 0) > 0 and seed is None:
            raise ConfigError(f"{config_path}: seed is required when shots > 0 (config 'seed' or --seed)")
        if seed is None:
            seed = 0
        if workers is None:
            env = os.environ.get(WORKERS_ENV, "1")
            try:
                workers = int(env)
            except ValueError:
                raise ConfigError(f"${WORKERS_ENV} must be an integer, got {env!r}") from None
        if workers < 1:
            raise ConfigError(f"workers must be >= 1, got {workers}")
        fmt = fmt or cfg.get("output", {}).get("format", "csv")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if workers == 1:
            cols, rows, summary = _run_mode(cfg, seed, map)
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                cols, rows, summary = _run_mode(cfg, seed, pool.map)
        _check_finite(rows)
    except cavity.NoSolutionError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (FloatingPointError, np.linalg.LinAlgError, OverflowError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(out)
    files = write_outputs(out_dir, cfg["name"], fmt, cols, rows, summary)
    manifest = {
        "config": config_path,
        "config_sha256": hashlib.sha256(raw.encode("utf-8")).hexdigest(),
        "seed": seed,
        "version": _version(),
        "mode": cfg["mode"],
        "workers": workers,
        "format": fmt,
        "outputs": {f.name: hashlib.sha256(f.read_bytes()).hexdigest() for f in files},
        "wall_time_s": time.perf_counter() - t0,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    log.info("wrote %s", ", ".join(str(f) for f in files))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.list_configs:
        print("\n".join(bundled_configs()))
        return EXIT_OK
    if not args.config:
        print("config error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.config, args.seed, args.workers, args.out, args.format)


if __name__ == "__main__":
    sys.exit(main())
