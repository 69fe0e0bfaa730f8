"""Command-line front end: ``su2markov <command> [flags]``.

Commands write CSV or JSON to ``--output`` (stdout by default). Flags take
precedence over a JSON ``--config`` file, which takes precedence over the
defaults. Exit codes: 0 success, 1 validation failure, 2 bad arguments.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

import numpy as np

from . import qbd
from .diffusion import (
    TruncationError,
    Undecided,
    build_model,
    density,
    em_ensemble,
    em_simulate,
    invariant_psi,
    model_boundary_report,
)
from .io import csv_text, json_text
from .oracles import expm
from .specfun import gauss_jacobi_rule
from .validate import CHAIN_MODELS, DIFFUSION_MODELS, validate

__all__ = ["main", "build_parser"]

MODELS = CHAIN_MODELS + DIFFUSION_MODELS

DEFAULTS = {
    "model": "bd",
    "nu": 1.0,
    "seed": 0,
    "t_max": 10.0,
    "dt": 1e-3,
    "levels": 200,
    "n_paths": 1,
    "output": None,
    "format": "csv",
    "tol": 1e-10,
    "truncation": 500,
    "i": 0,
    "j": 0,
    "t": 1.0,
    "x0": 0.3,
    "phase0": 1,
    "start_level": 0,
    "start_phase": 1,
    "x": 0.5,
    "grid": 99,
    "perturb": 0.0,
}


class UsageError(ValueError):
    """Bad arguments; reported with exit code 2."""


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--model", choices=MODELS)
    common.add_argument("--nu", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--t-max", dest="t_max", type=float)
    common.add_argument("--dt", type=float)
    common.add_argument("--levels", type=int)
    common.add_argument("--n-paths", dest="n_paths", type=int)
    common.add_argument("--output", help="output file (default stdout)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--tol", type=float, help="series tolerance")
    common.add_argument("--truncation", type=int, help="hard cap on series terms")
    common.add_argument("--config", help="JSON file with default flag values")

    parser = argparse.ArgumentParser(prog="su2markov", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generator", parents=[common], help="dump a truncated chain generator")
    p = sub.add_parser("simulate", parents=[common], help="simulate chain or diffusion paths")
    p.add_argument("--start-level", dest="start_level", type=int, default=argparse.SUPPRESS)
    p.add_argument("--start-phase", dest="start_phase", type=int, default=argparse.SUPPRESS)
    p.add_argument("--x0", type=float, default=argparse.SUPPRESS)
    p.add_argument("--phase0", type=int, default=argparse.SUPPRESS)
    p = sub.add_parser("transition", parents=[common], help="Karlin-McGregor P_ij(t) with expm check")
    p.add_argument("--i", type=int, default=argparse.SUPPRESS)
    p.add_argument("--j", type=int, default=argparse.SUPPRESS)
    p.add_argument("--t", type=float, default=argparse.SUPPRESS)
    p = sub.add_parser("density", parents=[common], help="spectral transition density on a y grid")
    p.add_argument("--t", type=float, default=argparse.SUPPRESS)
    p.add_argument("--x", type=float, default=argparse.SUPPRESS)
    p.add_argument("--grid", type=int, default=argparse.SUPPRESS)
    p = sub.add_parser("invariant", parents=[common], help="invariant measure or density")
    p.add_argument("--grid", type=int, default=argparse.SUPPRESS)
    sub.add_parser("classify", parents=[common], help="recurrence or boundary classification")
    p = sub.add_parser("validate", parents=[common], help="run the oracle suite of a model")
    p.add_argument("--perturb", type=float, default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    return parser


def _config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    path = getattr(args, "config", None)
    if path:
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError(f"config {path} must hold a JSON object")
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update({k: v for k, v in vars(args).items() if k not in ("config",)})
    if cfg["model"] not in MODELS:
        raise UsageError(f"unknown model {cfg['model']!r}")
    return cfg


def _emit(cfg: dict, text: str) -> None:
    if cfg["output"]:
        with open(cfg["output"], "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _need_chain(cfg, command):
    if cfg["model"] not in CHAIN_MODELS:
        raise UsageError(f"{command} needs --model bd or qbd2")


def _need_diffusion(cfg, command):
    if cfg["model"] not in DIFFUSION_MODELS:
        raise UsageError(f"{command} needs a diffusion model ({', '.join(DIFFUSION_MODELS)})")


def cmd_generator(cfg: dict) -> int:
    _need_chain(cfg, "generator")
    gen = qbd.build_generator(cfg["nu"], cfg["levels"], cfg["model"])
    if cfg["format"] == "json":
        _emit(cfg, json_text("generator", gen.to_json_dict()))
        return 0
    G = gen.dense()
    rows = []
    for r, c in zip(*np.nonzero(G)):
        sr, sc = gen.state(r), gen.state(c)
        rows.append((sr.level, sr.phase, sc.level, sc.phase, float(G[r, c])))
    _emit(cfg, csv_text("generator", rows))
    return 0


def _simulate_chain(cfg: dict) -> int:
    gen = qbd.build_generator(cfg["nu"], cfg["levels"], cfg["model"])
    start = qbd.ChainState(cfg["start_level"], cfg["start_phase"])
    path = qbd.gillespie_simulate(gen, start, cfg["t_max"], cfg["seed"])
    ens = qbd.gillespie_ensemble(gen, start, [cfg["t_max"]], cfg["n_paths"], cfg["seed"])
    summary = {
        "model": cfg["model"],
        "nu": cfg["nu"],
        "n_paths": cfg["n_paths"],
        "t_max": cfg["t_max"],
        "returns_to_start": int(ens.returned.sum()),
        "left_truncation": int(ens.truncated.sum()),
        "recurrence_class": qbd.classify(cfg["nu"], cfg["model"]).value,
    }
    if cfg["format"] == "json":
        rows = [list(r) for r in path.csv_rows()]
        _emit(cfg, json_text("chain_simulation", {"summary": summary, "path": rows}))
    else:
        _emit(cfg, csv_text("chain_path", path.csv_rows()))
        sys.stderr.write(json.dumps(summary) + "\n")
    return 0


def _simulate_diffusion(cfg: dict) -> int:
    model = build_model(cfg["nu"], cfg["model"])
    path = em_simulate(model, cfg["x0"], cfg["phase0"], cfg["dt"], cfg["t_max"], cfg["seed"])
    ens = em_ensemble(
        model, cfg["x0"], cfg["phase0"], cfg["dt"], cfg["t_max"], cfg["n_paths"], cfg["seed"],
        record_times=[cfg["t_max"]], workers=1,
    )
    occ = ens.occupation.sum(axis=0)
    summary = {
        "model": cfg["model"],
        "nu": cfg["nu"],
        "n_paths": cfg["n_paths"],
        "t_max": cfg["t_max"],
        "dt": cfg["dt"],
        "killed_fraction": float(1 - ens.alive[-1]),
        "boundary_hits": int(ens.boundary_hits.sum()),
        "occupation_fractions": (occ / occ.sum()).tolist(),
    }
    for p in range(model.phases):
        summary[f"crossed_half_in_phase{p + 1}"] = int((ens.crossings[:, p] > 0).sum())
    if cfg["format"] == "json":
        _emit(cfg, json_text("diffusion_simulation", {"summary": summary, "path": [list(r) for r in path.csv_rows()]}))
    else:
        _emit(cfg, csv_text("diffusion_path", path.csv_rows()))
        sys.stderr.write(json.dumps(summary) + "\n")
    return 0


def cmd_simulate(cfg: dict) -> int:
    if cfg["n_paths"] < 1:
        raise UsageError("--n-paths must be positive")
    if cfg["model"] in CHAIN_MODELS:
        return _simulate_chain(cfg)
    return _simulate_diffusion(cfg)


def cmd_transition(cfg: dict) -> int:
    _need_chain(cfg, "transition")
    i, j, t = cfg["i"], cfg["j"], cfg["t"]
    if i < 0 or j < 0 or t < 0:
        raise UsageError("--i, --j and --t must be nonnegative")
    km = np.atleast_2d(qbd.km_transition(cfg["nu"], cfg["model"], i, j, t))
    gen = qbd.build_generator(cfg["nu"], max(cfg["levels"], max(i, j) + 2), cfg["model"])
    d = gen.phases
    E = expm(gen.dense(), t)[i * d : (i + 1) * d, j * d : (j + 1) * d]
    rows = [
        (t, i, a + 1, j, b + 1, float(km[a, b]), float(E[a, b]), float(abs(km[a, b] - E[a, b])))
        for a in range(d)
        for b in range(d)
    ]
    if cfg["format"] == "json":
        payload = {
            "model": cfg["model"],
            "nu": cfg["nu"],
            "t": t,
            "i": i,
            "j": j,
            "phases": [f"phase {p + 1}" for p in range(d)],
            "km": km.tolist(),
            "expm": E.tolist(),
            "max_abs_diff": float(np.abs(km - E).max()),
            "levels": gen.levels,
        }
        _emit(cfg, json_text("transition", payload))
    else:
        _emit(cfg, csv_text("transition", rows))
    return 0


def cmd_density(cfg: dict) -> int:
    _need_diffusion(cfg, "density")
    model = build_model(cfg["nu"], cfg["model"])
    y = (np.arange(cfg["grid"]) + 1) / (cfg["grid"] + 1)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        vals = density(model, cfg["t"], cfg["x"], y, tol=cfg["tol"], truncation=cfg["truncation"])
    for w in caught:
        sys.stderr.write(f"warning: {w.message}\n")
    vals = np.asarray(vals).reshape(y.size, model.phases, model.phases)
    rows = [
        (cfg["t"], cfg["x"], float(yy), a + 1, b + 1, float(vals[k, a, b]))
        for k, yy in enumerate(y)
        for a in range(model.phases)
        for b in range(model.phases)
    ]
    if cfg["format"] == "json":
        _emit(cfg, json_text("density", {"model": cfg["model"], "nu": cfg["nu"], "rows": rows}))
    else:
        _emit(cfg, csv_text("density", rows))
    return 0


def cmd_invariant(cfg: dict) -> int:
    model, nu = cfg["model"], cfg["nu"]
    if model == "qbd2":
        pi = qbd.invariant_measure(nu, cfg["levels"])
        rows = [(k // 2, k % 2 + 1, float(v)) for k, v in enumerate(pi)]
        if cfg["format"] == "json":
            _emit(cfg, json_text("invariant_measure", {"model": model, "nu": nu, "rows": rows}))
        else:
            _emit(cfg, csv_text("invariant_measure", rows))
        return 0
    if model == "bd":
        rows = [(n, 1, qbd.potential_coefficients(nu, n, "bd")) for n in range(cfg["levels"])]
        if cfg["format"] == "json":
            _emit(cfg, json_text("invariant_measure", {"model": model, "nu": nu, "rows": rows}))
        else:
            _emit(cfg, csv_text("invariant_measure", rows))
        return 0
    if model != "l1-switch2":
        raise UsageError("invariant supports bd, qbd2 and l1-switch2")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        y = (np.arange(cfg["grid"]) + 1) / (cfg["grid"] + 1)
        psi = invariant_psi(nu, y)
        rule = gauss_jacobi_rule(60, nu - 0.5, nu - 0.5)
        smooth = invariant_psi(nu, rule.nodes, warn=False) / ((rule.nodes * (1 - rule.nodes)) ** (nu - 0.5))[:, None]
        totals = (rule.weights @ smooth).tolist()
    for w in caught:
        sys.stderr.write(f"warning: {w.message}\n")
    rows = [(float(a), float(b), float(c)) for a, (b, c) in zip(y, psi)]
    if cfg["format"] == "json":
        _emit(cfg, json_text("psi", {"model": model, "nu": nu, "totals": totals, "rows": rows}))
    else:
        _emit(cfg, csv_text("psi", rows))
        sys.stderr.write(json.dumps({"totals": totals}) + "\n")
    return 0


def cmd_classify(cfg: dict) -> int:
    model, nu = cfg["model"], cfg["nu"]
    if model in CHAIN_MODELS:
        payload = {"model": model, "nu": nu, "class": qbd.classify(nu, model).value}
    else:
        phases = build_model(nu, model).phases
        points = []
        for phase in range(1, phases + 1):
            for point, side in ((0.0, "left"), (0.5, "left"), (0.5, "right"), (1.0, "left")):
                rep = model_boundary_report(nu, model, phase, point, side)
                entry = {"phase": phase, "point": point, **rep.to_dict()}
                if point == 0.5:
                    entry["side"] = side
                points.append(entry)
        payload = {"model": model, "nu": nu, "boundaries": points}
    _emit(cfg, json_text("classification", payload))
    return 0


def cmd_validate(cfg: dict) -> int:
    reports = validate(
        cfg["model"],
        cfg["nu"],
        perturb=cfg["perturb"],
        seed=cfg["seed"],
        n_paths=max(cfg["n_paths"], 2000) if cfg["n_paths"] > 1 else 20_000,
        tol=cfg["tol"],
    )
    _emit(cfg, "".join(r.to_json() + "\n" for r in reports))
    return 0 if all(r.passed for r in reports) else 1


COMMANDS = {
    "generator": cmd_generator,
    "simulate": cmd_simulate,
    "transition": cmd_transition,
    "density": cmd_density,
    "invariant": cmd_invariant,
    "classify": cmd_classify,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg)
    except (UsageError, ValueError, TruncationError, Undecided, ZeroDivisionError) as exc:
        sys.stderr.write(f"su2markov {args.command}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
