"""Command-line entry point.

Every subcommand reads a JSON model file::

    {"p": 4, "beta": 1, "c": 0.5, "r": 0.3, "sigma": 2,
     "claim": {"kind": "exponential", "rate": 1},
     "grid": {"x_max": 30, "h": 0.001},
     "tol": {"certify": 0.01, "lambda": 1e-6},
     "sim": {"paths": 50000, "dt": 0.001, "t_max": 20, "seed": 0}}

``grid``, ``tol`` and ``sim`` are optional.  Exit codes: 0 success,
1 failed certification, 2 malformed input, 3 solver error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .barrier import BandStructure, CandidateValue, GluePoint, optimal_barrier
from .bands import band_search, two_band_search
from .errors import ConfigError, DivbandError, ModelError
from .gridfn import Grid, GridFn
from .model import ClaimDist, ModelParams, claim_dist_from_config, validate
from .oracle import default_grid, policy_iteration_solve
from .simulate import StrategySpec, default_t_max, estimate_value
from .svg import line_plot
from .verify import certify
from .wsolve import solve_w

log = logging.getLogger("divband")

DEFAULT_H = 1e-3
EXAMPLES = {
    "9.1": {
        "p": 4.0, "beta": 1.0, "c": 0.5, "r": 0.3, "sigma": 2.0,
        "claim": {"kind": "exponential", "rate": 1.0},
        "grid": {"x_max": 30.0, "h": 1e-3},
    },
    "9.2": {
        "p": 1.6, "beta": 1.0, "c": 0.3, "r": 0.2, "sigma": 1.0,
        "claim": {"kind": "piecewise_uniform", "lo": 0.7, "hi": 1.0},
        "grid": {"x_max": 30.0, "h": 1e-3},
    },
}


@dataclass
class Config:
    params: ModelParams
    dist: ClaimDist
    grid: Grid
    tol: dict = field(default_factory=dict)
    sim: dict = field(default_factory=dict)


def parse_config(raw: dict) -> Config:
    """Validate a decoded config; raises :class:`ConfigError` or
    :class:`ModelError` on bad input."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    try:
        params = ModelParams(*(float(raw[k]) for k in ("p", "beta", "c", "r", "sigma")))
    except KeyError as exc:
        raise ConfigError(f"missing model parameter {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model parameters must be numbers: {exc}") from exc
    validate(params)
    claim = raw.get("claim")
    if not isinstance(claim, dict):
        raise ConfigError('"claim" must be an object with a "kind"')
    dist = claim_dist_from_config(claim)
    g = raw.get("grid", {}) or {}
    tol = raw.get("tol", {}) or {}
    sim = raw.get("sim", {}) or {}
    for name, sect in (("grid", g), ("tol", tol), ("sim", sim)):
        if not isinstance(sect, dict):
            raise ConfigError(f'"{name}" must be an object')
    try:
        h = float(g.get("h", DEFAULT_H))
        x_max = float(g.get("x_max", 1.5 * params.payout_bound))
        grid = Grid.from_extent(x_max, h)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid section: {exc}") from exc
    if x_max <= params.payout_bound:
        raise ConfigError(f"grid.x_max = {x_max} must exceed p/(c-r) = {params.payout_bound:.6g}")
    return Config(params, dist, grid, dict(tol), dict(sim))


def load_config(path: str) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(raw)


def write_csv(path: Path, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    """Write ``columns`` with 12 significant digits and LF line endings."""
    cols = [np.asarray(c) for c in columns]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([_num(v) for v in row])


def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    v = float(v)
    return "0" if v == 0 else f"{v:.12g}"


def read_csv(path: str) -> dict[str, np.ndarray]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read candidate: {exc}") from exc
    if len(rows) < 2:
        raise ConfigError(f"{path} has no data rows")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ConfigError(f"{path}: rows do not match the header")
    return {name: data[:, k] for k, name in enumerate(header)}


def candidate_to_csv(cand: CandidateValue, path: Path, with_v2: bool = True) -> None:
    if cand.core is None:
        x = np.array([0.0])
        cols = [x, cand.value(x), np.ones(1)] + ([np.zeros(1)] if with_v2 else []) + [np.ones(1)]
    else:
        x = cand.core.x
        v2 = cand.v2 if cand.v2 is not None else np.gradient(cand.core.deriv, cand.core.grid.h)
        cols = [x, cand.core.values, cand.core.deriv] + ([v2] if with_v2 else []) + [cand.gamma_at(x)]
    header = ["x", "V", "Vprime"] + (["Vsecond"] if with_v2 else []) + ["gamma"]
    write_csv(path, header, cols)


def candidate_from_csv(data: dict[str, np.ndarray], bands: Optional[BandStructure], h: float) -> CandidateValue:
    """Rebuild a candidate from the columns written by :func:`candidate_to_csv`."""
    for col in ("x", "V", "Vprime"):
        if col not in data:
            raise ConfigError(f"candidate file lacks column {col!r}")
    x, V, Vp = data["x"], data["V"], data["Vprime"]
    if x.size == 1:
        return CandidateValue(None, 0.0, float(V[0]), bands or BandStructure(), h=h)
    n = x.size - 1
    a = float(x[-1])
    grid = Grid(h=a / n, n=n)
    if np.max(np.abs(grid.x - x)) > 1e-9 * max(a, 1.0):
        raise ConfigError("candidate nodes must be uniformly spaced from 0")
    core = GridFn(grid, V, Vp)
    v2 = data["Vsecond"] if "Vsecond" in data else np.gradient(Vp, grid.h)
    gam = data["gamma"] if "gamma" in data else np.ones_like(x)
    if bands is None:
        bands = BandStructure.from_pairs([(0.0, a)])
    glue = []
    for b in bands.bands:
        if b.bottom > 0:
            j = min(int(np.searchsorted(x, b.bottom, side="right")), n)
            glue.append(GluePoint(b.bottom, float(core.eval(b.bottom)), float(v2[j]), side=+1))
        j = max(int(np.searchsorted(x, b.top, side="right")) - 1, 0)
        glue.append(GluePoint(b.top, float(core.eval(min(b.top, a))), float(v2[j]), side=-1))
    return CandidateValue(core, a, float(V[0]), bands, v2=v2, gamma=gam, glue=tuple(glue), h=h)


def _outdir(args) -> Path:
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cert_tol(cfg: Config) -> Optional[float]:
    t = cfg.tol.get("certify")
    return None if t is None else float(t)


def cmd_solve_w(args) -> int:
    cfg = load_config(args.config)
    ws = solve_w(cfg.params, cfg.dist, cfg.grid)
    path = _outdir(args) / "w.csv"
    write_csv(path, ["x", "W", "Wprime", "Wsecond", "gamma"], [ws.x, ws.w.values, ws.w.deriv, ws.w2, ws.gamma])
    print(f"nodes {ws.grid.n + 1}  h {ws.grid.h:.6g}  x_max {ws.grid.x_max:.6g}")
    print(f"wrote {path}")
    return 0


def cmd_barrier(args) -> int:
    cfg = load_config(args.config)
    ws = solve_w(cfg.params, cfg.dist, cfg.grid)
    cand = optimal_barrier(ws)
    path = _outdir(args) / "v1.csv"
    candidate_to_csv(cand, path, with_v2=False)
    print(f"w1 {cand.meta['w1']:.10g}")
    print(f"x_star {cand.a_star:.10g}")
    print(f"wrote {path}")
    return 0


def cmd_bands(args) -> int:
    cfg = load_config(args.config)
    cand = band_search(cfg.params, cfg.dist, cfg.grid, max_bands=args.max_bands, tol=_cert_tol(cfg))
    rep = cand.meta["report"]
    out = _outdir(args)
    candidate_to_csv(cand, out / "v.csv")
    doc = {
        "v0": cand.v0,
        "bands": cand.bands.to_list(),
        "a_star": cand.a_star,
        "certified": bool(rep.passed),
    }
    (out / "bands.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    k = 0
    for b in cand.bands.bands:
        if b.bottom > 0:
            k += 1
            print(f"y{k} {b.bottom:.10g}")
        print(f"z{k} {b.top:.10g}" if b.bottom > 0 else f"x_star {b.top:.10g}")
    print(f"v0 {cand.v0:.10g}")
    print(f"certified {'yes' if rep.passed else 'no'} (max residual {rep.max_residual:.3g}, tol {rep.tol:.3g})")
    print(f"wrote {out / 'v.csv'} and {out / 'bands.json'}")
    return 0


def cmd_certify(args) -> int:
    cfg = load_config(args.config)
    data = read_csv(args.candidate)
    bands_path = Path(args.bands) if args.bands else Path(args.candidate).with_name("bands.json")
    bands = None
    if bands_path.exists():
        try:
            doc = json.loads(bands_path.read_text(encoding="utf-8"))
            bands = BandStructure.from_pairs([(b["bottom"], b["top"]) for b in doc["bands"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad band file {bands_path}: {exc}") from exc
    elif args.bands:
        raise ConfigError(f"band file {bands_path} not found")
    cand = candidate_from_csv(data, bands, cfg.grid.h)
    rep = certify(cand, cfg.params, cfg.dist, tol=_cert_tol(cfg))
    print(f"{'PASS' if rep.passed else 'FAIL'}  max residual {rep.max_residual:.4g}  tol {rep.tol:.4g}")
    if rep.marginal:
        print("note: a glue-point residual lies within a factor two of the tolerance")
    if rep.witnesses:
        print(f"{'x':>12} {'gamma':>8} {'residual':>12}")
        for w in rep.witnesses[: args.max_witnesses]:
            print(f"{w.x:12.6g} {w.gamma:8.4g} {w.residual:12.4g}")
        if len(rep.witnesses) > args.max_witnesses:
            print(f"... {len(rep.witnesses) - args.max_witnesses} more")
    return 0 if rep.passed else 1


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    p = cfg.params
    cand = band_search(p, cfg.dist, cfg.grid, max_bands=args.max_bands, tol=_cert_tol(cfg))
    spec = StrategySpec.from_candidate(cand)
    value = float(cand.value(args.x0))
    sim = cfg.sim
    paths = int(args.paths if args.paths is not None else sim.get("paths", 50000))
    dt = float(args.dt if args.dt is not None else sim.get("dt", 1e-3))
    seed = int(args.seed if args.seed is not None else sim.get("seed", 0))
    t_max = args.tmax if args.tmax is not None else sim.get("t_max")
    t_max = default_t_max(p, spec.a_star, value) if t_max is None else float(t_max)
    rep = estimate_value(spec, args.x0, p, cfg.dist, paths, dt, t_max, seed, workers=args.workers)
    for name, v in vars(rep).items():
        print(f"{name} {v:.10g}")
    print(f"model_value {value:.10g}")
    return 0


def cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    res = policy_iteration_solve(cfg.params, cfg.dist, default_grid(cfg.params, args.cells))
    path = _outdir(args) / "oracle.csv"
    write_csv(path, ["x", "V", "pay", "gamma"], [res.x, res.v, res.pay, res.gamma])
    print(f"sweeps {res.iterations}  residual {res.residual:.3g}")
    edges = np.flatnonzero(np.diff(res.pay.astype(int)))
    print("pay-region switches at " + (", ".join(f"{res.x[i]:.4g}" for i in edges) or "none"))
    print(f"wrote {path}")
    return 0


def _plot(path: Path, series, title, xlabel, ylabel) -> None:
    path.write_text(line_plot(series, title, xlabel, ylabel), encoding="utf-8")


def cmd_reproduce(args) -> int:
    cfg = parse_config(EXAMPLES[args.example])
    p, dist = cfg.params, cfg.dist
    out = _outdir(args)
    if args.example == "9.1":
        cand = optimal_barrier(solve_w(p, dist, cfg.grid))
        summary = {"example": "9.1", "x_star": cand.a_star, "w1": cand.meta["w1"]}
        figs = ["fig1.svg", "fig2.svg"]
    else:
        y1, z1, cand = two_band_search(p, dist, cfg.grid)
        summary = {"example": "9.2", "y1": y1, "z1": z1, "v0": cand.v0}
        figs = ["fig3.svg", "fig4.svg", "fig5.svg"]
    rep = certify(cand, p, dist)
    summary["certified"] = bool(rep.passed)
    summary["max_residual"] = rep.max_residual
    x = np.linspace(0.0, math.ceil(2.0 * cand.a_star), 801)
    V, Vp, g = cand.value(x), cand.deriv(x), cand.gamma_at(x)
    _plot(out / figs[0], [("V(x) - x", x, V - x)], f"Example {args.example}: V(x) - x", "x", "V(x) - x")
    if args.example == "9.2":
        _plot(out / figs[1], [("V'(x)", x, Vp)], "Example 9.2: V'(x)", "x", "V'(x)")
    _plot(out / figs[-1], [("gamma*(x)", x, g)], f"Example {args.example}: investment fraction", "x", "gamma*(x)")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for k in sorted(summary):
        print(f"{k} {summary[k]}")
    print(f"wrote {', '.join(figs)} and summary.json to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="divband", description="Optimal dividend bands with investment.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help, config=True, outdir=False):
        sp = sub.add_parser(name, help=help)
        if config:
            sp.add_argument("--config", required=True, help="JSON model file")
        if outdir:
            sp.add_argument("--outdir", default=".", help="output directory (default: .)")
        sp.set_defaults(func=fn)
        return sp

    add("solve-w", cmd_solve_w, "solve for W and write w.csv", outdir=True)
    add("barrier", cmd_barrier, "optimal barrier; writes v1.csv", outdir=True)
    sp = add("bands", cmd_bands, "certified band strategy; writes v.csv and bands.json", outdir=True)
    sp.add_argument("--max-bands", type=int, default=2)
    sp = add("certify", cmd_certify, "certify a candidate value function")
    sp.add_argument("--candidate", required=True, help="CSV with x, V, Vprime[, Vsecond, gamma]")
    sp.add_argument("--bands", help="band file (default: bands.json next to the candidate)")
    sp.add_argument("--max-witnesses", type=int, default=20)
    sp = add("simulate", cmd_simulate, "Monte Carlo value of the certified strategy")
    sp.add_argument("--x0", type=float, required=True)
    sp.add_argument("--paths", type=int)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--tmax", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--max-bands", type=int, default=2)
    sp = add("oracle", cmd_oracle, "policy-iteration cross-check; writes oracle.csv", outdir=True)
    sp.add_argument("--cells", type=int, default=2000)
    sp = add("reproduce", cmd_reproduce, "rerun a worked example and draw its figures", config=False, outdir=True)
    sp.add_argument("--example", required=True, choices=sorted(EXAMPLES))
    return ap


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv`` and run the subcommand; returns the exit code."""
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ModelError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except DivbandError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
