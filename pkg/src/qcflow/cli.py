"""Command-line entry point: config parsing, experiment orchestration,
and report emission.

Configs are flat key = value text with [section] headers.  Monitor
streams are JSON lines, reports are CSV with headers, and plot data is
two-column whitespace-separated text.  All numbers are written with
repr (shortest round-trip form), so identical configs and seeds give
byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bubbles, conformal, flow, green, models, paneitz, spectral
from .models import ModelKind
from .spectral import Symmetry


class ConfigError(ValueError):
    pass


_SECTIONS = {
    "model": {"kind", "n", "length", "side", "sides"},
    "disc": {"symmetry", "mode_count"},
    "flow": {"t_end", "tol", "threshold", "u0"},
    "green": {"poles", "r_min", "r_max", "mode_count"},
    "bubble": {"variant", "eps", "delta", "delta_tilde", "mode_count"},
    "maxprinciple": {"steps", "source", "u0"},
}

_MODEL_KINDS = {"sphere": ModelKind.ROUND_SPHERE,
                "torus": ModelKind.FLAT_TORUS,
                "product": ModelKind.CIRCLE_CROSS_SPHERE}

_SYMMETRIES = {"zonal": Symmetry.ZONAL_ONLY,
               "circle": Symmetry.CIRCLE_ONLY,
               "circle_zonal": Symmetry.CIRCLE_ZONAL_2D,
               "torus": Symmetry.FULL_TORUS_FOURIER}


@dataclass
class ExperimentConfig:
    model: models.ModelManifold
    symmetry: Symmetry
    mode_count: tuple
    flow: dict = field(default_factory=dict)
    green: dict = field(default_factory=dict)
    bubble: dict = field(default_factory=dict)
    maxprinciple: dict = field(default_factory=dict)


def _parse_sections(text: str) -> dict:
    sections: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in _SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{current}]")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _SECTIONS[current]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{current}]")
        if key in sections[current]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        sections[current][key] = val
    return sections


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config; defaults are tol = 1e-8, convergence
    threshold 1e-6, mode_count 64."""
    sec = _parse_sections(text)
    if "model" not in sec:
        raise ConfigError("missing [model] section")
    m = sec["model"]
    try:
        kind = _MODEL_KINDS[m.get("kind", "")]
    except KeyError:
        raise ConfigError(f"model kind must be one of {sorted(_MODEL_KINDS)}")
    n = int(m.get("n", "0"))
    if n < 5:
        raise ConfigError("n >= 5 required")
    if kind is ModelKind.ROUND_SPHERE:
        model = models.round_sphere(n)
    elif kind is ModelKind.FLAT_TORUS:
        if "sides" in m:
            model = models.flat_torus(n, tuple(float(s) for s in m["sides"].split(",")))
        else:
            model = models.flat_torus(n, float(m.get("side", 2 * np.pi)))
    else:
        model = models.circle_cross_sphere(n, float(m.get("length", 2 * np.pi)))

    d = sec.get("disc", {})
    default_sym = {ModelKind.ROUND_SPHERE: "zonal",
                   ModelKind.FLAT_TORUS: "torus",
                   ModelKind.CIRCLE_CROSS_SPHERE: "circle"}[kind]
    try:
        sym = _SYMMETRIES[d.get("symmetry", default_sym)]
    except KeyError:
        raise ConfigError(f"symmetry must be one of {sorted(_SYMMETRIES)}")
    mc_raw = d.get("mode_count", "64")
    mode_count = tuple(int(v) for v in mc_raw.split(","))
    if any(v < 8 for v in mode_count):
        raise ConfigError("mode_count >= 8 required")

    cfg = ExperimentConfig(model, sym, mode_count)
    cfg.flow = _parse_flow(sec.get("flow", {}))
    cfg.green = _parse_green(sec.get("green", {}))
    cfg.bubble = _parse_bubble(sec.get("bubble", {}))
    cfg.maxprinciple = _parse_maxprinciple(sec.get("maxprinciple", {}))
    return cfg


def _parse_flow(raw):
    out = {"t_end": float(raw.get("t_end", 200.0)),
           "tol": float(raw.get("tol", 1e-8)),
           "threshold": float(raw.get("threshold", 1e-6)),
           "u0": raw.get("u0", "1")}
    if out["tol"] <= 0 or out["threshold"] <= 0 or out["t_end"] <= 0:
        raise ConfigError("flow t_end, tol, threshold must be positive")
    return out


def _parse_green(raw):
    out = {}
    if "poles" in raw:
        out["poles"] = [tuple(float(v) for v in p.split(","))
                        for p in raw["poles"].split(";")]
    if "r_min" in raw:
        out["r_min"] = float(raw["r_min"])
    if "r_max" in raw:
        out["r_max"] = float(raw["r_max"])
    if "mode_count" in raw:
        out["mode_count"] = tuple(int(v) for v in raw["mode_count"].split(","))
    return out


def _parse_bubble(raw):
    out = {"variant": raw.get("variant", "standard").lower()}
    if out["variant"] not in ("standard", "corrected", "glued"):
        raise ConfigError("bubble variant must be standard, corrected, or glued")
    out["eps"] = [float(v) for v in raw.get("eps", "0.1").split(",")]
    if any(e <= 0 for e in out["eps"]):
        raise ConfigError("bubble eps values must be positive")
    if "delta" in raw:
        out["delta"] = float(raw["delta"])
    if "delta_tilde" in raw:
        out["delta_tilde"] = float(raw["delta_tilde"])
    if "mode_count" in raw:
        out["mode_count"] = tuple(int(v) for v in raw["mode_count"].split(","))
    return out


def _parse_maxprinciple(raw):
    out = {"steps": int(raw.get("steps", 21))}
    if out["steps"] < 2:
        raise ConfigError("maxprinciple steps >= 2 required")
    if "source" in raw:
        out["source"] = raw["source"]
    if "u0" in raw:
        out["u0"] = raw["u0"]
    return out


# ---------------------------------------------------------------------------
# the u0 mini-language: constants, cos/sin of the circle coordinate,
# zonal mode references Yk -- a closed grammar, no general expressions
# ---------------------------------------------------------------------------

_TERM = re.compile(
    r"^(?:(?P<coef>[0-9.eE+-]+)\s*\*?\s*)?"
    r"(?P<atom>cos|sin|Y)?\s*"
    r"(?:\(\s*(?P<karg>\d*)\s*\*?\s*s\s*\)|(?P<ynum>\d+))?$")


def parse_field_expr(expr: str, disc: spectral.Discretization) -> spectral.Field:
    """Build a field from a sum of terms like '1', '0.1*cos(s)',
    'sin(2s)', or '0.05*Y3' (zonal mode reference)."""
    coords = disc.node_coordinates()
    total = np.zeros(disc.n_nodes)
    cleaned = expr.replace("-", "+-")
    for piece in cleaned.split("+"):
        piece = piece.strip()
        if not piece:
            continue
        neg = piece.startswith("-")
        if neg:
            piece = piece[1:].strip()
        m = _TERM.match(piece)
        if not m or (m.group("atom") is None and m.group("coef") is None):
            raise ConfigError(f"cannot parse u0 term {piece!r}")
        coef = float(m.group("coef")) if m.group("coef") else 1.0
        if neg:
            coef = -coef
        atom = m.group("atom")
        if atom is None:
            total += coef
        elif atom in ("cos", "sin"):
            if not isinstance(disc.axes[0], spectral.CircleAxis):
                raise ConfigError(f"{atom}(s) needs a circle coordinate")
            k = int(m.group("karg")) if m.group("karg") else 1
            s = coords[0]
            vals = np.cos if atom == "cos" else np.sin
            term1d = vals(2 * np.pi * k * s / disc.axes[0].L)
            total += coef * _broadcast_axis(disc, 0, term1d)
        else:  # zonal mode reference Yk
            zi = next((i for i, ax in enumerate(disc.axes)
                       if isinstance(ax, spectral.ZonalAxis)), None)
            if zi is None:
                raise ConfigError("Yk needs a zonal axis")
            k = int(m.group("ynum"))
            ax = disc.axes[zi]
            if k >= ax.nmodes:
                raise ConfigError(f"zonal mode {k} beyond mode_count")
            term1d = ax.values[:, k]
            total += coef * _broadcast_axis(disc, zi, term1d)
    return spectral.from_nodal(disc, total)


def _broadcast_axis(disc, axis, values1d):
    shape = [1] * len(disc.axes)
    shape[axis] = values1d.size
    out = np.broadcast_to(values1d.reshape(shape), disc.nodal_shape)
    return out.ravel()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def _require_admissible(model):
    ok, why = models.is_positivity_admissible(model)
    if not ok:
        raise ConfigError(f"model {model.describe()} is inadmissible: {why}")


def _build(cfg: ExperimentConfig, mode_count=None):
    disc = spectral.build_discretization(cfg.model, cfg.symmetry,
                                         mode_count or cfg.mode_count)
    return disc, paneitz.assemble(disc)


def cmd_info(cfg, outdir, seed):
    data = models.curvature_data(cfg.model)
    ok, why = models.is_positivity_admissible(cfg.model)
    lines = [
        f"model: {cfg.model.describe()}",
        f"schouten eigenvalues: {[str(a) for a in data.schouten_eigenvalues]}",
        f"sigma1 = {data.sigma1}, sigma2 = {data.sigma2}",
        f"scalar curvature R = {data.scalar}",
        f"Q-curvature Q = {data.q_curv}",
        f"admissible: {ok} ({why})",
    ]
    print("\n".join(lines))
    return 0


def cmd_flow(cfg, outdir, seed):
    _require_admissible(cfg.model)
    disc, P = _build(cfg)
    u0 = parse_field_expr(cfg.flow["u0"], disc)
    if np.min(u0.nodal) <= 0:
        raise ConfigError("u0 must be positive at all nodes")
    result = flow.run(P, u0, cfg.flow["t_end"], cfg.flow["tol"],
                      cfg.flow["threshold"])
    recs = result.records
    flow.write_jsonl(recs, outdir / "monitors.jsonl")
    fields = ["t", "energy", "volume", "mu", "quotient", "min_u", "residual",
              "lower_bound_slack", "cumulative_st", "l2_mass"]
    with open(outdir / "flow_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields + ["converged"])
        last = recs[-1]
        w.writerow([_fmt(getattr(last, f)) for f in fields] + [str(result.converged)])
    for f in fields[1:]:
        with open(outdir / f"flow_{f}.dat", "w") as fh:
            for r in recs:
                fh.write(f"{_fmt(r.t)} {_fmt(getattr(r, f))}\n")
    print(f"flow: {len(recs)} steps to t = {recs[-1].t:.6g}, "
          f"converged = {result.converged}, residual = {recs[-1].residual:.3e}")
    return 0


def cmd_green(cfg, outdir, seed):
    _require_admissible(cfg.model)
    mc = cfg.green.get("mode_count")
    disc, P = _build(cfg, mc)
    poles = cfg.green.get("poles")
    if poles is None:
        poles = [(0.0,) * len(disc.axes)]
    window = None
    if "r_min" in cfg.green or "r_max" in cfg.green:
        dflt = green.default_window(disc)
        window = (cfg.green.get("r_min", dflt[0]), cfg.green.get("r_max", dflt[1]))
    rows = green.mass_scan(P, poles, window)
    with open(outdir / "green.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "n", "pole", "leading_coeff", "alpha",
                    "r_min", "r_max", "fit_residual"])
        for e in rows:
            w.writerow([cfg.model.kind.value, cfg.model.dim,
                        ";".join(_fmt(c) for c in e.pole),
                        _fmt(e.leading_coeff), _fmt(e.alpha),
                        _fmt(e.fit_window[0]), _fmt(e.fit_window[1]),
                        _fmt(e.fit_residual)])
    for e in rows:
        print(f"green: pole {e.pole} leading = {e.leading_coeff:.6e} "
              f"alpha = {e.alpha:.6e} residual = {e.fit_residual:.2e}")
    return 0


def cmd_bubble(cfg, outdir, seed):
    _require_admissible(cfg.model)
    variant = cfg.bubble["variant"]
    eps_list = cfg.bubble["eps"]
    n = cfg.model.dim
    if cfg.model.kind is ModelKind.CIRCLE_CROSS_SPHERE and variant == "glued":
        gdisc, gP = _build(cfg, cfg.bubble.get("mode_count", (128, 128)))
        G = green.greens_function(gP, (0.0, 0.0))
        inj = models.injectivity_scale(cfg.model)
        exp = green.fit_expansion(G, (0.0, 0.0), window=(0.15, inj / 4.0))
        report = bubbles.deficit_scan_product_glued(cfg.model, eps_list, exp)
    elif cfg.model.kind is ModelKind.ROUND_SPHERE and variant == "standard":
        disc = spectral.build_discretization(cfg.model, Symmetry.ZONAL_ONLY,
                                             cfg.bubble.get("mode_count", (256,)))
        report = bubbles.deficit_scan_sphere_standard(disc, eps_list)
    else:
        raise ConfigError(f"bubble scan supports glued on the product and "
                          f"standard on the sphere (got {variant} on "
                          f"{cfg.model.kind.value})")
    with open(outdir / "bubble.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "n", "variant", "eps", "quotient", "deficit",
                    "fit_exponent"])
        for row in report.rows:
            w.writerow([cfg.model.kind.value, n, report.variant.value,
                        _fmt(row.eps), _fmt(row.quotient), _fmt(row.deficit),
                        _fmt(report.fit_exponent)])
    for row in report.rows:
        print(f"bubble: eps = {row.eps:g} quotient = {row.quotient:.6f} "
              f"deficit = {row.deficit:+.5f}")
    print(f"bubble: fitted deficit exponent = {report.fit_exponent:.3f}")
    return 0


def cmd_maxprinciple(cfg, outdir, seed):
    _require_admissible(cfg.model)
    disc, P = _build(cfg)
    if "source" in cfg.maxprinciple:
        w = parse_field_expr(cfg.maxprinciple["source"], disc)
        if np.min(w.nodal) < 0:
            raise ConfigError("maxprinciple source must be nonnegative")
        u = paneitz.solve(P, w)
    elif "u0" in cfg.maxprinciple:
        u = parse_field_expr(cfg.maxprinciple["u0"], disc)
    else:
        u = spectral.constant_field(disc, 1.0)
    report = conformal.maxprinciple_path(P, u, cfg.maxprinciple["steps"])
    with open(outdir / "maxprinciple.csv", "w", newline="") as fh:
        wcsv = csv.writer(fh)
        wcsv.writerow(["lambda", "min_u", "min_q_bound", "min_q", "min_r",
                       "positive"])
        for row in report.rows:
            wcsv.writerow([_fmt(row.lam), _fmt(row.min_u), _fmt(row.min_q_bound),
                           _fmt(row.min_q), _fmt(row.min_r), str(row.positive)])
    flag = ("none" if report.first_failure is None
            else f"{report.first_failure:.4g}")
    print(f"maxprinciple: first positivity failure at lambda = {flag}")
    return 0


_COMMANDS = {"info": cmd_info, "flow": cmd_flow, "green": cmd_green,
             "bubble": cmd_bubble, "maxprinciple": cmd_maxprinciple}


def run_command(cfg: ExperimentConfig, command: str, seed: int = 0,
                outdir="out") -> int:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    np.random.seed(seed & 0xFFFFFFFF)
    return _COMMANDS[command](cfg, outdir, seed)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="qcflow",
        description="Fourth-order conformal operator and Q-curvature flow "
                    "experiments on exact model manifolds")
    ap.add_argument("command", choices=sorted(_COMMANDS))
    ap.add_argument("--config", required=True, help="key = value config file")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out", help="output directory")
    args = ap.parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text)
        return run_command(cfg, args.command, args.seed, args.out)
    except (ConfigError, flow.FlowHalted, paneitz.OperatorNotPositiveError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
