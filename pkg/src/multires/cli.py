"""Command-line front end.

Theory configs are JSON documents with exactly one of ``builtin`` or
``custom``::

    {"label": "qubit heat bath",
     "builtin": {"tag": "thermo", "charges": ["H"], "beta_max": 100},
     "solver": {"grid": 200, "samples": 1000, "seed": 0, "tol": 1e-8}}

    {"builtin": {"tag": "local-control", "E0": 0.0, "E1": 1.0}}

    {"custom": {
        "dims": [2],
        "monotones": [
            {"kind": "avg", "label": "M_Z", "observable": M},
            {"kind": "relent", "label": "E", "set": {"kind": "singleton", "state": M}},
            {"kind": "relent", "set": {"kind": "polytope", "vertices": [M, M]}},
            {"kind": "negated-entropy"}],
        "state_family": {"kind": "gibbs", "charges": [M], "bounds": [[0, 10]]}}}

Matrices ``M`` are row-major nested arrays whose entries are ``[re, im]``
pairs (plain reals are accepted).  Named charges ``X``, ``Y``, ``Z`` (Pauli)
and ``H`` (``diag(0, 1)``) are shortcuts for qubits.  A custom
``state_family`` is either ``gibbs`` (charges plus beta bounds) or
``mixture`` (two states joined by a segment).

Exit codes: 0 success, 2 config error, 3 geometric guard, 4 first-law
breach, 5 suite failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import quantum as qm
from .bank import (
    BankGeometryError,
    bank_vs_relent_check,
    first_law_check,
    resource_deltas,
    tangency_margin,
    tangent_coeffs,
    trace_bank_curve,
)
from .free_sets import ParamFamily, Singleton, VertexPolytope, closest_state
from .kernels import BACKEND
from .monotones import AvgObservable, RelEntropyDistance, negated_entropy, property_suite_M, superadditivity_check
from .protocol import ProtocolError, back_action_scaling, run_interconversion
from .theories import (
    TheoryError,
    TheorySpec,
    build_local_control_theory,
    build_thermo_theory,
    s_p0_polytope,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GEOMETRY = 3
EXIT_FIRST_LAW = 4
EXIT_SUITE = 5

SVG_W, SVG_H, SVG_MARGIN = 800, 600, 60

_NAMED = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[0, 0], [0, 1]], dtype=complex),
}


class ConfigError(Exception):
    """Invalid config; ``where`` names the JSON field or line."""

    def __init__(self, where: str, msg: str):
        super().__init__(f"{where}: {msg}")
        self.where = where


class _Exit(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


# --------------------------------------------------------------------------- config parsing


def load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(path, f"cannot read config ({exc.strerror})") from None
    return parse_config_text(text, path)


def parse_config_text(text: str, name: str = "<config>") -> dict:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name}:{exc.lineno}:{exc.colno}", exc.msg) from None
    if not isinstance(cfg, dict):
        raise ConfigError(name, "top level must be an object")
    if ("builtin" in cfg) == ("custom" in cfg):
        raise ConfigError(name, "exactly one of 'builtin' or 'custom' is required")
    return cfg


def _matrix(obj, where: str, dims=None) -> np.ndarray:
    if isinstance(obj, str):
        if obj not in _NAMED:
            raise ConfigError(where, f"unknown named matrix {obj!r} (known: {', '.join(_NAMED)})")
        return _NAMED[obj].copy()
    try:
        return qm.parse_matrix(obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from None


def _observable(obj, where: str, dims=None) -> qm.Observable:
    label = ""
    if isinstance(obj, dict):
        label = str(obj.get("label", ""))
        if "matrix" not in obj:
            raise ConfigError(where, "observable needs a 'matrix'")
        obj, where = obj["matrix"], where + ".matrix"
    elif isinstance(obj, str):
        label = obj
    mat = _matrix(obj, where)
    try:
        return qm.Observable(mat, label, dims)
    except (ValueError, qm.DimensionError) as exc:
        raise ConfigError(where, str(exc)) from None


def _state(obj, where: str, dims=None) -> qm.DensityMatrix:
    mat = _matrix(obj, where)
    try:
        return qm.DensityMatrix(mat, dims)
    except (ValueError, qm.DimensionError) as exc:
        raise ConfigError(where, str(exc)) from None


def _number(section: dict, key: str, where: str, default):
    val = section.get(key, default)
    if not isinstance(val, (int, float)) or isinstance(val, bool) or not math.isfinite(val):
        raise ConfigError(f"{where}.{key}", f"expected a finite number, got {val!r}")
    return float(val)


def build_theory(cfg: dict) -> TheorySpec:
    """Theory described by a parsed config."""
    try:
        if "builtin" in cfg:
            return _builtin(cfg["builtin"])
        return _custom(cfg["custom"], cfg.get("label", "custom"))
    except TheoryError as exc:
        raise ConfigError("theory", str(exc)) from None


def _builtin(b) -> TheorySpec:
    if not isinstance(b, dict):
        raise ConfigError("builtin", "must be an object")
    tag = b.get("tag")
    if tag == "thermo":
        raw = b.get("charges", ["H"])
        if not isinstance(raw, list) or not raw:
            raise ConfigError("builtin.charges", "need a non-empty list of charges")
        charges = [_observable(c, f"builtin.charges[{i}]") for i, c in enumerate(raw)]
        return build_thermo_theory(charges, _number(b, "beta_max", "builtin", 100.0))
    if tag == "local-control":
        return build_local_control_theory(_number(b, "E0", "builtin", 0.0), _number(b, "E1", "builtin", 1.0))
    raise ConfigError("builtin.tag", f"unknown builtin {tag!r} (expected 'thermo' or 'local-control')")


def _custom(c, label: str) -> TheorySpec:
    if not isinstance(c, dict):
        raise ConfigError("custom", "must be an object")
    mons_cfg = c.get("monotones")
    if not isinstance(mons_cfg, list) or not mons_cfg:
        raise ConfigError("custom.monotones", "need a non-empty list")
    dims = c.get("dims")
    if dims is not None:
        if not isinstance(dims, list) or not all(isinstance(x, int) and x > 0 for x in dims):
            raise ConfigError("custom.dims", "expected a list of positive integers")
        dims = tuple(dims)
    mons, sets = [], []
    for i, m in enumerate(mons_cfg):
        where = f"custom.monotones[{i}]"
        if not isinstance(m, dict):
            raise ConfigError(where, "must be an object")
        kind = m.get("kind")
        if kind == "avg":
            obs = _observable(m.get("observable"), where + ".observable", dims)
            dims = dims or obs.dims
            mon = AvgObservable(obs, m.get("label", f"M{i}"))
            w, v = obs.eig
            if len(w) > 1 and w[1] - w[0] <= 1e-9:
                raise ConfigError(where + ".observable", "degenerate ground space")
            sets.append(Singleton(qm.pure_state(v[:, 0], obs.dims), f"ground[{mon.label}]"))
        elif kind == "relent":
            fset = _set(m.get("set"), where + ".set", dims)
            dims = dims or fset.dims
            mon = RelEntropyDistance(fset, m.get("label", f"E{i}"))
            sets.append(fset)
        elif kind == "negated-entropy":
            if dims is None:
                raise ConfigError(where, "negated-entropy needs 'dims' or an earlier monotone")
            mon = negated_entropy(m.get("label", "negated_entropy"))
            d = int(np.prod(dims))
            sets.append(Singleton(qm.maximally_mixed(d, dims), "I/d"))
        else:
            raise ConfigError(where + ".kind", f"unknown monotone kind {kind!r}")
        mons.append(mon)
    family = None
    if "state_family" in c:
        family = _family(c["state_family"], dims)
    return TheorySpec(label, "custom", tuple(dims), mons, sets, family)


def _set(s, where: str, dims):
    if not isinstance(s, dict):
        raise ConfigError(where, "must be an object")
    kind = s.get("kind")
    if kind == "singleton":
        return Singleton(_state(s.get("state"), where + ".state", dims), s.get("label", "singleton"))
    if kind == "polytope":
        verts = s.get("vertices")
        if not isinstance(verts, list) or not verts:
            raise ConfigError(where + ".vertices", "need a non-empty list")
        return VertexPolytope([_state(v, f"{where}.vertices[{j}]", dims) for j, v in enumerate(verts)],
                              s.get("label", "polytope"))
    raise ConfigError(where + ".kind", f"unknown set kind {kind!r}")


def _family(f, dims) -> ParamFamily:
    where = "custom.state_family"
    if not isinstance(f, dict) or not f:
        raise ConfigError(where, "empty state family")
    kind = f.get("kind")
    if kind == "gibbs":
        charges = [_observable(x, f"{where}.charges[{i}]", dims) for i, x in enumerate(f.get("charges") or [])]
        bounds = f.get("bounds")
        if not charges or not isinstance(bounds, list) or len(bounds) != len(charges):
            raise ConfigError(where, "gibbs family needs charges and one [lo, hi] bound per charge")
        try:
            bounds = [(float(lo), float(hi)) for lo, hi in bounds]
        except (TypeError, ValueError):
            raise ConfigError(where + ".bounds", "bounds must be [lo, hi] pairs") from None
        return ParamFamily(bounds, lambda b: qm.gibbs_state(charges, b), "gibbs",
                           [f"beta_{c.label or i}" for i, c in enumerate(charges)])
    if kind == "mixture":
        states = f.get("states") or []
        if len(states) != 2:
            raise ConfigError(where + ".states", "mixture family needs exactly two states")
        a, b = (_state(s, f"{where}.states[{i}]", dims) for i, s in enumerate(states))
        return ParamFamily([(0.0, 1.0)], lambda t: qm.mixture([a, b], [1 - float(t[0]), float(t[0])]),
                           "mixture", ["t"])
    raise ConfigError(where + ".kind", f"unknown family kind {kind!r}")


def _solver(cfg: dict, key: str, default):
    s = cfg.get("solver", {})
    if not isinstance(s, dict):
        raise ConfigError("solver", "must be an object")
    return s.get(key, default)


# --------------------------------------------------------------------------- emission


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def csv_summary(header, rows) -> dict:
    """Row count and per-column min/max of the numeric columns."""
    out = {"rows": len(rows), "columns": list(header), "min": {}, "max": {}}
    for j, name in enumerate(header):
        vals = [float(r[j]) for r in rows if isinstance(r[j], (int, float, np.floating))]
        if vals:
            out["min"][name] = min(vals)
            out["max"][name] = max(vals)
    return out


def _range(vals):
    lo, hi = (min(vals), max(vals)) if vals else (0.0, 1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def render_svg(series, xlabel: str, ylabel: str, title: str = "") -> str:
    """Deterministic 800x600 SVG.

    ``series`` holds ``(name, xs, ys, style)`` with style ``"line"`` or
    ``"points"``.  The data ranges sit in ``data-*`` attributes of the root so
    that pixel coordinates can be mapped back.
    """
    xs_all = [float(x) for s in series for x in s[1]]
    ys_all = [float(y) for s in series for y in s[2]]
    x0, x1 = _range(xs_all)
    y0, y1 = _range(ys_all)
    pw, ph = SVG_W - 2 * SVG_MARGIN, SVG_H - 2 * SVG_MARGIN

    def px(x):
        return SVG_MARGIN + (float(x) - x0) / (x1 - x0) * pw

    def py(y):
        return SVG_H - SVG_MARGIN - (float(y) - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" '
        f'viewBox="0 0 {SVG_W} {SVG_H}" data-xmin="{x0!r}" data-xmax="{x1!r}" data-ymin="{y0!r}" data-ymax="{y1!r}">',
        f'<rect x="0" y="0" width="{SVG_W}" height="{SVG_H}" fill="white"/>',
        f'<line x1="{SVG_MARGIN}" y1="{SVG_H - SVG_MARGIN}" x2="{SVG_W - SVG_MARGIN}" y2="{SVG_H - SVG_MARGIN}" stroke="black"/>',
        f'<line x1="{SVG_MARGIN}" y1="{SVG_MARGIN}" x2="{SVG_MARGIN}" y2="{SVG_H - SVG_MARGIN}" stroke="black"/>',
        f'<text x="{SVG_W // 2}" y="{SVG_H - 15}" text-anchor="middle" font-size="16">{_esc(xlabel)}</text>',
        f'<text x="20" y="{SVG_H // 2}" text-anchor="middle" font-size="16" '
        f'transform="rotate(-90 20 {SVG_H // 2})">{_esc(ylabel)}</text>',
        f'<text x="{SVG_MARGIN}" y="{SVG_H - SVG_MARGIN + 20}" font-size="11">{x0:.4g}</text>',
        f'<text x="{SVG_W - SVG_MARGIN}" y="{SVG_H - SVG_MARGIN + 20}" font-size="11" text-anchor="end">{x1:.4g}</text>',
        f'<text x="{SVG_MARGIN - 5}" y="{SVG_H - SVG_MARGIN}" font-size="11" text-anchor="end">{y0:.4g}</text>',
        f'<text x="{SVG_MARGIN - 5}" y="{SVG_MARGIN + 4}" font-size="11" text-anchor="end">{y1:.4g}</text>',
    ]
    if title:
        out.append(f'<text x="{SVG_W // 2}" y="30" text-anchor="middle" font-size="16">{_esc(title)}</text>')
    colours = ["#1f4e9c", "#b2361b", "#2f7d32", "#7b3f98"]
    for k, (name, xs, ys, style) in enumerate(series):
        col = colours[k % len(colours)]
        if style == "line":
            pts = " ".join(f"{px(x):.3f},{py(y):.3f}" for x, y in zip(xs, ys))
            out.append(f'<polyline data-series="{_esc(name)}" points="{pts}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        else:
            out.append(f'<g data-series="{_esc(name)}" fill="{col}">')
            out.extend(f'<circle cx="{px(x):.3f}" cy="{py(y):.3f}" r="2"/>' for x, y in zip(xs, ys))
            out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


class RunReport:
    """Collects outputs and verdicts; files are written only by :meth:`flush`."""

    def __init__(self, command: str, argv, cfg_text: str, seed: int):
        self.command = command
        self.argv = list(argv)
        self.seed = seed
        self.digest = hashlib.sha256((cfg_text + "\0" + json.dumps(self.argv)).encode()).hexdigest()
        self.files: dict[str, str] = {}
        self.outputs: list = []
        self.verdicts: list = []
        self.summary: dict = {}
        self.exit_code = EXIT_OK

    def add_file(self, name: str, content: str, summary: dict | None = None):
        self.files[name] = content
        self.outputs.append({"path": name, "summary": summary or {}})

    def verdict(self, name: str, passed: bool | None, margin=None, note: str = ""):
        self.verdicts.append({"name": name, "passed": passed, "margin": margin, "note": note})

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "argv": self.argv,
            "seed": self.seed,
            "inputs_digest": self.digest,
            "kernel_backend": BACKEND,
            "summary": self.summary,
            "outputs": self.outputs,
            "verdicts": self.verdicts,
            "exit_code": self.exit_code,
        }

    def flush(self, out_dir: Path):
        out_dir.mkdir(parents=True, exist_ok=True)
        self.outputs.append({"path": "report.json", "summary": {}})
        for name, content in self.files.items():
            (out_dir / name).write_text(content)
        (out_dir / "report.json").write_text(json.dumps(self.to_dict(), indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o).__name__)


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else repr(x)


# --------------------------------------------------------------------------- commands


def _theory_from(args):
    if not args.config:
        raise ConfigError("--config", "a theory config is required")
    cfg = load_config(args.config)
    return cfg, build_theory(cfg), Path(args.config).read_text()


def _seed(args, cfg) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int(_solver(cfg, "seed", 0))


def _samples(args, cfg, default: int) -> int:
    if args.samples is not None:
        return int(args.samples)
    return int(_solver(cfg, "samples", default))


def cmd_diagram(args, report: RunReport, cfg, theory: TheorySpec):
    if theory.state_family is None:
        raise ConfigError("state_family", "diagram needs a state family")
    n = _samples(args, cfg, 1000)
    rng = np.random.default_rng(report.seed)
    labels = theory.labels
    rows = [theory.coordinates(theory.sample_state(int(rng.integers(2**62)))) for _ in range(n)]
    report.add_file("diagram.csv", csv_text(labels, rows), csv_summary(labels, rows))
    mrows = []
    for k, fset in enumerate(theory.invariant_sets):
        for j, g in enumerate(fset.members(3, report.seed)):
            mrows.append([fset.label, j, *theory.coordinates(g)])
    mheader = ["set", "member", *labels]
    report.add_file("markers.csv", csv_text(mheader, mrows), csv_summary(mheader, mrows))
    fam = theory.state_family
    ix, iy = 0, len(labels) - 1
    series = [("samples", [r[ix] for r in rows], [r[iy] for r in rows], "points")]
    if fam.n_params == 1:
        lo, hi = fam.bounds[0]
        fam_pts = [theory.coordinates(fam.builder(np.array([t]))) for t in np.linspace(lo, hi, 101)]
        series.append((fam.label, [p[ix] for p in fam_pts], [p[iy] for p in fam_pts], "line"))
    series.append(("invariant sets", [r[2 + ix] for r in mrows], [r[2 + iy] for r in mrows], "points"))
    report.add_file("diagram.svg", render_svg(series, labels[ix], labels[iy], theory.label),
                    {"x": labels[ix], "y": labels[iy], "series": [s[0] for s in series]})
    report.summary = {"theory": theory.label, "samples": n}


def _curve_and_anchor(args, cfg, theory):
    if theory.resources != 2:
        raise ConfigError("theory", f"bank commands need two resources, {theory.label} has {theory.resources}")
    if theory.state_family is None:
        raise ConfigError("state_family", "bank commands need a state family")
    n_points = int(_solver(cfg, "grid", 200))
    anchor = args.anchor
    curve = trace_bank_curve(theory, n_points=n_points)
    if anchor is None:
        idx = len(curve.points) // 2
    elif _is_int(anchor):
        idx = int(anchor)
    else:
        # a family parameter value: add its exact E1 to the grid
        try:
            val = float(anchor)
        except ValueError:
            raise ConfigError("--anchor", f"expected an index or a parameter value, got {anchor!r}") from None
        fam = theory.state_family
        if fam.n_params != 1:
            raise ConfigError("--anchor", "parameter anchors need a one-parameter family")
        lo, hi = fam.bounds[0]
        if not lo <= val <= hi:
            raise ConfigError("--anchor", f"parameter {val} outside [{lo}, {hi}]")
        target = theory.monotones[0].evaluate(fam.builder(np.array([val])))
        grid = sorted(set(curve.E1.tolist()) | {target})
        curve = trace_bank_curve(theory, grid=grid)
        idx = int(np.argmin(np.abs(curve.E1 - target)))
    if not -len(curve.points) <= idx < len(curve.points):
        raise ConfigError("--anchor", f"index {idx} outside 0..{len(curve.points) - 1}")
    return curve, idx % len(curve.points)


def _is_int(s: str) -> bool:
    try:
        int(s)
        return True
    except ValueError:
        return False


def _coeff_summary(theory, curve, idx, coeffs) -> dict:
    out = {
        "anchor_index": idx,
        "anchor": list(coeffs.anchor),
        "anchor_param": list(curve.points[idx].param),
        "alpha": coeffs.alpha,
        "beta": coeffs.beta,
        "gamma": coeffs.gamma,
        "rate": coeffs.rate,
        "richardson": coeffs.richardson,
        "flagged": coeffs.flagged,
    }
    if theory.kind == "thermo":
        b = curve.points[idx].param[0]
        out["beta_bits"] = b
        out["beta_nats"] = b * qm.LN2
        out["temperature"] = 1.0 / coeffs.alpha
    if theory.kind == "local-control":
        p0 = curve.points[idx].param[0]
        e0, e1 = theory.params["E0"], theory.params["E1"]
        out["p0"] = p0
        out["rate_closed_form"] = -(e1 - e0) / math.log2(p0 / (1 - p0))
    return out


def cmd_bank(args, report: RunReport, cfg, theory: TheorySpec):
    curve, idx = _curve_and_anchor(args, cfg, theory)
    bad = curve.violations()
    header = ["E1", "E2", *curve.param_names]
    rows = [[p.E1, p.E2, *p.param] for p in curve.points]
    report.add_file("bank_curve.csv", curve.to_csv(), csv_summary(header, rows))
    report.verdict("curve-invariants", not bad, None, "; ".join(bad[:5]))
    if bad:
        raise _Exit(EXIT_GEOMETRY, "bank curve is not monotone decreasing and convex: " + "; ".join(bad[:5]))
    coeffs = tangent_coeffs(curve, idx)
    summ = _coeff_summary(theory, curve, idx, coeffs)
    report.summary = {"theory": theory.label, "points": len(curve.points), **summ}
    e1 = curve.E1
    a1, a2 = coeffs.anchor
    tan_x = [float(e1[0]), float(e1[-1])]
    tan_y = [a2 - coeffs.alpha * (x - a1) for x in tan_x]
    svg = render_svg(
        [("bank curve", e1.tolist(), curve.E2.tolist(), "line"), ("tangent", tan_x, tan_y, "line"),
         ("anchor", [a1], [a2], "points")],
        theory.labels[0], theory.labels[1], theory.label,
    )
    report.add_file("bank.svg", svg, {"x": theory.labels[0], "y": theory.labels[1]})
    report.add_file("tangent.json", json.dumps(summ, indent=2, default=_json_default) + "\n", summ)


def _parse_state_arg(text: str | None, theory, seed: int, where: str) -> qm.DensityMatrix:
    if text is None:
        return theory.sample_state(seed)
    if text.startswith("random:"):
        try:
            return theory.sample_state(int(text.split(":", 1)[1]))
        except ValueError:
            raise ConfigError(where, f"bad random seed in {text!r}") from None
    try:
        obj = json.loads(Path(text).read_text() if Path(text).is_file() else text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}:{exc.lineno}:{exc.colno}", exc.msg) from None
    st = _state(obj, where, theory.dims)
    if st.dim != theory.dim:
        raise ConfigError(where, f"state dimension {st.dim} differs from theory dimension {theory.dim}")
    return st


def cmd_firstlaw(args, report: RunReport, cfg, theory: TheorySpec):
    curve, idx = _curve_and_anchor(args, cfg, theory)
    coeffs = tangent_coeffs(curve, idx)
    rho = _parse_state_arg(args.rho, theory, report.seed, "--rho")
    sigma = _parse_state_arg(args.sigma, theory, report.seed + 1, "--sigma")
    dw1, dw2 = resource_deltas(theory, rho, sigma)
    dw1 += args.perturb
    rep = first_law_check(theory, coeffs, rho, sigma, dw1, dw2)
    tol = args.tol if args.tol is not None else float(_solver(cfg, "tol", 1e-8))
    ok = rep.ok(tol)
    summ = {
        "theory": theory.label,
        "anchor": list(coeffs.anchor),
        "alpha": coeffs.alpha,
        "beta": coeffs.beta,
        "dW1": dw1,
        "dW2": dw2,
        "lhs": rep.lhs,
        "rhs": rep.rhs,
        "residual": rep.residual,
        "tol": tol,
        "rate": rep.rate,
        "breakdown": rep.breakdown,
    }
    report.summary = summ
    report.verdict("first-law", ok, abs(rep.residual), f"tol={tol:g}")
    lines = [f"alpha dW1 + beta dW2 = {rep.lhs!r}", f"f(rho) - f(sigma) = {rep.rhs!r}", f"residual = {rep.residual!r}"]
    if rep.breakdown:
        b = rep.breakdown
        lines.append(f"T = {b['T']!r}  dU = {b['dU']!r}  Q = {b['Q']!r}  W = {b['W']!r}  dU-(Q-W) = {b['dU-(Q-W)']!r}")
    report.add_file("firstlaw.txt", "\n".join(lines) + "\n", {"residual": rep.residual})
    if not ok:
        raise _Exit(EXIT_FIRST_LAW, f"first-law residual {rep.residual:.3e} exceeds tol {tol:g}")


def cmd_protocol(args, report: RunReport, cfg, theory):
    try:
        if args.n_list:
            ns = [int(x) for x in args.n_list.split(",") if x.strip()]
            table = back_action_scaling(args.p0, args.r, ns, args.E0, args.E1)
            header = ["n", "dW_W", "dW_E", "delta_n", "rate_error"]
            report.add_file("scaling.csv", table.to_csv(), csv_summary(header, table.rows))
            report.summary = {"p0": args.p0, "r": args.r, "n_list": ns, "slope_delta": _finite(table.slope_delta),
                              "slope_rate_error": _finite(table.slope_rate_error)}
            return
        trace = run_interconversion(args.n, args.p0, args.r, args.E0, args.E1)
    except (ProtocolError, ValueError) as exc:
        raise ConfigError("protocol", str(exc)) from None
    header = ["stage", "bank_energy", "bank_E_css", "energy_k", "ent_h", "total_energy", "total_entanglement"]
    rows = [
        [s.stage, s.bank["energy"], s.bank["E_css"], s.batteries["energy_k"], s.batteries["ent_h"],
         s.totals["energy"], s.totals["entanglement"]]
        for s in trace.steps
    ]
    report.add_file("protocol.csv", csv_text(header, rows), csv_summary(header, rows))
    report.add_file("protocol_trace.txt", trace.to_text() + "\n")
    de, dq = trace.conservation_residuals()
    report.summary = {
        "n": trace.n, "p0": trace.p0_initial, "p0_final": trace.p0_final, "r": trace.r,
        "dW_W": trace.dW_W, "dW_E": trace.dW_E, "delta_n": trace.delta_n,
        "rate": _finite(trace.rate), "asymptotic_rate": trace.asymptotic_rate,
        "relative_rate_error": _finite(trace.rate_error / abs(trace.asymptotic_rate)),
        "energy_drift": de, "entanglement_drift": dq, "rounding_residue": trace.rounding_residue,
    }


def cmd_check(args, report: RunReport, cfg, theory: TheorySpec):
    suites = {s.strip() for s in (args.suite or "all").split(",")}
    if "all" in suites:
        suites = {"M", "F", "bank", "relent"}
    unknown = suites - {"M", "F", "bank", "relent"}
    if unknown:
        raise ConfigError("--suite", f"unknown suite(s) {sorted(unknown)}")
    n = _samples(args, cfg, 100)
    seed = report.seed
    text = []
    failed = []
    if "M" in suites:
        rep = property_suite_M(theory, n, seed, args.tol)
        text.append(rep.to_text())
        for r in rep.records:
            report.verdict(f"{r.name}[{r.monotone}]", r.passed, r.worst_margin, r.counterexample)
            if r.passed is False:
                failed.append(f"{r.name} ({r.monotone}): margin {r.worst_margin:.3e} at {r.counterexample}")
    if "F" in suites:
        text.extend(_f_suite(theory, n, seed, report, failed))
    if theory.resources == 2 and theory.state_family is not None:
        if "bank" in suites or "relent" in suites:
            curve = trace_bank_curve(theory, n_points=int(_solver(cfg, "grid", 200)))
            bad = curve.violations()
            idx = len(curve.points) // 2
        if "bank" in suites:
            report.verdict("bank-curve", not bad, None, "; ".join(bad[:3]))
            text.append(f"bank-curve\tpoints={len(curve.points)}\tviolations={len(bad)}")
            if bad:
                failed.append("bank-curve: " + bad[0])
            else:
                coeffs = tangent_coeffs(curve, idx)
                rng = np.random.default_rng(seed)
                states = [theory.sample_state(int(rng.integers(2**62))) for _ in range(n)]
                margin = tangency_margin(theory, coeffs, states)
                ok = margin >= -1e-6
                report.verdict("tangency", ok, margin)
                text.append(f"tangency\tsamples={n}\tworst_margin={margin:.3e}\t{'pass' if ok else 'FAIL'}")
                if not ok:
                    failed.append(f"tangency: margin {margin:.3e}")
        if "relent" in suites and not bad:
            coeffs = tangent_coeffs(curve, idx)
            if theory.kind == "local-control":
                anchor = s_p0_polytope(curve.points[idx].param[0])
            else:
                anchor = curve.points[idx].witness
            try:
                cmp_ = bank_vs_relent_check(theory, coeffs, anchor, min(n, 200), seed)
            except ValueError as exc:
                report.verdict("bank-vs-relent", None, None, str(exc))
            else:
                ok = cmp_.max_deviation <= 1e-6
                report.verdict("bank-vs-relent", ok, cmp_.max_deviation, f"c={cmp_.c:.6g}")
                text.append(f"bank-vs-relent\tc={cmp_.c!r}\tmax_deviation={cmp_.max_deviation:.3e}\t{'pass' if ok else 'FAIL'}")
                if not ok:
                    failed.append(f"bank-vs-relent: deviation {cmp_.max_deviation:.3e}")
    report.add_file("check.txt", "\n".join(text) + "\n")
    report.summary = {"theory": theory.label, "suites": sorted(suites), "samples": n, "failed": failed}
    if failed:
        raise _Exit(EXIT_SUITE, "suite failure: " + " | ".join(failed))


def _f_suite(theory, n, seed, report, failed):
    text = []
    rng = np.random.default_rng(seed + 1)
    for k, (m, fset) in enumerate(zip(theory.monotones, theory.invariant_sets)):
        if not isinstance(m, RelEntropyDistance):
            continue
        worst = math.inf
        for _ in range(n):
            a = theory.sample_state(int(rng.integers(2**62)))
            b = theory.sample_state(int(rng.integers(2**62)))
            lam = float(rng.uniform())
            ra, rb = closest_state(fset, a), closest_state(fset, b)
            rm = closest_state(fset, qm.mixture([a, b], [lam, 1 - lam]))
            worst = min(worst, lam * ra.value + (1 - lam) * rb.value - rm.value + rm.certificate_gap)
        ok = worst >= -m.default_tol
        report.verdict(f"F-convexity[{m.label}]", ok, worst)
        text.append(f"F-convexity\t{m.label}\tsamples={n}\tworst_margin={worst:.3e}\t{'pass' if ok else 'FAIL'}")
        if not ok:
            failed.append(f"F-convexity ({m.label}): margin {worst:.3e}")
        if isinstance(fset, Singleton) and fset.dim ** 2 <= qm.max_dim():
            g = fset.state
            w, eq = superadditivity_check(g, g, n, seed)
            ok = w >= -1e-9 and eq <= 1e-8
            report.verdict(f"F-superadditivity[{m.label}]", ok, w, f"product residual {eq:.2e}")
            text.append(f"F-superadditivity\t{m.label}\tsamples={n}\tworst_margin={w:.3e}\tproduct_residual={eq:.3e}"
                        f"\t{'pass' if ok else 'FAIL'}")
            if not ok:
                failed.append(f"F-superadditivity ({m.label}): margin {w:.3e}")
    return text


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multires", description="Multi-resource theory toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="theory config (JSON)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="sampling seed (default 0)")
        sp.add_argument("--samples", type=int, default=None)
        sp.add_argument("--tol", type=float, default=None)

    d = sub.add_parser("diagram", help="sampled resource diagram with invariant-set markers")
    common(d)
    b = sub.add_parser("bank", help="bank curve, tangent and interconversion rate")
    common(b)
    b.add_argument("--anchor", help="curve index (integer) or family parameter value")
    f = sub.add_parser("firstlaw", help="first-law residual for a transformation rho -> sigma")
    common(f)
    f.add_argument("--anchor")
    f.add_argument("--rho", help="matrix literal, JSON file, or random:SEED")
    f.add_argument("--sigma", help="matrix literal, JSON file, or random:SEED")
    f.add_argument("--perturb", type=float, default=0.0, help="offset added to dW1")
    pr = sub.add_parser("protocol", help="finite-n interconversion protocol")
    common(pr, config=False)
    pr.add_argument("--n", type=int, default=1000)
    pr.add_argument("--n-list", dest="n_list", help="comma separated n values (scaling mode)")
    pr.add_argument("--p0", type=float, default=0.9)
    pr.add_argument("--r", type=int, default=10)
    pr.add_argument("--E0", type=float, default=0.0)
    pr.add_argument("--E1", type=float, default=1.0)
    c = sub.add_parser("check", help="property suites")
    common(c)
    c.add_argument("--suite", default="all", help="comma list of M, F, bank, relent, or all")
    return p


_COMMANDS = {
    "diagram": cmd_diagram,
    "bank": cmd_bank,
    "firstlaw": cmd_firstlaw,
    "protocol": cmd_protocol,
    "check": cmd_check,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    cfg, theory, cfg_text = {}, None, ""
    try:
        if args.command != "protocol":
            cfg, theory, cfg_text = _theory_from(args)
        seed = _seed(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = RunReport(args.command, argv, cfg_text, seed)
    print(f"seed={seed}")
    try:
        _COMMANDS[args.command](args, report, cfg, theory)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BankGeometryError as exc:
        report.exit_code = EXIT_GEOMETRY
        report.verdict("geometry", False, None, str(exc))
        print(f"geometric guard: {exc}", file=sys.stderr)
    except _Exit as exc:
        report.exit_code = exc.code
        print(str(exc), file=sys.stderr)
    report.flush(Path(args.out))
    print(json.dumps({"command": report.command, "seed": seed, "summary": report.summary,
                      "exit_code": report.exit_code}, default=_json_default))
    return report.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
