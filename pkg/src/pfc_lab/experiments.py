"""Experiment configs, figure presets and the run driver behind ``pfc-lab``.

A run reads a JSON config (or a preset), validates it, dispatches to the
numeric modules, writes deterministic CSV tables (plus optional SVG charts)
into ``output_dir`` and finishes with ``manifest.json`` listing every file
with its sha256.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import ame, semiclassical, spectral, svmc, thermo
from .ising import DEFAULT_SCHEDULE, PfcParams, build_pfc, config_index, low_energy_census
from .units import TWO_PI, beta_ghz

EXPERIMENTS = ("thermo", "spectrum", "phase_diagram", "landscape", "trace_norm", "svmc_sweep",
               "svmc_scaling", "quantum_closed", "quantum_open", "rate_profile",
               "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10")
MANIFEST = "manifest.json"

DEFAULT_PARAMS = {"M": 3, "R": 1.0, "d": 0.1}
DEFAULT_CAMPAIGN = {"sweeps": 10_000, "n_samples": 20_000, "repeats": 50, "temperature_mk": 12.0}
DEFAULT_BATH = {"T": 12.0, "omega_c": 4.0, "eta_g2": 1e-3, "operator_scale": TWO_PI}
DEFAULT_OPTIONS = {
    "thermo": {"betas": [0.5, 1.0, 2.0, 4.0, 8.0]},
    "spectrum": {"s_points": 201, "levels": 9},
    "phase_diagram": {"s_points": 101, "d_values": None},
    "landscape": {"s_values": [0.5, 0.78, 0.835, 0.9], "grid_points": 201, "endpoints": None,
                  "hyperplane_points": 201},
    "trace_norm": {"s_values": [0.835, 0.841, 0.85], "grid_points": 201, "endpoints": None,
                   "hyperplane_points": 201},
    "svmc_sweep": {"variants": ["svmc", "spherical_svmc_tf"], "s_stop": 1.0, "histogram": False},
    "svmc_scaling": {"variants": ["svmc", "spherical_svmc_tf"]},
    "quantum_closed": {"t_anneal": [20.0], "levels": None, "trace_points": 101},
    "quantum_open": {"t_anneal": [200.0], "levels": None, "trace_points": 101,
                     "gap_tol": ame.GAP_TOL},
    "rate_profile": {"s_points": 201},
}

# kinds that need the bath / campaign blocks
NEEDS_BATH = {"quantum_open", "rate_profile"}
NEEDS_CAMPAIGN = {"svmc_sweep", "svmc_scaling"}
DENSE_KINDS = {"spectrum", "phase_diagram", "landscape", "trace_norm", "quantum_closed",
               "quantum_open", "rate_profile"}

SWEEP_GRID = [10, 100, 1_000, 10_000, 100_000, 1_000_000]
FIG_D_GRID = [0.05, 0.1, 0.15, 0.227, 0.3]
FIG_T_ANNEAL = [5.0, 10.0, 20.0, 50.0, 100.0, 200.0]

# Figure presets: a list of sub-runs, each a partial config merged over the defaults.
PRESETS = {
    "fig2": [{"experiment": "phase_diagram", "params": {"M": 2, "R": 1.0, "d": 0.09},
              "options": {"s_points": 201, "d_values": [round(x, 4) for x in np.linspace(0.01, 0.99, 99)]}}],
    "fig3": [{"experiment": "landscape", "params": {"M": 2, "R": 1.0, "d": 0.09},
              "options": {"s_values": [0.5, 0.7, 0.78, 0.835, 0.841, 0.85, 0.9]}},
             {"experiment": "trace_norm", "params": {"M": 2, "R": 1.0, "d": 0.09},
              "options": {"s_values": [0.83, 0.835, 0.841, 0.845, 0.85]}}],
    "fig4": [{"experiment": "svmc_scaling", "params": {"M": [2, 3, 4, 5, 6, 7, 8], "R": 1.0, "d": 0.1},
              "campaign": {"sweeps": SWEEP_GRID}, "options": {"variants": ["svmc", "spherical_svmc_tf"]}}],
    "fig5": [{"experiment": "quantum_open", "params": {"M": 3, "R": 1.0, "d": 0.1},
              "options": {"t_anneal": [200.0], "snapshot_s": 0.83}},
             {"experiment": "svmc_sweep", "params": {"M": 3, "R": 1.0, "d": 0.1},
              "campaign": {"sweeps": [10_000]},
              "options": {"variants": ["spherical_svmc_tf"], "s_stop": 0.83, "histogram": True}}],
    "fig6": [{"experiment": "quantum_closed", "params": {"M": 3, "R": 1.0, "d": FIG_D_GRID},
              "options": {"t_anneal": FIG_T_ANNEAL}},
             {"experiment": "quantum_open", "params": {"M": 3, "R": 1.0, "d": FIG_D_GRID},
              "options": {"t_anneal": FIG_T_ANNEAL}},
             {"experiment": "svmc_sweep", "params": {"M": 3, "R": 1.0, "d": FIG_D_GRID},
              "campaign": {"sweeps": SWEEP_GRID}, "options": {"variants": ["svmc", "spherical_svmc_tf"]}}],
    "fig7": [{"experiment": "quantum_open", "params": {"M": 3, "R": 1.0, "d": 0.05},
              "options": {"t_anneal": [200.0], "with_gibbs": True, "with_rate": True}}],
    "fig8": [{"experiment": "svmc_scaling", "params": {"M": [2, 3, 4, 5, 6, 7, 8], "R": 1.0, "d": 0.1},
              "campaign": {"sweeps": SWEEP_GRID}, "options": {"variants": ["svmc_tf", "spherical_svmc"]}}],
    "fig9": [{"experiment": "quantum_closed", "params": {"M": 3, "R": 1.0, "d": FIG_D_GRID},
              "options": {"t_anneal": FIG_T_ANNEAL}},
             {"experiment": "quantum_open", "params": {"M": 3, "R": 1.0, "d": FIG_D_GRID},
              "options": {"t_anneal": FIG_T_ANNEAL}},
             {"experiment": "svmc_sweep", "params": {"M": 3, "R": 1.0, "d": FIG_D_GRID},
              "campaign": {"sweeps": SWEEP_GRID}, "options": {"variants": ["svmc_tf", "spherical_svmc"]}}],
    "fig10": [{"experiment": "quantum_closed", "params": {"M": 2, "R": 1.0, "d": FIG_D_GRID},
               "options": {"t_anneal": FIG_T_ANNEAL}},
              {"experiment": "quantum_open", "params": {"M": 2, "R": 1.0, "d": FIG_D_GRID},
               "options": {"t_anneal": FIG_T_ANNEAL}},
              {"experiment": "svmc_sweep", "params": {"M": 2, "R": 1.0, "d": FIG_D_GRID},
               "campaign": {"sweeps": SWEEP_GRID},
               "options": {"variants": [v.value for v in svmc.SvmcVariant]}}],
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["experiment"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "params": {"type": "object", "properties": {
            "M": {"type": ["integer", "array"], "minimum": 2},
            "R": {"type": ["number", "array"], "exclusiveMinimum": 0},
            "d": {"type": ["number", "array"], "exclusiveMinimum": 0, "exclusiveMaximum": 1}}},
        "campaign": {"type": "object", "properties": {
            "sweeps": {"type": ["integer", "array"], "minimum": 1},
            "n_samples": {"type": "integer", "minimum": 1},
            "repeats": {"type": "integer", "minimum": 1},
            "temperature_mk": {"type": "number", "exclusiveMinimum": 0}}},
        "bath": {"type": "object", "properties": {
            "T": {"type": "number", "exclusiveMinimum": 0},
            "omega_c": {"type": "number", "exclusiveMinimum": 0},
            "eta_g2": {"type": "number", "minimum": 0},
            "operator_scale": {"type": "number", "exclusiveMinimum": 0}}},
        "options": {"type": "object"},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "plot": {"type": "boolean"},
        "overrides": {"type": "object",
                      "description": "fig presets only: blocks merged into every sub-run"},
    },
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# -- validation ------------------------------------------------------------------------

def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _check_params(params, errors, kind):
    if not isinstance(params, dict):
        errors.append("params: expected an object")
        return
    unknown = set(params) - {"M", "R", "d"}
    for k in sorted(unknown):
        errors.append(f"params.{k}: unknown field")
    for name, ok, msg in (("M", lambda v: _is_int(v) and v >= 2, "integer >= 2"),
                          ("R", lambda v: _is_number(v) and v > 0, "number > 0"),
                          ("d", lambda v: _is_number(v) and 0 < v < 1, "number in (0, 1)")):
        if name not in params:
            continue
        vals = _as_list(params[name])
        if not vals:
            errors.append(f"params.{name}: empty range")
        for v in vals:
            if not ok(v):
                errors.append(f"PfcParams.{name}: {v!r} is not a {msg}")
    if kind in DENSE_KINDS:
        for v in _as_list(params.get("M", [])):
            if _is_int(v) and 2 * v > spectral.MAX_DENSE_QUBITS:
                errors.append(f"params.M: {v} exceeds the dense-matrix bound "
                              f"({spectral.MAX_DENSE_QUBITS // 2})")
    if kind in ("quantum_closed", "quantum_open"):
        for v in _as_list(params.get("M", [])):
            if _is_int(v) and v > 4:
                errors.append(f"params.M: {v} is too large for density-matrix dynamics (max 4)")
    if kind in NEEDS_CAMPAIGN:
        for v in _as_list(params.get("M", [])):
            if _is_int(v) and 2 * v > 24:
                errors.append(f"params.M: {v} exceeds the census enumeration bound (12)")


def _check_campaign(c, errors):
    if not isinstance(c, dict):
        errors.append("campaign: expected an object")
        return
    for k in sorted(set(c) - set(DEFAULT_CAMPAIGN)):
        errors.append(f"campaign.{k}: unknown field")
    sw = _as_list(c.get("sweeps", []))
    if not sw:
        errors.append("campaign.sweeps: empty range")
    for v in sw:
        if not (_is_int(v) and v >= 1):
            errors.append(f"CampaignSpec.sweeps: {v!r} is not a positive integer")
    for k in ("n_samples", "repeats"):
        if k in c and not (_is_int(c[k]) and c[k] >= 1):
            errors.append(f"CampaignSpec.{k}: {c[k]!r} is not a positive integer")
    if "temperature_mk" in c and not (_is_number(c["temperature_mk"]) and c["temperature_mk"] > 0):
        errors.append(f"CampaignSpec.temperature_mk: {c['temperature_mk']!r} must be > 0")


def _check_bath(b, errors):
    if not isinstance(b, dict):
        errors.append("bath: expected an object")
        return
    for k in sorted(set(b) - set(DEFAULT_BATH)):
        errors.append(f"bath.{k}: unknown field")
    for k in ("T", "omega_c", "operator_scale"):
        if k in b and not (_is_number(b[k]) and b[k] > 0):
            errors.append(f"BathParams.{k}: {b[k]!r} must be > 0")
    if "eta_g2" in b and not (_is_number(b["eta_g2"]) and b["eta_g2"] >= 0):
        errors.append(f"BathParams.eta_g2: {b['eta_g2']!r} must be >= 0")


def _check_options(kind, opts, errors):
    if not isinstance(opts, dict):
        errors.append("options: expected an object")
        return
    allowed = set(DEFAULT_OPTIONS.get(kind, {})) | {"snapshot_s", "with_gibbs", "with_rate"}
    for k in sorted(set(opts) - allowed):
        errors.append(f"options.{k}: unknown option for {kind}")

    def positive_ints(name, lo=1):
        if name in opts and opts[name] is not None and not (_is_int(opts[name]) and opts[name] >= lo):
            errors.append(f"options.{name}: {opts[name]!r} must be an integer >= {lo}")

    for name in ("s_points", "grid_points", "hyperplane_points", "trace_points"):
        positive_ints(name, 2)
    positive_ints("levels")
    for name in ("s_values",):
        if name in opts:
            vals = _as_list(opts[name])
            if not vals:
                errors.append(f"options.{name}: empty range")
            if any(not (_is_number(v) and 0 <= v <= 1) for v in vals):
                errors.append(f"options.{name}: values must lie in [0, 1]")
    if opts.get("d_values") is not None:
        vals = _as_list(opts["d_values"])
        if not vals or any(not (_is_number(v) and 0 < v < 1) for v in vals):
            errors.append("options.d_values: need a non-empty list of numbers in (0, 1)")
    if "t_anneal" in opts:
        vals = _as_list(opts["t_anneal"])
        if not vals or any(not (_is_number(v) and v > 0) for v in vals):
            errors.append("options.t_anneal: need a non-empty list of positive times (ns)")
    if "betas" in opts:
        vals = _as_list(opts["betas"])
        if not vals or any(not (_is_number(v) and v > 0) for v in vals):
            errors.append("options.betas: need a non-empty list of positive numbers")
    if "variants" in opts:
        names = {v.value for v in svmc.SvmcVariant}
        vals = _as_list(opts["variants"])
        if not vals:
            errors.append("options.variants: empty list")
        for v in vals:
            if v not in names:
                errors.append(f"options.variants: unknown variant {v!r}")
    for name in ("s_stop", "snapshot_s"):
        if name in opts and not (_is_number(opts[name]) and 0 <= opts[name] <= 1):
            errors.append(f"options.{name}: must lie in [0, 1]")
    if "gap_tol" in opts and not (_is_number(opts["gap_tol"]) and opts["gap_tol"] > 0):
        errors.append("options.gap_tol: must be > 0")
    if opts.get("endpoints") is not None:
        ep = opts["endpoints"]
        ok = (isinstance(ep, list) and len(ep) == 2
              and all(isinstance(p, list) and len(p) == 2 and all(_is_number(x) for x in p) for p in ep))
        if not ok:
            errors.append("options.endpoints: expected [[theta_a, theta_b], [theta_a, theta_b]]")


def validate(raw) -> list[str]:
    """All problems found in a parsed config; an empty list means valid."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        return ["config: expected a JSON object"]
    kind = raw.get("experiment")
    if kind not in EXPERIMENTS:
        return [f"experiment: {kind!r} is not one of {', '.join(EXPERIMENTS)}"]
    known = set(CONFIG_SCHEMA["properties"])
    for k in sorted(set(raw) - known):
        errors.append(f"{k}: unknown field")
    if "seed" in raw and not (_is_int(raw["seed"]) and raw["seed"] >= 0):
        errors.append(f"seed: {raw['seed']!r} must be a non-negative integer")
    if "threads" in raw and not (_is_int(raw["threads"]) and raw["threads"] >= 1):
        errors.append(f"threads: {raw['threads']!r} must be a positive integer")
    if "output_dir" in raw and not isinstance(raw["output_dir"], str):
        errors.append("output_dir: expected a path string")
    if "plot" in raw and not isinstance(raw["plot"], bool):
        errors.append("plot: expected true or false")
    if kind in PRESETS:
        if "overrides" in raw and not isinstance(raw["overrides"], dict):
            errors.append("overrides: expected an object")
        for sub in expand_preset(raw):
            errors.extend(validate(sub))
        return sorted(set(errors), key=errors.index)
    if "overrides" in raw:
        errors.append("overrides: only valid for fig presets")
    if kind in NEEDS_BATH and "bath" not in raw:
        errors.append(f"bath: missing, required for {kind}")
    if kind in NEEDS_CAMPAIGN and "campaign" not in raw:
        errors.append(f"campaign: missing, required for {kind}")
    _check_params(raw.get("params", {}), errors, kind)
    if "campaign" in raw:
        _check_campaign(raw["campaign"], errors)
    if "bath" in raw:
        _check_bath(raw["bath"], errors)
    _check_options(kind, raw.get("options", {}), errors)
    return errors


def expand_preset(raw: dict) -> list[dict]:
    """Sub-run configs of a figure preset, with ``overrides`` merged into each."""
    overrides = raw.get("overrides", {}) if isinstance(raw.get("overrides", {}), dict) else {}
    subs = []
    for base in PRESETS[raw["experiment"]]:
        sub = copy.deepcopy(base)
        for block in ("params", "campaign", "bath", "options"):
            if block in overrides and isinstance(overrides[block], dict):
                sub.setdefault(block, {}).update(overrides[block])
        if sub["experiment"] in NEEDS_BATH:
            sub.setdefault("bath", {})
        if sub["experiment"] in NEEDS_CAMPAIGN:
            sub.setdefault("campaign", {})
        if sub["experiment"] == "quantum_open":
            sub.setdefault("bath", {})
        for k in ("seed", "threads", "plot"):
            if k in raw:
                sub[k] = raw[k]
        subs.append(sub)
    return subs


# -- resolved config ---------------------------------------------------------------

@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    campaign: dict
    bath: dict
    options: dict
    output_dir: str = "results"
    seed: int = 0
    threads: int = 1
    plot: bool = False
    raw: dict = field(default_factory=dict, repr=False)

    def param_list(self) -> list[PfcParams]:
        out = []
        for M, R, d in itertools.product(_as_list(self.params["M"]), _as_list(self.params["R"]),
                                         _as_list(self.params["d"])):
            out.append(PfcParams(int(M), float(R), float(d)))
        return out

    def bath_params(self) -> ame.BathParams:
        return ame.BathParams(**self.bath)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "params": self.params, "campaign": self.campaign,
                "bath": self.bath, "options": self.options, "output_dir": self.output_dir,
                "seed": self.seed, "threads": self.threads, "plot": self.plot}


def resolve(raw: dict) -> ExperimentConfig:
    """Validate and fill defaults (file values over defaults) for a non-preset kind."""
    errors = validate(raw)
    if errors:
        raise ConfigError(errors)
    kind = raw["experiment"]
    if kind in PRESETS:
        raise ValueError("resolve() takes a single experiment; expand presets first")
    opts = copy.deepcopy(DEFAULT_OPTIONS.get(kind, {}))
    opts.update(raw.get("options", {}))
    return ExperimentConfig(
        experiment=kind,
        params={**DEFAULT_PARAMS, **raw.get("params", {})},
        campaign={**DEFAULT_CAMPAIGN, **raw.get("campaign", {})},
        bath={**DEFAULT_BATH, **raw.get("bath", {})},
        options=opts,
        output_dir=raw.get("output_dir", "results"),
        seed=int(raw.get("seed", 0)),
        threads=int(raw.get("threads", 1)),
        plot=bool(raw.get("plot", False)),
        raw=raw,
    )


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path}: {exc.strerror}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: invalid JSON at line {exc.lineno}: {exc.msg}"]) from exc


def merge_cli(raw: dict | None, experiment: str, seed=None, out=None, plot=None,
              threads=None) -> dict:
    """Flag > file > default precedence; the positional experiment must agree with the file."""
    raw = copy.deepcopy(raw) if raw else {}
    if "experiment" in raw and raw["experiment"] != experiment:
        raise ConfigError([f"experiment: command line says {experiment!r} "
                           f"but the config file says {raw['experiment']!r}"])
    raw["experiment"] = experiment
    for key, val in (("seed", seed), ("output_dir", out), ("plot", plot), ("threads", threads)):
        if val is not None:
            raw[key] = val
    return raw


# -- output handling ---------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class OutputSet:
    """Tracks files written for one run so they can be listed or rolled back."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.files: list[Path] = []

    def prepare(self):
        self.root.mkdir(parents=True, exist_ok=True)
        existing = [p for p in self.root.rglob("*") if p.is_file()]
        if not existing:
            return
        owned = set()
        manifest = self.root / MANIFEST
        if manifest.exists():
            try:
                owned = {f["path"] for f in json.loads(manifest.read_text())["files"]}
                owned.add(MANIFEST)
            except (ValueError, KeyError, TypeError):
                owned = set()
        foreign = [p for p in existing if p.relative_to(self.root).as_posix() not in owned]
        if foreign:
            raise ConfigError([f"output_dir: {self.root} holds files from elsewhere "
                               f"(e.g. {foreign[0].name}); choose an empty directory"])
        for p in existing:
            p.unlink()

    def path(self, name: str) -> Path:
        p = self.root / name
        if p in self.files:
            raise RuntimeError(f"{name} written twice in one run")
        self.files.append(p)
        return p

    def write_csv(self, name: str, columns, rows, header_comment: str | None = None):
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
        self.path(name).write_text(buf.getvalue(), encoding="utf-8", newline="")

    def rollback(self):
        for p in self.files:
            if p.exists():
                p.unlink()
        tmp = self.root / (MANIFEST + ".tmp")
        if tmp.exists():
            tmp.unlink()
        self.files.clear()

    def write_manifest(self, payload: dict):
        entries = []
        for p in sorted(self.files):
            data = p.read_bytes()
            entries.append({"path": p.relative_to(self.root).as_posix(),
                            "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
        payload = {**payload, "files": entries}
        tmp = self.root / (MANIFEST + ".tmp")
        tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, self.root / MANIFEST)
        return payload


# -- runners ---------------------------------------------------------------------

def _tag(p: PfcParams) -> str:
    return f"M{p.M}_R{p.R:g}_d{p.d:g}"


def _run_thermo(cfg, out, plots):
    rows = thermo.thermo_rows(cfg.param_list(), [float(b) for b in _as_list(cfg.options["betas"])])
    out.write_csv("thermo.csv", thermo.THERMO_CSV_COLUMNS, rows)
    plots.append(("thermo.svg", "line", {"x": "d", "y": "avg_mag", "group": "beta",
                                         "rows": rows, "columns": thermo.THERMO_CSV_COLUMNS}))


def _gap_rows(params_list):
    rows = []
    for p in params_list:
        prob = build_pfc(p)
        s_min, gap = spectral.min_gap(prob, DEFAULT_SCHEDULE)
        rows.append((p.M, p.R, p.d, s_min, gap, ame.adiabatic_time_estimate(prob, gap=gap)))
    return rows


GAP_COLUMNS = ("M", "R", "d", "s_min", "gap_GHz", "adiabatic_time_ns")


def _run_spectrum(cfg, out, plots):
    k = int(cfg.options["levels"])
    s = np.linspace(0, 1, int(cfg.options["s_points"]))
    rows = []
    for p in cfg.param_list():
        prob = build_pfc(p)
        kk = min(k, 2 ** prob.n_qubits)
        for r in spectral.spectrum_rows(prob, DEFAULT_SCHEDULE, s, kk):
            rows.append((p.M, p.R, p.d, *r, *([float("nan")] * (k - kk))))
    cols = ("M", "R", "d", "s", *[f"E{j}" for j in range(k)])
    out.write_csv("spectrum.csv", cols, rows)
    out.write_csv("min_gap.csv", GAP_COLUMNS, _gap_rows(cfg.param_list()))
    plots.append(("spectrum.svg", "spectrum", {"rows": rows, "k": k}))


def _run_phase_diagram(cfg, out, plots):
    s = np.linspace(0, 1, int(cfg.options["s_points"]))
    d_values = cfg.options.get("d_values") or _as_list(cfg.params["d"])
    rows, bounds, gaps = [], [], []
    for M in _as_list(cfg.params["M"]):
        for R in _as_list(cfg.params["R"]):
            pd = spectral.phase_diagram(int(M), d_values, s, float(R), DEFAULT_SCHEDULE)
            rows += [(M, R, *r) for r in pd.rows()]
            bounds += [(M, R, d, sc) for d, sc in pd.sign_changes]
            gaps += _gap_rows([PfcParams(int(M), float(R), float(d)) for d in d_values])
    out.write_csv("phase_diagram.csv", ("M", "R", "d", "s", "magnetization"), rows)
    out.write_csv("phase_boundary.csv", ("M", "R", "d", "s_sign_change"), bounds)
    out.write_csv("min_gap.csv", GAP_COLUMNS, gaps)
    plots.append(("phase_diagram.svg", "heatmap", {"rows": rows, "gaps": gaps}))


def hyperplane_endpoints(params: PfcParams, s: float, explicit=None):
    """Segment ends: explicit pair, else the two lowest refined minima, else the
    global minimum +- pi/2 along theta_b."""
    if explicit is not None:
        return tuple(semiclassical.CoherentAngles(*map(float, p)) for p in explicit)
    mins = semiclassical.landscape(params, DEFAULT_SCHEDULE, s).local_minima()
    mins = [semiclassical.refine_minimum(params, DEFAULT_SCHEDULE, s, m) for m in mins]
    if len(mins) >= 2:
        return mins[0], mins[1]
    g = mins[0]
    return (semiclassical.CoherentAngles(g.theta_a, g.theta_b - np.pi / 2),
            semiclassical.CoherentAngles(g.theta_a, g.theta_b + np.pi / 2))


def _segment_rows(s, p0, p1, prof):
    rows = []
    for t, v in prof:
        ta = p0.theta_a + t * (p1.theta_a - p0.theta_a)
        tb = p0.theta_b + t * (p1.theta_b - p0.theta_b)
        rows.append((s, t, ta, tb, v))
    return rows


def _run_landscape(cfg, out, plots, distance=False):
    grid = semiclassical.angle_grid(int(cfg.options["grid_points"]))
    n_hp = int(cfg.options["hyperplane_points"])
    name = "trace_norm" if distance else "landscape"
    value = "D" if distance else "V"
    for p in cfg.param_list():
        prob = build_pfc(p)
        grid_rows, min_rows, hp_rows = [], [], []
        for s in _as_list(cfg.options["s_values"]):
            s = float(s)
            p0, p1 = hyperplane_endpoints(p, s, cfg.options.get("endpoints"))
            if distance:
                snap = spectral.snapshot(prob, DEFAULT_SCHEDULE, s)
                L = semiclassical.distance_landscape(snap, grid)
                prof = semiclassical.hyperplane_distance(snap, p0, p1, n_hp)
            else:
                L = semiclassical.landscape(p, DEFAULT_SCHEDULE, s, grid)
                prof = semiclassical.hyperplane_scan(p, DEFAULT_SCHEDULE, s, p0, p1, n_hp)
            grid_rows += [(s, *r) for r in L.rows()]
            for rank, m in enumerate(L.local_minima()):
                i = int(np.argmin(np.abs(L.theta_a - m.theta_a)))
                j = int(np.argmin(np.abs(L.theta_b - m.theta_b)))
                min_rows.append((s, rank, m.theta_a, m.theta_b, float(L.values[i, j])))
            hp_rows += _segment_rows(s, p0, p1, prof)
        tag = _tag(p)
        out.write_csv(f"{name}_{tag}.csv", ("s", "theta_a", "theta_b", value), grid_rows)
        out.write_csv(f"{name}_minima_{tag}.csv", ("s", "rank", "theta_a", "theta_b", value), min_rows)
        out.write_csv(f"{name}_hyperplane_{tag}.csv", ("s", "t", "theta_a", "theta_b", value), hp_rows)
        plots.append((f"{name}_{tag}.svg", "landscape", {"rows": grid_rows, "hp": hp_rows,
                                                         "value": value}))


def _campaign_job(args):
    prob, variant, spec, s_stop = args
    return svmc.campaign(prob, variant, spec, DEFAULT_SCHEDULE, workers=1, s_stop=s_stop)


def _run_svmc(cfg, out, plots, scaling=False):
    c = cfg.campaign
    variants = [svmc.SvmcVariant(v) for v in _as_list(cfg.options["variants"])]
    s_stop = float(cfg.options.get("s_stop", 1.0))
    jobs, keys = [], []
    for p in cfg.param_list():
        prob = build_pfc(p)
        for v in variants:
            for sw in _as_list(c["sweeps"]):
                spec = svmc.CampaignSpec(int(sw), int(c["n_samples"]), int(c["repeats"]),
                                         float(c["temperature_mk"]), cfg.seed)
                jobs.append((prob, v, spec, s_stop))
                keys.append(p)
    if cfg.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(_campaign_job, jobs))
    else:
        results = [_campaign_job(j) for j in jobs]
    rows = [r.csv_row(p) for r, p in zip(results, keys)]
    name = "svmc_scaling" if scaling else "svmc"
    out.write_csv(f"{name}.csv", svmc.CAMPAIGN_CSV_COLUMNS, rows,
                  header_comment=None if s_stop == 1.0 else f"readout at s <= {s_stop:g}")
    if cfg.options.get("histogram"):
        hist = []
        for r, p in zip(results, keys):
            census = low_energy_census(build_pfc(p))
            ground = config_index(census.ground)
            manifold = {config_index(x) for x in census.first_excited}
            total = r.state_counts.sum()
            for idx in np.flatnonzero(r.state_counts):
                label = "ground" if idx == ground else ("first_excited" if idx in manifold else "other")
                hist.append((r.variant.value, p.M, p.d, r.spec.sweeps, int(idx), label,
                             int(r.state_counts[idx]), r.state_counts[idx] / total))
        out.write_csv(f"{name}_histogram.csv",
                      ("variant", "M", "d", "sweeps", "basis_index", "class", "count", "probability"),
                      hist)
    plots.append((f"{name}.svg", "svmc", {"rows": rows, "scaling": scaling}))


def _quantum_traj(args):
    prob, t_anneal, bath, s_out, levels, gap_tol = args
    if bath is None:
        return ame.evolve_closed(prob, DEFAULT_SCHEDULE, t_anneal, s_out, levels=levels)
    return ame.evolve_ame(prob, DEFAULT_SCHEDULE, bath, t_anneal, s_out, levels=levels,
                          gap_tol=gap_tol)


def _run_quantum(cfg, out, plots, open_system):
    bath = cfg.bath_params() if open_system else None
    opts = cfg.options
    label = "open" if open_system else "closed"
    jobs, meta = [], []
    for p in cfg.param_list():
        prob = build_pfc(p)
        s_min, _ = spectral.min_gap(prob, DEFAULT_SCHEDULE)
        extra = [opts["snapshot_s"]] if "snapshot_s" in opts else []
        s_out = ame.output_grid(s_min, n_coarse=int(opts["trace_points"]), extra=extra)
        levels = opts.get("levels") or min(2 ** p.M + 1, 2 ** prob.n_qubits)
        for t in _as_list(opts["t_anneal"]):
            jobs.append((prob, float(t), bath, s_out, None, opts.get("gap_tol", ame.GAP_TOL)))
            meta.append((p, float(t), levels, s_min))
    if cfg.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.threads) as pool:
            trajs = list(pool.map(_quantum_traj, jobs))
    else:
        trajs = [_quantum_traj(j) for j in jobs]
    end_rows, trace_rows, snap_rows, gibbs_rows = [], [], [], []
    for traj, (p, t, levels, s_min) in zip(trajs, meta):
        pops = traj.populations
        n_man = 2 ** p.M
        end_rows.append((label, p.M, p.R, p.d, t, pops[-1, 0], pops[-1, 1:1 + n_man].sum(),
                         pops[-1, 1], abs(traj.trace - 1).max()))
        for s, row in zip(traj.times, pops):
            trace_rows.append((label, p.M, p.R, p.d, t, s, *row[:levels]))
        if "snapshot_s" in opts:
            s_snap = float(opts["snapshot_s"])
            i = int(np.argmin(np.abs(traj.times - s_snap)))
            for j, pj in enumerate(pops[i]):
                snap_rows.append((label, p.M, p.d, t, float(traj.times[i]), j, pj))
        if opts.get("with_gibbs") or opts.get("with_rate"):
            prob = build_pfc(p)
            bp = cfg.bath_params()
            beta = beta_ghz(bp.T)
            rates = dict(ame.transition_rate_profile(prob, DEFAULT_SCHEDULE, bp, traj.times))
            diag = spectral.problem_diagonal(prob)
            for s, row in zip(traj.times, pops):
                g = spectral.gibbs_state(prob, DEFAULT_SCHEDULE, s, beta, diag).p0
                gibbs_rows.append((p.M, p.d, t, s, row[0], g, rates[float(s)]))
    out.write_csv(f"quantum_{label}_endpoints.csv",
                  ("dynamics", "M", "R", "d", "t_anneal_ns", "P_ground_final", "P_manifold_final",
                   "P_E1_final", "max_trace_error"), end_rows)
    width = max(m[2] for m in meta)
    trace_rows = [r + (float("nan"),) * (6 + width - len(r)) for r in trace_rows]
    out.write_csv(f"quantum_{label}_populations.csv",
                  ("dynamics", "M", "R", "d", "t_anneal_ns", "s", *[f"P_E{j}" for j in range(width)]),
                  trace_rows)
    if snap_rows:
        out.write_csv(f"quantum_{label}_snapshot.csv",
                      ("dynamics", "M", "d", "t_anneal_ns", "s", "level", "population"), snap_rows)
    if gibbs_rows:
        out.write_csv(f"quantum_{label}_gibbs_rate.csv",
                      ("M", "d", "t_anneal_ns", "s", "P0_dynamics", "P0_gibbs", "gamma_10_per_ns"),
                      gibbs_rows)
    plots.append((f"quantum_{label}.svg", "quantum", {"rows": end_rows, "trace": trace_rows,
                                                      "gibbs": gibbs_rows}))


def _run_rate_profile(cfg, out, plots):
    bath = cfg.bath_params()
    s = np.linspace(0, 1, int(cfg.options["s_points"]))
    rows = []
    for p in cfg.param_list():
        prob = build_pfc(p)
        diag = spectral.problem_diagonal(prob)
        for si, g in ame.transition_rate_profile(prob, DEFAULT_SCHEDULE, bath, s):
            gap = spectral.gap_at(prob, DEFAULT_SCHEDULE, si, diag)
            rows.append((p.M, p.R, p.d, si, gap, g))
    out.write_csv("rate_profile.csv", ("M", "R", "d", "s", "gap_GHz", "gamma_10_per_ns"), rows)
    plots.append(("rate_profile.svg", "rate", {"rows": rows}))


RUNNERS = {
    "thermo": _run_thermo,
    "spectrum": _run_spectrum,
    "phase_diagram": _run_phase_diagram,
    "landscape": _run_landscape,
    "trace_norm": lambda c, o, p: _run_landscape(c, o, p, distance=True),
    "svmc_sweep": _run_svmc,
    "svmc_scaling": lambda c, o, p: _run_svmc(c, o, p, scaling=True),
    "quantum_closed": lambda c, o, p: _run_quantum(c, o, p, False),
    "quantum_open": lambda c, o, p: _run_quantum(c, o, p, True),
    "rate_profile": _run_rate_profile,
}


def run(raw: dict) -> dict:
    """Validate, execute and record one experiment or preset; returns the manifest.

    Raises :class:`ConfigError` for invalid configs. Any other failure removes
    the files written so far and propagates.
    """
    errors = validate(raw)
    if errors:
        raise ConfigError(errors)
    kind = raw["experiment"]
    subs = expand_preset(raw) if kind in PRESETS else [raw]
    configs = [resolve({**s, "output_dir": raw.get("output_dir", "results")}) for s in subs]
    out = OutputSet(Path(raw.get("output_dir", "results")))
    out.prepare()
    start = time.perf_counter()
    try:
        plots = []
        for cfg in configs:
            RUNNERS[cfg.experiment](cfg, out, plots)
        if raw.get("plot", False):
            from .plotting import render
            for name, style, data in plots:
                render(out.path(name), style, data)
        return out.write_manifest({
            "experiment": kind,
            "config": raw,
            "resolved": [c.to_dict() for c in configs],
            "software": {"name": "pfc_lab", "version": __version__},
            "seed": int(raw.get("seed", 0)),
            "wall_clock_s": round(time.perf_counter() - start, 3),
        })
    except BaseException:
        out.rollback()
        raise
