"""Experiment specs, sweep execution and CSV / plot-script output."""
from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from .closed_form import UnboundedLimitError, rate_closed_form, rate_high_power_limit
from .model import (
    ConfigError,
    GeometryParams,
    LargeScaleFading,
    build_config,
    drop_users,
    parse_bits,
)
from .montecarlo import (
    AQNM,
    EXACT_QUANTIZER,
    McSettings,
    NonFiniteResultError,
    estimate_se_mc,
)
from .power import PowerModel, receiver_power
from .quantizer import alpha_for_bits

METHODS = ("closed-form", "monte-carlo-aqnm", "monte-carlo-exact", "high-power-limit")
AXES = ("p_u_dB", "bits", "kappa")
CSV_COLUMNS = (
    "sweep_value",
    "case_id",
    "method",
    "user_index",
    "se_bits",
    "ci_halfwidth",
    "kappa_realized",
    "power_watts",
)
POWER_COLUMNS = ("case_id", "M0", "M1", "b", "power_watts")
PRESETS = ("fig1", "fig2", "fig3", "power")
WORKERS_ENV = "MIXEDADC_WORKERS"


class SpecError(ValueError):
    """Invalid experiment file; the message names the file, line and field."""


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class CaseSpec:
    case_id: str
    M: int
    M0: int
    b: object


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    axis: str
    values: tuple
    methods: tuple
    cases: tuple
    N: int
    p_u_dB: float
    fading: LargeScaleFading
    mc: McSettings = McSettings()
    alpha_source: str = "table"
    power: PowerModel = PowerModel()
    output: Path = Path("results")
    geometry: GeometryParams = GeometryParams()

    def __post_init__(self):
        if not self.values:
            raise SpecError("sweep list is empty")
        if not self.methods:
            raise SpecError("method list is empty")
        if not self.cases:
            raise SpecError("no [case ...] sections")
        if self.axis not in AXES:
            raise SpecError(f"unknown sweep axis {self.axis!r}; expected one of {AXES}")
        for m in self.methods:
            if m not in METHODS:
                raise SpecError(f"unknown method {m!r}; expected one of {METHODS}")
        if self.axis == "kappa" and any(not 0.0 <= v <= 1.0 for v in self.values):
            raise SpecError("kappa sweep values must lie in [0, 1]")
        if self.fading.N != self.N:
            raise SpecError(f"{self.fading.N} betas given for N={self.N} users")


@dataclass(frozen=True)
class ResultRow:
    sweep_value: object
    case_id: str
    method: str
    user_index: object  # int, or "total"
    se_bits: float
    ci_halfwidth: float | None
    kappa_realized: float
    power_watts: float


# -- spec file parsing ----------------------------------------------------------------


def _locate(text: str, section: str, key: str) -> int | None:
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"\[(.+)\]$", stripped)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", stripped, re.I):
            return lineno
    return None


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, text: str, source: str):
        self.parser = parser
        self.text = text
        self.source = source

    def error(self, section, key, msg) -> SpecError:
        line = _locate(self.text, section, key) if key else None
        where = f"{self.source}:{line}" if line else self.source
        field_name = f"[{section}] {key}" if key else f"[{section}]"
        return SpecError(f"{where}: {field_name}: {msg}")

    def get(self, section, key, conv=str, default=None, required=False):
        if not self.parser.has_option(section, key):
            if required:
                raise self.error(section, None, f"missing required field {key!r}")
            return default
        raw = self.parser.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError, ConfigError) as exc:
            raise self.error(section, key, f"bad value {raw!r} ({exc})") from None


def _int(raw: str) -> int:
    return int(raw.strip(), 0)


def _list(raw: str) -> list:
    return [t.strip() for t in raw.replace("\n", ",").split(",") if t.strip()]


def _float_list(raw: str) -> list:
    return [float(t) for t in _list(raw)]


def _sweep_values(reader: _Reader, axis: str) -> tuple:
    sec = "experiment"
    conv = (lambda raw: [parse_bits(t) for t in _list(raw)]) if axis == "bits" else _float_list
    values = reader.get(sec, "values", conv)
    if values is None:
        start = reader.get(sec, "start", float)
        stop = reader.get(sec, "stop", float)
        step = reader.get(sec, "step", float)
        if start is None or stop is None or step is None:
            raise reader.error(sec, None, "give either 'values' or all of 'start', 'stop', 'step'")
        if step <= 0:
            raise reader.error(sec, "step", "step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [round(start + k * step, 12) for k in range(max(count, 0))]
        if axis == "bits":
            values = [parse_bits(int(v)) for v in values]
    return tuple(values)


def _fading(reader: _Reader, N: int) -> tuple:
    geometry = GeometryParams(
        r_c=reader.get("geometry", "r_c", float, 1000.0),
        r_h=reader.get("geometry", "r_h", float, 100.0),
        gamma=reader.get("geometry", "gamma", float, 2.1),
        sigma_shad=reader.get("geometry", "sigma_shad", float, 4.9),
    )
    mode = reader.get("fading", "betas", str, "reference").strip()
    if mode.lower() == "reference":
        fading = LargeScaleFading.reference()
    elif mode.lower() == "drop":
        seed = reader.get("fading", "seed", _int, 0)
        fading = drop_users(geometry, N, np.random.default_rng(seed))
    else:
        betas = reader.get("fading", "betas", _float_list)
        try:
            fading = LargeScaleFading(np.array(betas))
        except ConfigError as exc:
            raise reader.error("fading", "betas", str(exc)) from None
    return fading, geometry


def _cases(reader: _Reader, defaults: dict, axis: str) -> tuple:
    cases = []
    for section in reader.parser.sections():
        if not section.lower().startswith("case"):
            continue
        case_id = section[4:].strip() or f"case{len(cases) + 1}"
        M0 = reader.get(section, "M0", _int)
        M1 = reader.get(section, "M1", _int)
        M = reader.get(section, "M", _int)
        if M is None:
            M = M0 + M1 if M0 is not None and M1 is not None else defaults["M"]
        if M0 is None and M is not None:
            if M1 is not None:
                M0 = M - M1
            elif axis == "kappa":
                M0 = 0
            else:
                M0 = defaults["M0"] if defaults["M0"] is not None else M
        if M is None or M0 is None:
            raise reader.error(section, None, "need M0 and M1, or M with M0/M1")
        b = reader.get(section, "b", parse_bits, defaults["b"])
        if not 0 <= M0 <= M:
            raise reader.error(section, "M0", f"M0={M0} outside [0, M={M}]")
        cases.append(CaseSpec(case_id, M, M0, b))
    return tuple(cases)


def _reader(text: str, source: str) -> _Reader:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise SpecError(f"{source}: {exc}") from None
    return _Reader(parser, text, source)


def _system_defaults(reader: _Reader) -> dict:
    defaults = {
        "M": reader.get("system", "M", _int),
        "M0": reader.get("system", "M0", _int),
        "b": reader.get("system", "b", parse_bits, 4),
    }
    if defaults["M"] is not None and defaults["M0"] is None:
        defaults["M0"] = defaults["M"]
    return defaults


def _power_model(reader: _Reader) -> PowerModel:
    try:
        return PowerModel(
            p_full_per_adc=reader.get("power", "p_full_per_adc", float, 0.43),
            c0=reader.get("power", "c0", float, 1e-4),
            c1=reader.get("power", "c1", float, 0.002),
            b_max=reader.get("power", "b_max", _int, 12),
        )
    except ValueError as exc:
        raise reader.error("power", None, str(exc)) from None


def parse_spec(text: str, source: str = "<spec>") -> ExperimentSpec:
    reader = _reader(text, source)
    parser = reader.parser
    if not parser.has_section("experiment"):
        raise SpecError(f"{source}: missing [experiment] section")

    name = reader.get("experiment", "name", str, Path(source).stem)
    axis = reader.get("experiment", "axis", str, "p_u_dB")
    if axis not in AXES:
        raise reader.error("experiment", "axis", f"expected one of {AXES}")
    values = _sweep_values(reader, axis)
    methods = tuple(reader.get("experiment", "methods", _list, ["closed-form"]))
    alpha_source = reader.get("experiment", "alpha_source", str, "table")
    if alpha_source not in ("table", "oracle"):
        raise reader.error("experiment", "alpha_source", "expected 'table' or 'oracle'")
    output = Path(reader.get("experiment", "output", str, f"results/{name}"))

    defaults = _system_defaults(reader)
    N = reader.get("system", "N", _int, 10)
    p_u_dB = reader.get("system", "p_u_dB", float, 5.0)
    fading, geometry = _fading(reader, N)
    cases = _cases(reader, defaults, axis)

    mc = McSettings(
        trials=reader.get("montecarlo", "trials", _int, 2000),
        noise_draws_per_channel=reader.get("montecarlo", "noise_draws_per_channel", _int, 5),
        seed=reader.get("montecarlo", "seed", _int, 0x5EED),
        estimator=reader.get("montecarlo", "estimator", str, "conditional-expectation"),
        symbols_per_channel=reader.get("montecarlo", "symbols_per_channel", _int, 256),
    )
    power = _power_model(reader)
    try:
        return ExperimentSpec(
            name=name,
            axis=axis,
            values=values,
            methods=methods,
            cases=cases,
            N=N,
            p_u_dB=p_u_dB,
            fading=fading,
            mc=mc,
            alpha_source=alpha_source,
            power=power,
            output=output,
            geometry=geometry,
        )
    except SpecError as exc:
        raise SpecError(f"{source}: {exc}") from None


@dataclass(frozen=True)
class PowerSpec:
    """The part of a spec file a power report needs: cases and the power model."""

    name: str
    cases: tuple
    model: PowerModel = PowerModel()


def parse_power_spec(text: str, source: str = "<spec>") -> PowerSpec:
    """Read only ``[case ...]``, ``[system]`` and ``[power]``; an empty case list is allowed."""
    reader = _reader(text, source)
    name = reader.get("experiment", "name", str, Path(source).stem)
    cases = _cases(reader, _system_defaults(reader), "p_u_dB")
    return PowerSpec(name, cases, _power_model(reader))


def _read_text(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise SpecError(f"{path}: cannot read spec file ({exc.strerror})") from None


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    return parse_spec(_read_text(path), str(path))


def load_power_spec(path) -> PowerSpec:
    path = Path(path)
    return parse_power_spec(_read_text(path), str(path))


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise SpecError(f"unknown preset {name!r}; expected one of {PRESETS}")
    return resources.files("mixedadc.presets").joinpath(f"{name}.ini").read_text()


def load_preset(name: str) -> ExperimentSpec:
    return parse_spec(preset_text(name), f"{name}.ini")


# -- execution ----------------------------------------------------------------


def _point_config(spec: ExperimentSpec, case: CaseSpec, value):
    M0, b, p_u_dB = case.M0, case.b, spec.p_u_dB
    if spec.axis == "p_u_dB":
        p_u_dB = value
    elif spec.axis == "bits":
        b = value
    else:
        M0 = int(math.floor(value * case.M + 0.5))
    return build_config(case.M, M0, spec.N, p_u_dB, b)


def _evaluate(task):
    spec, value, case, method = task
    config = _point_config(spec, case, value)
    alpha = alpha_for_bits(config.b, spec.alpha_source)
    power = receiver_power(config.M0, config.M1, config.b, spec.power)
    if method == "closed-form":
        est = rate_closed_form(config, spec.fading, alpha)
    elif method == "high-power-limit":
        try:
            est = rate_high_power_limit(config, spec.fading, alpha)
        except UnboundedLimitError:
            est = None
    else:
        settings = replace(
            spec.mc, quant_path=EXACT_QUANTIZER if method == "monte-carlo-exact" else AQNM
        )
        try:
            est = estimate_se_mc(config, spec.fading, alpha, settings)
        except NonFiniteResultError as exc:
            raise ExperimentError(
                f"{exc} at {spec.axis}={value}, case={case.case_id}, method={method}, "
                f"M={config.M}, M0={config.M0}, b={config.b}, p_u_dB={config.p_u_dB:.3f}"
            ) from None

    rows = []
    common = dict(
        sweep_value=value,
        case_id=case.case_id,
        method=method,
        kappa_realized=config.kappa,
        power_watts=power,
    )
    if est is None:
        per_user = [math.inf] * config.N
        ci, total, total_ci = [None] * config.N, math.inf, None
    else:
        per_user = est.per_user.tolist()
        ci = est.ci_halfwidth.tolist() if est.ci_halfwidth is not None else [None] * config.N
        total, total_ci = est.total, est.total_ci_halfwidth
    for n, (se, hw) in enumerate(zip(per_user, ci)):
        rows.append(ResultRow(user_index=n, se_bits=se, ci_halfwidth=hw, **common))
    rows.append(ResultRow(user_index="total", se_bits=total, ci_halfwidth=total_ci, **common))
    return rows


def default_workers() -> int:
    count = os.cpu_count() or 1
    cap = os.environ.get(WORKERS_ENV)
    if cap:
        count = min(count, max(1, int(cap)))
    return count


def run_experiment(spec: ExperimentSpec, workers: int | None = None) -> list:
    """Evaluate every (sweep value, case, method) point; rows come back in sweep order."""
    workers = default_workers() if workers is None else max(1, workers)
    tasks = [(spec, v, c, m) for v in spec.values for c in spec.cases for m in spec.methods]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            chunks = list(pool.map(_evaluate, tasks))
    else:
        chunks = [_evaluate(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def all_finite(rows) -> bool:
    return all(math.isfinite(r.se_bits) for r in rows)


# -- output ----------------------------------------------------------------


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return format(value, ".9g")


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


_AXIS_LABELS = {
    "p_u_dB": "User transmit power p_u (dB)",
    "bits": "Quantization bits b",
    "kappa": "Full-resolution fraction kappa",
}

_PLOT_TEMPLATE = '''\
"""Plot total SE per (case, method) from {csv_name}."""
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent
CSV_PATH = HERE / {csv_name!r}
CURVES = {curves!r}
XLABEL = {xlabel!r}


def main():
    if not CSV_PATH.exists():
        sys.exit(f"missing data file: {{CSV_PATH}}")
    with open(CSV_PATH, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["user_index"] == "total"]
    fig, ax = plt.subplots(figsize=(7, 5))
    for case_id, method in CURVES:
        pts = [(float(r["sweep_value"]), float(r["se_bits"]))
               for r in rows if r["case_id"] == case_id and r["method"] == method]
        pts.sort()
        style = "-" if method.startswith("closed-form") else "o--"
        ax.plot([p[0] for p in pts], [p[1] for p in pts], style, label=f"{{case_id}} / {{method}}")
    ax.set_xlabel(XLABEL)
    ax.set_ylabel("Total uplink SE (bits/s/Hz)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small")
    out = CSV_PATH.with_suffix(".png")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    print(out)


if __name__ == "__main__":
    main()
'''


def emit_plot_script(rows, csv_path, script_path=None, xlabel: str | None = None) -> Path:
    """Write a standalone matplotlib script that plots ``csv_path`` (referenced relatively).

    ``rows`` may be :class:`ResultRow` objects or CSV dict rows.
    """
    if not rows:
        raise ValueError("cannot emit a plot script for an empty table")
    csv_path = Path(csv_path)
    script_path = Path(script_path) if script_path else csv_path.with_name(f"plot_{csv_path.stem}.py")
    curves = []
    for r in rows:
        key = (r["case_id"], r["method"]) if isinstance(r, dict) else (r.case_id, r.method)
        if key not in curves:
            curves.append(key)
    text = _PLOT_TEMPLATE.format(
        csv_name=os.path.relpath(csv_path, script_path.parent),
        curves=curves,
        xlabel=xlabel or "sweep value",
    )
    script_path.parent.mkdir(parents=True, exist_ok=True)
    script_path.write_text(text)
    return script_path


def write_results(spec: ExperimentSpec, rows, out_dir=None, extra_meta=None) -> Path:
    out = Path(out_dir) if out_dir is not None else spec.output
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{spec.name}.csv"
        csv_path.write_text(rows_to_csv(rows))
    except OSError as exc:
        raise ExperimentError(f"cannot write results to {out}: {exc.strerror}") from None
    meta = {
        "name": spec.name,
        "created": datetime.now(timezone.utc).isoformat(),
        "axis": spec.axis,
        "values": [fmt(v) for v in spec.values],
        "methods": list(spec.methods),
        "cases": [vars(c) | {"b": fmt(c.b)} for c in spec.cases],
        "mc": vars(spec.mc),
        "betas": spec.fading.betas.tolist(),
        "alpha_source": spec.alpha_source,
    }
    meta.update(extra_meta or {})
    (out / f"{spec.name}.meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    emit_plot_script(rows, csv_path, xlabel=_AXIS_LABELS[spec.axis])
    return csv_path


# -- power report ----------------------------------------------------------------


@dataclass(frozen=True)
class PowerRow:
    case_id: str
    M0: int
    M1: int
    b: object
    power_watts: float


def power_report(cases, model: PowerModel = PowerModel()) -> list:
    """``cases`` holds ``(case_id, M0, M1, b)`` tuples or :class:`CaseSpec` objects."""
    rows = []
    for c in cases:
        if isinstance(c, CaseSpec):
            c = (c.case_id, c.M0, c.M - c.M0, c.b)
        case_id, M0, M1, b = c
        rows.append(PowerRow(case_id, M0, M1, b, receiver_power(M0, M1, b, model)))
    return rows


def power_rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(POWER_COLUMNS)
    for r in rows:
        writer.writerow([fmt(getattr(r, c)) for c in POWER_COLUMNS])
    return buf.getvalue()
