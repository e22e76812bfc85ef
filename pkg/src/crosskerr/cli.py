"""Command-line runner: single protocol runs (JSON) and parameter sweeps (CSV).

Exit codes: 0 success, 2 config error, 3 precondition failure,
4 tolerance failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import protocols as pr
from .hilbert import TruncationError
from .measurement import PreconditionError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_TOLERANCE = 4

PROBABILITY_TOL = 1e-8
PATH_AGREEMENT_TOL = 1e-4
DIGITS = 12


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "protocol": None,
    "alpha": 2.0,
    "beta": None,
    "gamma": None,
    "delta_width": 0.0,
    "n_pairs": 1,
    "a": 1.0,
    "b": 0.0,
    "mode": "ideal",
    "postselect": False,
    "n_max": None,
    "delta_over_lambda": None,
    "outcomes": None,
}

COMPLEX_KEYS = {"alpha", "beta", "a", "b"}
FLOAT_KEYS = {"gamma", "delta_width", "delta_over_lambda"}
INT_KEYS = {"n_pairs", "n_max"}


@dataclass(frozen=True)
class ProtocolSpec:
    run: Callable[[dict], pr.ProtocolReport]
    params: tuple[str, ...]
    summary: str


def _beta(c):
    return c["alpha"] if c["beta"] is None else c["beta"]


def _pair(c):
    if c["gamma"] is not None:
        amp = 1j * c["gamma"]
        return amp, amp
    return c["alpha"], _beta(c)


def _gate_check(c):
    dl = 50.0 if c["delta_over_lambda"] is None else c["delta_over_lambda"]
    return pr.dispersive_gate_check(c["alpha"], dl, c["n_max"])


def _round_trip(c):
    if c["gamma"] is None:
        raise ConfigError("round_trip needs gamma")
    return pr.round_trip(c["gamma"], c["n_max"])


PROTOCOLS: dict[str, ProtocolSpec] = {
    "transfer_qubit_to_qubit": ProtocolSpec(
        lambda c: pr.transfer_qubit_to_qubit(c["a"], c["b"]),
        ("a", "b"), "qubit state moved between two qubits by a control-phase gate"),
    "transfer_qubit_to_cv": ProtocolSpec(
        lambda c: pr.transfer_qubit_to_cv(c["a"], c["b"], c["alpha"], c["postselect"], c["n_max"],
                                          c["delta_over_lambda"]),
        ("a", "b", "alpha", "postselect", "n_max", "delta_over_lambda"),
        "qubit state written onto the phase of a coherent state"),
    "entanglement_transfer": ProtocolSpec(
        lambda c: pr.entanglement_transfer(*_pair(c), n_max=c["n_max"], postselect=c["postselect"],
                                           delta_over_lambda=c["delta_over_lambda"]),
        ("alpha", "beta", "gamma", "postselect", "n_max", "delta_over_lambda"),
        "atomic Bell pair moved onto two coherent modes"),
    "reciprocation": ProtocolSpec(
        lambda c: pr.reciprocation(*_pair(c), width=c["delta_width"], mode=c["mode"], n_max=c["n_max"]),
        ("alpha", "beta", "gamma", "delta_width", "mode", "n_max"),
        "entanglement returned from a two-mode cat to fresh atoms"),
    "round_trip": ProtocolSpec(
        _round_trip, ("gamma", "n_max"), "entanglement transfer followed by ideal reciprocation"),
    "multipair_transfer": ProtocolSpec(
        lambda c: pr.multipair_transfer(c["n_pairs"], c["alpha"], c["outcomes"], c["n_max"]),
        ("n_pairs", "alpha", "outcomes", "n_max"), "n Bell pairs moved onto two modes"),
    "multipair_reciprocation": ProtocolSpec(
        lambda c: pr.multipair_reciprocation(c["n_pairs"], c["alpha"], n_max=c["n_max"]),
        ("n_pairs", "alpha", "n_max"), "n Bell pairs returned from two modes"),
    "entanglement_swap": ProtocolSpec(
        lambda c: pr.entanglement_swap(c["alpha"], n_max=c["n_max"]),
        ("alpha", "n_max"), "entanglement swapped onto an atom and a mode"),
    "dispersive_gate_check": ProtocolSpec(
        _gate_check, ("alpha", "delta_over_lambda", "n_max"),
        "exact Jaynes-Cummings evolution against the conditional phase gate"),
}

SWEEPABLE = COMPLEX_KEYS | FLOAT_KEYS | INT_KEYS


# -- config --------------------------------------------------------------------


def _to_complex(key, v) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        v = complex(float(v[0]), float(v[1]))
    try:
        z = complex(v.replace(" ", "")) if isinstance(v, str) else complex(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot read {v!r} as a number") from None
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ConfigError(f"{key}: must be finite")
    return z


def _simplify(z: complex):
    return z.real if z.imag == 0 else z


def coerce(key: str, v):
    if v is None:
        return None
    if key in COMPLEX_KEYS:
        return _simplify(_to_complex(key, v))
    if key in FLOAT_KEYS:
        z = _to_complex(key, v)
        if z.imag != 0:
            raise ConfigError(f"{key}: must be real")
        return z.real
    if key in INT_KEYS:
        z = _to_complex(key, v)
        if z.imag != 0 or z.real != int(z.real):
            raise ConfigError(f"{key}: must be an integer")
        return int(z.real)
    if key == "postselect":
        if isinstance(v, str):
            if v.lower() not in ("true", "false", "1", "0"):
                raise ConfigError(f"postselect: cannot read {v!r}")
            return v.lower() in ("true", "1")
        return bool(v)
    return v


def build_config(file_cfg: dict | None, overrides: dict) -> dict:
    """Defaults, then config-file fields, then command-line overrides."""
    cfg = dict(DEFAULTS)
    for source in (file_cfg or {}, overrides):
        for k, v in source.items():
            k = k.replace("-", "_")
            if k not in DEFAULTS:
                raise ConfigError(f"unknown config key {k!r}")
            if v is not None:
                cfg[k] = coerce(k, v)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    name = cfg["protocol"]
    if name is None:
        raise ConfigError("no protocol given")
    if name not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {name!r}; try 'list'")
    if cfg["mode"] not in ("ideal", "gaussian"):
        raise ConfigError("mode must be 'ideal' or 'gaussian'")
    if cfg["delta_width"] < 0:
        raise ConfigError("delta_width must be non-negative")
    if not 1 <= cfg["n_pairs"] <= pr.MAX_PAIRS:
        raise ConfigError(f"n_pairs must be between 1 and {pr.MAX_PAIRS}")
    if cfg["n_max"] is not None and cfg["n_max"] < 1:
        raise ConfigError("n_max must be positive")
    if cfg["delta_over_lambda"] is not None and cfg["delta_over_lambda"] <= 0:
        raise ConfigError("delta_over_lambda must be positive")
    if cfg["gamma"] is not None and "gamma" not in PROTOCOLS[name].params:
        raise ConfigError(f"{name} does not take gamma")
    if name == "round_trip" and cfg["gamma"] is None:
        raise ConfigError("round_trip needs gamma")
    if cfg["outcomes"] is not None:
        o = str(cfg["outcomes"])
        if len(o) != 2 * cfg["n_pairs"] or set(o) - {"+", "-"}:
            raise ConfigError(f"outcomes must hold {2 * cfg['n_pairs']} characters from '+-'")


# -- serialization ---------------------------------------------------------------


def _num(x: float):
    x = float(x)
    if not math.isfinite(x):
        return str(x)
    return float(f"{x:.{DIGITS}g}") + 0.0


def clean(obj):
    """JSON-ready copy with floats at 12 significant digits and complex as ``[re, im]``."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_num(obj.real), _num(obj.imag)]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    return obj if obj is None or isinstance(obj, str) else str(obj)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{DIGITS}g}"
    if isinstance(v, (complex, np.complexfloating)):
        return pr._label_str(complex(v))
    return str(v)


# -- checks and execution ----------------------------------------------------------


def tolerance_failures(report: pr.ProtocolReport) -> list[str]:
    out = []
    if abs(report.total_probability - 1) > PROBABILITY_TOL:
        out.append(f"branch probabilities sum to {report.total_probability:.12g}")
    if report.protocol == "reciprocation" and report.params.get("mode") == "gaussian":
        b = report.branches[0]
        if not report.diagnostics.get("quadrature_converged", True):
            out.append("quadrature did not converge")
        for key in ("fidelity_closed_form", "fidelity_quadrature"):
            if abs(b.extras[key] - b.fidelity) > PATH_AGREEMENT_TOL:
                out.append(f"{key} differs from the simulated fidelity by {abs(b.extras[key] - b.fidelity):.3e}")
    return out


def execute(cfg: dict) -> pr.ProtocolReport:
    return PROTOCOLS[cfg["protocol"]].run(cfg)


def run_document(cfg: dict) -> tuple[dict, int]:
    report = execute(cfg)
    fails = tolerance_failures(report)
    doc = {
        "config": cfg,
        "result": report.to_dict(),
        "tolerance": {"passed": not fails, "failures": fails},
    }
    return clean(doc), EXIT_TOLERANCE if fails else EXIT_OK


def scalar_row(report: pr.ProtocolReport) -> dict[str, Any]:
    """Flat scalar metrics of a report, keyed ``label:metric`` for branch values."""
    row: dict[str, Any] = {
        "kept_probability": report.kept_probability,
        "total_probability": report.total_probability,
    }
    for b in report.branches:
        m = b.metrics()
        label = m.pop("label")
        for k, v in m.items():
            if v is None or isinstance(v, (bool, int, float, complex, np.number, np.bool_)):
                row[f"{label}:{k}"] = v
    return row


def parse_grid(text: str | None) -> list[float]:
    """``"0,1,3"`` lists points, ``"0:5:11"`` is an inclusive linspace, ``""`` is empty."""
    if text is None:
        raise ConfigError("sweep needs --grid")
    text = text.strip()
    if not text:
        return []
    try:
        if ":" in text:
            lo, hi, num = text.split(":")
            return [float(x) for x in np.linspace(float(lo), float(hi), int(num))]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot read grid {text!r}") from None


def sweep_table(cfg: dict, axis: str, grid: list[float], workers: int | None = None) -> tuple[list[str], list[dict], int]:
    axis = axis.replace("-", "_")
    if axis not in SWEEPABLE or axis not in PROTOCOLS[cfg["protocol"]].params:
        raise ConfigError(f"{axis!r} is not sweepable for {cfg['protocol']}")
    points = []
    for x in grid:
        c = dict(cfg)
        c[axis] = coerce(axis, x)
        validate(c)
        points.append(c)

    def one(c):
        rep = execute(c)
        row = {axis: c[axis], **scalar_row(rep)}
        fails = tolerance_failures(rep)
        row["tolerance_ok"] = not fails
        return row

    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(one, points))
    columns: list[str] = [axis]
    for r in rows:
        for k in r:
            if k not in columns:
                columns.append(k)
    code = EXIT_OK if all(r["tolerance_ok"] for r in rows) else EXIT_TOLERANCE
    return columns, rows, code


def write_csv(columns: list[str], rows: list[dict], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])


# -- argument parsing ----------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with keys mirroring the flag names")
    p.add_argument("--protocol")
    p.add_argument("--alpha")
    p.add_argument("--beta")
    p.add_argument("--gamma")
    p.add_argument("--delta-width")
    p.add_argument("--n-pairs")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--mode", choices=("ideal", "gaussian"))
    p.add_argument("--postselect", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--n-max")
    p.add_argument("--delta-over-lambda")
    p.add_argument("--outcomes")
    p.add_argument("--out", help="output file (default: stdout)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crosskerr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run one protocol, JSON output"),
                       ("validate", "check a config without computing"),
                       ("sweep", "sweep one parameter, CSV output")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        if name == "sweep":
            p.add_argument("--axis", required=True, help="parameter to sweep, e.g. delta-width")
            p.add_argument("--grid", required=True, help="'0,1,3' or 'start:stop:num'; '' for none")
            p.add_argument("--workers", type=int, default=None)
    sub.add_parser("list", help="list protocols")
    return parser


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    data.pop("out", None)
    return data


def _overrides(ns: argparse.Namespace) -> dict:
    return {k: getattr(ns, k) for k in DEFAULTS if getattr(ns, k, None) is not None}


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def main(argv: list[str] | None = None) -> int:
    ns = make_parser().parse_args(argv)
    if ns.command == "list":
        for name, spec in PROTOCOLS.items():
            print(f"{name:26s} {spec.summary}  [{', '.join(spec.params)}]")
        return EXIT_OK
    try:
        cfg = build_config(_load_config(ns.config), _overrides(ns))
        if ns.command == "validate":
            _emit(json.dumps(clean({"config": cfg, "valid": True}), indent=2) + "\n", ns.out)
            return EXIT_OK
        if ns.command == "run":
            doc, code = run_document(cfg)
            _emit(json.dumps(doc, indent=2) + "\n", ns.out)
            return code
        columns, rows, code = sweep_table(cfg, ns.axis, parse_grid(ns.grid), ns.workers)
        buf = io.StringIO()
        write_csv(columns, rows, buf)
        _emit(buf.getvalue(), ns.out)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PreconditionError, TruncationError, ValueError) as exc:
        print(f"precondition failure: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
