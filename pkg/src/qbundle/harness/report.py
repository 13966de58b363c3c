"""Reports: assembly, time series, and the three output formats."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..bundle import fibre_mean_value, lift_state
from ..integrals import IntegralVerdict
from ..linalg import dagger, mean_value
from .checks import CheckResult, Context, enabled_checks, run_checks
from .scenario import ScenarioSpec

FORMATS = ("json-lines", "csv-series", "human-summary")
MAX_SERIES_ROWS = 201


@dataclass(frozen=True)
class Series:
    names: tuple[str, ...]
    t: tuple[float, ...]
    columns: tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class Report:
    scenario_digest: str
    seed: int
    per_check: tuple[CheckResult, ...]
    verdicts: tuple[tuple[str, IntegralVerdict], ...]
    timing: dict = field(default_factory=dict)
    series: Series | None = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.per_check)


def run_suite(spec: ScenarioSpec, with_series: bool = True) -> Report:
    """Run every enabled check. Numerical failures are recorded, not raised."""
    start = time.perf_counter()
    ctx = Context(spec)
    checks = enabled_checks(spec)
    results = run_checks(ctx, checks)
    verdicts = ()
    if any(c.suite == "integral" for c in checks):
        try:
            verdicts = tuple(ctx.verdicts)
        except Exception:  # already reported by integral-certify
            verdicts = ()
    series = None
    if with_series:
        try:
            series = build_series(ctx)
        except Exception:  # series are optional plot data
            series = None
    timing = {r.check: r.seconds for r in results}
    timing["total"] = time.perf_counter() - start
    return Report(spec.digest(), spec.seed, tuple(results), verdicts, timing, series)


def build_series(ctx: Context) -> Series:
    """Mean values per observable and picture on a uniform grid."""
    spec = ctx.spec
    rows = min(spec.time.steps + 1, MAX_SERIES_ROWS)
    ts = np.linspace(ctx.t0, ctx.t1, rows)
    names, cols = [], []
    kinds = {p.kind for p in spec.pictures}
    section = lift_state(ctx.atlas, ctx.psi)
    for (name, fam), (_, F) in zip(ctx.probes, ctx.fields):
        schr = [mean_value(fam(t), ctx.psi(t)) for t in ts]
        block = {f"{name}:schrodinger": schr,
                 f"{name}:bundle": [fibre_mean_value(F, section, t) for t in ts]}
        if "heisenberg" in kinds:
            block[f"{name}:heisenberg"] = [
                mean_value(ctx.U(ctx.t0, t) @ fam(t) @ ctx.U(t, ctx.t0), ctx.psi0) for t in ts
            ]
        if "v" in kinds:
            V = ctx.V
            block[f"{name}:v"] = [
                mean_value(V(t) @ fam(t) @ V.inverse(t), V(t) @ ctx.psi(t)) for t in ts
            ]
        if "interaction" in kinds:
            ip = ctx.interaction
            vals = []
            for t in ts:
                w = ip.free(ip.anchor, t)
                vals.append(mean_value(w @ fam(t) @ dagger(w), w @ ctx.psi(t)))
            block[f"{name}:interaction"] = vals
        gap = [max(abs(np.real(col[i]) - np.real(schr[i])) for col in block.values())
               for i in range(rows)]
        for k, v in block.items():
            names.append(k)
            cols.append(tuple(float(np.real(x)) for x in v))
        names.append(f"{name}:picture_gap")
        cols.append(tuple(gap))
    names.append("state_norm")
    cols.append(tuple(float(np.linalg.norm(ctx.psi(t))) for t in ts))
    return Series(tuple(names), tuple(float(t) for t in ts), tuple(cols))


# Formats ---------------------------------------------------------------------

def _num(x: float):
    """JSON-safe float rounded to 10 significant digits; non-finite values become strings."""
    if not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return float(f"{x:.10g}")


def _json_lines(r: Report) -> str:
    lines = [{
        "record": "header",
        "scenario_digest": r.scenario_digest,
        "seed": r.seed,
        "checks": len(r.per_check),
        "pass": r.passed,
    }]
    for c in r.per_check:
        lines.append({
            "record": "check",
            "check": c.check,
            "equation": c.equation,
            "residual": _num(c.residual),
            "threshold": _num(c.threshold),
            "pass": c.passed,
            "error": c.error,
        })
    for name, v in r.verdicts:
        rec = {"record": "verdict", "observable": name}
        rec.update({k: _num(x) for k, x in v.residuals().items()})
        rec["is_integral"] = v.is_integral
        rec["tol"] = {"abs": v.tol.abs, "rel": v.tol.rel}
        lines.append(rec)
    return "".join(json.dumps(x, separators=(",", ":")) + "\n" for x in lines)


def _csv_series(r: Report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    s = r.series
    if s is None:
        w.writerow(["t"])
        return buf.getvalue()
    w.writerow(["t", *s.names])
    for i, t in enumerate(s.t):
        w.writerow([f"{t:.17g}", *(f"{col[i]:.17g}" for col in s.columns)])
    return buf.getvalue()


def _human(r: Report) -> str:
    out = [f"scenario {r.scenario_digest[:16]}  seed {r.seed}",
           f"{'check':<26} {'equation':<20} {'residual':>11} {'threshold':>10} {'time[s]':>8}  result",
           "-" * 87]
    for c in r.per_check:
        res = f"{c.residual:11.3e}" if math.isfinite(c.residual) else f"{'inf':>11}"
        out.append(f"{c.check:<26} {c.equation:<20} {res} {c.threshold:10.1e} "
                   f"{c.seconds:8.3f}  {'PASS' if c.passed else 'FAIL'}")
        if c.error:
            out.append(f"    error: {c.error}")
    for name, v in r.verdicts:
        out.append(f"observable {name}: {'integral of motion' if v.is_integral else 'not an integral'}"
                   f" (max residual {v.max_residual:.3e})")
    n_fail = sum(not c.passed for c in r.per_check)
    out.append(f"{len(r.per_check) - n_fail}/{len(r.per_check)} checks passed"
               + ("" if n_fail == 0 else f", {n_fail} failed"))
    return "\n".join(out) + "\n"


def emit_report(r: Report, fmt: str = "json-lines") -> str:
    if fmt == "json-lines":
        return _json_lines(r)
    if fmt == "csv-series":
        return _csv_series(r)
    if fmt == "human-summary":
        return _human(r)
    raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
