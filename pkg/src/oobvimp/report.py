"""Serializers for analysis reports, Monte Carlo summaries and robustness tables.

Every format is rendered from the same in-memory object.  JSON carries
full float precision (shortest round-trip repr); tables round to two
decimals, with p-values at three.
"""

from __future__ import annotations

import csv
import io
import json
from typing import Any

from .simulate import MonteCarloSummary, RobustnessResult
from .vimp import VimpReport

SCHEMA_VERSION = 1

ROW_FIELDS = ("beta_hat", "p_value", "beta_inbag", "delta", "err_step", "delta_marginal")


def report_to_dict(report: VimpReport) -> dict[str, Any]:
    rows = []
    for r in report.rows:
        row: dict[str, Any] = {"group": r.group_name}
        for f in ROW_FIELDS:
            value = getattr(r, f)
            if value is not None:
                row[f] = value
        rows.append(row)
    d = report.diagnostics
    return {
        "schema_version": SCHEMA_VERSION,
        "family": report.family,
        "n": report.n,
        "B": report.B,
        "B_used": report.B_used,
        "seed": report.seed,
        "noise": report.method,
        "err_oob": report.err_oob,
        "diagnostics": {
            "non_converged": d.non_converged,
            "no_oob_events": d.no_oob_events,
            "marginal_excluded": d.marginal_excluded,
            "stepwise_excluded": d.stepwise_excluded,
        },
        "rows": rows,
    }


def _dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _fmt(value: float | None, digits: int = 2) -> str:
    if value is None:
        return ""
    out = f"{value:.{digits}f}"
    # avoid printing "-0.00"
    return out[1:] if out.startswith("-") and float(out) == 0 else out


def report_json(report: VimpReport) -> str:
    return _dumps(report_to_dict(report))


def report_csv(report: VimpReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("group",) + ROW_FIELDS + ("err_oob", "B_used"))
    for r in report.rows:
        w.writerow([r.group_name]
                   + ["" if getattr(r, f) is None else repr(getattr(r, f)) for f in ROW_FIELDS]
                   + [repr(report.err_oob), report.B_used])
    return buf.getvalue()


def _table(headers: list[str], body: list[list[str]], groups: list[tuple[str, int]]) -> str:
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h)
              for i, h in enumerate(headers)]

    def line(cells):
        parts = [cells[0].ljust(widths[0])]
        parts += [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join(parts).rstrip()

    top = []
    col = 1
    spans = []
    for title, span in groups:
        width = sum(widths[col:col + span]) + 2 * (span - 1)
        spans.append(title.center(width) if title else " " * width)
        col += span
    top.append(" " * widths[0] + "  " + "  ".join(spans))
    rule = "-" * len(line(headers))
    return "\n".join([top[0].rstrip(), line(headers), rule] + [line(r) for r in body] + [rule]) + "\n"


def report_table(report: VimpReport) -> str:
    family = {"cox": "Cox regression", "linear": "Linear regression",
              "logistic": "Logistic regression"}[report.family]
    headers = ["Variable", "beta", "p-value", "beta_inbag", "Delta", "Err_step", "Delta_marg"]
    body = [[r.group_name, _fmt(r.beta_hat), _fmt(r.p_value, 3), _fmt(r.beta_inbag),
             _fmt(r.delta), _fmt(r.err_step), _fmt(r.delta_marginal)] for r in report.rows]
    out = _table(headers, body, [(family, 2), ("VIMP", 3), ("Marginal", 1)])
    d = report.diagnostics
    out += (f"OOB model error: {_fmt(report.err_oob)}  "
            f"(B used {report.B_used} of {report.B}; non-converged {d.non_converged}; "
            f"no OOB events {d.no_oob_events})\n")
    return out


def render_report(report: VimpReport, fmt: str) -> str:
    return {"json": report_json, "csv": report_csv, "table": report_table}[fmt](report)


MC_FIELDS = ("beta_hat", "p_value", "beta_inbag", "delta", "delta_marginal")


def summary_to_dict(summary: MonteCarloSummary) -> dict[str, Any]:
    rows = []
    for g in summary.groups:
        row: dict[str, Any] = {"group": g}
        for f in MC_FIELDS:
            value = summary.means[g][f]
            if value is not None:
                row[f] = value
        rows.append(row)
    return {"variant": summary.variant, "M": summary.M, "n": summary.n, "B": summary.B,
            "err_oob": summary.err_oob, "rows": rows}


def summaries_json(summaries: list[MonteCarloSummary], params: dict[str, Any], seed: int) -> str:
    return _dumps({
        "schema_version": SCHEMA_VERSION,
        "kind": "monte_carlo",
        "seed": seed,
        "params": params,
        "summaries": [summary_to_dict(s) for s in summaries],
    })


def summaries_csv(summaries: list[MonteCarloSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("variant", "group") + MC_FIELDS + ("err_oob", "M", "B"))
    for s in summaries:
        for g in s.groups:
            w.writerow([s.variant, g]
                       + ["" if s.means[g][f] is None else repr(s.means[g][f]) for f in MC_FIELDS]
                       + [repr(s.err_oob), s.M, s.B])
    return buf.getvalue()


def summaries_table(summaries: list[MonteCarloSummary]) -> str:
    parts = []
    for s in summaries:
        headers = ["Variable", "beta", "p-value", "beta_inbag", "Delta", "Delta_marg"]
        body = [[g, _fmt(s.means[g]["beta_hat"]), _fmt(s.means[g]["p_value"], 3),
                 _fmt(s.means[g]["beta_inbag"]), _fmt(s.means[g]["delta"]),
                 _fmt(s.means[g]["delta_marginal"])] for g in s.groups]
        title = f"Variant: {s.variant}  (means over M={s.M} runs, n={s.n}, B={s.B})\n"
        parts.append(title + _table(headers, body, [("Cox regression", 2), ("VIMP", 2), ("Marginal", 1)])
                     + f"OOB model error: {_fmt(s.err_oob)}\n")
    return "\n".join(parts)


def render_summaries(summaries: list[MonteCarloSummary], fmt: str, params: dict[str, Any],
                     seed: int) -> str:
    if fmt == "json":
        return summaries_json(summaries, params, seed)
    if fmt == "csv":
        return summaries_csv(summaries)
    return summaries_table(summaries)


def robustness_long_csv(result: RobustnessResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("fraction", "repeat", "variable", "p_value", "delta"))
    for r in result.records:
        w.writerow([repr(r.fraction), r.repeat, r.variable,
                    "" if r.p_value is None else repr(r.p_value), repr(r.delta)])
    return buf.getvalue()


def robustness_quantile_csv(result: RobustnessResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("fraction", "variable", "log_p_q25", "log_p_q50", "log_p_q75",
                "delta_q25", "delta_q50", "delta_q75"))
    for q in result.quantiles:
        logp = ["", "", ""] if q.log_p is None else [repr(v) for v in q.log_p]
        w.writerow([repr(q.fraction), q.variable] + logp + [repr(v) for v in q.delta])
    return buf.getvalue()


def robustness_json(result: RobustnessResult) -> str:
    return _dumps({
        "schema_version": SCHEMA_VERSION,
        "kind": "robustness",
        "records": [{"fraction": r.fraction, "repeat": r.repeat, "variable": r.variable,
                     "p_value": r.p_value, "delta": r.delta} for r in result.records],
        "quantiles": [{"fraction": q.fraction, "variable": q.variable,
                       "log_p": list(q.log_p) if q.log_p is not None else None,
                       "delta": list(q.delta)} for q in result.quantiles],
    })
