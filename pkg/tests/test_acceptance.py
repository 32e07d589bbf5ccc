"""End-to-end acceptance checks, one test per criterion.

Each test records a pass/fail line that the terminal summary prints.
The Monte Carlo seed below was fixed before any acceptance run and is
not tuned.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from importlib import resources

import numpy as np
import pytest

from conftest import make_cox_design, make_design
from oobvimp.cli import main
from oobvimp.metric import concordance_error
from oobvimp.regress import cox_partial_loglik, cox_score, fit, linear_predictor
from oobvimp.resample import make_replicates
from oobvimp.simulate import CoxSimParams, cox_design, monte_carlo, simulate_cox_data
from oobvimp.vimp import OobScorer, noise_up, vimp_analysis, zero_group_columns
from oracles import ACCEPTANCE, breslow_loglik_grid, brute_concordance_error

MC_SEED = 1
MC_M, MC_B, MC_N = 50, 200, 1000
BUNDLED = str(resources.files("oobvimp") / "data" / "simulated_cox.csv")
COX = ["--data", BUNDLED, "--family", "cox", "--time", "time", "--event", "event"]


def check(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (bool(ok), detail)
    assert ok, detail


def test_c01_bootstrap_geometry():
    t0 = time.perf_counter()
    reps = make_replicates(10_000, 200, 2024)
    frac = float(np.mean([r.inbag_rows.size / 10_000 for r in reps]))
    elapsed = time.perf_counter() - t0
    check(1, abs(frac - 0.632) <= 0.005 and elapsed < 5,
          f"inbag fraction {frac:.4f} (0.632 +/- 0.005), {elapsed:.2f}s")


def test_c02_zeroing_equivalence():
    data = simulate_cox_data(CoxSimParams(n=200), seed=2)
    mismatches = 0
    checked = 0
    for variant in ("linear", "spline"):
        design = cox_design(data, variant)
        for rep in make_replicates(200, 20, 2):
            model = fit(design, rep.multiplicity.astype(float))
            scorer = OobScorer(design, rep.oob_rows)
            rows = design.matrix[rep.oob_rows]
            for g in design.group_names:
                _, beta = noise_up(rows, design, g, "zero", model.coefficients)
                a = scorer(linear_predictor(model, rows, beta))
                b = scorer(linear_predictor(model, zero_group_columns(rows, design, g)))
                checked += 1
                mismatches += a != b
    check(2, mismatches == 0, f"{checked} replicate/group pairs, {mismatches} mismatches")


def test_c03_stepwise_final_equals_err_oob():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(150, 3))
    lp = x @ [1.0, -0.5, 0.0]
    cases = {
        "cox": cox_design(simulate_cox_data(CoxSimParams(n=200), 3)),
        "cox-spline": cox_design(simulate_cox_data(CoxSimParams(n=200), 3), "spline"),
        "linear": make_design("linear", x, lp + rng.normal(size=150)),
        "logistic": make_design("logistic", x, (rng.random(150) < 1 / (1 + np.exp(-lp))).astype(float)),
    }
    bad = []
    for name, design in cases.items():
        for method in ("zero", "permute"):
            r = vimp_analysis(design, 30, 4, method)
            if r.rows[-1].err_step != r.err_oob:
                bad.append(f"{name}/{method}")
    check(3, not bad, f"{2 * len(cases)} analyses, mismatches: {bad or 'none'}")


def test_c04_cox_solver_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    grid = np.round(np.arange(-100_000, 100_001) * 1e-4, 10)
    worst_beta = worst_score = 0.0
    done = 0
    while done < 10:
        x = rng.normal(size=8)
        t = rng.permutation(np.arange(1.0, 9.0))
        e = (rng.random(8) < 0.75).astype(float)
        if e.sum() == 0:
            continue
        ll = breslow_loglik_grid(grid, x, t, e)
        k = int(np.argmax(ll))
        if k in (0, len(grid) - 1):
            continue  # likelihood monotone on the grid: no finite maximizer
        design = make_cox_design(x, t, e)
        model = fit(design)
        worst_beta = max(worst_beta, abs(model.coefficients[0] - grid[k]))
        b = np.array([rng.uniform(-2, 2)])
        h = 1e-5
        fd = (cox_partial_loglik(design, b + h) - cox_partial_loglik(design, b - h)) / (2 * h)
        analytic = cox_score(design, b)[0]
        worst_score = max(worst_score, abs(analytic - fd) / max(abs(fd), 1e-12))
        done += 1
    elapsed = time.perf_counter() - t0
    check(4, worst_beta < 1e-3 and worst_score < 1e-6 and elapsed < 10,
          f"max |beta - grid| {worst_beta:.1e}, max score rel err {worst_score:.1e}, {elapsed:.2f}s")


def test_c05_concordance_oracle():
    rng = np.random.default_rng(5)
    done = mismatches = 0
    while done < 200:
        n = int(rng.integers(2, 31))
        t = rng.integers(1, 12, n).astype(float)
        e = (rng.random(n) < rng.uniform(0.2, 0.9)).astype(float)
        s = np.round(rng.normal(size=n), 1)
        expected = brute_concordance_error(s, t, e)
        if expected is None:
            continue
        mismatches += concordance_error(s, t, e) != expected
        done += 1
    check(5, mismatches == 0, f"{done} random sets, {mismatches} mismatches")


@pytest.fixture(scope="module")
def monte_carlo_runs():
    params = CoxSimParams(n=MC_N)
    t0 = time.perf_counter()
    linear = monte_carlo(params, MC_M, MC_B, MC_SEED, "linear")
    spline = monte_carlo(params, MC_M, MC_B, MC_SEED, "spline")
    return linear, spline, time.perf_counter() - t0


def test_c06_misspecified_cox_reproduction(monte_carlo_runs):
    lin, _, elapsed = monte_carlo_runs
    m = lin.means
    conds = {
        "delta_psa>3": m["psa"]["delta"] > 3,
        "0<delta_tumor<1": 0 < m["tumor_volume"]["delta"] < 1,
        "delta_noise<0": all(m[g]["delta"] < 0 for g in ("X1", "X2", "X3")),
        "p_tumor>0.05": m["tumor_volume"]["p_value"] > 0.05,
        "p_psa<0.01": m["psa"]["p_value"] < 0.01,
        "err_oob in 43+/-3": abs(lin.err_oob - 43) <= 3,
    }
    noise = ", ".join(f"{m[g]['delta']:.2f}" for g in ("X1", "X2", "X3"))
    detail = (f"delta psa {m['psa']['delta']:.2f}, tumor {m['tumor_volume']['delta']:.2f}, "
              f"X1..X3 {noise}; "
              f"p psa {m['psa']['p_value']:.4f}, tumor {m['tumor_volume']['p_value']:.3f}; "
              f"err_oob {lin.err_oob:.2f}; both variants {elapsed:.0f}s")
    failed = [k for k, v in conds.items() if not v]
    check(6, not failed, detail + (f"; failed {failed}" if failed else ""))


def test_c07_spline_repair(monte_carlo_runs):
    lin, spl, _ = monte_carlo_runs
    jump = spl.means["tumor_volume"]["delta"] - lin.means["tumor_volume"]["delta"]
    drop = lin.err_oob - spl.err_oob
    check(7, jump > 1.0 and drop >= 2.0,
          f"delta_tumor {lin.means['tumor_volume']['delta']:.2f} -> {spl.means['tumor_volume']['delta']:.2f} "
          f"(+{jump:.2f}), err_oob {lin.err_oob:.2f} -> {spl.err_oob:.2f} (-{drop:.2f})")


def test_c08_marginal_below_index_for_correlated_pair():
    rng = np.random.default_rng(8)
    n, rho = 1000, 0.9
    z = rng.normal(size=(n, 2))
    x1 = z[:, 0]
    x2 = rho * z[:, 0] + math.sqrt(1 - rho**2) * z[:, 1]
    y = x1 + x2 + rng.normal(size=n)
    r = vimp_analysis(make_design("linear", np.column_stack([x1, x2]), y, ["x1", "x2"]), 200, 8)
    a, b = r.row("x1"), r.row("x2")
    check(8, a.delta_marginal < a.delta and b.delta_marginal < b.delta,
          f"x1 marg {a.delta_marginal:.2f} < {a.delta:.2f}; x2 marg {b.delta_marginal:.2f} < {b.delta:.2f}")


def test_c09_subsample_robustness(tmp_path, capsys):
    quant = tmp_path / "q.csv"
    code = main(["robustness", *COX, "--fractions", "0.10,0.75", "--repeats", "50",
                 "--bootstrap", "200", "--seed", "9", "--quantiles-out", str(quant)])
    capsys.readouterr()
    assert code == 0
    rows = {(float(r["fraction"]), r["variable"]): r for r in csv.DictReader(io.StringIO(quant.read_text()))}
    assert len(rows) == 2 * 5
    q25_psa = float(rows[(0.10, "psa")]["delta_q25"])
    med_logp_tumor = float(rows[(0.10, "tumor_volume")]["log_p_q50"])
    check(9, q25_psa > 0 and med_logp_tumor > math.log(0.05),
          f"fraction 0.10: q25 delta_psa {q25_psa:.2f} > 0, median log p tumor {med_logp_tumor:.2f} "
          f"> {math.log(0.05):.2f}")


def test_c10_parallel_determinism(tmp_path, capsys):
    outs = []
    for jobs in ("1", "8"):
        path = tmp_path / f"r{jobs}.json"
        code = main(["analyze", *COX, "--spline", "tumor_volume=5", "--noise", "permute",
                     "--bootstrap", "200", "--seed", "10", "--jobs", jobs, "--format", "json",
                     "--out", str(path)])
        assert code == 0
        outs.append(path.read_bytes())
    capsys.readouterr()
    json.loads(outs[0])
    check(10, outs[0] == outs[1], f"{len(outs[0])}-byte reports {'identical' if outs[0] == outs[1] else 'differ'}")
