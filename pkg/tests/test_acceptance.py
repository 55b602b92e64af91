"""End-to-end acceptance checks, one test per criterion.

Each test records ``(passed, detail)`` in ``conftest.ACCEPTANCE_RESULTS``,
prints a PASS/FAIL line and then asserts.  Runtime budgets are part of the
pass condition.
"""
import csv
import io
import math
import time

import numpy as np

from conftest import ACCEPTANCE_RESULTS
from sparseglm.channel import (dq_i_pout, gamma_c, gamma_c_closed_form, gamma_c_numeric,
                               i_pout, make_channel)
from sparseglm.cli import EXIT_OK, main
from sparseglm.errors import CriticalGammaError
from sparseglm.potential import (ALGORITHMIC_START, RegimeParams, fixed_point, inf_sup,
                                 solve_linear_regime)
from sparseglm.prior import (bernoulli, binom_prior, i_p0n, linear_prior, scalar_mmse,
                             unif_prior)
from sparseglm.sublinear import (asymptotic_mmse, limit_mutual_info,
                                 limit_mutual_info_side_info)

DELTAS = (0.1, 0.25, 0.5, 1.0, 2.0)
ACTIVATIONS = ("linear", "sign", "relu")
RHOS = (1e-2, 1e-4, 1e-6)


def _record(num, passed, detail):
    ACCEPTANCE_RESULTS[num] = (bool(passed), detail)
    print(f"criterion {num}: {'PASS' if passed else 'FAIL'}  {detail}")
    assert passed, detail


def _sweep(p0, channel, gammas):
    out = []
    for g in gammas:
        try:
            out.append(asymptotic_mmse(p0, channel, g))
        except CriticalGammaError:
            continue
    return out


def test_criterion_1_thresholds():
    t0 = time.perf_counter()
    worst = 0.0
    for act in ACTIVATIONS:
        for d in DELTAS:
            ch = make_channel(act, d)
            closed, numeric = gamma_c_closed_form(ch), gamma_c_numeric(ch)
            worst = max(worst, abs(numeric - closed) / closed)
    sign = make_channel("sign", 0.0)
    sign_err = max(abs(gamma_c_numeric(sign) - 1 / math.log(2)),
                   abs(gamma_c_closed_form(sign) - 1 / math.log(2)))
    elapsed = time.perf_counter() - t0
    _record(1, worst <= 1e-4 and sign_err <= 1e-10 and elapsed < 30,
            f"max rel diff {worst:.2e} (<= 1e-4), sign Delta=0 error {sign_err:.1e} "
            f"(<= 1e-10), {elapsed:.1f}s (< 30s)")


def test_criterion_2_derivatives():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_channel = 0.0
    for act in ACTIVATIONS:
        for _ in range(10):
            q, d = rng.uniform(0.05, 0.95), rng.uniform(0.1, 2.0)
            ch = make_channel(act, d)
            h = 1e-4
            fd = (i_pout(ch, q + h, 1.0) - i_pout(ch, q - h, 1.0)) / (2 * h)
            exact = dq_i_pout(ch, q, 1.0)
            worst_channel = max(worst_channel, abs(fd - exact) / abs(exact))
    prior = bernoulli().sparse(0.05)
    worst_prior = 0.0
    for r in rng.uniform(0.1, 50.0, 10):
        h = 1e-4 * r
        fd = (i_p0n(prior, r + h) - i_p0n(prior, r - h)) / (2 * h)
        worst_prior = max(worst_prior, abs(fd - 0.5 * scalar_mmse(prior, r)))
    elapsed = time.perf_counter() - t0
    _record(2, worst_channel <= 1e-5 and worst_prior <= 1e-6 and elapsed < 60,
            f"dq_i_pout max rel err {worst_channel:.1e} (<= 1e-5), "
            f"I-MMSE max err {worst_prior:.1e} (<= 1e-6), {elapsed:.1f}s (< 60s)")


def test_criterion_3_variational_limit():
    t0 = time.perf_counter()
    ok, parts = True, []
    for act, d in (("linear", 0.1), ("sign", 0.0)):
        ch = make_channel(act, d)
        gc, i0 = gamma_c(ch), i_pout(ch, 0.0, 1.0)
        for f in (0.5, 2.0):
            gamma = f * gc
            target = min(i0, 1 / gamma)
            gaps = [abs(inf_sup(bernoulli().sparse(rho), ch, RegimeParams(rho, gamma)).value
                        - target) for rho in RHOS]
            ok &= bool(np.all(np.diff(gaps) < 0)) and gaps[-1] < 0.05
            parts.append(f"{act} {f}gc: " + ", ".join(f"{g:.2e}" for g in gaps))
    elapsed = time.perf_counter() - t0
    _record(3, ok and elapsed < 120,
            f"gaps over rho 1e-2/1e-4/1e-6 [{'; '.join(parts)}] (decreasing, last < 0.05), "
            f"{elapsed:.1f}s (< 120s)")


def test_criterion_4_step_and_staircase():
    t0 = time.perf_counter()
    ch = make_channel("linear", 0.1)
    gc = gamma_c(ch)
    ratios = np.linspace(0.05, 5.0, 100)
    aon = [asymptotic_mmse(bernoulli(), ch, r * gc) for r in ratios if abs(r - 1) > 1e-12]
    expected = [1.0 if r < 1 else 0.0 for r in ratios if abs(r - 1) > 1e-12]
    ok_aon = aon == expected

    gammas = np.geomspace(0.02, 100, 400)
    lin = _sweep(linear_prior(5), ch, gammas)
    ok_lin = (set(round(v, 12) for v in lin) <= {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}
              and bool(np.all(np.diff(lin) <= 0)) and np.count_nonzero(np.diff(lin)) <= 5)
    ok_other = True
    for p0 in (unif_prior(5), binom_prior(5, 0.2)):
        plateaus = {p0.head_second_moment(k) for k in range(1, p0.K + 2)}
        vals = _sweep(p0, ch, gammas)
        ok_other &= set(vals) <= plateaus and bool(np.all(np.diff(vals) <= 0))
    elapsed = time.perf_counter() - t0
    _record(4, ok_aon and ok_lin and ok_other and elapsed < 60,
            f"Bernoulli step {ok_aon}, linear-5 staircase {ok_lin} "
            f"({len(set(lin))} plateaus), unif-5/binom-5 {ok_other}, {elapsed:.1f}s (< 60s)")


def test_criterion_5_side_information():
    t0 = time.perf_counter()
    cases = [(linear_prior(3), make_channel("linear", 0.1), 0.7),
             (unif_prior(4), make_channel("sign", 0.0), 2.0),
             (binom_prior(5, 0.2), make_channel("relu", 0.5), 3.0)]
    worst = 0.0
    for p0, ch, gamma in cases:
        base = limit_mutual_info(p0, ch, gamma).limit_mi
        tau = 1e-7
        fd = (limit_mutual_info_side_info(p0, ch, gamma, tau) - base) / tau
        worst = max(worst, abs(fd - asymptotic_mmse(p0, ch, gamma) / 2))
    elapsed = time.perf_counter() - t0
    _record(5, worst <= 1e-5 and elapsed < 10,
            f"max |dI/dtau - mmse/2| {worst:.1e} (<= 1e-5), {elapsed:.1f}s")


def _crossing(rho, ch, gc):
    """Bisect for the gamma where the finite-rho MMSE falls through 1/2."""
    def above(g):
        return solve_linear_regime(bernoulli().sparse(rho), ch, RegimeParams(rho, g)).mmse > 0.5

    lo, hi = 0.05 * gc, 5.0 * gc
    assert above(lo) and not above(hi)
    while hi - lo > 1e-5 * gc:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if above(mid) else (lo, mid)
    return 0.5 * (lo + hi)


def test_criterion_6_jump_locus():
    # Property-based: the finite-rho curves are not tabulated.
    t0 = time.perf_counter()
    ch = make_channel("linear", 0.1)
    gc = gamma_c(ch)
    gaps = [abs(_crossing(rho, ch, gc) - gc) / gc for rho in RHOS]
    elapsed = time.perf_counter() - t0
    _record(6, bool(np.all(np.diff(gaps) < 0)) and gaps[-1] < 0.10 and elapsed < 300,
            "relative gap of MMSE = 1/2 crossing to gamma_c over rho 1e-2/1e-4/1e-6: "
            + ", ".join(f"{g:.3f}" for g in gaps) + f" (decreasing, last < 0.10), "
            f"{elapsed:.1f}s (< 300s)")


def test_criterion_7_algorithmic_gap():
    t0 = time.perf_counter()
    rho = 1e-3
    ch = make_channel("sign", 0.0)
    prior = bernoulli().sparse(rho)
    gc = gamma_c(ch)
    literal, bayes, gap = [], [], []
    for f in np.round(np.arange(0.3, 3.0001, 0.05), 2):
        reg = RegimeParams(rho, f * gc)
        algo = 1.0 - fixed_point(prior, ch, reg, ALGORITHMIC_START).q_star
        informed = 1.0 - fixed_point(prior, ch, reg, 1.0).q_star
        optimal = solve_linear_regime(prior, ch, reg).mmse
        if algo > 0.9 and informed < 0.1:
            literal.append(f)
        if algo > 0.9 and optimal < 0.1:
            bayes.append(f)
        if algo > optimal + 0.5:
            gap.append(f)
    elapsed = time.perf_counter() - t0

    def window(v):
        return f"[{min(v):.2f}, {max(v):.2f}] gamma_c" if v else "empty"

    # The criterion names the informed branch; the Bayes-optimal readings are reported.
    _record(7, bool(literal) and elapsed < 120,
            f"algorithmic > 0.9 with informed branch < 0.1 on {window(literal)}; "
            f"with Bayes-optimal MMSE < 0.1 on {window(bayes)}; algorithmic exceeds "
            f"Bayes-optimal by > 0.5 on {window(gap)}; {elapsed:.1f}s (< 120s)")


def _summary(text):
    body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    return [r for r in csv.DictReader(io.StringIO(body)) if r["record"] == "summary"][0]


def test_criterion_8_state_evolution(tmp_path):
    t0 = time.perf_counter()
    gaps = {}
    for f in (0.5, 1.5, 3.0):
        path = tmp_path / f"sim{f}.csv"
        assert main(["simulate", "--gamma", str(f), "--out", str(path)]) == EXIT_OK
        row = _summary(path.read_text())
        assert row["n_diverged"] == "0"
        gaps[f] = float(row["gap"])
    elapsed = time.perf_counter() - t0
    _record(8, max(gaps.values()) <= 0.05 and elapsed < 600,
            "|mean MSE - SE| at " + ", ".join(f"{f}gc: {g:.3f}" for f, g in gaps.items())
            + f" (<= 0.05), {elapsed:.1f}s (< 600s)")


def test_criterion_9_determinism(tmp_path):
    runs = [["gamma-c"], ["gamma-c", "--format", "json"], ["mmse-curve"],
            ["gen-error-curve", "--rho", "1e-3", "--rho", "limit"], ["heatmap"],
            ["heatmap", "--format", "json"], ["simulate", "--seeds", "3"],
            ["simulate", "--activation", "sign", "--delta", "0", "--prior", "bernoulli-rademacher",
             "--seeds", "2", "--gamma", "2", "--format", "json"]]
    mismatched = []
    for i, argv in enumerate(runs):
        first, second = tmp_path / f"a{i}", tmp_path / f"b{i}"
        assert main(argv + ["--out", str(first)]) == EXIT_OK
        assert main([argv[0], "--config", str(first), "--out", str(second)]) == EXIT_OK
        if first.read_bytes() != second.read_bytes():
            mismatched.append(" ".join(argv))
    _record(9, not mismatched,
            f"{len(runs) - len(mismatched)}/{len(runs)} CLI runs reproduced byte for byte"
            + (f"; mismatched: {mismatched}" if mismatched else ""))
