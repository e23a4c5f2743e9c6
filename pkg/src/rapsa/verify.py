"""Report suite behind ``rapsa verify``: each bound checked on small quadratic instances."""

from __future__ import annotations

import csv
import math
from fractions import Fraction

import numpy as np

from .core import Constant, make_rng
from .engine import EngineConfig, run
from .problems import closed_form_optimum, estimate_constants, estimate_K, generate_lmmse
from .theory import RateConstants, check_lemma1, check_proposition1, linear_envelope, lemma3_first_violation

REPORT_COLUMNS = ("check", "case", "t", "bound", "observed", "margin", "passed")


def quadratic_instance(p, N, seed, sigma2=0.1):
    """Problem, optimum, and exact ``(m, M)`` for a small LMMSE instance."""
    prob = generate_lmmse(p, N, 1, sigma2, seed)
    x_star, F_star = closed_form_optimum(prob)
    m, M = estimate_constants(prob)
    return prob, x_star, F_star, m, M


def binomial_ratio_rows(max_B=20):
    for B in range(1, max_B + 1):
        for I in range(1, B + 1):
            lhs = Fraction(math.comb(B - 1, I - 1), math.comb(B, I))
            yield {"check": "binomial_ratio", "case": f"B={B},I={I}", "t": "", "bound": float(Fraction(I, B)),
                   "observed": float(lhs), "margin": float(Fraction(I, B) - lhs), "passed": lhs == Fraction(I, B)}


def lemma1_rows(draws=20_000, seed=0):
    prob, *_ = quadratic_instance(8, 20, seed)
    rng = make_rng(seed, stream=11)
    x = rng.standard_normal(8)
    batches = [rng.choice(20, 1) for _ in range(4)]
    rep = check_lemma1(prob, x, 0.05, 2, 4, batches, draws, seed)
    ok = rep.holds()
    for j, (o, e, se) in enumerate(zip(rep.mean_step, rep.expected_step, rep.mean_step_se)):
        yield {"check": "lemma1_mean", "case": f"coord={j}", "t": 0, "bound": e, "observed": o,
               "margin": (e - o) / se if se > 0 else 0.0, "passed": ok}
    yield {"check": "lemma1_sq", "case": "norm", "t": 0, "bound": rep.expected_sq, "observed": rep.mean_sq,
           "margin": (rep.expected_sq - rep.mean_sq) / rep.mean_sq_se, "passed": ok}


def proposition1_rows(n_configs=5, draws=20_000, seed=0):
    for k in range(n_configs):
        yield proposition1_case(seed + k, draws)


def proposition1_case(seed, draws=100_000):
    """One random small quadratic configuration checked against the one-step bound."""
    rng = make_rng(seed, stream=13)
    B = int(rng.choice([2, 4, 8]))
    p = B * int(rng.integers(1, 4))
    N = int(rng.integers(p + 2, 4 * p + 8))
    I = int(rng.integers(1, B + 1))
    L = int(rng.integers(1, min(N, 4) + 1))
    prob, x_star, F_star, m, M = quadratic_instance(p, N, seed)
    x = x_star + rng.standard_normal(p)
    K = estimate_K(prob, [x]).K
    gamma = float(rng.uniform(0.05, 0.9)) / M
    rc = RateConstants(m, M, K, I / B)
    rep = check_proposition1(prob, rc, x, gamma, I, B, L, F_star, draws, seed)
    return {"check": "proposition1", "case": f"seed={seed},p={p},N={N},B={B},I={I},L={L}", "t": 1,
            "bound": rep.rhs, "observed": rep.lhs_mean, "margin": rep.margin, "passed": rep.holds()}


def theorem2_deterministic(T=1000, seed=0, p=16, N=64):
    """Full-batch, all-block run against the linear envelope; returns ``(ts, errors, envelope)``."""
    prob, x_star, F_star, m, M = quadratic_instance(p, N, seed)
    gamma = 0.9 / M
    assert 2 * m * gamma < 1
    tr = run(EngineConfig(I=4, B=4, L=N, schedule=Constant(gamma), T=T, seed=seed), prob, np.zeros(p),
             keep_iterates=True)
    K = estimate_K(prob, tr.iterates).K
    errs = tr.column("objective") - F_star
    rc = RateConstants(m, M, K, 1.0, F0err=float(errs[0]), gamma=gamma)
    ts = tr.column("t")
    return ts, errs, np.asarray(linear_envelope(ts, rc))


def theorem2_rows(T=1000):
    ts, errs, env = theorem2_deterministic(T)
    ok = bool(np.all(errs <= env))
    for t in (0, 1, 10, 100, T):
        yield {"check": "theorem2_deterministic", "case": "I=B,L=N", "t": int(ts[t]), "bound": env[t],
               "observed": errs[t], "margin": env[t] - errs[t], "passed": ok}


def lemma3_rows(T=10_000):
    for c, b, t0, u0 in [(2, 1, 1, 0), (2, 1, 1, 5), (1.5, 3, 10, 2), (4, 10, 100, 10), (3, 1, 1, 0)]:
        Q = max(b / (c - 1), t0 * u0)
        bad = lemma3_first_violation(c, b, t0, u0, T)
        yield {"check": "lemma3", "case": f"c={c},b={b},t0={t0},u0={u0}", "t": "" if bad is None else bad,
               "bound": Q, "observed": "", "margin": "", "passed": bad is None}


def run_all(quick=True):
    draws = 20_000 if quick else 100_000
    rows = []
    rows.extend(binomial_ratio_rows())
    rows.extend(lemma1_rows(draws))
    rows.extend(proposition1_rows(5 if quick else 20, draws))
    rows.extend(theorem2_rows())
    rows.extend(lemma3_rows())
    return rows


def write_report_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
