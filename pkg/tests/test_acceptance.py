"""Acceptance suite: one test group per criterion, one PASS/FAIL line each.

Run directly with ``python3 tests/test_acceptance.py`` or as part of pytest;
the criterion lines are printed in the terminal summary.  Three sub-checks
are expected failures whose analysis lives in the decisions ledger:

* the Aly-Chan control error under the Euler scheme (3), where the
  discrete optimum itself sits farther than the tolerance from ``-sin t``;
* the Van der Pol control error (4), where the bounded coefficients cannot
  follow a jump of the reference control within one grid step;
* the psi_2 saturation floor (2), which is ``2(1 + pi^2 D) exp(-pi^2 D)``
  analytically and so exceeds 1e-8 at ``D = 2``.
"""

import math
import sys
import time

import numpy as np
import pytest

from qitraj import (
    TranscriptionOptions,
    builtin,
    check_gradient,
    dft,
    error_report,
    l2_norm,
    make_kernel,
    measured_order,
    moment,
    reference_signal,
    solve,
    transcribe,
)
from qitraj.integrate import Scheme, convergence_order
from qitraj.metrics import LITERATURE_NORM_PAIRS, implied_sample_count
from qitraj.quasi import approximation_error, observed_orders, unity_deviation

import vdp_oracle
from lq_oracle import kkt_oracle, lq_options, lq_problem

TABLE_ORDERS = {1: 2, 2: 4, 3: 6, 4: 10, 5: 4, 6: 2}


# ----------------------------------------------------------------- 1


def test_criterion_1_kernel_moments(record_criterion):
    start = time.perf_counter()
    worst0 = worst_even = 0.0
    orders = {}
    for kid, order in TABLE_ORDERS.items():
        k = make_kernel(kid)
        worst0 = max(worst0, abs(moment(k, 0) - 1.0))
        for j in range(2, order, 2):
            worst_even = max(worst_even, abs(moment(k, j)))
        orders[kid] = measured_order(k)
    elapsed = time.perf_counter() - start
    ok = worst0 <= 1e-8 and worst_even <= 1e-7 and orders == TABLE_ORDERS and elapsed < 5
    record_criterion(
        1,
        ok,
        f"|m0-1|={worst0:.1e} max|even moment|={worst_even:.1e} orders={list(orders.values())} {elapsed:.2f}s",
    )
    assert worst0 <= 1e-8
    assert worst_even <= 1e-7
    assert orders == TABLE_ORDERS
    assert elapsed < 5


# ----------------------------------------------------------------- 2


def _sin_errors(kid, levels, base):
    k = make_kernel(kid)
    return [approximation_error(np.sin, k, 2.0, 0.0, math.pi / 2, base / 2**j) for j in range(levels)]


@pytest.fixture(scope="module")
def quasi_convergence():
    start = time.perf_counter()
    out = {
        # h = (pi/2)/20 .. ; errors stay far above the psi_1 floor
        "e1": _sin_errors(1, 5, (math.pi / 2) / 10),
        # h = (pi/2)/4 .. ; the first four steps lie above 1e-6
        "e2": _sin_errors(2, 4, (math.pi / 2) / 2),
        # refine until the error stops decreasing: the saturation floor
        "floor2": min(_sin_errors(2, 9, (math.pi / 2) / 2)),
        "unity": unity_deviation(make_kernel(1), 2.0),
    }
    out["seconds"] = time.perf_counter() - start
    return out


def test_criterion_2_quasi_orders(quasi_convergence, record_criterion):
    q = quasi_convergence
    o1 = observed_orders(q["e1"])
    o2 = observed_orders(q["e2"])
    floor_ok = q["floor2"] <= 1e-8
    ok = (
        np.all(np.abs(o1 - 2) <= 0.3)
        and np.all(np.abs(o2 - 4) <= 0.5)
        and q["unity"] <= 1e-6
        and floor_ok
        and q["seconds"] < 10
    )
    record_criterion(
        2,
        ok,
        f"psi1 orders={np.round(o1, 2).tolist()} psi2 orders={np.round(o2, 2).tolist()} "
        f"unity dev={q['unity']:.2e} psi2 floor={q['floor2']:.2e} (target 1e-8) {q['seconds']:.2f}s",
    )
    assert np.all(np.abs(o1 - 2) <= 0.3)
    assert np.all(np.abs(o2 - 4) <= 0.5)
    assert q["unity"] <= 1e-6
    assert q["seconds"] < 10


def test_criterion_2_psi1_floor_matches_theory(quasi_convergence):
    assert quasi_convergence["unity"] == pytest.approx(2 * math.exp(-2 * math.pi**2), rel=1e-3)


@pytest.mark.xfail(strict=True, reason="psi_2 floor at D=2 is 2(1+pi^2 D)exp(-pi^2 D) = 1.11e-7 > 1e-8")
def test_criterion_2_psi2_saturation_floor(quasi_convergence):
    floor = quasi_convergence["floor2"]
    theory = 2 * (1 + 2 * math.pi**2) * math.exp(-2 * math.pi**2)
    assert floor == pytest.approx(theory, rel=0.05)
    assert floor <= 1e-8


# ----------------------------------------------------------------- 3


@pytest.fixture(scope="module")
def aly_chan(aly_chan_run, record_criterion):
    r = aly_chan_run
    rep = error_report(r.solution, reference_signal("aly_chan"), margin=0.1)
    parts = {
        "converged": r.result.converged,
        "violation": r.result.max_violation <= 1e-8,
        "cost": abs(r.solution.cost - 0.0) <= 5e-3,
        "l2": rep.l2_time <= 0.05,
        "sup": rep.sup_interior <= 0.05,
        "time": r.seconds <= 60,
    }
    record_criterion(
        3,
        all(parts.values()),
        f"status={r.result.status.value} viol={r.result.max_violation:.1e} cost={r.solution.cost:.2e} "
        f"l2={rep.l2_time:.4f} (<=0.05) sup={rep.sup_interior:.4f} (<=0.05) "
        f"iters={r.result.outer_iterations}/{r.result.inner_iterations} {r.seconds:.1f}s",
    )
    return parts, rep, r


def test_criterion_3_solver_targets(aly_chan):
    parts, _, r = aly_chan
    assert r.problem.n == 404
    assert parts["converged"]
    assert parts["violation"]
    assert parts["cost"]
    assert parts["time"]


@pytest.mark.xfail(strict=True, reason="Euler-discrete optimum deviates from -sin t by more than 0.05 (see ledger)")
def test_criterion_3_control_error(aly_chan):
    parts, _, _ = aly_chan
    assert parts["l2"] and parts["sup"]


# ----------------------------------------------------------------- 4


@pytest.fixture(scope="module")
def van_der_pol(van_der_pol_run, record_criterion):
    r = van_der_pol_run
    ref = reference_signal("van_der_pol")
    rep = error_report(r.solution, ref)
    gap = abs(r.solution.cost - ref.cost) / ref.cost
    # diagnostic only: the same error against the minimum-principle optimum
    control = vdp_oracle.solution()[4]
    t = rep.times
    exact = l2_norm(r.solution.signal(r.ocp).evaluate(t)[:, 0] - control(t))
    parts = {
        "converged": r.result.converged,
        "violation": r.result.max_violation <= 1e-8,
        "cost": gap <= 0.01,
        "l2": rep.l2_time <= 0.5,
        "time": r.seconds <= 120,
    }
    record_criterion(
        4,
        all(parts.values()),
        f"status={r.result.status.value} viol={r.result.max_violation:.1e} cost={r.solution.cost:.6f} "
        f"ref={ref.cost:.6f} gap={100 * gap:.2f}% l2={rep.l2_time:.3f} (<=0.5) "
        f"[vs exact optimum {exact:.3f}] {r.seconds:.1f}s",
    )
    return parts, rep, r, exact


def test_criterion_4_solver_targets(van_der_pol):
    parts, rep, _, _ = van_der_pol
    assert rep.samples == 301
    assert parts["converged"]
    assert parts["violation"]
    assert parts["cost"]
    assert parts["time"]


def test_criterion_4_l2_lower_bound(van_der_pol):
    # a jump of ~2 in one step against a per-step reach of at most 0.798
    # forces an error of at least (2 - 0.798)/sqrt(2) somewhere on the grid
    _, rep, _, exact = van_der_pol
    assert rep.l2_time >= 0.85
    # the bound comes from the jump, so it holds against the exact optimum too
    assert exact >= 0.85


@pytest.mark.xfail(strict=True, reason="reference control jumps by ~2 within one step; l2 >= 0.85 (see ledger)")
def test_criterion_4_control_error(van_der_pol):
    parts, _, _, _ = van_der_pol
    assert parts["l2"]


# ----------------------------------------------------------------- 5


def test_criterion_5_parseval(aly_chan, van_der_pol, record_criterion):
    lines, ok = [], True
    for name, (_, rep, *_) in (("aly_chan", aly_chan), ("van_der_pol", van_der_pol)):
        e = rep.errors[:, 0]
        n = e.size
        rel = abs(l2_norm(dft(e)) - math.sqrt(n) * l2_norm(e)) / (math.sqrt(n) * l2_norm(e))
        ok &= rel <= 1e-9 and abs(rep.implied_samples - n) <= 1e-6 * n
        pub = implied_sample_count(*LITERATURE_NORM_PAIRS[name])
        lines.append(f"{name}: n={n} rel={rel:.1e} implied n={rep.implied_samples:.3f} published pair implies n={pub:.1f}")
    record_criterion(5, ok, "; ".join(lines))
    assert ok


def test_criterion_5_published_pairs():
    # the published norm ratios are square roots of plausible sample counts
    assert implied_sample_count(0.02, 0.558) == pytest.approx(778.41, abs=0.01)
    assert implied_sample_count(0.2522, 8.73) == pytest.approx(1198.2, abs=0.1)
    assert implied_sample_count(0.7816, 15.632) == pytest.approx(400.0, abs=0.01)


# ----------------------------------------------------------------- 6


def test_criterion_6_lq_oracle(record_criterion):
    start = time.perf_counter()
    z_ref, _ = kkt_oracle()
    res = solve(transcribe(lq_problem(), lq_options()))
    elapsed = time.perf_counter() - start
    err = float(np.max(np.abs(res.z_star - z_ref)))
    ok = res.converged and err <= 1e-6 and elapsed < 10
    record_criterion(6, ok, f"sup|z - z_kkt|={err:.1e} {elapsed:.2f}s")
    assert res.converged
    assert err <= 1e-6
    assert elapsed < 10


# ----------------------------------------------------------------- 7


def _random_feasible(p, rng):
    """States near the initial guess, coefficients uniform in the control box."""
    z = p.z0 + 0.5 * rng.standard_normal(p.n)
    off = p.layout.coeff_offset
    z[off:] = rng.uniform(p.lb[off:], p.ub[off:])
    return p.project(z)


def test_criterion_7_gradients(record_criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    schemes = [s.value for s in Scheme]
    worst = {}
    for name in ("aly_chan", "van_der_pol"):
        ocp = builtin(name)
        worst[name] = 0.0
        for i in range(20):
            opts = TranscriptionOptions(steps=40, scheme=schemes[i % len(schemes)])
            p = transcribe(ocp, opts)
            z = _random_feasible(p, rng)
            worst[name] = max(worst[name], check_gradient(p, z, directions=4, seed=i))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-6 and elapsed < 30
    record_criterion(7, ok, " ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f" {elapsed:.1f}s")
    assert max(worst.values()) <= 1e-6
    assert elapsed < 30


# ----------------------------------------------------------------- 8


def test_criterion_8_integrator_orders(record_criterion):
    start = time.perf_counter()

    def f(x, u, t):
        return -x + np.sin(t)

    def exact(t):
        return np.array([1.5 * math.exp(-t) + 0.5 * (math.sin(t) - math.cos(t))])

    orders = {}
    for scheme, target in ((Scheme.EULER, 1), (Scheme.TRAPEZOIDAL, 2), (Scheme.RK4, 4)):
        slope, _ = convergence_order(scheme, f, np.array([1.0]), exact, 0.0, 5.0)
        orders[scheme.value] = (slope, target)
    elapsed = time.perf_counter() - start
    ok = all(abs(s - t) <= 0.3 for s, t in orders.values()) and elapsed < 5
    record_criterion(8, ok, " ".join(f"{k}={s:.2f}" for k, (s, _) in orders.items()) + f" {elapsed:.2f}s")
    for slope, target in orders.values():
        assert abs(slope - target) <= 0.3
    assert elapsed < 5


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-rxX"]))
