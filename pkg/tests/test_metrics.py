import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qitraj import OutOfDomainError, TranscriptionOptions, builtin, dft, error_report, error_trajectory, l2_norm
from qitraj import extract_solution, reference, reference_signal
from qitraj.errors import InvalidArgumentError
from qitraj.metrics import (
    LITERATURE_NORM_PAIRS,
    Reference,
    _reference_path,
    generate_van_der_pol_reference,
    implied_sample_count,
    uniform_samples,
)
from qitraj.transcribe import Layout

import vdp_oracle


def test_dft_matches_numpy():
    rng = np.random.default_rng(4)
    for n in (1, 2, 7, 64, 301):
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        np.testing.assert_allclose(dft(v), np.fft.fft(v), atol=1e-10 * n)


def test_dft_examples():
    np.testing.assert_allclose(dft([1.0, 0, 0, 0]), np.ones(4), atol=1e-15)
    assert l2_norm(dft([1.0, 0, 0, 0])) == pytest.approx(2.0, abs=1e-15)
    X = dft(np.full(5, 3.0))
    assert X[0] == pytest.approx(15.0, abs=1e-13)
    np.testing.assert_allclose(X[1:], 0.0, atol=1e-13)
    with pytest.raises(InvalidArgumentError):
        dft([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=200))
def test_parseval(v):
    assert l2_norm(dft(v)) == pytest.approx(math.sqrt(len(v)) * l2_norm(v), rel=1e-10, abs=1e-9)


def test_l2_examples():
    assert l2_norm([3.0, 4.0]) == 5.0
    assert l2_norm(np.zeros(9)) == 0.0
    assert l2_norm([]) == 0.0
    assert l2_norm(np.full(16, 0.5)) == pytest.approx(0.5 * 4)


def test_implied_sample_count():
    for pair, n in [((0.02, 0.558), 778.41), ((0.2522, 8.73), 1198.2)]:
        assert implied_sample_count(*pair) == pytest.approx(n, abs=0.05)
    assert set(LITERATURE_NORM_PAIRS) == {"aly_chan", "van_der_pol"}
    assert math.isnan(implied_sample_count(0.0, 1.0))


def test_uniform_samples():
    t = uniform_samples(0.0, math.pi / 2, 101)
    assert t[0] == 0.0 and t[-1] == math.pi / 2
    np.testing.assert_allclose(np.diff(t), math.pi / 200, atol=1e-15)


# ----------------------------------------------------------- references


def test_aly_chan_reference():
    ref = reference_signal("aly_chan")
    assert ref(np.array([math.pi / 2]))[0, 0] == pytest.approx(-1.0, abs=1e-15)
    assert ref(np.array([0.0]))[0, 0] == 0.0
    assert ref.cost == pytest.approx(0.0, abs=1e-16)
    # the closed-form states satisfy the dynamics under the closed-form control
    ocp = builtin("aly_chan")
    t = np.linspace(0.0, math.pi / 2, 41)
    x, u = ref.states(t), ref(t)
    rate = np.stack([np.cos(t), -np.sin(t), 0.5 * np.cos(2 * t)], axis=1)
    f = np.stack([e.evaluate(x, u, t)[0] for e in ocp.dynamics], axis=1)
    assert np.max(np.abs(f - rate)) <= 1e-12
    np.testing.assert_allclose(x[0], ocp.x0_lower, atol=1e-15)
    # the Mayer cost at the final state is the reference cost
    assert float(ocp.mayer.evaluate(x[-1], u[-1], t[-1])[0]) == pytest.approx(ref.cost, abs=1e-15)


def test_reference_sampling():
    s = reference("aly_chan", 5)
    assert s.t.shape == (5,) and s.u.shape == (5, 1)
    np.testing.assert_allclose(s.u[:, 0], -np.sin(s.t))
    v = reference("van_der_pol", 301)
    assert v.u.shape == (301, 1)
    # the Gaussian partition of unity is approximate, so saturated stretches sit within 1e-6 of the bound
    assert np.all(np.abs(v.u) <= 1.0 + 1e-6)
    assert v.cost == pytest.approx(0.7585635682435778, abs=1e-15)
    with pytest.raises(InvalidArgumentError):
        reference_signal("rocket")


def test_van_der_pol_reference_against_minimum_principle():
    t1, t2, _, cost, control, states = vdp_oracle.solution()
    assert (t1, t2) == (pytest.approx(1.36674, abs=1e-5), pytest.approx(2.46087, abs=1e-5))
    ref = reference_signal("van_der_pol")
    # the fine-grid solve costs a little more than the continuous optimum
    assert cost < ref.cost < cost * 1.002
    t = np.linspace(0.0, 4.0, 2001)
    u, u_opt = ref(t)[:, 0], control(t)
    bang = ((t > 0.1) & (t < t1 - 0.1)) | ((t > t1 + 0.1) & (t < t2 - 0.1))
    assert np.max(np.abs(u[bang] - u_opt[bang])) <= 1e-6
    early = (t > t2 + 0.1) & (t < 3.2)
    assert np.max(np.abs(u[early] - u_opt[early])) <= 1e-2
    # the shipped states follow the optimum closely even where the control drifts
    nodes = np.asarray(json.loads(_reference_path().read_text())["node_states"])
    assert np.max(np.abs(nodes - states(t))) <= 2e-3
    assert ref.meta["options"]["steps"] == 2000
    assert ref.meta["max_violation"] <= ref.meta["feas_tol"]


def test_singular_arc_feedback_is_admissible():
    t1, t2, A, _, control, states = vdp_oracle.solution()
    t = np.linspace(t2 + 1e-9, 4.0, 200)
    u = control(t)
    assert np.all(np.abs(u) < 1.0)
    # the arc runs into x2(tf) = 0
    np.testing.assert_allclose(states([4.0])[0], [A, 0.0], atol=1e-15)


@pytest.mark.slow
def test_van_der_pol_reference_regenerates():
    fresh = generate_van_der_pol_reference()
    shipped = json.loads(_reference_path().read_text())
    assert fresh["options"] == shipped["options"]
    assert fresh["cost"] == pytest.approx(shipped["cost"], abs=1e-10)
    np.testing.assert_allclose(fresh["coeffs"], shipped["coeffs"], atol=1e-8)


# --------------------------------------------------------------- errors


def aly_chan_bundle(coeffs, steps=20):
    ocp = builtin("aly_chan")
    o = TranscriptionOptions(steps=steps, extension="linear")
    lay = Layout(steps, 3, 1)
    return extract_solution(ocp, o, lay.pack(np.zeros((steps + 1, 3)), coeffs))


def test_error_trajectory_zero_and_offset():
    ref = reference_signal("aly_chan")
    ocp = builtin("aly_chan")
    t, e = error_trajectory(ref, ref, n=50, ocp=ocp)
    assert t.shape == (50,) and np.all(e == 0.0)
    shifted = lambda s: ref(s) + 0.3  # noqa: E731
    _, e = error_trajectory(shifted, ref, n=50, ocp=ocp)
    np.testing.assert_allclose(e, 0.3, atol=1e-15)


def test_error_trajectory_of_bundle():
    # a constant coefficient vector with linear extension reproduces the constant
    sol = aly_chan_bundle(np.full(21, 0.25))
    zero = Reference("zero", 0.0, math.pi / 2, 0.0, lambda t: np.zeros((np.size(t), 1)))
    t, e = error_trajectory(sol, zero)
    assert t.size == 21
    np.testing.assert_allclose(e, 0.25, atol=1e-6)


def test_horizon_mismatch():
    sol = aly_chan_bundle(np.zeros(21))
    vdp = reference_signal("van_der_pol")
    with pytest.raises(OutOfDomainError):
        error_trajectory(sol, vdp)
    with pytest.raises(InvalidArgumentError):
        error_trajectory(lambda t: t, vdp)


def test_error_report_and_outputs(tmp_path):
    ref = reference_signal("aly_chan")
    sol = aly_chan_bundle(np.full(21, 0.1))
    rep = error_report(sol, ref, n=101)
    assert rep.samples == 101
    assert rep.l2_dft == pytest.approx(math.sqrt(101) * rep.l2_time, rel=1e-12)
    assert rep.implied_samples == pytest.approx(101, rel=1e-10)
    assert rep.cost_gap == pytest.approx(sol.cost)
    inner = (rep.times >= 0.1) & (rep.times <= math.pi / 2 - 0.1)
    assert rep.sup_interior == pytest.approx(np.max(np.abs(rep.errors[inner])))
    rep.to_json(tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["samples"] == 101 and len(data["errors"]) == 101
    rep.dft_csv(tmp_path / "d.csv")
    rows = list(csv.reader(open(tmp_path / "d.csv")))
    assert rows[0] == ["k", "abs_dft_u1"]
    assert len(rows) == 102
    assert math.sqrt(sum(float(r[1]) ** 2 for r in rows[1:])) == pytest.approx(rep.l2_dft, rel=1e-12)
