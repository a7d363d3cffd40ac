"""Command line interface: ``qitraj solve | bench | verify``.

Exit codes: 0 success, 1 input error, 2 solver stopped without converging
(``solve``) or a threshold missed (``bench``/``verify``).  The output
directory defaults to ``--out`` and may be overridden with ``QITRAJ_OUT``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels, metrics, quasi
from .errors import QitrajError
from .integrate import Scheme, convergence_order
from .nlp import NlpOptions, Status, check_gradient, solve
from .problem import BUILTINS, builtin, load_problem
from .transcribe import TranscriptionOptions, extract_solution, transcribe

OUT_ENV = "QITRAJ_OUT"

log = logging.getLogger("qitraj")


# ------------------------------------------------------------------ shared


def _load(problem: str):
    if problem in BUILTINS:
        return builtin(problem)
    path = Path(problem)
    if not path.exists():
        raise QitrajError(f"unknown problem {problem!r}: not a builtin ({', '.join(BUILTINS)}) and no such file")
    return load_problem(path)


def _out_dir(arg) -> Path:
    out = Path(os.environ.get(OUT_ENV) or arg or "qitraj_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solver_options(a) -> NlpOptions:
    return NlpOptions(
        kkt_tol=a.kkt_tol,
        feas_tol=a.feas_tol,
        max_outer=a.max_outer,
        max_inner=a.max_inner,
        penalty_init=a.penalty_init,
        penalty_growth=a.penalty_growth,
        inner=a.inner,
    )


def _add_solver_flags(p):
    d = NlpOptions()
    p.add_argument("--kkt-tol", type=float, default=d.kkt_tol)
    p.add_argument("--feas-tol", type=float, default=d.feas_tol)
    p.add_argument("--max-outer", type=int, default=d.max_outer)
    p.add_argument("--max-inner", type=int, default=d.max_inner)
    p.add_argument("--penalty-init", type=float, default=d.penalty_init)
    p.add_argument("--penalty-growth", type=float, default=d.penalty_growth)
    p.add_argument("--inner", choices=("newton", "lbfgs"), default=d.inner)


def _write_trajectory(path, sol, ocp):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(ocp.nx)] + [f"u{j + 1}" for j in range(ocp.nu)])
        for t, x, u in zip(sol.t, sol.states, sol.controls):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in x] + [repr(float(v)) for v in u])


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _run(ocp, opts: TranscriptionOptions, nlp: NlpOptions):
    p = transcribe(ocp, opts)
    res = solve(p, nlp)
    sol = extract_solution(ocp, opts, res.z_star, stats=res.stats())
    return res, sol


def _result_payload(ocp, opts, nlp, res, sol):
    stats = res.stats()
    return {
        "problem": ocp.name,
        "status": stats["status"],
        "cost": sol.cost,
        "outer_iterations": stats["outer_iterations"],
        "inner_iterations": stats["inner_iterations"],
        "kkt_residual": stats["kkt_residual"],
        "max_violation": stats["max_violation"],
        "penalty": stats["penalty"],
        "wall_time": stats["wall_time"],
        "node_mismatch": sol.node_mismatch,
        "transcription": opts.as_dict(),
        "solver": {k: v for k, v in vars(nlp).items()},
    }


# ------------------------------------------------------------------- solve


def cmd_solve(a) -> int:
    try:
        if a.implicit_trapezoidal and a.scheme != Scheme.TRAPEZOIDAL.value:
            raise QitrajError("--implicit-trapezoidal requires --scheme trapezoidal")
        ocp = _load(a.problem)
        opts = TranscriptionOptions(
            steps=a.steps,
            shape=a.shape,
            kernel=a.kernel,
            scheme=a.scheme,
            substeps=a.substeps,
            dense_sample_count=a.dense,
            enforce_bounds_on_samples=a.enforce_bounds_on_samples,
            implicit_trapezoidal=a.implicit_trapezoidal,
            extension=a.extension,
        )
        nlp = _solver_options(a)
    except (QitrajError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        res, sol = _run(ocp, opts, nlp)
    except QitrajError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = _out_dir(a.out)
    _write_trajectory(out / "trajectory.csv", sol, ocp)
    _write_json(out / "result.json", _result_payload(ocp, opts, nlp, res, sol))
    print(
        f"{ocp.name}: {res.status.value}  cost={sol.cost:.10g}  violation={res.max_violation:.3e}  "
        f"kkt={res.kkt_residual:.3e}  outer={res.outer_iterations}  inner={res.inner_iterations}  "
        f"time={res.wall_time:.2f}s  -> {out}"
    )
    if res.status is Status.CONVERGED:
        return 0
    return 2


# ------------------------------------------------------------------- bench


@dataclass(frozen=True)
class BenchCase:
    name: str
    options: TranscriptionOptions
    max_violation: float
    cost_tol: float
    relative_cost: bool
    l2_max: float
    sup_max: float = math.inf
    margin: float = 0.1


def bench_cases(shape=None):
    d = 2.0 if shape is None else shape
    return {
        "aly_chan": BenchCase(
            "aly_chan",
            TranscriptionOptions(steps=100, shape=d, kernel=1, scheme="euler"),
            max_violation=1e-8,
            cost_tol=5e-3,
            relative_cost=False,
            l2_max=0.05,
            sup_max=0.05,
        ),
        "van_der_pol": BenchCase(
            "van_der_pol",
            TranscriptionOptions(steps=300, shape=d, kernel=1, scheme="hermite-simpson"),
            max_violation=1e-8,
            cost_tol=0.01,
            relative_cost=True,
            l2_max=0.5,
        ),
    }


def run_case(case: BenchCase, nlp: NlpOptions = NlpOptions()):
    """Solve one benchmark; returns ``(checks, report, result, solution)``."""
    ocp = builtin(case.name)
    res, sol = _run(ocp, case.options, nlp)
    ref = metrics.reference_signal(case.name)
    rep = metrics.error_report(sol, ref, margin=case.margin)
    gap = abs(rep.cost_gap) / abs(ref.cost) if case.relative_cost else abs(rep.cost_gap)
    checks = {
        "converged": res.status is Status.CONVERGED,
        "violation": res.max_violation <= case.max_violation,
        "cost": gap <= case.cost_tol,
        "l2_time": rep.l2_time <= case.l2_max,
        "sup_interior": rep.sup_interior <= case.sup_max,
    }
    return checks, rep, res, sol


def cmd_bench(a) -> int:
    names = list(BUILTINS) if a.suite == "all" else [a.suite]
    try:
        cases = bench_cases(a.shape)
        nlp = _solver_options(a)
    except (QitrajError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = _out_dir(a.out) if (a.out or os.environ.get(OUT_ENV)) else None
    header = (
        f"{'problem':<12} {'scheme':<16} {'n':>4} {'l2_time':>10} {'l2_dft':>10} {'implied_n':>9} "
        f"{'sup_int':>9} {'cost':>12} {'outer':>5} {'inner':>5} {'violation':>10} {'time_s':>7}  result"
    )
    print(header)
    ok = True
    for name in names:
        case = cases[name]
        try:
            checks, rep, res, sol = run_case(case, nlp)
        except QitrajError as exc:
            print(f"{name:<12} error: {exc}")
            ok = False
            continue
        passed = all(checks.values())
        ok &= passed
        failed = [k for k, v in checks.items() if not v]
        print(
            f"{name:<12} {case.options.scheme.value:<16} {rep.samples:>4} {rep.l2_time:>10.4g} {rep.l2_dft:>10.4g} "
            f"{rep.implied_samples:>9.1f} {rep.sup_interior:>9.3g} {sol.cost:>12.6g} {res.outer_iterations:>5} "
            f"{res.inner_iterations:>5} {res.max_violation:>10.3e} {res.wall_time:>7.2f}  "
            + ("PASS" if passed else "FAIL (" + ", ".join(failed) + ")")
        )
        if out is not None:
            rep.to_json(out / f"{name}_errors.json")
            rep.dft_csv(out / f"{name}_dft.csv")
            _write_trajectory(out / f"{name}_trajectory.csv", sol, builtin(name))
            _write_json(out / f"{name}_result.json", _result_payload(builtin(name), case.options, nlp, res, sol))
    print()
    print("published (l2_time, l2_dft) pairs and the sample counts they imply:")
    for name in names:
        t, f = metrics.LITERATURE_NORM_PAIRS[name]
        print(f"  {name:<12} ({t}, {f}) -> n = {metrics.implied_sample_count(t, f):.1f}")
    return 0 if ok else 2


# ------------------------------------------------------------------ verify


def _check(label, passed, detail, results):
    results.append(passed)
    print(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}")


def cmd_verify(a) -> int:
    results = []
    ids = sorted(kernels.KERNEL_ORDERS)
    good = 0
    for kid in ids:
        k = kernels.make_kernel(kid)
        ok = abs(kernels.moment(k, 0) - 1.0) <= 1e-8
        ok &= all(abs(kernels.moment(k, j)) <= kernels.MOMENT_TOL for j in range(2, k.order, 2))
        good += ok
    _check("moments", good == len(ids), f"{good}/{len(ids)} kernels pass", results)
    orders = {kid: kernels.measured_order(kernels.make_kernel(kid)) for kid in ids}
    _check(
        "measured orders",
        all(orders[kid] == kernels.KERNEL_ORDERS[kid] for kid in ids),
        ", ".join(f"psi{kid}={orders[kid]}" for kid in ids),
        results,
    )
    k = kernels.make_kernel(a.kernel)
    print(f"       radius of psi{a.kernel}: {k.eval_radius:g}")

    dev = quasi.unity_deviation(kernels.make_kernel(1), 2.0)
    _check("partition of unity (psi1, D=2)", dev <= 1e-6, f"interior deviation {dev:.2e}", results)
    for kid, base, target, tol in ((1, 10, 2.0, 0.3), (2, 2, 4.0, 0.5)):
        kk = kernels.make_kernel(kid)
        errs = [quasi.approximation_error(np.sin, kk, 2.0, 0.0, math.pi / 2, (math.pi / 2) / (base * 2**i)) for i in range(4)]
        rates = quasi.observed_orders(errs)
        _check(
            f"approximation order psi{kid}",
            bool(np.all(np.abs(rates - target) <= tol)),
            " ".join(f"{r:.2f}" for r in rates),
            results,
        )

    def f(x, u, t):
        return -x + np.sin(t)

    def exact(t):
        return 1.5 * math.exp(-t) + 0.5 * (math.sin(t) - math.cos(t))

    for scheme, target in ((Scheme.EULER, 1), (Scheme.TRAPEZOIDAL, 2), (Scheme.RK4, 4)):
        rate, _ = convergence_order(scheme, f, np.array([1.0]), exact, 0.0, 5.0)
        _check(f"integrator order {scheme.value}", abs(rate - target) <= 0.3, f"{rate:.2f}", results)

    rng = np.random.default_rng(0)
    for name in BUILTINS:
        ocp = builtin(name)
        p = transcribe(ocp, TranscriptionOptions(steps=20, scheme="rk4"))
        worst = 0.0
        for _ in range(a.points):
            z = p.project(p.z0 + 0.1 * rng.standard_normal(p.n))
            worst = max(worst, check_gradient(p, z, directions=4, seed=int(rng.integers(1 << 30))))
        _check(f"gradient check {name}", worst <= 1e-6, f"max relative error {worst:.2e}", results)

    n_ok = sum(results)
    print(f"{n_ok}/{len(results)} checks pass")
    return 0 if all(results) else 2


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qitraj", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    d = TranscriptionOptions()
    s = sub.add_parser("solve", help="solve a builtin or file-defined problem")
    s.add_argument("--problem", required=True, help=f"builtin ({', '.join(BUILTINS)}) or problem file")
    s.add_argument("--steps", type=int, default=d.steps)
    s.add_argument("--shape", type=float, default=d.shape)
    s.add_argument("--kernel", type=int, default=d.kernel)
    s.add_argument("--scheme", choices=[x.value for x in Scheme], default=d.scheme.value)
    s.add_argument("--substeps", type=int, default=d.substeps)
    s.add_argument("--dense", type=int, default=d.dense_sample_count)
    s.add_argument("--extension", choices=quasi.EXTENSIONS, default=d.extension)
    s.add_argument("--enforce-bounds-on-samples", action="store_true")
    s.add_argument("--implicit-trapezoidal", action="store_true")
    s.add_argument("--out", default=None)
    _add_solver_flags(s)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run the benchmark suite against references")
    b.add_argument("--suite", choices=("aly_chan", "van_der_pol", "all"), default="all")
    b.add_argument("--shape", type=float, default=None, help="override the shape parameter")
    b.add_argument("--out", default=None)
    _add_solver_flags(b)
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("verify", help="run the verification oracles")
    v.add_argument("--kernel", type=int, default=6, choices=sorted(kernels.KERNEL_ORDERS))
    v.add_argument("--points", type=int, default=3, help="random points per gradient check")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(name)s: %(message)s")
    start = time.perf_counter()
    code = a.func(a)
    log.info("finished in %.2f s", time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
