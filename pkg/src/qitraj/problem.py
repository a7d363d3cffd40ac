"""Optimal control problem data: model, file format, validation, builtins.

Problem files are line oriented::

    [problem]
    name = aly_chan
    nx = 3
    nu = 1
    t0 = 0
    tf = pi/2

    [dynamics]
    dx1 = x2
    ...

    [cost]
    lagrange = 0
    mayer = x3

    [bounds]
    x0_lower = 0, 1, 0
    ...

    [path]
    g = x1 - 2        # g <= 0

``#`` starts a comment.  Numeric fields accept constant expressions such
as ``pi/2``; bound lists also accept ``inf`` and ``-inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, ValidationError
from .exprlang import Expression, ParseError, eval_expr, parse, unparse

BOUND_KEYS = ("x0_lower", "x0_upper", "xf_lower", "xf_upper", "x_lower", "x_upper", "u_lower", "u_upper")
BUILTINS = ("aly_chan", "van_der_pol")


@dataclass(frozen=True)
class OcpDefinition:
    """Fixed-horizon optimal control problem.

    Dynamics ``x' = f(x, u, t)``; cost ``mayer(x(tf)) + int lagrange dt``;
    initial/final/running state boxes; control box; path constraints
    ``g(x, u, t) <= 0``.  Bounds are stored as tuples of floats.
    """

    name: str
    nx: int
    nu: int
    t0: float
    tf: float
    dynamics: tuple
    lagrange: Expression
    mayer: Expression
    x0_lower: tuple
    x0_upper: tuple
    xf_lower: tuple
    xf_upper: tuple
    x_lower: tuple
    x_upper: tuple
    u_lower: tuple
    u_upper: tuple
    path: tuple = ()

    @property
    def dims(self):
        return (self.nx, self.nu)

    def bound(self, key) -> np.ndarray:
        return np.array(getattr(self, key), dtype=float)


def define(
    name,
    nx,
    nu,
    t0,
    tf,
    dynamics,
    lagrange="0",
    mayer="0",
    *,
    x0_lower=None,
    x0_upper=None,
    xf_lower=None,
    xf_upper=None,
    x_lower=None,
    x_upper=None,
    u_lower,
    u_upper,
    path=(),
    check=True,
) -> OcpDefinition:
    """Build a definition from expression strings.  Unspecified state boxes
    default to unbounded.  Raises ValidationError unless ``check`` is False."""
    dims = (int(nx), int(nu))

    def vec(v, n, default):
        if v is None:
            return (default,) * n
        return tuple(float(a) for a in np.broadcast_to(np.asarray(v, dtype=float), (n,)))

    def expr(e):
        return e if isinstance(e, Expression) else parse(str(e), dims)

    inf = math.inf
    ocp = OcpDefinition(
        name=str(name),
        nx=dims[0],
        nu=dims[1],
        t0=float(t0),
        tf=float(tf),
        dynamics=tuple(expr(e) for e in dynamics),
        lagrange=expr(lagrange),
        mayer=expr(mayer),
        x0_lower=vec(x0_lower, nx, -inf),
        x0_upper=vec(x0_upper, nx, inf),
        xf_lower=vec(xf_lower, nx, -inf),
        xf_upper=vec(xf_upper, nx, inf),
        x_lower=vec(x_lower, nx, -inf),
        x_upper=vec(x_upper, nx, inf),
        u_lower=vec(u_lower, nu, -inf),
        u_upper=vec(u_upper, nu, inf),
        path=tuple(expr(e) for e in path),
    )
    if check:
        report = validate(ocp)
        if report.failures:
            raise ValidationError(report.failures)
    return ocp


@dataclass
class ValidationReport:
    failures: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def __bool__(self):
        # truthy when something needs reporting
        return bool(self.failures or self.warnings)


def validate(ocp: OcpDefinition) -> ValidationReport:
    """Check every structural invariant; never raises."""
    rep = ValidationReport()
    fail = rep.failures.append
    d, m = ocp.nx, ocp.nu
    if not (math.isfinite(ocp.t0) and math.isfinite(ocp.tf)):
        fail("initial and final times must be finite")
    elif not ocp.tf > ocp.t0:
        fail("final time must exceed initial time")
    shape = []
    if d < 1 or m < 1:
        shape.append("state and control dimensions must be positive")
    if len(ocp.dynamics) != d:
        shape.append(f"expected {d} dynamics expressions, got {len(ocp.dynamics)}")
    for key in BOUND_KEYS:
        n = m if key.startswith("u") else d
        if len(getattr(ocp, key)) != n:
            shape.append(f"{key} must have {n} entries")
    if shape:
        # the remaining checks index the vectors; stop here
        rep.failures.extend(shape)
        return rep
    for prefix, label in (("x0", "initial state box"), ("xf", "final state box"), ("x", "state box")):
        lo, hi = ocp.bound(prefix + "_lower"), ocp.bound(prefix + "_upper")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            fail(f"empty {label}: lower bound exceeds upper bound")
    ul, uu = ocp.bound("u_lower"), ocp.bound("u_upper")
    if not (np.all(np.isfinite(ul)) and np.all(np.isfinite(uu))):
        fail("control set must be compact (finite control bounds)")
    elif np.any(ul > uu):
        fail("empty control set: u_lower exceeds u_upper")
    exprs = [("dynamics", e) for e in ocp.dynamics] + [("lagrange", ocp.lagrange), ("mayer", ocp.mayer)]
    exprs += [("path", e) for e in ocp.path]
    for where, e in exprs:
        if tuple(e.dims) != (d, m):
            fail(f"{where} expression declared for dims {e.dims}, problem has {(d, m)}")
        if e.nonsmooth:
            rep.warnings.append(f"{where} expression '{unparse(e)}' uses abs (nonsmooth)")
    if ocp.mayer.uses_control or ocp.mayer.uses_time:
        fail("Mayer cost must depend on state only")
    return rep


# ------------------------------------------------------------ file format


class ProblemFileError(InvalidArgumentError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def _const(text, line):
    try:
        return eval_expr(parse(text, (0, 0)), [], [], 0.0)
    except ParseError as exc:
        raise ProblemFileError(f"invalid number {text!r} ({exc})", line) from None


def _number_list(text, line):
    out = []
    for item in text.split(","):
        item = item.strip().lower()
        if item in ("inf", "+inf"):
            out.append(math.inf)
        elif item == "-inf":
            out.append(-math.inf)
        elif not item:
            raise ProblemFileError("empty entry in bound list", line)
        else:
            out.append(_const(item, line))
    return out


def loads(text: str) -> OcpDefinition:
    """Parse problem-file text into a validated definition."""
    sections = {"problem": {}, "dynamics": {}, "cost": {}, "bounds": {}, "path": []}
    lines = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ProblemFileError(f"malformed section header {line!r}", lineno)
            current = line[1:-1].strip().lower()
            if current not in sections:
                raise ProblemFileError(f"unknown section [{current}]", lineno)
            continue
        if current is None:
            raise ProblemFileError("content before the first section header", lineno)
        if "=" not in line:
            raise ProblemFileError("expected 'key = value'", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if current == "path":
            if key != "g":
                raise ProblemFileError("path lines must read 'g = <expression>'", lineno)
            sections["path"].append((value, lineno))
            continue
        if key in sections[current]:
            raise ProblemFileError(f"duplicate key {key!r}", lineno)
        sections[current][key] = value
        lines[(current, key)] = lineno

    head = sections["problem"]
    for key in ("name", "nx", "nu", "t0", "tf"):
        if key not in head:
            raise ProblemFileError(f"[problem] is missing '{key}'")
    try:
        nx, nu = int(head["nx"]), int(head["nu"])
    except ValueError:
        raise ProblemFileError("nx and nu must be integers", lines.get(("problem", "nx"))) from None
    dims = (nx, nu)

    def expr(value, lineno):
        try:
            return parse(value, dims)
        except ParseError as exc:
            raise ProblemFileError(str(exc), lineno) from None

    dyn = sections["dynamics"]
    expected = [f"dx{i}" for i in range(1, nx + 1)]
    if sorted(dyn) != sorted(expected):
        raise ProblemFileError(f"[dynamics] must define exactly {', '.join(expected)}")
    dynamics = [expr(dyn[k], lines[("dynamics", k)]) for k in expected]
    cost = sections["cost"]
    unknown = set(cost) - {"lagrange", "mayer"}
    if unknown:
        raise ProblemFileError(f"unknown cost keys {sorted(unknown)}")
    lagrange = expr(cost.get("lagrange", "0"), lines.get(("cost", "lagrange")))
    mayer = expr(cost.get("mayer", "0"), lines.get(("cost", "mayer")))
    bounds = {}
    for key, value in sections["bounds"].items():
        if key not in BOUND_KEYS:
            raise ProblemFileError(f"unknown bound {key!r}", lines[("bounds", key)])
        bounds[key] = _number_list(value, lines[("bounds", key)])
    for key in ("u_lower", "u_upper"):
        if key not in bounds:
            raise ProblemFileError(f"[bounds] is missing '{key}'")
    path = [expr(v, ln) for v, ln in sections["path"]]
    ocp = define(
        head["name"],
        nx,
        nu,
        _const(head["t0"], lines[("problem", "t0")]),
        _const(head["tf"], lines[("problem", "tf")]),
        dynamics,
        lagrange,
        mayer,
        path=path,
        check=False,
        **{k: v for k, v in bounds.items()},
    )
    report = validate(ocp)
    if report.failures:
        raise ValidationError(report.failures)
    return ocp


def load_problem(path) -> OcpDefinition:
    return loads(Path(path).read_text(encoding="utf-8"))


def _fmt(v):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def dumps(ocp: OcpDefinition) -> str:
    """Serialize to the problem-file format; ``loads(dumps(p)) == p``."""
    out = [
        "[problem]",
        f"name = {ocp.name}",
        f"nx = {ocp.nx}",
        f"nu = {ocp.nu}",
        f"t0 = {_fmt(ocp.t0)}",
        f"tf = {_fmt(ocp.tf)}",
        "",
        "[dynamics]",
    ]
    out += [f"dx{i} = {unparse(e)}" for i, e in enumerate(ocp.dynamics, 1)]
    out += ["", "[cost]", f"lagrange = {unparse(ocp.lagrange)}", f"mayer = {unparse(ocp.mayer)}", "", "[bounds]"]
    out += [f"{k} = {', '.join(_fmt(v) for v in getattr(ocp, k))}" for k in BOUND_KEYS]
    if ocp.path:
        out += ["", "[path]"] + [f"g = {unparse(e)}" for e in ocp.path]
    return "\n".join(out) + "\n"


def save_problem(ocp: OcpDefinition, path) -> None:
    Path(path).write_text(dumps(ocp), encoding="utf-8")


def builtin_path(name: str):
    if name not in BUILTINS:
        raise InvalidArgumentError(f"unknown problem {name!r}; available: {', '.join(BUILTINS)}")
    return resources.files("qitraj") / "data" / f"{name}.ocp"


def builtin(name: str) -> OcpDefinition:
    """One of the shipped benchmark problems: ``aly_chan`` or ``van_der_pol``."""
    return loads(builtin_path(name).read_text(encoding="utf-8"))
