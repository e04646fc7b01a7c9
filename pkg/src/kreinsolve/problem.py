"""Problem files: a strict TOML schema, parsing, validation and serialization.

Example::

    solver = "krein_34"
    grids = [9, 17, 33]

    [interval]
    a = 0.0
    b = 1.0

    [kernel]
    name = "constant_scalar"
    c = 0.5                      # or c = {re = 0.5, im = 0.1}

    [rhs]
    f = ["1"]                    # one expression in t per component
    df = ["0"]                   # optional derivative, used by theorem_4_2

    [output]
    path = "out"
    format = "json"              # or "csv"

Kernel parameters by name:

========================  =====================================
zero                      ``m`` (optional block size)
constant_scalar           ``c`` (number or {re, im})
separable_scalar          none
antidiag_block            ``h1``, ``h2`` (expressions in t)
even_scalar               ``h`` (expression in t)
========================  =====================================
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace

import tomli_w

from .errors import SpecError
from .expr import parse_expression
from .kernels import KernelSpec, catalog

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SOLVERS = ("nystrom", "resolvent_35", "krein_34", "theorem_4_1", "theorem_4_2")
FORMATS = ("csv", "json")
DIFFERENCE_SOLVERS = ("theorem_4_1", "theorem_4_2")

_KERNEL_PARAMS = {
    "zero": {"m": int},
    "constant_scalar": {"c": complex},
    "separable_scalar": {},
    "antidiag_block": {"h1": str, "h2": str},
    "even_scalar": {"h": str},
}
_REQUIRED = {"constant_scalar": {"c"}, "antidiag_block": {"h1", "h2"}, "even_scalar": {"h"}}
_FIXED_M = {"constant_scalar": 1, "separable_scalar": 1, "antidiag_block": 2, "even_scalar": 1}
_TOP_KEYS = {"solver", "grids", "block_dim", "interval", "kernel", "rhs", "output"}


@dataclass(frozen=True)
class ProblemSpec:
    a: float
    b: float
    m: int
    kernel: str
    kernel_params: dict = field(default_factory=dict)
    f: tuple[str, ...] = ("0",)
    df: tuple[str, ...] | None = None
    grids: tuple[int, ...] = (9, 17, 33)
    solver: str = "krein_34"
    output_path: str = "out"
    output_format: str = "json"

    def kernel_spec(self) -> KernelSpec:
        params = dict(self.kernel_params)
        if self.kernel == "zero":
            params.setdefault("m", self.m)
        for key in ("h1", "h2", "h"):
            if key in params:
                params[key] = parse_expression(params[key])
        return catalog(self.kernel, **params)

    def rhs(self):
        return [parse_expression(e) for e in self.f]

    def rhs_derivative(self):
        return None if self.df is None else [parse_expression(e) for e in self.df]

    def with_overrides(self, **changes) -> "ProblemSpec":
        changes = {k: v for k, v in changes.items() if v is not None}
        return validate(replace(self, **changes)) if changes else self


def _fail(where: str, msg: str) -> SpecError:
    return SpecError(f"{where}: {msg}")


def _table(doc: dict, key: str, required: bool = True) -> dict:
    value = doc.get(key)
    if value is None:
        if required:
            raise _fail(key, "missing section")
        return {}
    if not isinstance(value, dict):
        raise _fail(key, "must be a table")
    return value


def _reject_unknown(section: dict, allowed, where: str):
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise _fail(where, f"unknown key(s) {', '.join(extra)}")


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(where, f"expected a number, got {value!r}")
    return float(value)


def _complex(value, where: str) -> complex | float:
    if isinstance(value, dict):
        _reject_unknown(value, {"re", "im"}, where)
        return complex(_number(value.get("re", 0.0), where + ".re"), _number(value.get("im", 0.0), where + ".im"))
    return _number(value, where)


def _expr_list(value, where: str) -> tuple[str, ...]:
    if isinstance(value, (str, int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not value:
        raise _fail(where, "expected an expression or a list of expressions")
    out = []
    for i, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (str, int, float)):
            raise _fail(f"{where}[{i}]", f"expected an expression, got {item!r}")
        src = item if isinstance(item, str) else repr(float(item))
        try:
            parse_expression(src)
        except SpecError as exc:
            raise _fail(f"{where}[{i}]", str(exc)) from None
        out.append(src)
    return tuple(out)


def parse_spec(text: str) -> ProblemSpec:
    """Parse and validate a problem file. Unknown keys are errors."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"parse error: {exc}") from None
    _reject_unknown(doc, _TOP_KEYS, "top level")

    interval = _table(doc, "interval")
    _reject_unknown(interval, {"a", "b"}, "interval")
    if "a" not in interval or "b" not in interval:
        raise _fail("interval", "needs both a and b")
    a, b = _number(interval["a"], "interval.a"), _number(interval["b"], "interval.b")

    kernel = dict(_table(doc, "kernel"))
    name = kernel.pop("name", None)
    if name not in _KERNEL_PARAMS:
        raise _fail("kernel.name", f"unknown kernel {name!r}; known: {', '.join(sorted(_KERNEL_PARAMS))}")
    _reject_unknown(kernel, _KERNEL_PARAMS[name], f"kernel ({name})")
    missing = _REQUIRED.get(name, set()) - set(kernel)
    if missing:
        raise _fail(f"kernel ({name})", f"missing parameter(s) {', '.join(sorted(missing))}")
    params: dict = {}
    for key, value in kernel.items():
        kind = _KERNEL_PARAMS[name][key]
        where = f"kernel.{key}"
        if kind is complex:
            params[key] = _complex(value, where)
        elif kind is int:
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise _fail(where, f"expected a positive integer, got {value!r}")
            params[key] = value
        else:
            params[key] = _expr_list(value, where)[0]

    rhs = _table(doc, "rhs")
    _reject_unknown(rhs, {"f", "df"}, "rhs")
    if "f" not in rhs:
        raise _fail("rhs", "missing f")
    f = _expr_list(rhs["f"], "rhs.f")
    df = _expr_list(rhs["df"], "rhs.df") if "df" in rhs else None

    output = _table(doc, "output", required=False)
    _reject_unknown(output, {"path", "format"}, "output")

    block_dim = doc.get("block_dim")
    if block_dim is not None and (isinstance(block_dim, bool) or not isinstance(block_dim, int)):
        raise _fail("block_dim", f"expected an integer, got {block_dim!r}")
    m = _FIXED_M.get(name) or params.get("m") or block_dim or len(f)

    grids = doc.get("grids", [9, 17, 33])
    if not isinstance(grids, list) or not all(isinstance(g, int) and not isinstance(g, bool) for g in grids):
        raise _fail("grids", f"expected a list of integers, got {grids!r}")

    spec = ProblemSpec(
        a=a,
        b=b,
        m=int(m),
        kernel=name,
        kernel_params=params,
        f=f,
        df=df,
        grids=tuple(grids),
        solver=doc.get("solver", "krein_34"),
        output_path=output.get("path", "out"),
        output_format=output.get("format", "json"),
    )
    if block_dim is not None and block_dim != spec.m:
        raise _fail("block_dim", f"kernel {name!r} fixes the block size to {spec.m}, got {block_dim}")
    return validate(spec)


def validate(spec: ProblemSpec) -> ProblemSpec:
    if spec.solver not in SOLVERS:
        raise _fail("solver", f"unknown solver {spec.solver!r}; known: {', '.join(SOLVERS)}")
    if spec.output_format not in FORMATS:
        raise _fail("output.format", f"unknown format {spec.output_format!r}; known: {', '.join(FORMATS)}")
    if not isinstance(spec.output_path, str) or not spec.output_path:
        raise _fail("output.path", "must be a non-empty string")
    if not spec.b > spec.a:
        raise _fail("interval", f"require b > a; got a={spec.a}, b={spec.b}")
    if not spec.grids:
        raise _fail("grids", "need at least one grid size")
    for n in spec.grids:
        if n < 3:
            raise _fail("grids", f"grid sizes must be >= 3; got {n}")
        if spec.solver == "theorem_4_2" and (n % 2 == 0 or n < 5):
            raise _fail("grids", f"theorem_4_2 needs odd grid sizes >= 5 so that 0 is a node; got {n}")
    if len(spec.f) != spec.m:
        raise _fail("rhs.f", f"expected {spec.m} component(s), got {len(spec.f)}")
    if spec.df is not None and len(spec.df) != spec.m:
        raise _fail("rhs.df", f"expected {spec.m} component(s), got {len(spec.df)}")
    if spec.solver in DIFFERENCE_SOLVERS and spec.kernel not in ("zero", "antidiag_block", "even_scalar"):
        raise _fail("solver", f"{spec.solver} needs an even difference kernel; {spec.kernel!r} is not one")
    return spec


def dump_spec(spec: ProblemSpec) -> str:
    """Serialize to TOML text that :func:`parse_spec` reads back to an equal spec."""
    kernel: dict = {"name": spec.kernel}
    for key, value in spec.kernel_params.items():
        if isinstance(value, complex):
            value = {"re": value.real, "im": value.imag}
        kernel[key] = value
    rhs: dict = {"f": list(spec.f)}
    if spec.df is not None:
        rhs["df"] = list(spec.df)
    doc = {
        "solver": spec.solver,
        "grids": list(spec.grids),
        "block_dim": spec.m,
        "interval": {"a": spec.a, "b": spec.b},
        "kernel": kernel,
        "rhs": rhs,
        "output": {"path": spec.output_path, "format": spec.output_format},
    }
    return tomli_w.dumps(doc)


def spec_to_dict(spec: ProblemSpec) -> dict:
    """JSON-friendly view used in run reports."""
    params = {
        k: ({"re": v.real, "im": v.imag} if isinstance(v, complex) else v) for k, v in spec.kernel_params.items()
    }
    return {
        "interval": [spec.a, spec.b],
        "block_dim": spec.m,
        "kernel": {"name": spec.kernel, **params},
        "rhs": {"f": list(spec.f), "df": None if spec.df is None else list(spec.df)},
        "grids": list(spec.grids),
        "solver": spec.solver,
    }
