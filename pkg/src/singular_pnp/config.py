"""Run configuration: a line-oriented ``key = value`` format.

See docs/CONFIG.md for the grammar.  Values are Python literals, bare words
(read as strings), or one of the calls ``gaussian(center, width, amplitude)``,
``constant(c)`` and ``csv(path)``.  Unknown keys are rejected.
"""
import ast
import logging
import math
import os
import warnings
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .errors import ChargeError, ParseError, ValidationError
from .evolution import FLUX_SCHEMES, SchemeConfig

logger = logging.getLogger(__name__)

MODES = ("simulate", "validate", "oracle")
GRID_MIN, GRID_MAX = 4, 4096

# config key -> RunConfig attribute (defaults live on RunConfig)
KEYS = {
    "name": "name",
    "mode": "mode",
    "domain": "domain",
    "grid": "grid",
    "charges": "charges",
    "boundary_potential": "boundary_potential",
    "initial.c_n": "initial_c_n",
    "initial.c_p": "initial_c_p",
    "scheme.dt": "dt",
    "scheme.t_end": "t_end",
    "scheme.flux": "flux_scheme",
    "scheme.flux_scheme": "flux_scheme",
    "scheme.picard_tol": "picard_tol",
    "scheme.picard_max": "picard_max",
    "output.snapshot_every": "snapshot_every",
    "output.out_dir": "out_dir",
    "output.vtk": "vtk",
    "diagnostics.sigma": "sigma",
    "diagnostics.gamma_C": "gamma_C",
    "diagnostics.eps1": "eps1",
    "weights.snap_charges": "snap_charges",
    "weights.quadrature_tol": "quadrature_tol",
    "oracle.radii": "oracle_radii",
    "oracle.exclusion": "oracle_exclusion",
    "oracle.grids": "oracle_grids",
}

INITIAL_KINDS = {"constant": 1, "gaussian": 3, "csv": 1}


@dataclass
class RunConfig:
    grid: tuple = None
    domain: tuple = (0.0, 0.0, 1.0, 1.0)
    charges: list = field(default_factory=list)
    boundary_potential: object = 0.0
    initial_c_n: tuple = ("constant", 0.0)
    initial_c_p: tuple = ("constant", 0.0)
    dt: float = 1e-3
    t_end: float = 1.0
    flux_scheme: str = "scharfetter_gummel"
    picard_tol: float = 1e-8
    picard_max: int = 50
    snapshot_every: int = 10
    out_dir: str = "out"
    vtk: bool = True
    sigma: float = 1.0
    gamma_C: float = 1.0
    eps1: float = 0.05
    snap_charges: bool = True
    quadrature_tol: float = 1e-8
    mode: str = "simulate"
    name: str = "run"
    oracle_radii: tuple = (0.2, 0.1, 0.05)
    oracle_exclusion: float = 0.1
    oracle_grids: Optional[tuple] = None
    base_dir: str = "."

    def scheme(self):
        return SchemeConfig(dt=self.dt, t_end=self.t_end, flux_scheme=self.flux_scheme,
                            picard_tol=self.picard_tol, picard_max=self.picard_max,
                            theta_sigma=self.sigma, gamma_C=self.gamma_C, eps1=self.eps1)

    def make_grid(self):
        from .grid import Grid

        x0, y0, x1, y1 = self.domain
        return Grid(self.grid[0], self.grid[1], x0, y0, x1, y1)

    def boundary_function(self, grid):
        """Callable ``g(x, y)`` on the boundary, or the constant itself."""
        bp = self.boundary_potential
        if isinstance(bp, str):
            expr = compile_expression(bp, ("s", "x", "y"))
            return lambda x, y: np.broadcast_to(
                expr(s=grid.arclength(x, y), x=np.asarray(x, float), y=np.asarray(y, float)),
                np.broadcast(x, y).shape).astype(float)
        return float(bp)

    def initial_fields(self, grid):
        return (evaluate_initial(self.initial_c_n, grid, self.base_dir),
                evaluate_initial(self.initial_c_p, grid, self.base_dir))

    def replace(self, **kw):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return RunConfig(**d)

    def describe(self):
        """``key = value`` lines with every setting, defaults included."""
        inv = {}
        for key, attr in KEYS.items():
            inv.setdefault(attr, key)
        return [f"{inv[f.name]} = {_show(getattr(self, f.name))}"
                for f in fields(self) if f.name in inv]


def _show(v):
    if isinstance(v, tuple) and v and v[0] in INITIAL_KINDS and len(v) == 2:
        return f"{v[0]}({', '.join(repr(a) for a in v[1])})" if v[0] == "gaussian" else \
            f"{v[0]}({v[1]!r})"
    return repr(v)


# ---------------------------------------------------------------- parsing

def _strip_comment(line):
    quote = None
    for i, ch in enumerate(line):
        if quote:
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch == "#":
            return line[:i]
    return line


def _literal(node, line, key):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, str, bool)):
        return node.value
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        val = _literal(node.operand, line, key)
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, (ast.Tuple, ast.List)):
        return tuple(_literal(e, line, key) for e in node.elts)
    if isinstance(node, ast.Name):
        low = node.id.lower()
        if low in ("true", "yes", "on"):
            return True
        if low in ("false", "no", "off"):
            return False
        if low in ("none", "null"):
            return None
        return node.id
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        kind = node.func.id
        if kind not in INITIAL_KINDS:
            raise ParseError(f"unknown function {kind!r}", line, key)
        args = tuple(_literal(a, line, key) for a in node.args)
        if len(args) != INITIAL_KINDS[kind]:
            raise ParseError(f"{kind}() takes {INITIAL_KINDS[kind]} argument(s), got {len(args)}",
                             line, key)
        return (kind, args if kind == "gaussian" else args[0])
    raise ParseError(f"unsupported value syntax: {ast.dump(node)[:60]}", line, key)


def parse_value(text, line=None, key=None):
    """Parse the right-hand side of one assignment."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ParseError(f"cannot parse value {text.strip()!r}: {exc.msg}", line, key) from None
    return _literal(tree.body, line, key)


def _balanced(text):
    depth = 0
    quote = None
    for ch in text:
        if quote:
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
    return depth <= 0


def parse_text(text, base_dir="."):
    """Parse configuration text into a dict ``key -> value`` (no validation)."""
    section = ""
    raw = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        lineno = i + 1
        line = _strip_comment(lines[i]).strip()
        i += 1
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip()
            if section and not all(p.isidentifier() for p in section.split(".")):
                raise ParseError(f"malformed section name {section!r}", lineno)
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if not key or not all(p.isidentifier() for p in key.split(".")):
            raise ParseError(f"malformed key {key!r}", lineno)
        while not _balanced(value) and i < len(lines):
            value += " " + _strip_comment(lines[i]).strip()
            i += 1
        full = f"{section}.{key}" if section else key
        if full not in KEYS:
            raise ParseError("unknown configuration key", lineno, full)
        if full in raw:
            raise ParseError("key given twice", lineno, full)
        raw[full] = (parse_value(value, lineno, full), lineno)
    return raw


def build_config(raw, base_dir="."):
    """Apply parsed values over the defaults and validate everything."""
    cfg = RunConfig(base_dir=base_dir)
    problems = []
    for key, (value, lineno) in raw.items():
        attr = KEYS[key]
        try:
            value = _coerce(attr, value)
        except (TypeError, ValueError) as exc:
            problems.append(f"line {lineno}, {key}: {exc}")
            continue
        setattr(cfg, attr, value)
    problems.extend(validate(cfg))
    if problems:
        raise ValidationError(problems)
    return cfg


def parse_config(path):
    """Read, parse and validate a configuration file into a :class:`RunConfig`."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    base = os.path.dirname(os.path.abspath(path))
    cfg = build_config(parse_text(text, base), base)
    for line in cfg.describe():
        logger.info("config: %s", line)
    if not charges_admissible(cfg):
        logger.warning("config: admissible=false, some |alpha| is at or above 2*sqrt(2) - 2; "
                       "the run proceeds but well-posedness is not guaranteed")
    return cfg


def charges_admissible(cfg):
    from .weights import validate_charges

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return validate_charges(cfg.charges, cfg.domain).admissible


def _number(v, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError(f"expected a number, got {v!r}")
    if integer:
        if float(v) != int(v):
            raise ValueError(f"expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _coerce(attr, v):
    if attr in ("dt", "t_end", "picard_tol", "sigma", "gamma_C", "eps1", "oracle_exclusion",
                "quadrature_tol"):
        return _number(v)
    if attr in ("picard_max", "snapshot_every"):
        return _number(v, integer=True)
    if attr == "grid":
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            v = (v, v)
        if not isinstance(v, tuple) or len(v) != 2:
            raise TypeError("grid must be N or (nx, ny)")
        return tuple(_number(n, integer=True) for n in v)
    if attr == "domain":
        if not isinstance(v, tuple) or len(v) != 4:
            raise TypeError("domain must be (x0, y0, x1, y1)")
        return tuple(_number(x) for x in v)
    if attr == "charges":
        if not isinstance(v, tuple):
            raise TypeError("charges must be a list of (x, y, alpha)")
        out = []
        for c in v:
            if isinstance(c, tuple) and len(c) == 2 and isinstance(c[0], tuple):
                c = (c[0][0], c[0][1], c[1])
            if not isinstance(c, tuple) or len(c) != 3:
                raise TypeError(f"charge {c!r} is not (x, y, alpha)")
            out.append(tuple(_number(x) for x in c))
        return out
    if attr == "boundary_potential":
        if isinstance(v, tuple) and v and v[0] == "constant":
            return _number(v[1])
        if isinstance(v, str):
            compile_expression(v, ("s", "x", "y"))
            return v
        return _number(v)
    if attr in ("initial_c_n", "initial_c_p"):
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return ("constant", float(v))
        if not (isinstance(v, tuple) and len(v) == 2 and v[0] in INITIAL_KINDS):
            raise TypeError("initial data must be constant(c), gaussian(center, width, amp) "
                            "or csv(path)")
        kind, args = v
        if kind == "constant":
            return (kind, _number(args))
        if kind == "csv":
            if not isinstance(args, str):
                raise TypeError("csv() takes a path string")
            return (kind, args)
        center, width, amp = args
        if not (isinstance(center, tuple) and len(center) == 2):
            raise TypeError("gaussian center must be (x, y)")
        return (kind, (tuple(_number(c) for c in center), _number(width), _number(amp)))
    if attr in ("vtk", "snap_charges"):
        if not isinstance(v, bool):
            raise TypeError(f"expected true/false, got {v!r}")
        return v
    if attr in ("mode", "flux_scheme", "name", "out_dir"):
        if not isinstance(v, str):
            raise TypeError(f"expected a word or string, got {v!r}")
        return v
    if attr in ("oracle_radii", "oracle_grids"):
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            v = (v,)
        if not isinstance(v, tuple) or not v:
            raise TypeError("expected a non-empty list")
        return tuple(_number(x, integer=(attr == "oracle_grids")) for x in v)
    raise TypeError(f"no coercion for {attr}")  # pragma: no cover


def validate(cfg):
    """Every violated constraint of ``cfg`` as a list of messages."""
    from .weights import validate_charges

    p = []
    if cfg.grid is None:
        p.append("grid: required")
    else:
        for n in cfg.grid:
            if not GRID_MIN <= n <= GRID_MAX:
                p.append(f"grid: {n} cells per axis outside [{GRID_MIN}, {GRID_MAX}]")
    x0, y0, x1, y1 = cfg.domain
    if not (x1 > x0 and y1 > y0) or not all(map(math.isfinite, cfg.domain)):
        p.append(f"domain: need x0 < x1 and y0 < y1, got {cfg.domain}")
    for attr in ("dt", "t_end", "picard_tol", "sigma", "gamma_C", "eps1", "quadrature_tol"):
        val = getattr(cfg, attr)
        if not (val > 0 and math.isfinite(val)):
            p.append(f"{attr}: must be positive, got {val}")
    if cfg.picard_max < 1:
        p.append(f"picard_max: must be at least 1, got {cfg.picard_max}")
    if cfg.snapshot_every < 1:
        p.append(f"snapshot_every: must be at least 1, got {cfg.snapshot_every}")
    if cfg.flux_scheme not in FLUX_SCHEMES:
        p.append(f"scheme.flux: must be one of {', '.join(FLUX_SCHEMES)}, got {cfg.flux_scheme!r}")
    if cfg.mode not in MODES:
        p.append(f"mode: must be one of {', '.join(MODES)}, got {cfg.mode!r}")
    if cfg.oracle_exclusion < 0:
        p.append(f"oracle.exclusion: must be non-negative, got {cfg.oracle_exclusion}")
    if any(not r > 0 for r in cfg.oracle_radii):
        p.append(f"oracle.radii: must be positive, got {cfg.oracle_radii}")
    if cfg.oracle_grids is not None and any(not GRID_MIN <= n <= GRID_MAX for n in cfg.oracle_grids):
        p.append(f"oracle.grids: entries outside [{GRID_MIN}, {GRID_MAX}]")
    if x1 > x0 and y1 > y0:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                validate_charges(cfg.charges, cfg.domain)
        except ChargeError as exc:
            p.append(f"charges: {type(exc).__name__}: {exc}")
    for attr in ("initial_c_n", "initial_c_p"):
        kind, args = getattr(cfg, attr)
        label = attr.replace("initial_", "initial.")
        if kind == "constant" and args < 0:
            p.append(f"{label}: negative constant {args}")
        elif kind == "gaussian" and (args[1] <= 0 or args[2] < 0):
            p.append(f"{label}: gaussian needs width > 0 and amplitude >= 0")
        elif kind == "csv":
            path = os.path.join(cfg.base_dir, args)
            if not os.path.isfile(path):
                p.append(f"{label}: file not found: {path}")
    out = os.path.join(cfg.base_dir, cfg.out_dir)
    probe = out
    while probe and not os.path.exists(probe):
        probe = os.path.dirname(probe)
    if not probe or not os.access(probe, os.W_OK) or (os.path.exists(out) and not os.path.isdir(out)):
        p.append(f"output.out_dir: not writable: {out}")
    return p


def evaluate_initial(spec, grid, base_dir="."):
    """Cell values of an initial-data specification."""
    kind, args = spec
    if kind == "constant":
        return np.full(grid.shape, float(args))
    if kind == "gaussian":
        (cx, cy), width, amp = args
        X, Y = grid.centers
        return amp * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2.0 * width ** 2))
    from .output import read_field_csv

    _, vals, _ = read_field_csv(os.path.join(base_dir, args))
    if vals.shape != grid.shape:
        raise ValueError(f"csv initial data has shape {vals.shape}, grid is {grid.shape}")
    return vals


# ------------------------------------------------------ safe expressions

_FUNCS = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
          "sqrt": np.sqrt, "tanh": np.tanh, "sinh": np.sinh, "cosh": np.cosh, "abs": np.abs,
          "arctan": np.arctan, "minimum": np.minimum, "maximum": np.maximum}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.true_divide, ast.Pow: np.power}


def compile_expression(text, variables):
    """Compile an arithmetic expression to ``f(**vars)`` without ``eval``.

    Allowed: numbers, the given variable names, ``pi``, ``e``, + - * / **,
    unary minus and a fixed set of numpy functions.
    """
    try:
        tree = ast.parse(text, mode="eval").body
    except SyntaxError as exc:
        raise ValueError(f"bad expression {text!r}: {exc.msg}") from None

    def check(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return
        if isinstance(node, ast.Name) and (node.id in variables or node.id in _CONSTS):
            return
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            check(node.left)
            check(node.right)
            return
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            check(node.operand)
            return
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and not node.keywords:
            for a in node.args:
                check(a)
            return
        raise ValueError(f"expression {text!r}: unsupported element {type(node).__name__}"
                         + (f" {node.id!r}" if isinstance(node, ast.Name) else ""))

    check(tree)

    def ev(node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left, env), ev(node.right, env))
        if isinstance(node, ast.UnaryOp):
            val = ev(node.operand, env)
            return -val if isinstance(node.op, ast.USub) else val
        return _FUNCS[node.func.id](*(ev(a, env) for a in node.args))

    def f(**env):
        missing = set(variables) - set(env)
        if missing:
            raise TypeError(f"missing variables {sorted(missing)}")
        return ev(tree, env)

    return f
