"""Reader/writer for ``.map`` files.

Grammar (UTF-8, one statement per line, ``#`` starts a comment)::

    name = <label>                       optional
    param <ident> = <expr>               optional default for a parameter
    matrix = a b ; c d                   required, integers
    term <0|1> <sin|cos> <k1> <k2> <expr>

``<expr>`` is an arithmetic expression over numeric literals, ``pi``/``π``
and declared parameters (``eps``/``ε`` are the same name), with
``+ - * / **`` and parentheses.
"""
from __future__ import annotations

import ast
import hashlib
import math
import operator
import re
from pathlib import Path

from .errors import ParseError, ValidationError
from .intlinalg import IntMat2
from .maps import FourierTerm, PeriodicField, TorusEndomorphism

_ALIASES = {"π": "pi", "ε": "eps", "epsilon": "eps"}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_IDENT = re.compile(r"[A-Za-z_πε][A-Za-z_0-9πε]*$")


def _normalize_expr(text: str) -> str:
    for k, v in _ALIASES.items():
        text = text.replace(k, v) if k in ("π", "ε") else re.sub(rf"\b{k}\b", v, text)
    return text


def eval_expr(text: str, params: dict, line: int = 0, col: int = 0) -> float:
    """Evaluate a coefficient expression without ``eval``."""
    src = _normalize_expr(text)
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ParseError(f"bad expression {text!r}", line, col + (exc.offset or 1) - 1) from None
    env = {"pi": math.pi, **{_ALIASES.get(k, k): v for k, v in params.items()}}

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in env:
                raise ParseError(f"unknown name {node.id!r}", line, col + node.col_offset)
            return float(env[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        raise ParseError(f"unsupported syntax in {text!r}", line, col + getattr(node, "col_offset", 0))

    try:
        value = ev(tree)
    except ZeroDivisionError:
        raise ParseError(f"division by zero in {text!r}", line, col) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite coefficient {text!r}", line, col)
    return value


def parse_text(text: str, params: dict | None = None, name: str = "") -> TorusEndomorphism:
    overrides = {_ALIASES.get(k, k): float(v) for k, v in (params or {}).items()}
    defaults: dict[str, float] = {}
    matrix = None
    raw_terms = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        body = line.strip()
        head = body.split()[0]
        if head == "name" or body.startswith("name="):
            _, _, val = body.partition("=")
            name = val.strip()
        elif head == "param":
            m = re.match(r"param\s+(\S+)\s*=\s*(.+)$", body)
            if not m or not _IDENT.match(m.group(1)):
                raise ParseError("expected 'param <ident> = <expr>'", lineno, indent + 1)
            pname = _ALIASES.get(m.group(1), m.group(1))
            defaults[pname] = eval_expr(m.group(2), {}, lineno, indent + m.start(2) + 1)
        elif head == "matrix" or body.startswith("matrix="):
            _, eq, val = body.partition("=")
            if not eq:
                raise ParseError("expected 'matrix = a b ; c d'", lineno, indent + 1)
            rows = val.split(";")
            col0 = indent + body.index("=") + 2
            if len(rows) != 2:
                raise ParseError("matrix needs two rows separated by ';'", lineno, col0)
            entries = []
            for r in rows:
                parts = r.split()
                if len(parts) != 2:
                    raise ParseError(f"matrix row {r.strip()!r} must have two integers", lineno, col0)
                try:
                    entries.extend(int(p) for p in parts)
                except ValueError:
                    raise ParseError(f"matrix row {r.strip()!r} is not integral", lineno, col0) from None
            matrix = IntMat2(*entries)
        elif head == "term":
            parts = body.split(None, 5)
            if len(parts) != 6:
                raise ParseError("expected 'term <coord> <sin|cos> <k1> <k2> <coeff>'", lineno, indent + 1)
            _, coord, kind, k1, k2, expr = parts
            if coord not in ("0", "1"):
                raise ParseError(f"coordinate must be 0 or 1, got {coord!r}", lineno, indent + 6)
            if kind not in ("sin", "cos"):
                raise ParseError(f"kind must be sin or cos, got {kind!r}", lineno, indent + body.index(kind) + 1)
            try:
                k = (int(k1), int(k2))
            except ValueError:
                raise ParseError("wavevector entries must be integers", lineno, indent + 1) from None
            raw_terms.append((lineno, indent + body.rindex(expr) + 1, int(coord), kind, k, expr))
        else:
            raise ParseError(f"unknown key {head!r}", lineno, indent + 1)
    if matrix is None:
        raise ParseError("missing 'matrix = ...' line", 0, 0)
    env = {**defaults, **overrides}
    comps: tuple[list, list] = ([], [])
    for lineno, col, coord, kind, k, expr in raw_terms:
        coeff = eval_expr(expr, env, lineno, col)
        if kind == "sin" and k == (0, 0):
            raise ValidationError(f"line {lineno}: sin term with zero wavevector")
        comps[coord].append(FourierTerm(coeff, kind, k))
    return TorusEndomorphism(matrix, PeriodicField((tuple(comps[0]), tuple(comps[1]))), name)


def parse_spec(path, params: dict | None = None) -> TorusEndomorphism:
    path = Path(path)
    return parse_text(path.read_text(encoding="utf-8"), params, name=path.stem)


def serialize(f: TorusEndomorphism) -> str:
    """Canonical text form; ``parse_text(serialize(f)) == f``."""
    A = f.linear_part
    lines = []
    if f.name:
        lines.append(f"name = {f.name}")
    lines.append(f"matrix = {A.a} {A.b} ; {A.c} {A.d}")
    for coord, comp in enumerate(f.displacement.components):
        for t in comp:
            lines.append(f"term {coord} {t.kind} {t.k[0]} {t.k[1]} {t.coeff!r}")
    return "\n".join(lines) + "\n"


def digest(f: TorusEndomorphism) -> str:
    return hashlib.sha256(serialize(f).encode()).hexdigest()[:16]
