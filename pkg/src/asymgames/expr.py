"""Minimal arithmetic expression language for config files.

Grammar: + - * /, unary minus, parentheses, float literals, named
variables (x1..xd, u1.., v1..) and the functions abs/exp/sin (one
argument) and min/max (two arguments).  Expressions are parsed once and
evaluated on numpy arrays, so payoff and dynamics tables vectorise over
whole grids.
"""

from __future__ import annotations

import re

import numpy as np


class ExpressionError(ValueError):
    """Raised on parse failures, with the offending position."""


_FUNCS_1 = {"abs": np.abs, "exp": np.exp, "sin": np.sin}
_FUNCS_2 = {"min": np.minimum, "max": np.maximum}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/(),]))"
)


def _tokenize(src):
    pos, out = 0, []
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ExpressionError(f"bad character {src[pos]!r} at position {pos} in {src!r}")
        if m.group("num") is not None:
            out.append(("num", float(m.group("num")), pos))
        elif m.group("name") is not None:
            out.append(("name", m.group("name"), pos))
        else:
            out.append(("op", m.group("op"), pos))
        pos = m.end()
    out.append(("end", None, len(src)))
    return out


class Expression:
    """A parsed expression; evaluate with a dict of per-variable arrays."""

    def __init__(self, src: str):
        self.src = src
        self._tokens = _tokenize(src)
        self._idx = 0
        self._ast = self._parse_sum()
        kind, val, pos = self._tokens[self._idx]
        if kind != "end":
            raise ExpressionError(f"unexpected {val!r} at position {pos} in {src!r}")
        self.variables = sorted(self._collect_vars(self._ast))

    # recursive-descent parser; AST nodes are nested tuples
    def _peek(self):
        return self._tokens[self._idx]

    def _next(self):
        tok = self._tokens[self._idx]
        self._idx += 1
        return tok

    def _expect(self, op):
        kind, val, pos = self._next()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r} at position {pos} in {self.src!r}")

    def _parse_sum(self):
        node = self._parse_product()
        while self._peek()[:2] in (("op", "+"), ("op", "-")):
            op = self._next()[1]
            node = (op, node, self._parse_product())
        return node

    def _parse_product(self):
        node = self._parse_unary()
        while self._peek()[:2] in (("op", "*"), ("op", "/")):
            op = self._next()[1]
            node = (op, node, self._parse_unary())
        return node

    def _parse_unary(self):
        if self._peek()[:2] == ("op", "-"):
            self._next()
            return ("neg", self._parse_unary())
        return self._parse_atom()

    def _parse_atom(self):
        kind, val, pos = self._next()
        if kind == "num":
            return ("const", val)
        if kind == "name":
            if self._peek()[:2] == ("op", "("):
                self._next()
                args = [self._parse_sum()]
                while self._peek()[:2] == ("op", ","):
                    self._next()
                    args.append(self._parse_sum())
                self._expect(")")
                if val in _FUNCS_1 and len(args) == 1:
                    return ("call1", val, args[0])
                if val in _FUNCS_2 and len(args) == 2:
                    return ("call2", val, args[0], args[1])
                raise ExpressionError(
                    f"unknown function {val!r} with {len(args)} argument(s) at position {pos}"
                )
            return ("var", val)
        if kind == "op" and val == "(":
            node = self._parse_sum()
            self._expect(")")
            return node
        raise ExpressionError(f"unexpected token at position {pos} in {self.src!r}")

    def _collect_vars(self, node):
        tag = node[0]
        if tag == "var":
            return {node[1]}
        if tag in ("const",):
            return set()
        out = set()
        for child in node[1:]:
            if isinstance(child, tuple):
                out |= self._collect_vars(child)
        return out

    def evaluate(self, env):
        return self._eval(self._ast, env)

    def _eval(self, node, env):
        tag = node[0]
        if tag == "const":
            return node[1]
        if tag == "var":
            try:
                return env[node[1]]
            except KeyError:
                raise ExpressionError(f"unknown variable {node[1]!r} in {self.src!r}") from None
        if tag == "neg":
            return -self._eval(node[1], env)
        if tag == "call1":
            return _FUNCS_1[node[1]](self._eval(node[2], env))
        if tag == "call2":
            return _FUNCS_2[node[1]](self._eval(node[2], env), self._eval(node[3], env))
        a, b = self._eval(node[1], env), self._eval(node[2], env)
        if tag == "+":
            return a + b
        if tag == "-":
            return a - b
        if tag == "*":
            return a * b
        return np.true_divide(a, b)


def compile_payoff(src: str, d: int):
    """Compile a payoff expression over x1..xd into f(x)->scalar field.

    x has shape (..., d); the result broadcasts to x.shape[:-1].
    """
    ex = Expression(src)
    for name in ex.variables:
        if not (name.startswith("x") and name[1:].isdigit() and 1 <= int(name[1:]) <= d):
            raise ExpressionError(f"payoff {src!r} uses {name!r}; allowed: x1..x{d}")

    def fn(x):
        x = np.asarray(x, dtype=float)
        env = {f"x{a + 1}": x[..., a] for a in range(d)}
        out = ex.evaluate(env)
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()

    fn.source = src
    return fn


def compile_dynamics(srcs, d: int, u_dim: int, v_dim: int):
    """Compile d expressions over x1..xd, u1.., v1.. into f(x, u, v)->dx/dt.

    u and v are the numeric coordinates of the chosen control points.
    """
    if len(srcs) != d:
        raise ExpressionError(f"dynamics needs {d} expressions, got {len(srcs)}")
    exprs = [Expression(s) for s in srcs]
    allowed = (
        {f"x{a + 1}" for a in range(d)}
        | {f"u{a + 1}" for a in range(u_dim)}
        | {f"v{a + 1}" for a in range(v_dim)}
    )
    for ex in exprs:
        for name in ex.variables:
            if name not in allowed:
                raise ExpressionError(f"dynamics {ex.src!r} uses unknown variable {name!r}")

    def fn(x, u_coords, v_coords):
        x = np.asarray(x, dtype=float)
        env = {f"x{a + 1}": x[..., a] for a in range(d)}
        env.update({f"u{a + 1}": u_coords[a] for a in range(u_dim)})
        env.update({f"v{a + 1}": v_coords[a] for a in range(v_dim)})
        cols = [
            np.broadcast_to(np.asarray(ex.evaluate(env), dtype=float), x.shape[:-1])
            for ex in exprs
        ]
        return np.stack(cols, axis=-1)

    fn.sources = list(srcs)
    return fn
