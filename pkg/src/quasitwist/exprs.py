"""Fixed expression grammar for algebra/deformation files.

Grammar (bit-exact across platforms): rational literals, parameter names,
+ - * /, ^ with integer exponents, and exp() of linear forms in log atoms.
"""

from __future__ import annotations

import re
from fractions import Fraction

from .errors import ConfigError
from .scalars import ParamContext, Scalar

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\^|[-+*/()]))"
)


def _tokenize(s: str):
    out = []
    pos = 0
    while pos < len(s):
        m = _TOKEN.match(s, pos)
        if not m or m.end() == pos:
            if s[pos:].strip():
                raise ConfigError(f"bad token at column {pos + 1} in {s!r}")
            break
        pos = m.end()
        if m.group("num"):
            out.append(("num", int(m.group("num"))))
        elif m.group("name"):
            out.append(("name", m.group("name")))
        else:
            out.append(("op", m.group("op")))
    out.append(("end", None))
    return out


class _Parser:
    def __init__(self, ctx: ParamContext, text: str):
        self.ctx = ctx
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect_op(self, op):
        t = self.take()
        if t != ("op", op):
            raise ConfigError(f"expected {op!r} in {self.text!r}")

    def parse(self) -> Scalar:
        v = self.expr()
        if self.peek()[0] != "end":
            raise ConfigError(f"trailing input in {self.text!r}")
        return v

    def expr(self) -> Scalar:
        t = self.peek()
        neg = False
        if t == ("op", "-"):
            self.take()
            neg = True
        elif t == ("op", "+"):
            self.take()
        v = self.term()
        if neg:
            v = -v
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            v = v + rhs if op == "+" else v - rhs
        return v

    def term(self) -> Scalar:
        v = self.factor()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            rhs = self.factor()
            v = v * rhs if op == "*" else v / rhs
        return v

    def factor(self) -> Scalar:
        v = self.base()
        if self.peek() == ("op", "^"):
            self.take()
            sign = 1
            if self.peek() == ("op", "-"):
                self.take()
                sign = -1
            t = self.take()
            if t[0] != "num":
                raise ConfigError(f"integer exponent expected in {self.text!r}")
            v = v ** (sign * t[1])
        return v

    def base(self) -> Scalar:
        t = self.take()
        if t[0] == "num":
            return self.ctx.const(Fraction(t[1]))
        if t == ("op", "("):
            v = self.expr()
            self.expect_op(")")
            return v
        if t == ("op", "-"):
            return -self.factor()
        if t[0] == "name":
            if t[1] == "exp":
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return arg.exp_of_linear()
            if t[1] not in self.ctx.index:
                raise ConfigError(f"unknown parameter {t[1]!r} in {self.text!r}")
            return self.ctx.var(t[1])
        raise ConfigError(f"unexpected token in {self.text!r}")


def parse_scalar(ctx: ParamContext, text) -> Scalar:
    if isinstance(text, (int, Fraction)):
        return ctx.const(text)
    return _Parser(ctx, str(text)).parse()


def scalar_to_expr(s: Scalar) -> str:
    """Round-trippable rendering in the same grammar."""
    names = s.ctx.names

    def side(p, cont):
        if not p:
            return "0"
        bits = []
        for k in sorted(p):
            v = Fraction(p[k]) * cont
            factors = []
            if v.denominator == 1:
                coeff = str(v.numerator)
            else:
                coeff = f"{v.numerator}/{v.denominator}"
            for n, e in zip(names, k):
                if e:
                    if isinstance(e, Fraction):
                        raise ConfigError("fractional exponent is not serializable")
                    factors.append(f"{n}^{e}" if e != 1 else n)
            bits.append("*".join([coeff] + factors) if factors else coeff)
        return " + ".join(bits)

    num = side(s.num, s.cont)
    from .scalars import is_unit_den

    if is_unit_den(s.den):
        return num
    return f"({num})/({side(s.den, Fraction(1))})"
