"""Exact linear solving over the rational-function field.

LinComb tracks values that are affine in named unknowns; products of two
unknown-bearing values taint the result, and tainted rows are never used
as equations (callers re-verify residuals after substitution, so the taint
only restricts which rows feed the solver, never correctness).

Elimination is online and fraction-free in spirit: rows are normalized,
deduplicated, and reduced against the current pivot set; leftover rows are
validated by substitution instead of being dragged through elimination.
"""

from __future__ import annotations

from .errors import SingularRecursion, SingularSystem
from .scalars import Scalar


class LinComb:
    """const + sum_i lin[i] * unknown_i, with a taint flag for non-affine."""

    __slots__ = ("const", "lin", "tainted")

    def __init__(self, const: Scalar, lin=None, tainted=False):
        self.const = const
        self.lin = lin or {}
        self.tainted = tainted

    @classmethod
    def unknown(cls, name, ctx):
        return cls(ctx.zero, {name: ctx.one})

    def is_zero(self):
        return not self.tainted and not self.lin and self.const.is_zero()

    def _as_lincomb(self, other):
        if isinstance(other, LinComb):
            return other
        return LinComb(other)

    def __add__(self, other):
        o = self._as_lincomb(other)
        lin = dict(self.lin)
        for k, v in o.lin.items():
            s = lin.get(k)
            s = v if s is None else s + v
            if s.is_zero():
                lin.pop(k, None)
            else:
                lin[k] = s
        return LinComb(self.const + o.const, lin, self.tainted or o.tainted)

    __radd__ = __add__

    def __neg__(self):
        return LinComb(-self.const, {k: -v for k, v in self.lin.items()}, self.tainted)

    def __sub__(self, other):
        return self + (-self._as_lincomb(other))

    def __mul__(self, other):
        if isinstance(other, LinComb):
            if other.lin or other.tainted:
                if self.lin or self.tainted:
                    return LinComb(self.const.ctx.zero, {}, True)
                return other * self.const
            other = other.const
        if other.is_zero():
            return LinComb(other, {}, False)
        return LinComb(
            self.const * other,
            {k: v * other for k, v in self.lin.items()},
            self.tainted,
        )

    __rmul__ = __mul__

    def substitute(self, values: dict) -> Scalar:
        if self.tainted:
            raise ValueError("cannot substitute into a tainted LinComb")
        out = self.const
        for k, v in self.lin.items():
            out = out + v * values[k]
        return out

    def __repr__(self):
        bits = [repr(self.const)]
        for k, v in sorted(self.lin.items()):
            bits.append(f"({v})*<{k}>")
        s = " + ".join(bits)
        return s + (" [tainted]" if self.tainted else "")


def equations_from(values, error=SingularRecursion) -> list:
    """Usable equations from residual coefficients; tainted ones are skipped."""
    eqs = []
    for v in values:
        if isinstance(v, LinComb):
            if v.tainted:
                continue
            if v.lin or not v.const.is_zero():
                eqs.append(v)
        elif not v.is_zero():
            raise error(f"constant nonzero residual {v}")
    return eqs


class OnlineEliminator:
    """Feed equations one at a time; stop once every unknown is pinned.

    Rows are kept normalized with pivot coefficient 1 and reduced against
    all earlier pivots, so the stored system stays triangular.
    """

    def __init__(self, unknowns, ctx, error=SingularSystem):
        self.order = {u: i for i, u in enumerate(unknowns)}
        self.ctx = ctx
        self.error = error
        self.pivots = {}  # unknown -> reduced LinComb row (pivot coeff 1)
        self.seen = set()

    def solved(self):
        return len(self.pivots) == len(self.order)

    def feed(self, eq: LinComb) -> bool:
        key = (frozenset(eq.lin.items()), eq.const)
        if key in self.seen:
            return False
        self.seen.add(key)
        row = eq
        for _ in range(len(self.order) + 1):
            live = [u for u in row.lin if u in self.pivots]
            if not live:
                break
            u = min(live, key=self.order.get)
            row = row - row.lin[u] * self.pivots[u]
        if not row.lin:
            if not row.const.is_zero():
                raise self.error(f"inconsistent equation: {eq}")
            return False
        u = min(row.lin, key=self.order.get)
        inv = self.ctx.one / row.lin[u]
        row = row * inv
        # eliminate the new pivot from existing rows
        for v, prow in list(self.pivots.items()):
            c = prow.lin.get(u)
            if c is not None:
                self.pivots[v] = prow - c * row
        self.pivots[u] = row
        return True

    def solution(self) -> dict:
        if not self.solved():
            missing = [u for u in self.order if u not in self.pivots]
            raise self.error(f"underdetermined system; free unknowns {missing}")
        out = {}
        for u, row in self.pivots.items():
            rest = {k: v for k, v in row.lin.items() if k != u}
            if rest:
                raise self.error("pivot rows failed to triangularize")
            out[u] = -row.const
        return out

    def validate(self, eqs) -> None:
        sol = self.solution()
        for eq in eqs:
            if isinstance(eq, LinComb):
                if eq.tainted:
                    continue
                if not eq.substitute(sol).is_zero():
                    raise self.error(f"solution fails equation {eq}")
            elif not eq.is_zero():
                raise self.error(f"constant nonzero residual {eq}")


def solve_affine(eqs, unknowns, ctx, error=SingularSystem, validate=True):
    """Solve {eq == 0} for the named unknowns; returns {name: Scalar}."""
    unknowns = list(unknowns)
    elim = OnlineEliminator(unknowns, ctx, error=error)
    pending = []
    for eq in sorted(eqs, key=_eq_size):
        if elim.solved():
            pending.append(eq)
            continue
        elim.feed(eq)
    sol = elim.solution()
    if validate and pending:
        elim.validate(pending)
    return sol


def _eq_size(eq: LinComb) -> int:
    n = len(eq.const.num) + len(eq.const.den)
    for v in eq.lin.values():
        n += len(v.num) + len(v.den)
    return n
