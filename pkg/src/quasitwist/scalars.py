"""Exact scalar arithmetic over Q in named formal parameters.

A Scalar is a canonical fraction ``cont * num / den`` where ``cont`` is a
rational content factor and ``num``/``den`` are primitive integer-coefficient
sparse polynomials (den a true polynomial, monomial-free, positive leading
coefficient; num may carry Laurent exponents).  Canonical form is unique:
fixed graded-lex monomial order over lexically sorted parameter names,
GCD-reduced, normalized content.  Equality and zero tests are structural.

Multiplicative parameters (q-type exponentials of log atoms) admit Laurent
and rational exponents; log atoms appear as ordinary polynomial variables
and are tied to their exponentials only through ``exp_of_linear``.
"""

from __future__ import annotations

from fractions import Fraction
from math import gcd as _igcd
from typing import Iterable

from .errors import (
    DivisionByZero,
    NonExponentiable,
    PoleHit,
    TruncationUnderflow,
    UnassignedParam,
)

KINDS = ("multiplicative", "deformation", "semiclassical", "spectral", "log")

_GCD_TERM_BUDGET = 6000  # past this, skip the full GCD (reduction quality only)


class Param:
    __slots__ = ("name", "kind")

    def __init__(self, name: str, kind: str = "multiplicative"):
        if kind not in KINDS:
            raise ValueError(f"unknown param kind {kind!r}")
        self.name = name
        self.kind = kind

    def __repr__(self):
        return f"Param({self.name!r}, {self.kind!r})"


class ParamContext:
    """Registry of parameters for one computation; owns the variable order."""

    def __init__(self, params: Iterable[Param]):
        plist = sorted(params, key=lambda p: p.name)
        names = [p.name for p in plist]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        self.params = tuple(plist)
        self.names = tuple(names)
        self.index = {n: i for i, n in enumerate(names)}
        self.n = len(plist)
        self._zero_exp = (0,) * self.n
        self._unit = {self._zero_exp: 1}
        self.zero = Scalar(self, Fraction(0), {}, dict(self._unit), _canonical=True)
        self.one = Scalar(self, Fraction(1), dict(self._unit), dict(self._unit), _canonical=True)

    @classmethod
    def make(cls, **kinds_by_name: str) -> "ParamContext":
        return cls(Param(n, k) for n, k in kinds_by_name.items())

    def extended(self, extra: Iterable[Param]) -> "ParamContext":
        return ParamContext(list(self.params) + list(extra))

    def var(self, name: str, power=1) -> "Scalar":
        exp = [0] * self.n
        exp[self.index[name]] = _fr_or_int(power)
        return Scalar(self, Fraction(1), {tuple(exp): 1}, dict(self._unit), _canonical=True)

    def const(self, value) -> "Scalar":
        c = Fraction(value)
        if c == 0:
            return self.zero
        return Scalar(self, c, dict(self._unit), dict(self._unit), _canonical=True)

    def monomial(self, exps: dict, coeff=1) -> "Scalar":
        c = Fraction(coeff)
        if c == 0:
            return self.zero
        exp = [0] * self.n
        for name, e in exps.items():
            exp[self.index[name]] = _fr_or_int(e)
        return Scalar(self, c, {tuple(exp): 1}, dict(self._unit), _canonical=True)

    def kind_of(self, name: str) -> str:
        return self.params[self.index[name]].kind

    def __repr__(self):
        return f"ParamContext({', '.join(self.names)})"


def _fr_or_int(e):
    f = Fraction(e)
    return int(f) if f.denominator == 1 else f


# ---------------------------------------------------------------------------
# raw polynomial helpers (dict exponent-tuple -> int coefficient)
# ---------------------------------------------------------------------------


def p_add(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        s = out.get(k)
        if s is None:
            out[k] = v
        else:
            s = s + v
            if s:
                out[k] = s
            else:
                del out[k]
    return out


def p_neg(a: dict) -> dict:
    return {k: -v for k, v in a.items()}


def p_mul(a: dict, b: dict) -> dict:
    if not a or not b:
        return {}
    if len(b) > len(a):
        a, b = b, a
    out: dict = {}
    get = out.get
    for kb, vb in b.items():
        for ka, va in a.items():
            k = tuple(x + y for x, y in zip(ka, kb))
            s = get(k)
            if s is None:
                out[k] = va * vb
            else:
                s = s + va * vb
                if s:
                    out[k] = s
                else:
                    del out[k]
    return out


def p_scale_int(a: dict, c: int) -> dict:
    if not c:
        return {}
    return {k: v * c for k, v in a.items()}


def p_mul_monomial(a: dict, mono: tuple, c=1) -> dict:
    return {tuple(x + y for x, y in zip(k, mono)): v * c for k, v in a.items()}


def _grlex_key(exp: tuple):
    return (sum(exp), exp)


def p_leading(a: dict) -> tuple:
    return max(a, key=_grlex_key)


def p_min_exps(a: dict) -> tuple:
    its = iter(a)
    m = list(next(its))
    for k in its:
        for i, e in enumerate(k):
            if e < m[i]:
                m[i] = e
    return tuple(m)


def p_int_content(a: dict) -> int:
    g = 0
    for v in a.values():
        g = _igcd(g, v if v >= 0 else -v)
        if g == 1:
            return 1
    return g or 1


def p_shift_down(a: dict):
    """Factor out the monomial content; returns (shifted poly, shift)."""
    if not a:
        return a, None
    m = p_min_exps(a)
    if not any(m):
        return a, m
    return {tuple(x - y for x, y in zip(k, m)): v for k, v in a.items()}, m


def _exp_scale_to_int(a: dict, nvars: int):
    scales = [1] * nvars
    fractional = False
    for k in a:
        for i, e in enumerate(k):
            if isinstance(e, Fraction):
                fractional = True
                d = e.denominator
                s = scales[i]
                scales[i] = s * d // _igcd(s, d)
    if not fractional:
        return a, scales
    out = {}
    for k, v in a.items():
        out[tuple(int(e * s) for e, s in zip(k, scales))] = v
    return out, scales


# --- exact division and GCD ------------------------------------------------


def p_div_exact(a: dict, b: dict):
    """Return a/b if b divides a exactly (integer result), else None."""
    if not a:
        return {}
    if not b:
        return None
    rem = {k: Fraction(v) for k, v in a.items()}
    lead_b = p_leading(b)
    cb = b[lead_b]
    quot: dict = {}
    while rem:
        lead_r = p_leading(rem)
        qexp = tuple(x - y for x, y in zip(lead_r, lead_b))
        if any(e < 0 for e in qexp):
            return None
        qc = rem[lead_r] / cb
        quot[qexp] = qc
        for kb, vb in b.items():
            k = tuple(x + y for x, y in zip(kb, qexp))
            s = rem.get(k, 0) - qc * vb
            if s:
                rem[k] = s
            else:
                rem.pop(k, None)
    out = {}
    for k, v in quot.items():
        if v.denominator != 1:
            return None
        out[k] = int(v)
    return out


def _p_degree_in(a: dict, i: int) -> int:
    return max(k[i] for k in a) if a else -1


def _to_recursive(a: dict, i: int) -> dict:
    out: dict = {}
    for k, v in a.items():
        d = k[i]
        kk = k[:i] + (0,) + k[i + 1 :]
        out.setdefault(d, {})[kk] = v
    return out


def _p_content_in(a: dict, i: int) -> dict:
    rec = _to_recursive(a, i)
    coeffs = list(rec.values())
    g = coeffs[0]
    for c in coeffs[1:]:
        g = p_gcd(g, c)
        if _is_unit_poly_int(g):
            break
    return g


def _is_unit_poly_int(a: dict) -> bool:
    if len(a) != 1:
        return False
    k, v = next(iter(a.items()))
    return not any(k) and v in (1, -1)


def is_unit_den(a: dict) -> bool:
    if len(a) != 1:
        return False
    k = next(iter(a))
    return not any(k)


class _GcdBudget(Exception):
    pass


def _p_pseudo_rem(a: dict, b: dict, i: int) -> dict:
    db = _p_degree_in(b, i)
    rec_b = _to_recursive(b, i)
    lcb = rec_b[db]
    r = a
    nvars = len(next(iter(a)))
    while r and _p_degree_in(r, i) >= db:
        dr = _p_degree_in(r, i)
        rec_r = _to_recursive(r, i)
        lcr = rec_r[dr]
        shift = [0] * nvars
        shift[i] = dr - db
        r = p_add(p_mul(lcb, r), p_neg(p_mul(lcr, p_mul_monomial(b, tuple(shift)))))
        if len(r) > _GCD_TERM_BUDGET:
            raise _GcdBudget()
    return r


def _p_gcd_prs(a: dict, b: dict) -> dict:
    if not a:
        return b
    if not b:
        return a
    nvars = len(next(iter(a)))
    if _is_unit_poly_int({p_leading(a): 1}) and len(a) == 1:
        pass
    best = None
    for i in range(nvars):
        da, db = _p_degree_in(a, i), _p_degree_in(b, i)
        if da > 0 and db > 0:
            if best is None or max(da, db) < best[1]:
                best = (i, max(da, db))
    if best is None:
        return {(0,) * nvars: 1}
    i = best[0]
    ca = _p_content_in(a, i)
    cb = _p_content_in(b, i)
    pa = p_div_exact(a, ca)
    pb = p_div_exact(b, cb)
    cont = _p_gcd_prs(ca, cb)
    f, g = (pa, pb) if _p_degree_in(pa, i) >= _p_degree_in(pb, i) else (pb, pa)
    while g:
        r = _p_pseudo_rem(f, g, i)
        if r:
            ic = p_int_content(r)
            if ic > 1:
                r = {k: v // ic for k, v in r.items()}
            pc = _p_content_in(r, i)
            if not _is_unit_poly_int(pc):
                r = p_div_exact(r, pc)
        f, g = g, r
    pc = _p_content_in(f, i)
    if not _is_unit_poly_int(pc):
        f = p_div_exact(f, pc)
    out = p_mul(cont, f)
    ic = p_int_content(out)
    if out[p_leading(out)] < 0:
        ic = -ic
    if ic != 1:
        out = {k: v // ic for k, v in out.items()}
    return out


def p_gcd(a: dict, b: dict) -> dict:
    """GCD of integer polynomials with nonneg exponents (primitive, lc > 0)."""
    if not a:
        return _pos_primitive(b)
    if not b:
        return _pos_primitive(a)
    nvars = len(next(iter(a)))
    unit = {(0,) * nvars: 1}
    sa, ma = p_shift_down(a)
    sb, mb = p_shift_down(b)
    mono = tuple(min(x, y) for x, y in zip(ma, mb))
    if len(sa) == 1 or len(sb) == 1:
        core = unit
    elif len(sa) * len(sb) > _GCD_TERM_BUDGET:
        core = unit
    else:
        ia, sca = _exp_scale_to_int(sa, nvars)
        ib, scb = _exp_scale_to_int(sb, nvars)
        if sca != scb:
            scale = [s1 * s2 // _igcd(s1, s2) for s1, s2 in zip(sca, scb)]
            ia = {tuple(int(e * (s // s1)) for e, s, s1 in zip(k, scale, sca)): v for k, v in ia.items()}
            ib = {tuple(int(e * (s // s1)) for e, s, s1 in zip(k, scale, scb)): v for k, v in ib.items()}
        else:
            scale = sca
        try:
            g = _p_gcd_prs(ia, ib)
        except (_GcdBudget, RecursionError):
            g = unit
        if scale != [1] * nvars:
            g = {tuple(_fr_or_int(Fraction(e, s)) for e, s in zip(k, scale)): v for k, v in g.items()}
        core = g
    if any(mono):
        core = p_mul_monomial(core, mono)
    return core


def _pos_primitive(a: dict) -> dict:
    if not a:
        return a
    ic = p_int_content(a)
    if a[p_leading(a)] < 0:
        ic = -ic
    if ic != 1:
        a = {k: v // ic for k, v in a.items()}
    return a


# ---------------------------------------------------------------------------
# Scalar
# ---------------------------------------------------------------------------


class Scalar:
    """Canonical fraction cont * num/den over Q."""

    __slots__ = ("ctx", "cont", "num", "den", "_hash")

    def __init__(self, ctx: ParamContext, cont, num: dict, den: dict, _canonical=False):
        self.ctx = ctx
        self._hash = None
        if _canonical:
            self.cont = cont
            self.num = num
            self.den = den
            return
        if not den:
            raise DivisionByZero("zero denominator")
        if not num or not cont:
            self.cont = Fraction(0)
            self.num = {}
            self.den = dict(ctx._unit)
            return
        # monomial part of den moves into num
        sden, mden = p_shift_down(den)
        if mden is not None and any(mden):
            num = p_mul_monomial(num, tuple(-e for e in mden))
        den = sden
        # integer contents
        cn = p_int_content(num)
        if num[p_leading(num)] < 0:
            cn = -cn
        cd = p_int_content(den)
        if den[p_leading(den)] < 0:
            cd = -cd
        if cn != 1:
            num = {k: v // cn for k, v in num.items()}
        if cd != 1:
            den = {k: v // cd for k, v in den.items()}
        cont = cont * Fraction(cn, cd)
        if not is_unit_den(den):
            snum, mnum = p_shift_down(num)
            g = p_gcd(snum, den)
            if not _is_unit_poly_int(g):
                snum = p_div_exact(snum, g)
                den = p_div_exact(den, g)
            num = p_mul_monomial(snum, mnum) if any(mnum) else snum
        self.cont = cont
        self.num = num
        self.den = den

    # -- predicates ---------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.num

    def is_one(self) -> bool:
        return (
            self.cont == 1
            and len(self.num) == 1
            and is_unit_den(self.den)
            and not any(next(iter(self.num)))
            and next(iter(self.num.values())) == 1
        )

    def is_rational(self) -> bool:
        if not self.num:
            return True
        if not is_unit_den(self.den):
            return False
        return len(self.num) == 1 and not any(next(iter(self.num)))

    def as_fraction(self) -> Fraction:
        if not self.num:
            return Fraction(0)
        if not self.is_rational():
            raise ValueError(f"not a rational constant: {self}")
        return self.cont * next(iter(self.num.values()))

    # -- arithmetic -----------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Scalar):
            if other.ctx is not self.ctx:
                raise ValueError("scalars from different contexts")
            return other
        return self.ctx.const(other)

    def __add__(self, other):
        if not isinstance(other, (Scalar, int, Fraction)):
            return NotImplemented
        other = self._coerce(other)
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        ca, cb = self.cont, other.cont
        q = Fraction(1, ca.denominator * cb.denominator // _igcd(ca.denominator, cb.denominator))
        ia = int(ca / q)
        ib = int(cb / q)
        if self.den == other.den:
            num = p_add(p_scale_int(self.num, ia), p_scale_int(other.num, ib))
            return Scalar(self.ctx, q, num, dict(self.den))
        num = p_add(
            p_scale_int(p_mul(self.num, other.den), ia),
            p_scale_int(p_mul(other.num, self.den), ib),
        )
        return Scalar(self.ctx, q, num, p_mul(self.den, other.den))

    __radd__ = __add__

    def __neg__(self):
        return Scalar(self.ctx, -self.cont, self.num, self.den, _canonical=True)

    def __sub__(self, other):
        if not isinstance(other, (Scalar, int, Fraction)):
            return NotImplemented
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, (Scalar, int, Fraction)):
            return NotImplemented
        other = self._coerce(other)
        if self.is_zero() or other.is_zero():
            return self.ctx.zero
        if self.is_one():
            return other
        if other.is_one():
            return self
        na, da = self.num, self.den
        nb, db = other.num, other.den
        # cross-cancel before multiplying
        if not is_unit_den(db) and len(na) > 1:
            sa, m = p_shift_down(na)
            g = p_gcd(sa, db)
            if not _is_unit_poly_int(g):
                sa = p_div_exact(sa, g)
                db = p_div_exact(db, g)
                na = p_mul_monomial(sa, m) if m and any(m) else sa
        if not is_unit_den(da) and len(nb) > 1:
            sb, m = p_shift_down(nb)
            g = p_gcd(sb, da)
            if not _is_unit_poly_int(g):
                sb = p_div_exact(sb, g)
                da = p_div_exact(da, g)
                nb = p_mul_monomial(sb, m) if m and any(m) else sb
        return Scalar(self.ctx, self.cont * other.cont, p_mul(na, nb), p_mul(da, db))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        if other.is_zero():
            raise DivisionByZero("division by zero scalar")
        if self.is_zero():
            return self
        inv = Scalar(other.ctx, 1 / other.cont, other.den, other.num)
        return self * inv

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, k: int):
        if k == 0:
            return self.ctx.one
        if k < 0:
            return self.ctx.one / self ** (-k)
        out = self
        for _ in range(k - 1):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = self.ctx.const(other)
        if not isinstance(other, Scalar):
            return NotImplemented
        return self.cont == other.cont and self.num == other.num and self.den == other.den

    def __hash__(self):
        h = self._hash
        if h is None:
            h = hash((self.cont, frozenset(self.num.items()), frozenset(self.den.items())))
            self._hash = h
        return h

    # -- structure ------------------------------------------------------------

    def subs(self, assign: dict) -> "Scalar":
        """Substitute scalars for parameters (integer exponents only)."""
        idxs = {self.ctx.index[n]: self._coerce(v) for n, v in assign.items()}
        num = _p_subs_scalar(self.ctx, self.num, idxs)
        den = _p_subs_scalar(self.ctx, self.den, idxs)
        return (num * self.ctx.const(self.cont)) / den

    def lift(self, new_ctx: ParamContext) -> "Scalar":
        remap = [new_ctx.index[n] for n in self.ctx.names]

        def conv(p):
            out = {}
            for k, v in p.items():
                kk = [0] * new_ctx.n
                for i, e in enumerate(k):
                    kk[remap[i]] = e
                out[tuple(kk)] = v
            return out

        return Scalar(new_ctx, self.cont, conv(self.num), conv(self.den), _canonical=True)

    def degree_in(self, name: str):
        i = self.ctx.index[name]
        if any(k[i] for k in self.den):
            raise ValueError(f"{name} appears in denominator")
        if not self.num:
            return -1
        return max(k[i] for k in self.num)

    def coefficient_of(self, name: str, power) -> "Scalar":
        i = self.ctx.index[name]
        if any(k[i] for k in self.den):
            raise ValueError(f"{name} appears in denominator")
        num = {k[:i] + (0,) + k[i + 1 :]: v for k, v in self.num.items() if k[i] == power}
        return Scalar(self.ctx, self.cont, num, self.den)

    def evaluate(self, assign: dict) -> complex:
        vals = [None] * self.ctx.n
        for n, v in assign.items():
            vals[self.ctx.index[n]] = complex(v)
        need = set()
        for p in (self.num, self.den):
            for k in p:
                for i, e in enumerate(k):
                    if e and vals[i] is None:
                        need.add(self.ctx.names[i])
        if need:
            raise UnassignedParam(f"unassigned parameters: {sorted(need)}")
        den = _p_eval(self.den, vals)
        if den == 0:
            raise PoleHit(f"denominator vanished at {assign}")
        return complex(self.cont) * _p_eval(self.num, vals) / den

    def __repr__(self):
        return self.pretty()

    def pretty(self) -> str:
        if self.is_zero():
            return "0"
        num = _p_str(self.num, self.ctx.names, self.cont)
        if is_unit_den(self.den):
            return num
        den = _p_str(self.den, self.ctx.names, Fraction(1))
        return f"({num})/({den})"

    # -- exponential bridge -----------------------------------------------------

    def exp_of_linear(self) -> "Scalar":
        """exp of a Q-linear combination of log atoms, as a monomial in their
        multiplicative twins.  Raises NonExponentiable otherwise."""
        if self.is_zero():
            return self.ctx.one
        if not is_unit_den(self.den):
            raise NonExponentiable(f"exp of non-polynomial scalar {self}")
        exps = {}
        for k, v in self.num.items():
            live = [i for i, e in enumerate(k) if e]
            if len(live) != 1 or k[live[0]] != 1:
                raise NonExponentiable(f"exp of nonlinear scalar {self}")
            i = live[0]
            p = self.ctx.params[i]
            if p.kind != "log":
                raise NonExponentiable(f"exp of non-log parameter {p.name}")
            key = "exp_" + p.name
            exps[key] = exps.get(key, 0) + self.cont * v
        return self.ctx.monomial({n: _fr_or_int(e) for n, e in exps.items() if e})


def _p_subs_scalar(ctx, p: dict, idxs: dict) -> Scalar:
    if not p:
        return ctx.zero
    out_scalar = ctx.zero
    for k, v in p.items():
        term = ctx.const(v)
        kk = list(k)
        for i, val in idxs.items():
            e = kk[i]
            if e:
                if not isinstance(e, int):
                    raise ValueError("substitution needs integer exponents")
                term = term * val**e
                kk[i] = 0
        term = term * Scalar(ctx, Fraction(1), {tuple(kk): 1}, dict(ctx._unit), _canonical=True)
        out_scalar = out_scalar + term
    return out_scalar


def _p_eval(p: dict, vals: list) -> complex:
    total = 0j
    for k, v in p.items():
        term = complex(v)
        for i, e in enumerate(k):
            if e:
                term *= vals[i] ** float(e) if isinstance(e, Fraction) else vals[i] ** e
        total += term
    return total


def _p_str(p: dict, names, cont) -> str:
    if not p:
        return "0"
    bits = []
    for k in sorted(p, key=_grlex_key, reverse=True):
        v = cont * p[k]
        factors = []
        for n, e in zip(names, k):
            if e:
                factors.append(n if e == 1 else f"{n}^{e}")
        mono = "*".join(factors)
        if not mono:
            bits.append(str(v))
        elif v == 1:
            bits.append(mono)
        elif v == -1:
            bits.append("-" + mono)
        else:
            bits.append(f"{v}*{mono}")
    out = " + ".join(bits)
    return out.replace("+ -", "- ")


# ---------------------------------------------------------------------------
# scalar_arith entry point (spec surface)
# ---------------------------------------------------------------------------


def scalar_arith(a: Scalar, b: Scalar, op: str) -> Scalar:
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ValueError(f"unknown op {op!r}")


# ---------------------------------------------------------------------------
# Truncated power series (generic values: Scalar, tensors, Lie tensors)
# ---------------------------------------------------------------------------


class EpsSeries:
    """Truncated power series in one deformation parameter.

    ``coeffs`` maps degree -> value; values may be Scalars or any objects
    supporting +, scalar *, and is_zero().  ``order`` is the largest degree
    that is tracked; degrees beyond it are dropped and the drop recorded.
    """

    __slots__ = ("coeffs", "order", "dropped")

    def __init__(self, coeffs: dict, order: int, dropped: bool = False):
        self.order = order
        self.dropped = dropped
        self.coeffs = {}
        for d, v in coeffs.items():
            if d > order:
                self.dropped = True
                continue
            if d < 0:
                raise TruncationUnderflow("negative series degree")
            if not _val_is_zero(v):
                self.coeffs[d] = v

    @classmethod
    def constant(cls, value, order: int) -> "EpsSeries":
        return cls({0: value}, order)

    def __getitem__(self, d: int):
        if d > self.order:
            raise TruncationUnderflow(f"degree {d} beyond tracked order {self.order}")
        return self.coeffs.get(d)

    def coeff(self, d: int, zero):
        v = self.coeffs.get(d)
        return zero if v is None else v

    def is_zero(self) -> bool:
        return not self.coeffs

    def __add__(self, other: "EpsSeries") -> "EpsSeries":
        order = min(self.order, other.order)
        out = dict(self.coeffs)
        for d, v in other.coeffs.items():
            out[d] = out[d] + v if d in out else v
        return EpsSeries(out, order, self.dropped or other.dropped)

    def __neg__(self):
        return EpsSeries({d: -v for d, v in self.coeffs.items()}, self.order, self.dropped)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other: "EpsSeries") -> "EpsSeries":
        order = min(self.order, other.order)
        out: dict = {}
        dropped = self.dropped or other.dropped
        for d1, v1 in self.coeffs.items():
            for d2, v2 in other.coeffs.items():
                d = d1 + d2
                if d > order:
                    dropped = True
                    continue
                p = v1 * v2
                out[d] = out[d] + p if d in out else p
        return EpsSeries(out, order, dropped)

    def scale(self, c) -> "EpsSeries":
        return EpsSeries({d: v * c for d, v in self.coeffs.items()}, self.order, self.dropped)

    def shift(self, k: int) -> "EpsSeries":
        """Multiply by eps**k; the tracked order grows with the valuation."""
        return EpsSeries({d + k: v for d, v in self.coeffs.items()}, self.order + k, self.dropped)

    def truncate(self, order: int) -> "EpsSeries":
        return EpsSeries(dict(self.coeffs), min(order, self.order), self.dropped)

    def inverse(self, one) -> "EpsSeries":
        """Series inverse; the degree-0 coefficient must be invertible."""
        c0 = self.coeffs.get(0)
        if c0 is None:
            raise TruncationUnderflow("inverse of series with zero constant term")
        if isinstance(c0, Scalar):
            inv0 = one / c0
        else:
            if not _val_is_one(c0):
                raise NotImplementedError("tensor series inverse needs constant term 1")
            inv0 = c0
        out = {0: inv0}
        for d in range(1, self.order + 1):
            acc = None
            for j in range(1, d + 1):
                aj = self.coeffs.get(j)
                if aj is None:
                    continue
                term = aj * out[d - j]
                acc = term if acc is None else acc + term
            if acc is None:
                continue
            v = -(inv0 * acc) if isinstance(c0, Scalar) else -acc
            if not _val_is_zero(v):
                out[d] = v
        return EpsSeries(out, self.order, self.dropped)

    def map(self, fn) -> "EpsSeries":
        return EpsSeries({d: fn(v) for d, v in self.coeffs.items()}, self.order, self.dropped)

    def eps_weighted_derivative(self) -> "EpsSeries":
        """eps * d/d eps acting degree-wise."""
        return EpsSeries({d: v * d for d, v in self.coeffs.items() if d}, self.order, self.dropped)

    def __eq__(self, other):
        if not isinstance(other, EpsSeries):
            return NotImplemented
        return self.coeffs == other.coeffs and self.order == other.order

    def __repr__(self):
        if not self.coeffs:
            return f"O(eps^{self.order + 1})"
        bits = [f"({v})*eps^{d}" if d else f"({v})" for d, v in sorted(self.coeffs.items())]
        return " + ".join(bits) + f" + O(eps^{self.order + 1})"


def _val_is_zero(v) -> bool:
    z = getattr(v, "is_zero", None)
    return z() if callable(z) else not v


def _val_is_one(v) -> bool:
    o = getattr(v, "is_identity", None)
    if callable(o):
        return o()
    o = getattr(v, "is_one", None)
    return o() if callable(o) else v == 1


def geometric_series(t: EpsSeries, one) -> EpsSeries:
    """(1 - t)**-1 for a series with zero constant term."""
    if t.coeffs.get(0) is not None:
        raise ValueError("geometric series needs valuation >= 1")
    base = EpsSeries({0: one}, t.order) - t
    return base.inverse(one)


# ---------------------------------------------------------------------------
# q-combinatorics
# ---------------------------------------------------------------------------

Q_FACTORIAL_CONVENTION = "standard"  # fixed by the recursion cross-check


def q_int(n: int, q: Scalar, convention: str = None) -> Scalar:
    conv = convention or Q_FACTORIAL_CONVENTION
    ctx = q.ctx
    if n < 0:
        raise ValueError("q_int needs n >= 0")
    if conv == "standard":
        out = ctx.zero
        p = ctx.one
        for _ in range(n):
            out = out + p
            p = p * q
        return out
    if conv == "symmetric":
        if n == 0:
            return ctx.zero
        return (q**n - q ** (-n)) / (q - q ** (-1))
    raise ValueError(f"unknown q convention {conv!r}")


def q_factorial(n: int, q: Scalar, convention: str = None) -> Scalar:
    if n < 0:
        raise ValueError("q_factorial needs n >= 0")
    out = q.ctx.one
    for i in range(2, n + 1):
        out = out * q_int(i, q, convention)
    return out
