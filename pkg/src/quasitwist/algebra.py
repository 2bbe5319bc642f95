"""Presented algebras with normal-ordered arithmetic.

Generators: Cartan elements H_a (grouped into group-like exponentials
``e^L`` with L a linear form over the Cartan labels), and rescaled root
letters f_sigma (positive) / f_{-rho} (negative) obeying

    [f_sigma, f_{-rho}] = delta_sigma^rho (e^{phi(.,sigma)} - e^{-phi(sigma,.)})
    e^L f_sigma = e^{L(sigma)} f_sigma e^L

Normal form per monomial: negative word, one group-like, positive word;
words are irreducible under the presentation's oriented rewrite rules.
Original generators e_{+a} = e^{phi(a,.)} f_a and e_{-a} = f_{-a} e^{-phi(.,a)}
are accepted as input sugar.
"""

from __future__ import annotations

from fractions import Fraction

from .errors import (
    DimensionMismatch,
    GradeOverflow,
    NonTerminatingRewrite,
    QuasiTwistError,
)
from .scalars import ParamContext, Scalar

_REWRITE_BUDGET = 2_000_000


# ---------------------------------------------------------------------------
# Cartan exponents
# ---------------------------------------------------------------------------


class CartanExp:
    """Linear form sum_a lambda_a H_a with Scalar coefficients; the exponent
    of one group-like letter."""

    __slots__ = ("items", "_hash")

    def __init__(self, items):
        pruned = tuple(sorted((l, c) for l, c in items if not c.is_zero()))
        self.items = pruned
        self._hash = None

    @classmethod
    def zero(cls):
        return cls(())

    def is_zero(self):
        return not self.items

    def __add__(self, other):
        d = dict(self.items)
        for l, c in other.items:
            d[l] = d[l] + c if l in d else c
        return CartanExp(d.items())

    def __neg__(self):
        return CartanExp((l, -c) for l, c in self.items)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s):
        return CartanExp((l, c * s) for l, c in self.items)

    def coeff(self, label, zero):
        for l, c in self.items:
            if l == label:
                return c
        return zero

    def __eq__(self, other):
        return isinstance(other, CartanExp) and self.items == other.items

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.items)
        return self._hash

    def __repr__(self):
        if not self.items:
            return "0"
        return " + ".join(f"({c})*H_{l}" for l, c in self.items)


# ---------------------------------------------------------------------------
# Presentation
# ---------------------------------------------------------------------------


class RewriteRule:
    """Oriented rule: word (tuple of root labels, one sign side) ->
    list of (Scalar, word)."""

    __slots__ = ("lhs", "rhs")

    def __init__(self, lhs, rhs):
        self.lhs = tuple(lhs)
        self.rhs = [(c, tuple(w)) for c, w in rhs]

    def __repr__(self):
        return f"{self.lhs} -> {self.rhs}"


class AlgebraPresentation:
    def __init__(
        self,
        name: str,
        ctx: ParamContext,
        cartan_labels,
        root_labels,
        phi: dict,
        cartan_action: dict,
        pos_rules=(),
        neg_rules=(),
        representations=None,
        root_meta=None,
    ):
        self.name = name
        self.ctx = ctx
        self.cartan_labels = tuple(cartan_labels)
        self.root_labels = tuple(root_labels)
        self.phi = dict(phi)  # (a,b) -> Scalar, the log-space bilinear
        self.cartan_action = dict(cartan_action)  # (a, beta) -> Scalar
        self.pos_rules = {r.lhs: r for r in pos_rules}
        self.neg_rules = {r.lhs: r for r in neg_rules}
        self.representations = dict(representations or {})
        self.root_meta = dict(root_meta or {})
        self._mul_cache = {}
        self._rule_maxlen = max(
            [len(l) for l in self.pos_rules] + [len(l) for l in self.neg_rules] + [0]
        )
        # precompute phi contractions
        self._phi_row = {}
        self._phi_col = {}
        zero = ctx.zero
        for beta in self.root_labels:
            row = {}
            col = {}
            for a in self.cartan_labels:
                for b in self.cartan_labels:
                    pab = self.phi.get((a, b))
                    if pab is None or pab.is_zero():
                        continue
                    ha = self.action(a, beta)
                    hb = self.action(b, beta)
                    if not ha.is_zero():
                        row[b] = row.get(b, zero) + pab * ha
                    if not hb.is_zero():
                        col[a] = col.get(a, zero) + pab * hb
            self._phi_row[beta] = CartanExp(row.items())
            self._phi_col[beta] = CartanExp(col.items())
        self.verify_presentation()

    # -- basic lookups --------------------------------------------------------

    def action(self, a, beta) -> Scalar:
        return self.cartan_action.get((a, beta), self.ctx.zero)

    def phi_row(self, beta) -> CartanExp:
        """phi(beta, .) as a Cartan linear form."""
        return self._phi_row[beta]

    def phi_col(self, beta) -> CartanExp:
        """phi(., beta) as a Cartan linear form."""
        return self._phi_col[beta]

    def pair(self, L: CartanExp, beta) -> Scalar:
        """L(beta) = sum_a lambda_a H_a(beta)."""
        out = self.ctx.zero
        for l, c in L.items:
            out = out + c * self.action(l, beta)
        return out

    def pair_exp(self, L: CartanExp, beta) -> Scalar:
        return self.pair(L, beta).exp_of_linear()

    def phi_scalar(self, alpha, beta) -> Scalar:
        """phi(alpha, beta) = phi^{ab} H_a(alpha) H_b(beta)."""
        return self.pair(self._phi_row[alpha], beta)

    # -- verification -----------------------------------------------------------

    def verify_presentation(self):
        for alpha in self.root_labels:
            k = self._phi_row[alpha] + self._phi_col[alpha]
            if k.is_zero():
                raise QuasiTwistError(
                    f"presentation {self.name}: exp(phi({alpha},.)+phi(.,{alpha})) = 1"
                )
        for rule in list(self.pos_rules.values()) + list(self.neg_rules.values()):
            glen = len(rule.lhs)
            for _, w in rule.rhs:
                if len(w) != glen:
                    raise QuasiTwistError(f"rule {rule} is not grade-homogeneous")
        # bounded rewriting exercises termination on the rule alphabet
        for rule in self.pos_rules.values():
            self.normal_order([("+", l) for l in rule.lhs + rule.lhs])
        for rule in self.neg_rules.values():
            self.normal_order([("-", l) for l in rule.lhs + rule.lhs])

    # -- normal ordering ----------------------------------------------------------

    def normal_order(self, word) -> "AlgElement":
        """Normal-order a mixed word of letters ('+',s), ('-',r), ('C',CartanExp)."""
        out = AlgElement(self, {})
        stack = [(self.ctx.one, list(word))]
        budget = _REWRITE_BUDGET
        while stack:
            budget -= 1
            if budget < 0:
                raise NonTerminatingRewrite(
                    f"rewrite budget exceeded in presentation {self.name}"
                )
            coeff, w = stack.pop()
            idx = self._first_disorder(w)
            if idx is None:
                out._iadd_mono(_split_normal(w), coeff)
                continue
            kind = idx[0]
            if kind == "swap":
                i, extra = idx[1], idx[2]
                a, b = w[i], w[i + 1]
                nw = w[:i] + [b, a] + w[i + 2 :]
                stack.append((coeff, nw))
                if extra is not None:
                    for c2, letters in extra:
                        stack.append((coeff * c2, w[:i] + letters + w[i + 2 :]))
            elif kind == "scalar_swap":
                i, factor = idx[1], idx[2]
                a, b = w[i], w[i + 1]
                stack.append((coeff * factor, w[:i] + [b, a] + w[i + 2 :]))
            elif kind == "merge":
                i = idx[1]
                merged = ("C", w[i][1] + w[i + 1][1])
                stack.append((coeff, w[:i] + [merged] + w[i + 2 :]))
            elif kind == "drop":
                i = idx[1]
                stack.append((coeff, w[:i] + w[i + 1 :]))
            else:  # rule
                i, rule, sign = idx[1], idx[2], idx[3]
                n = len(rule.lhs)
                for c2, repl in rule.rhs:
                    nw = w[:i] + [(sign, l) for l in repl] + w[i + n :]
                    stack.append((coeff * c2, nw))
        return out

    def _first_disorder(self, w):
        n = len(w)
        for i in range(n - 1):
            x, y = w[i], w[i + 1]
            kx, ky = x[0], y[0]
            if kx == "C" and x[1].is_zero():
                return ("drop", i)
            if kx == "+" and ky == "-":
                if x[1] == y[1]:
                    rho = x[1]
                    extra = [
                        (self.ctx.one, [("C", self._phi_col[rho])]),
                        (-self.ctx.one, [("C", -self._phi_row[rho])]),
                    ]
                    return ("swap", i, extra)
                return ("swap", i, None)
            if kx == "C" and ky == "-":
                return ("scalar_swap", i, self.pair_exp(-x[1], y[1]))
            if kx == "+" and ky == "C":
                return ("scalar_swap", i, self.pair_exp(-y[1], x[1]))
            if kx == "C" and ky == "C":
                return ("merge", i)
        if n and w[-1][0] == "C" and w[-1][1].is_zero():
            return ("drop", n - 1)
        # oriented intra-sign rules
        if self._rule_maxlen:
            for sign, rules in (("+", self.pos_rules), ("-", self.neg_rules)):
                if not rules:
                    continue
                runs = _sign_runs(w, sign)
                for start, end in runs:
                    labels = tuple(l for _, l in w[start:end])
                    for ln in range(2, min(self._rule_maxlen, len(labels)) + 1):
                        for j in range(len(labels) - ln + 1):
                            rule = rules.get(labels[j : j + ln])
                            if rule is not None:
                                return ("rule", start + j, rule, sign)
        return None

    # -- cached monomial products ---------------------------------------------------

    def mono_mul(self, m1, m2):
        key = (m1, m2)
        cached = self._mul_cache.get(key)
        if cached is None:
            word = _mono_word(m1) + _mono_word(m2)
            cached = tuple(self.normal_order(word).terms.items())
            self._mul_cache[key] = cached
        return cached

    def __repr__(self):
        return f"AlgebraPresentation({self.name!r})"


def _sign_runs(w, sign):
    runs = []
    start = None
    for i, x in enumerate(w):
        if x[0] == sign:
            if start is None:
                start = i
        else:
            if start is not None:
                runs.append((start, i))
                start = None
    if start is not None:
        runs.append((start, len(w)))
    return runs


def _split_normal(w):
    neg = []
    cart = None
    pos = []
    for x in w:
        k = x[0]
        if k == "-":
            assert cart is None and not pos
            neg.append(x[1])
        elif k == "C":
            assert cart is None and not pos
            cart = x[1]
        else:
            pos.append(x[1])
    return (tuple(neg), cart if cart is not None else CartanExp.zero(), tuple(pos))


def _mono_word(m):
    neg, cart, pos = m
    w = [("-", l) for l in neg]
    if not cart.is_zero():
        w.append(("C", cart))
    w += [("+", l) for l in pos]
    return w


def mono_unit():
    return ((), CartanExp.zero(), ())


def mono_grade(m):
    return (len(m[0]), len(m[2]))


def mono_letters(m):
    return len(m[0]) + len(m[2])


# ---------------------------------------------------------------------------
# Algebra elements
# ---------------------------------------------------------------------------


class AlgElement:
    __slots__ = ("pres", "terms")

    def __init__(self, pres, terms=None):
        self.pres = pres
        self.terms = dict(terms or {})

    @classmethod
    def unit(cls, pres):
        return cls(pres, {mono_unit(): pres.ctx.one})

    @classmethod
    def letter(cls, pres, sign, label, dressed=True):
        """f-letter by default; dressed=False gives the original e-letter."""
        mono = (
            ((), CartanExp.zero(), (label,))
            if sign == "+"
            else ((label,), CartanExp.zero(), ())
        )
        if dressed:
            return cls(pres, {mono: pres.ctx.one})
        if sign == "+":
            word = [("C", pres.phi_row(label)), ("+", label)]
        else:
            word = [("-", label), ("C", -pres.phi_col(label))]
        return pres.normal_order(word)

    @classmethod
    def group_like(cls, pres, cart: CartanExp):
        return cls(pres, {((), cart, ()): pres.ctx.one})

    def _iadd_mono(self, mono, coeff):
        t = self.terms
        cur = t.get(mono)
        if cur is None:
            if not coeff.is_zero():
                t[mono] = coeff
        else:
            cur = cur + coeff
            if cur.is_zero():
                del t[mono]
            else:
                t[mono] = cur

    def is_zero(self):
        return not self.terms

    def __add__(self, other):
        out = AlgElement(self.pres, self.terms)
        for m, c in other.terms.items():
            out._iadd_mono(m, c)
        return out

    def __neg__(self):
        return AlgElement(self.pres, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s: Scalar):
        if s.is_zero():
            return AlgElement(self.pres, {})
        return AlgElement(self.pres, {m: c * s for m, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, Scalar):
            return self.scale(other)
        out = AlgElement(self.pres, {})
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                c = c1 * c2
                for m, cf in self.pres.mono_mul(m1, m2):
                    out._iadd_mono(m, c * cf)
        return out

    def __eq__(self, other):
        return isinstance(other, AlgElement) and self.terms == other.terms

    def __repr__(self):
        if not self.terms:
            return "0"
        bits = []
        for m, c in sorted(self.terms.items(), key=lambda kv: _mono_sort_key(kv[0])):
            bits.append(f"({c})*{_mono_str(m)}")
        return " + ".join(bits)


def _mono_sort_key(m):
    return (len(m[0]) + len(m[2]), m[0], m[2], m[1].items)


def _mono_str(m):
    neg, cart, pos = m
    bits = [f"f[-{l}]" for l in neg]
    if not cart.is_zero():
        bits.append(f"exp({cart})")
    bits += [f"f[{l}]" for l in pos]
    return "*".join(bits) if bits else "1"


# ---------------------------------------------------------------------------
# Tensor elements
# ---------------------------------------------------------------------------


class TensorCaps:
    """Per-leg letter-count cap with drop accounting.

    ``per_leg`` is one cap for every leg, or a sequence of caps (None
    entries leave a leg uncapped).
    """

    __slots__ = ("per_leg", "strict", "dropped")

    def __init__(self, per_leg=None, strict=False):
        self.per_leg = per_leg
        self.strict = strict
        self.dropped = 0

    def _caps_for(self, n):
        if self.per_leg is None or isinstance(self.per_leg, int):
            return (self.per_leg,) * n
        return self.per_leg

    def admits(self, monos) -> bool:
        caps = self._caps_for(len(monos))
        for m, cap in zip(monos, caps):
            if cap is not None and mono_letters(m) > cap:
                if self.strict:
                    raise GradeOverflow(
                        f"leg grade {mono_grade(m)} exceeds cap {cap}"
                    )
                self.dropped += 1
                return False
        return True


class TensorElement:
    __slots__ = ("pres", "nlegs", "terms")

    def __init__(self, pres, nlegs, terms=None):
        self.pres = pres
        self.nlegs = nlegs
        self.terms = dict(terms or {})

    @classmethod
    def unit(cls, pres, nlegs):
        return cls(pres, nlegs, {(mono_unit(),) * nlegs: pres.ctx.one})

    @classmethod
    def from_legs(cls, legs):
        """Outer product of AlgElements, one per leg."""
        pres = legs[0].pres
        out = cls(pres, len(legs), {})
        import itertools

        for combo in itertools.product(*(l.terms.items() for l in legs)):
            monos = tuple(m for m, _ in combo)
            c = pres.ctx.one
            for _, ci in combo:
                c = c * ci
            out._iadd(monos, c)
        return out

    def _iadd(self, monos, coeff):
        cur = self.terms.get(monos)
        if cur is None:
            if not coeff.is_zero():
                self.terms[monos] = coeff
        else:
            cur = cur + coeff
            if cur.is_zero():
                del self.terms[monos]
            else:
                self.terms[monos] = cur

    def is_zero(self):
        return not self.terms

    def is_identity(self):
        return self.terms == {(mono_unit(),) * self.nlegs: self.pres.ctx.one}

    def __add__(self, other):
        assert other.nlegs == self.nlegs
        out = TensorElement(self.pres, self.nlegs, self.terms)
        for m, c in other.terms.items():
            out._iadd(m, c)
        return out

    def __neg__(self):
        return TensorElement(self.pres, self.nlegs, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s: Scalar):
        if s.is_zero():
            return TensorElement(self.pres, self.nlegs, {})
        return TensorElement(self.pres, self.nlegs, {m: c * s for m, c in self.terms.items()})

    def mul(self, other: "TensorElement", caps: TensorCaps | None = None) -> "TensorElement":
        if self.nlegs != other.nlegs:
            raise DimensionMismatch(f"leg counts {self.nlegs} != {other.nlegs}")
        pres = self.pres
        out = TensorElement(pres, self.nlegs, {})
        legs = range(self.nlegs)
        leg_caps = caps._caps_for(self.nlegs) if caps is not None else None
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                if leg_caps is not None and _pair_exceeds(m1, m2, leg_caps):
                    caps.dropped += 1
                    continue
                c = c1 * c2
                per_leg = [pres.mono_mul(m1[i], m2[i]) for i in legs]
                _distribute(out, per_leg, c, caps)
        return out

    def filter_leg_letters(self, leg_caps: dict) -> "TensorElement":
        """Drop terms whose letter count in a capped leg exceeds the cap.

        Sound as an operand prefilter only on legs where no cancellation can
        occur across the product being formed (sign-pure legs).
        """
        out = {}
        for monos, c in self.terms.items():
            ok = True
            for leg, cap in leg_caps.items():
                if cap is not None and mono_letters(monos[leg]) > cap:
                    ok = False
                    break
            if ok:
                out[monos] = c
        return TensorElement(self.pres, self.nlegs, out)

    def __mul__(self, other):
        if isinstance(other, Scalar):
            return self.scale(other)
        return self.mul(other)

    def place(self, positions, nlegs) -> "TensorElement":
        """Embed into nlegs legs; positions[i] is the target of old leg i."""
        unit = mono_unit()
        out = TensorElement(self.pres, nlegs, {})
        for monos, c in self.terms.items():
            nm = [unit] * nlegs
            for i, m in enumerate(monos):
                nm[positions[i]] = m
            out._iadd(tuple(nm), c)
        return out

    def flip(self, i=0, j=1) -> "TensorElement":
        pos = list(range(self.nlegs))
        pos[i], pos[j] = pos[j], pos[i]
        return self.place(pos, self.nlegs)

    def grade_filter(self, keep) -> "TensorElement":
        return TensorElement(
            self.pres, self.nlegs, {m: c for m, c in self.terms.items() if keep(m)}
        )

    def neumann_inverse(self, caps=None, max_letters=None) -> "TensorElement":
        """Inverse of 1 + N with N nilpotent under the caps (letter-graded)."""
        one = TensorElement.unit(self.pres, self.nlegs)
        n = self - one
        if n.is_zero():
            return one
        out = one
        power = one
        bound = max_letters if max_letters is not None else 1 + max(
            sum(mono_letters(m) for m in monos) for monos in n.terms
        ) * 8
        sign = -1
        for _ in range(bound):
            power = power.mul(n, caps)
            if max_letters is not None:
                power = power.grade_filter(
                    lambda m: sum(mono_letters(x) for x in m) <= max_letters
                )
            if power.is_zero():
                break
            out = out + (power if sign > 0 else -power)
            sign = -sign
        else:
            from .errors import NotInvertible

            raise NotInvertible("Neumann series did not terminate under caps")
        return out

    def __eq__(self, other):
        return (
            isinstance(other, TensorElement)
            and self.nlegs == other.nlegs
            and self.terms == other.terms
        )

    def __repr__(self):
        if not self.terms:
            return "0"
        bits = []
        for monos, c in sorted(
            self.terms.items(), key=lambda kv: tuple(_mono_sort_key(m) for m in kv[0])
        ):
            legs = " (x) ".join(_mono_str(m) for m in monos)
            bits.append(f"({c})*[{legs}]")
        return " + ".join(bits)


def _pair_exceeds(m1, m2, leg_caps) -> bool:
    """True if the leg-wise product can never fit the caps: the minimum
    reachable letter count per leg is neg1 + pos2 + |pos1 - neg2|."""
    for a, b, cap in zip(m1, m2, leg_caps):
        if cap is None:
            continue
        p1, n2 = len(a[2]), len(b[0])
        least = len(a[0]) + len(b[2]) + (p1 - n2 if p1 >= n2 else n2 - p1)
        if least > cap:
            return True
    return False


def _distribute(out, per_leg, coeff, caps):
    import itertools

    for combo in itertools.product(*per_leg):
        monos = tuple(m for m, _ in combo)
        if caps is not None and not caps.admits(monos):
            continue
        c = coeff
        for _, cf in combo:
            c = c * cf
        out._iadd(monos, c)


# ---------------------------------------------------------------------------
# coproduct
# ---------------------------------------------------------------------------


def _letter_coproduct(pres, letter):
    """Two-leg expansion of one letter."""
    kind = letter[0]
    one = pres.ctx.one
    unit = mono_unit()
    if kind == "C":
        m = ((), letter[1], ())
        return [((m, m), one)]
    if kind == "+":
        s = letter[1]
        k = ((), -pres.phi_row(s), ())
        f = ((), CartanExp.zero(), (s,))
        return [((k, f), one), ((f, unit), one)]
    r = letter[1]
    k = ((), pres.phi_col(r), ())
    f = ((r,), CartanExp.zero(), ())
    return [((unit, f), one), ((f, k), one)]


def coproduct(x: AlgElement, flip=False) -> TensorElement:
    """Algebra-map coproduct into two legs (optionally flipped)."""
    t = coproduct_leg(TensorElement(x.pres, 1, {(m,): c for m, c in x.terms.items()}), 0, flip)
    return t


def coproduct_leg(t: TensorElement, leg: int, flip=False) -> TensorElement:
    """Replace leg by its coproduct legs (leg, leg+1); later legs shift right."""
    pres = t.pres
    out = TensorElement(pres, t.nlegs + 1, {})
    for monos, c in t.terms.items():
        expansion = [((mono_unit(), mono_unit()), pres.ctx.one)]
        for letter in _mono_word(monos[leg]):
            new_exp = []
            for (a, b), cf in expansion:
                for (la, lb), cl in _letter_coproduct(pres, letter):
                    for ma, ca in pres.mono_mul(a, la):
                        for mb, cb in pres.mono_mul(b, lb):
                            new_exp.append(((ma, mb), cf * cl * ca * cb))
            merged = {}
            for k, v in new_exp:
                merged[k] = merged[k] + v if k in merged else v
            expansion = [(k, v) for k, v in merged.items() if not v.is_zero()]
        for (a, b), cf in expansion:
            pair = (b, a) if flip else (a, b)
            nm = monos[:leg] + pair + monos[leg + 1 :]
            out._iadd(nm, c * cf)
    return out


# ---------------------------------------------------------------------------
# Cartan bilinears (R-matrix prefactors, Eq.-level conjugations)
# ---------------------------------------------------------------------------


class CartanBilinear:
    """sum_{ab} B_{ab} H_a (x) H_b with Scalar entries, as an exponent."""

    __slots__ = ("pres", "entries")

    def __init__(self, pres, entries):
        self.pres = pres
        self.entries = {k: v for k, v in entries.items() if not v.is_zero()}

    @classmethod
    def from_phi(cls, pres):
        return cls(pres, pres.phi)

    def __add__(self, other):
        out = dict(self.entries)
        for k, v in other.entries.items():
            out[k] = out[k] + v if k in out else v
        return CartanBilinear(self.pres, out)

    def __neg__(self):
        return CartanBilinear(self.pres, {k: -v for k, v in self.entries.items()})

    def is_zero(self):
        return not self.entries

    def row_form(self, beta) -> CartanExp:
        """Contract the first slot at root beta: sum_ab B_ab H_a(beta) H_b."""
        out = {}
        zero = self.pres.ctx.zero
        for (a, b), v in self.entries.items():
            ha = self.pres.action(a, beta)
            if not ha.is_zero():
                out[b] = out.get(b, zero) + v * ha
        return CartanExp(out.items())

    def col_form(self, beta) -> CartanExp:
        out = {}
        zero = self.pres.ctx.zero
        for (a, b), v in self.entries.items():
            hb = self.pres.action(b, beta)
            if not hb.is_zero():
                out[a] = out.get(a, zero) + v * hb
        return CartanExp(out.items())

    def conjugate(self, t: TensorElement, legs=(0, 1)) -> TensorElement:
        """exp(B on legs) * t * exp(-B on legs), resolved into group-likes."""
        i, j = legs
        pres = t.pres
        out = TensorElement(pres, t.nlegs, {})
        zero_exp = CartanExp.zero()
        for monos, c in t.terms.items():
            gi = zero_exp  # factor appended to leg i (from leg-j letters)
            gj = zero_exp  # factor prepended to leg j (from leg-i letters)
            for letter in _mono_word(monos[i]):
                if letter[0] == "+":
                    gj = gj + self.row_form(letter[1])
                elif letter[0] == "-":
                    gj = gj - self.row_form(letter[1])
            for letter in _mono_word(monos[j]):
                if letter[0] == "+":
                    gi = gi + self.col_form(letter[1])
                elif letter[0] == "-":
                    gi = gi - self.col_form(letter[1])
            eli = pres.normal_order(_mono_word(monos[i]) + [("C", gi)])
            elj = pres.normal_order([("C", gj)] + _mono_word(monos[j]))
            for mi, ci in eli.terms.items():
                for mj, cj in elj.terms.items():
                    nm = list(monos)
                    nm[i] = mi
                    nm[j] = mj
                    out._iadd(tuple(nm), c * ci * cj)
        return out


class PrefTensor:
    """A tensor with an exponential Cartan-bilinear prefactor per leg pair.

    Product rule: (e^{B1} T1)(e^{B2} T2) = e^{B1+B2} conj(-B2, T1) T2.
    """

    __slots__ = ("bilinears", "tensor")

    def __init__(self, bilinears: dict, tensor: TensorElement):
        self.bilinears = {k: v for k, v in bilinears.items() if not v.is_zero()}
        self.tensor = tensor

    def mul(self, other: "PrefTensor", caps=None) -> "PrefTensor":
        t1 = self.tensor
        for legs, b in other.bilinears.items():
            t1 = (-b).conjugate(t1, legs)
        bl = dict(self.bilinears)
        for k, v in other.bilinears.items():
            bl[k] = bl[k] + v if k in bl else v
        return PrefTensor(bl, t1.mul(other.tensor, caps))

    def same_prefactor(self, other: "PrefTensor") -> bool:
        keys = set(self.bilinears) | set(other.bilinears)
        for k in keys:
            a = self.bilinears.get(k)
            b = other.bilinears.get(k)
            if a is None or b is None:
                if (a or b) is not None and not (a or b).is_zero():
                    return False
            elif (a + (-b)).entries:
                return False
        return True


# ---------------------------------------------------------------------------
# representations
# ---------------------------------------------------------------------------


class Representation:
    """Finite matrix representation with diagonal Cartan action.

    ``weights[label]`` lists the H_label eigenvalue per basis index;
    ``letters[(sign, root)]`` are sparse matrices {(i, j): Scalar}.
    The derivation label (if any) acts as the x-degree operator and the
    central labels act as 0 (evaluation representations kill the center).
    """

    def __init__(self, name, dim, weights, letters, spectral_param=None, d_label=None):
        self.name = name
        self.dim = dim
        self.weights = {k: tuple(v) for k, v in weights.items()}
        self.letters = letters
        self.spectral_param = spectral_param
        self.d_label = d_label

    def cartan_diag(self, pres, cart: CartanExp, x_name=None):
        """Diagonal matrix of exp(L) in this representation."""
        ctx = pres.ctx
        out = {}
        for i in range(self.dim):
            expo = ctx.zero
            for l, c in cart.items:
                if self.d_label is not None and l == self.d_label:
                    if not c.is_zero():
                        raise DimensionMismatch(
                            "derivation exponent has no finite matrix; "
                            "evaluation representations only support c -> 0"
                        )
                    continue
                w = self.weights.get(l)
                if w is None:
                    continue  # central label, acts as 0
                expo = expo + c * w[i]
            out[(i, i)] = expo.exp_of_linear()
        return out

    def letter_matrix(self, pres, sign, label, x_name=None):
        m = self.letters.get((sign, label))
        if m is None:
            raise DimensionMismatch(f"rep {self.name} has no matrix for {sign}{label}")
        if x_name and self.spectral_param and x_name != self.spectral_param:
            xv = pres.ctx.var(x_name)
            xold = self.spectral_param
            return {k: v.subs({xold: xv}) for k, v in m.items()}
        return dict(m)


def mat_mul(a: dict, b: dict, dim, zero) -> dict:
    out = {}
    bt = {}
    for (i, j), v in b.items():
        bt.setdefault(i, []).append((j, v))
    for (i, k), va in a.items():
        for j, vb in bt.get(k, ()):  # a[i,k] b[k,j]
            key = (i, j)
            cur = out.get(key)
            p = va * vb
            out[key] = p if cur is None else cur + p
    return {k: v for k, v in out.items() if not v.is_zero()}


def mat_add(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out[k] + v if k in out else v
    return {k: v for k, v in out.items() if not v.is_zero()}


def mat_scale(a: dict, s) -> dict:
    if s.is_zero():
        return {}
    return {k: v * s for k, v in a.items()}


def mat_eye(dim, one) -> dict:
    return {(i, i): one for i in range(dim)}


def mat_kron(a: dict, b: dict, dim_b) -> dict:
    out = {}
    for (i, j), va in a.items():
        for (k, l), vb in b.items():
            out[(i * dim_b + k, j * dim_b + l)] = va * vb
    return out


def evaluate_rep(t: TensorElement, reps, x_names=None) -> dict:
    """Kronecker-product matrix of a tensor element; one rep per leg."""
    pres = t.pres
    if len(reps) != t.nlegs:
        raise DimensionMismatch("need one representation per leg")
    x_names = x_names or [None] * t.nlegs
    dim_total = 1
    for r in reps:
        dim_total *= r.dim
    one = pres.ctx.one
    total = {}
    for monos, c in t.terms.items():
        legmats = []
        for leg, m in enumerate(monos):
            r = reps[leg]
            mat = mat_eye(r.dim, one)
            for letter in _mono_word(m):
                if letter[0] == "C":
                    lm = r.cartan_diag(pres, letter[1], x_names[leg])
                else:
                    lm = r.letter_matrix(pres, letter[0], letter[1], x_names[leg])
                mat = mat_mul(mat, lm, r.dim, pres.ctx.zero)
            legmats.append(mat)
        kron = legmats[0]
        dim = reps[0].dim
        for leg in range(1, t.nlegs):
            kron = mat_kron(kron, legmats[leg], reps[leg].dim)
            dim *= reps[leg].dim
        total = mat_add(total, mat_scale(kron, c))
    return total


def evaluate_pref_bilinear(bil: CartanBilinear, reps, legs, nlegs, x_names=None) -> dict:
    """Diagonal matrix of exp(B) across the given leg pair."""
    pres = bil.pres
    ctx = pres.ctx
    dims = [r.dim for r in reps]
    import itertools

    out = {}
    for idx in itertools.product(*(range(d) for d in dims)):
        expo = ctx.zero
        i, j = legs
        ri, rj = reps[i], reps[j]
        for (a, b), v in bil.entries.items():
            wa = ri.weights.get(a)
            wb = rj.weights.get(b)
            if wa is None or wb is None:
                continue  # central label in an evaluation rep
            expo = expo + v * wa[idx[i]] * wb[idx[j]]
        flat = 0
        for d, k in zip(dims, idx):
            flat = flat * d + k
        out[(flat, flat)] = expo.exp_of_linear()
    return out


def verify_representation(pres: AlgebraPresentation, rep: Representation, x_name=None):
    """Check (2.2), (2.3)/(4.9) and the extra rules as exact matrix identities."""
    ctx = pres.ctx
    zero = ctx.zero
    one = ctx.one
    # weight compatibility: H_a f_{+b} - f_{+b} H_a = +H_a(b) f_{+b}
    for (sign, label), mat in rep.letters.items():
        s = 1 if sign == "+" else -1
        for a in pres.cartan_labels:
            w = rep.weights.get(a)
            if w is None:
                if rep.d_label == a:
                    # derivation: [d, f] = mode(f) * f with mode = x-degree
                    act = pres.action(a, label)
                    for (i, j), v in mat.items():
                        got = _x_degree(v, rep.spectral_param)
                        want = act * s
                        if not (ctx.const(got) - want).is_zero():
                            raise DimensionMismatch(
                                f"rep {rep.name}: d-action fails on {sign}{label}"
                            )
                    continue
                act = pres.action(a, label)
                if not act.is_zero():
                    raise DimensionMismatch(
                        f"rep {rep.name}: central {a} must not act on {label}"
                    )
                continue
            act = pres.action(a, label)
            for (i, j), v in mat.items():
                diff = w[i] - w[j]
                if not (diff - act * s).is_zero():
                    raise DimensionMismatch(
                        f"rep {rep.name}: weight mismatch on {sign}{label} at {(i, j)}"
                    )
    # (4.9): [f_s, f_-r] = delta (e^{phi(.,s)} - e^{-phi(s,.)})
    for s in pres.root_labels:
        for r in pres.root_labels:
            fp = rep.letters.get(("+", s))
            fm = rep.letters.get(("-", r))
            if fp is None or fm is None:
                continue
            lhs = mat_add(
                mat_mul(fp, fm, rep.dim, zero), mat_scale(mat_mul(fm, fp, rep.dim, zero), -one)
            )
            if s == r:
                want = mat_add(
                    rep.cartan_diag(pres, pres.phi_col(s), x_name),
                    mat_scale(rep.cartan_diag(pres, -pres.phi_row(s), x_name), -one),
                )
            else:
                want = {}
            if mat_add(lhs, mat_scale(want, -one)):
                raise DimensionMismatch(
                    f"rep {rep.name}: commutator [f_{s}, f_-{r}] mismatch"
                )
    # extra rules
    for sign, rules in (("+", pres.pos_rules), ("-", pres.neg_rules)):
        for rule in rules.values():
            lhs = mat_eye(rep.dim, one)
            ok = True
            for l in rule.lhs:
                m = rep.letters.get((sign, l))
                if m is None:
                    ok = False
                    break
                lhs = mat_mul(lhs, m, rep.dim, zero)
            if not ok:
                continue
            rhs = {}
            for c, w in rule.rhs:
                m = mat_eye(rep.dim, one)
                for l in w:
                    m = mat_mul(m, rep.letters[(sign, l)], rep.dim, zero)
                rhs = mat_add(rhs, mat_scale(m, c))
            if mat_add(lhs, mat_scale(rhs, -one)):
                raise DimensionMismatch(f"rep {rep.name}: rule {rule.lhs} fails")


def _x_degree(v: Scalar, x_name) -> int:
    if x_name is None:
        return 0
    i = v.ctx.index[x_name]
    degs = {k[i] for k in v.num} | {-k[i] for k in v.den if k[i]}
    degs.discard(0)
    if not degs:
        return 0
    if len(degs) > 1:
        raise DimensionMismatch("mixed x-degrees in one matrix entry")
    return next(iter(degs))
