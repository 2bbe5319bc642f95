"""Algebra specification files and shipped presentations.

An algebra file declares log atoms (whose exponentials become the
multiplicative parameters), polynomial parameters, Cartan and root labels,
the phi bilinear in log space, the Cartan action table, optional rewrite
rules, and representations.  Rules may be given explicitly or requested as
``auto`` null relations, in which case the loader derives the coefficients
from the presentation itself and verifies the result.
"""

from __future__ import annotations

import itertools
import json
from importlib import resources

from .algebra import (
    AlgebraPresentation,
    AlgElement,
    CartanExp,
    Representation,
    RewriteRule,
    mat_add,
    mat_mul,
    mat_scale,
    verify_representation,
)
from .errors import ConfigError, QuasiTwistError
from .exprs import parse_scalar
from .linsolve import LinComb, equations_from, solve_affine
from .scalars import Param, ParamContext


def load_algebra_file(path_or_dict, extra_params=(), verify_reps=True):
    if isinstance(path_or_dict, dict):
        spec = path_or_dict
    else:
        with open(path_or_dict, "r", encoding="utf-8") as fh:
            spec = json.load(fh)
    return build_presentation(spec, extra_params=extra_params, verify_reps=verify_reps)


def shipped_algebra(name: str) -> dict:
    ref = resources.files("quasitwist.data").joinpath(f"{name}.json")
    with ref.open("r", encoding="utf-8") as fh:
        return json.load(fh)


def build_context(spec: dict, extra_params=()) -> ParamContext:
    params = []
    for n in spec.get("log_params", ()):
        params.append(Param(n, "log"))
        params.append(Param("exp_" + n, "multiplicative"))
    for n in spec.get("poly_params", ()):
        params.append(Param(n, "multiplicative"))
    for n in spec.get("spectral_params", ()):
        params.append(Param(n, "spectral"))
    params.extend(extra_params)
    return ParamContext(params)


def build_presentation(spec: dict, extra_params=(), verify_reps=True) -> AlgebraPresentation:
    try:
        ctx = build_context(spec, extra_params)
        cartan = list(spec["cartan_labels"])
        roots = [str(r) for r in spec["root_labels"]]
        phi = {}
        rows = spec["phi"]
        for a, row in zip(cartan, rows):
            for b, entry in zip(cartan, row):
                s = parse_scalar(ctx, entry)
                if not s.is_zero():
                    phi[(a, b)] = s
        action = {}
        for a, table in spec["cartan_action"].items():
            for beta, v in table.items():
                s = parse_scalar(ctx, v)
                if not s.is_zero():
                    action[(a, str(beta))] = s
    except KeyError as e:
        raise ConfigError(f"algebra file is missing {e}") from None

    pres = AlgebraPresentation(
        name=spec.get("name", "algebra"),
        ctx=ctx,
        cartan_labels=cartan,
        root_labels=roots,
        phi=phi,
        cartan_action=action,
        root_meta=spec.get("root_meta", {}),
    )

    pos_rules, neg_rules = [], []
    for rule in spec.get("extra_rules", ()):
        if rule.get("auto"):
            for content in rule["auto"]:
                pr, nr = derive_null_relation(pres, tuple(str(c) for c in content))
                pos_rules.append(pr)
                neg_rules.append(nr)
        else:
            sign = rule["sign"]
            lhs = tuple(str(x) for x in rule["lhs"])
            rhs = [(parse_scalar(ctx, t["coeff"]), tuple(str(x) for x in t["word"])) for t in rule["rhs"]]
            (pos_rules if sign == "+" else neg_rules).append(RewriteRule(lhs, rhs))

    reps = {}
    for rname, rspec in spec.get("representations", {}).items():
        reps[rname] = _build_representation(ctx, rname, rspec, pres)

    pres = AlgebraPresentation(
        name=spec.get("name", "algebra"),
        ctx=ctx,
        cartan_labels=cartan,
        root_labels=roots,
        phi=phi,
        cartan_action=action,
        pos_rules=pos_rules,
        neg_rules=neg_rules,
        representations=reps,
        root_meta=spec.get("root_meta", {}),
    )
    pres.source = dict(spec)
    if verify_reps:
        for rep in reps.values():
            verify_representation(pres, rep, rep.spectral_param)
    return pres


def _build_representation(ctx, rname, rspec, pres) -> Representation:
    dim = rspec["dim"]
    weights = {
        a: tuple(parse_scalar(ctx, v) for v in vals)
        for a, vals in rspec["weights"].items()
    }
    letters = {}
    solve_kappa = []
    for key, entries in rspec["letters"].items():
        sign, label = key[0], str(key[1:])
        mat = {}
        for pos, v in entries.items():
            i, j = (int(x) for x in pos.split(","))
            mat[(i, j)] = parse_scalar(ctx, v)
        letters[(sign, label)] = mat
        if sign == "-" and rspec.get("solve_kappa", True):
            solve_kappa.append(label)
    rep = Representation(
        rname,
        dim,
        weights,
        letters,
        spectral_param=rspec.get("spectral"),
        d_label=rspec.get("d_label"),
    )
    for label in solve_kappa:
        _fit_kappa(pres, rep, label)
    return rep


def _fit_kappa(pres, rep, label):
    """Scale f_{-label} so that [f_label, f_{-label}] matches Eq. (4.9)."""
    ctx = pres.ctx
    fp = rep.letters.get(("+", label))
    fm = rep.letters.get(("-", label))
    if fp is None or fm is None:
        return
    comm = mat_add(
        mat_mul(fp, fm, rep.dim, ctx.zero),
        mat_scale(mat_mul(fm, fp, rep.dim, ctx.zero), -ctx.one),
    )
    want = mat_add(
        rep.cartan_diag(pres, pres.phi_col(label)),
        mat_scale(rep.cartan_diag(pres, -pres.phi_row(label)), -ctx.one),
    )
    want = {k: v for k, v in want.items() if not v.is_zero()}
    if not comm:
        if want:
            raise QuasiTwistError(f"rep {rep.name}: cannot normalize f_-{label}")
        return
    key = next(iter(comm))
    if key not in want:
        raise QuasiTwistError(f"rep {rep.name}: commutator support mismatch for {label}")
    kappa = want[key] / comm[key]
    rep.letters[("-", label)] = mat_scale(fm, kappa)


# ---------------------------------------------------------------------------
# null relations (quantum Serre rules), derived from the presentation
# ---------------------------------------------------------------------------


def derive_null_relation(pres: AlgebraPresentation, content):
    """Find the unique (up to scale) combination of positive words with the
    given letter content that commutes with every f_{-rho}, and orient it as
    a rewrite rule by its graded-lex-leading word.  Returns the positive rule
    and its mirror for the negative letters.
    """
    ctx = pres.ctx
    words = sorted(set(itertools.permutations(content)), reverse=True)
    names = [f"@c{i}" for i in range(len(words))]
    ext = ctx.extended([Param(n, "multiplicative") for n in names])
    # element X = sum c_w * w with unknown coefficients, in the extended ctx
    coeffs = {}
    residuals = []
    for rho in pres.root_labels:
        # normal_order(w . f_{-rho}) - normal_order(f_{-rho} . w), per word
        acc = {}
        for name, w in zip(names, words):
            lhs = pres.normal_order([("+", l) for l in w] + [("-", rho)])
            rhs = pres.normal_order([("-", rho)] + [("+", l) for l in w])
            for m, c in lhs.terms.items():
                acc.setdefault(m, LinComb(ext.zero))
                acc[m] = acc[m] + LinComb(ext.zero, {name: c.lift(ext)})
            for m, c in rhs.terms.items():
                acc.setdefault(m, LinComb(ext.zero))
                acc[m] = acc[m] + LinComb(ext.zero, {name: -c.lift(ext)})
        residuals.extend(v for v in acc.values() if not v.is_zero())
    # normalize the leading word's coefficient to 1
    residuals.append(LinComb(-ext.one, {names[0]: ext.one}))
    sol = solve_affine(equations_from(residuals), names, ext, error=QuasiTwistError)
    # relation: leading word = -sum(other words * coeff)  (after scaling)
    lead = words[0]
    rhs = []
    for name, w in zip(names[1:], words[1:]):
        c = sol[name]
        if c.is_zero():
            continue
        back = _unlift(c, ctx)
        rhs.append((-back, w))
    pos = RewriteRule(lead, rhs)
    # mirror: the negative-side null relation has reversed words with the
    # same coefficients (the algebra's order-reversing symmetry swaps
    # phi and its transpose, which the derivation below re-verifies).
    neg = _derive_negative_mirror(pres, content)
    return pos, neg


def _derive_negative_mirror(pres, content):
    ctx = pres.ctx
    words = sorted(set(itertools.permutations(content)), reverse=True)
    names = [f"@c{i}" for i in range(len(words))]
    ext = ctx.extended([Param(n, "multiplicative") for n in names])
    residuals = []
    for sigma in pres.root_labels:
        acc = {}
        for name, w in zip(names, words):
            lhs = pres.normal_order([("+", sigma)] + [("-", l) for l in w])
            rhs = pres.normal_order([("-", l) for l in w] + [("+", sigma)])
            for m, c in lhs.terms.items():
                acc.setdefault(m, LinComb(ext.zero))
                acc[m] = acc[m] + LinComb(ext.zero, {name: c.lift(ext)})
            for m, c in rhs.terms.items():
                acc.setdefault(m, LinComb(ext.zero))
                acc[m] = acc[m] + LinComb(ext.zero, {name: -c.lift(ext)})
        residuals.extend(v for v in acc.values() if not v.is_zero())
    residuals.append(LinComb(-ext.one, {names[0]: ext.one}))
    sol = solve_affine(equations_from(residuals), names, ext, error=QuasiTwistError)
    lead = words[0]
    rhs = []
    for name, w in zip(names[1:], words[1:]):
        c = sol[name]
        if c.is_zero():
            continue
        rhs.append((-_unlift(c, ctx), w))
    return RewriteRule(lead, rhs)


def _unlift(s, ctx):
    """Map a scalar from an extended context back (no unknowns may remain)."""
    remap = {n: ctx.index[n] for n in ctx.names}

    def conv(p):
        out = {}
        for k, v in p.items():
            kk = [0] * ctx.n
            for name, e in zip(s.ctx.names, k):
                if e:
                    if name not in remap:
                        raise QuasiTwistError("relation coefficient kept an unknown")
                    kk[remap[name]] = e
            out[tuple(kk)] = v
        return out

    from .scalars import Scalar

    return Scalar(ctx, s.cont, conv(s.num), conv(s.den), _canonical=True)


# ---------------------------------------------------------------------------
# confluence check (local, bounded)
# ---------------------------------------------------------------------------


def check_local_confluence(pres: AlgebraPresentation, max_len=6) -> int:
    """Rewrite every word (both orders of generation) up to max_len letters
    and compare normal forms reached through different first steps.  Returns
    the number of words checked; raises on any divergence.
    """
    import random

    rng = random.Random(7)
    letters = [("+", r) for r in pres.root_labels] + [("-", r) for r in pres.root_labels]
    checked = 0
    for ln in range(2, max_len + 1):
        for _ in range(min(60, len(letters) ** ln)):
            w = [letters[rng.randrange(len(letters))] for _ in range(ln)]
            nf1 = pres.normal_order(w)
            # associativity probe: split product differently
            for cut in (1, ln // 2, ln - 1):
                left = pres.normal_order(w[:cut])
                right = pres.normal_order(w[cut:])
                prod = AlgElement(pres, {})
                for m1, c1 in left.terms.items():
                    for m2, c2 in right.terms.items():
                        for m, cf in pres.mono_mul(m1, m2):
                            prod._iadd_mono(m, c1 * c2 * cf)
                if prod.terms != nf1.terms:
                    raise QuasiTwistError(
                        f"confluence failure on word {w} at cut {cut}"
                    )
            checked += 1
    return checked
