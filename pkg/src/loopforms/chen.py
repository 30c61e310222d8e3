"""Equivariant Chen iterated integrals and their pullbacks through plots.

The central object realizes, for a tensor word w1 (x) ... (x) wn, the
loop-space form

    Sigma(w)(gamma; V_1..V_k)
      = int_0^1 ds  w1(gamma(s); V(s))
        int_{s < s_2 < ... < s_n < s+1}  prod_{i>=2} wi(gamma(s_i); dgamma, V(s_i))

with total degree deg w1 + sum (deg wi - 1).  The outer average makes the
form rotation invariant; each interior slot consumes one Stratonovitch
differential plus its remaining arguments, antisymmetrized over all ways to
distribute the k field arguments into slots (shuffle signs).

Discretization: per-segment two-point Gauss quadrature along connecting
geodesics for all line increments, the trapezoid-in-the-running-integral
("half-diagonal") rule for nested simplexes -- which makes the shuffle
identity exact on the grid -- and Chen's splitting identity to evaluate all
n rotated windows from doubled prefix tables in O(words^2 * n).

Pullbacks through plots insert plot derivatives as field arguments; the
interior product with the loop Killing direction prepends the circle axis of
the extended plot, and the exterior derivative acts by central differences
on the parameter box.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .cyclic import cyclic_d, word_degree
from .diffeology import (apply_plot, augmented_plot, extended_plot,
                         plot_derivative)
from .errors import DegreeMismatch
from .loops import DiscretizedLoop, convolve, plateau_kernel, polygonal, sample_bridge

_GAUSS_TAUS = ((1.0 - 1.0 / np.sqrt(3.0)) / 2.0, (1.0 + 1.0 / np.sqrt(3.0)) / 2.0)


# -- segment quadrature -----------------------------------------------------------------


def _segment_gauss(loop):
    """Gauss points and velocities of each connecting geodesic segment."""
    m = loop.manifold
    x = loop.points
    y = np.roll(x, -1, axis=0)
    v = m.log_map(x, y)
    taus = np.array(_GAUSS_TAUS)
    pts, vel = m.geodesic_eval(x, v, taus)      # (2, n, d)
    return pts, vel


def _interp_at_gauss(field):
    """Linear interpolation of knot samples at the two Gauss points."""
    nxt = np.roll(field, -1, axis=0)
    t1, t2 = _GAUSS_TAUS
    return np.stack([(1 - t1) * field + t1 * nxt,
                     (1 - t2) * field + t2 * nxt])


def line_increments(form, loop, fields=(), gauss=None):
    """Per-segment integrals of form(gamma; dgamma, fields...)."""
    pts, vel = gauss if gauss is not None else _segment_gauss(loop)
    args = [vel]
    for f in fields:
        args.append(_interp_at_gauss(f))
    vs = np.stack(args, axis=-2)                # (2, n, 1+len(fields), d)
    vals = form._value(pts, vs)
    return 0.5 * (vals[0] + vals[1])


def line_integral(form, loop, window=(0.0, 1.0)):
    """Integral of a 1-form along the loop over a grid-aligned window."""
    if form.degree != 1:
        raise DegreeMismatch("line integrals take 1-forms")
    n = loop.n
    a = int(round(window[0] * n))
    b = int(round(window[1] * n))
    inc = line_increments(form, loop)
    idx = np.arange(a, b) % n
    return float(np.sum(inc[idx]))


def _nested_prefix(increments_list):
    """Half-diagonal cumulative iterated integrals I[j][t] of factor prefixes."""
    out = []
    prev = None
    for a in increments_list:
        t = np.zeros(a.size + 1)
        if prev is None:
            np.cumsum(a, out=t[1:])
        else:
            t[1:] = np.cumsum(0.5 * (prev[:-1] + prev[1:]) * a)
        out.append(t)
        prev = t
    return out


def iterated_integral(forms, loop, t=1.0):
    """Nested Stratonovitch integral of 1-forms over [0, t] on the grid."""
    n = loop.n
    incs = [line_increments(f, loop) for f in forms]
    pref = _nested_prefix(incs)
    idx = int(round(t * n))
    return float(pref[-1][idx])


# -- the equivariant integral -------------------------------------------------------------


def _block_assignments(sizes, k):
    """Ordered partitions of range(k) into sorted blocks of the given sizes,
    with the interleaving shuffle sign."""
    if sum(sizes) != k:
        raise DegreeMismatch("field count must match the word degree")
    out = []

    def rec(remaining, blocks):
        if not remaining and len(blocks) == len(sizes):
            perm = [i for b in blocks for i in b]
            inv = sum(1 for a in range(len(perm)) for b in range(a + 1, len(perm))
                      if perm[a] > perm[b])
            out.append((tuple(blocks), -1.0 if inv % 2 else 1.0))
            return
        pos = len(blocks)
        size = sizes[pos]
        rem = sorted(remaining)
        for comb in itertools.combinations(rem, size):
            rec(remaining - set(comb), blocks + [comb])

    rec(set(range(k)), [])
    return out


def _window_integrals(increments_list, n):
    """Iterated integrals over every rotated full window [j, j+n).

    Uses Chen's splitting identity on doubled prefix tables: the window value
    of a factor list is the doubled prefix at j+n minus all proper prefix
    splits at j.  Exact for the half-diagonal rule.
    """
    m = len(increments_list)
    if m == 0:
        return np.ones(n)
    doubled = [np.tile(a, 2) for a in increments_list]
    # prefix[p][q]: iterated integral over [0, t) of factors p..q inclusive
    prefix = {}
    for p in range(m):
        tables = _nested_prefix(doubled[p:])
        for q in range(p, m):
            prefix[(p, q)] = tables[q - p]
    j = np.arange(n)
    suffix = {m: np.ones(n)}
    for p in range(m - 1, -1, -1):
        w = prefix[(p, m - 1)][j + n].copy()
        for q in range(p, m):
            w -= prefix[(p, q)][j] * suffix[q + 1]
        suffix[p] = w
    return suffix[0]


def sigma_eval(word, loop, fields=()):
    """The equivariant iterated integral of a word on one loop.

    ``fields`` are tangent fields sampled at the loop knots, one per degree
    of the word; interior slots of degree zero make the integral vanish.
    """
    fields = list(fields)
    k = word_degree(word)
    if k < 0 or any(f.degree == 0 for f in word[1:]):
        return 0.0
    if len(fields) != k:
        raise DegreeMismatch(f"word degree {k} needs {k} fields, "
                             f"got {len(fields)}")
    n = loop.n
    sizes = [word[0].degree] + [f.degree - 1 for f in word[1:]]
    gauss = _segment_gauss(loop) if len(word) > 1 else None
    total = 0.0
    for blocks, sign in _block_assignments(sizes, k):
        head_fields = [fields[i] for i in blocks[0]]
        if head_fields:
            vs = np.stack(head_fields, axis=-2)
            head = word[0]._value(loop.points, vs)
        else:
            head = word[0]._value(
                loop.points, np.zeros((n, 0, loop.points.shape[1])))
        incs = [line_increments(word[i + 1], loop,
                                [fields[j] for j in blocks[i + 1]], gauss)
                for i in range(len(word) - 1)]
        windows = _window_integrals(incs, n)
        total += sign * float(np.mean(head * windows))
    return total


# -- loop-space forms realized on plots --------------------------------------------------


class LoopSpaceForm:
    """A form on loop space known through its pullbacks along plots.

    ``pulled(plot, u, dirs, loop)`` evaluates the pullback at parameter u on
    the basis directions ``dirs`` (axis indices of the plot).
    """

    degree = 0

    def pulled(self, plot, u, dirs, loop):
        raise NotImplementedError

    def __add__(self, other):
        return SumForm(self, other)

    def __rmul__(self, c):
        return ScaledForm(c, self)


class SigmaForm(LoopSpaceForm):
    def __init__(self, word):
        self.word = word
        self.degree = word_degree(word)

    def pulled(self, plot, u, dirs, loop):
        if len(dirs) != self.degree:
            raise DegreeMismatch("direction count must match the form degree")
        mapped = apply_plot(plot, u, loop)
        fields = [plot_derivative(plot, u, j, loop) for j in dirs]
        return sigma_eval(self.word, mapped, fields)


class ChainSigmaForm(LoopSpaceForm):
    """Sigma applied to a chain, restricted to the words of one degree."""

    def __init__(self, chain, degree):
        self.terms = [(c, w) for c, w in chain if word_degree(w) == degree]
        self.degree = degree

    def pulled(self, plot, u, dirs, loop):
        mapped = apply_plot(plot, u, loop)
        fields = [plot_derivative(plot, u, j, loop) for j in dirs]
        return sum(c * sigma_eval(w, mapped, fields) for c, w in self.terms)


class FunctionalForm(LoopSpaceForm):
    """Degree-zero form: a functional of the mapped loop."""

    def __init__(self, fn, name=None):
        self.fn = fn
        self.degree = 0
        self.name = name

    def pulled(self, plot, u, dirs, loop):
        if dirs:
            raise DegreeMismatch("a functional takes no directions")
        return self.fn(apply_plot(plot, u, loop))


class ScaledForm(LoopSpaceForm):
    def __init__(self, c, base):
        self.c = c
        self.base = base
        self.degree = base.degree

    def pulled(self, plot, u, dirs, loop):
        return self.c * self.base.pulled(plot, u, dirs, loop)


class SumForm(LoopSpaceForm):
    def __init__(self, a, b):
        if a.degree != b.degree:
            raise DegreeMismatch("can only add forms of equal degree")
        self.a = a
        self.b = b
        self.degree = a.degree

    def pulled(self, plot, u, dirs, loop):
        return (self.a.pulled(plot, u, dirs, loop)
                + self.b.pulled(plot, u, dirs, loop))


class WedgeForm(LoopSpaceForm):
    """Pullback of a wedge is the wedge of pullbacks (shuffle sum)."""

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.degree = a.degree + b.degree

    def pulled(self, plot, u, dirs, loop):
        total = 0.0
        idx = list(range(len(dirs)))
        for first in itertools.combinations(idx, self.a.degree):
            second = tuple(i for i in idx if i not in first)
            perm = first + second
            inv = sum(1 for x in range(len(perm)) for y in range(x + 1, len(perm))
                      if perm[x] > perm[y])
            sign = -1.0 if inv % 2 else 1.0
            total += sign * self.a.pulled(plot, u, tuple(dirs[i] for i in first),
                                          loop) \
                * self.b.pulled(plot, u, tuple(dirs[i] for i in second), loop)
        return total


class PulledD(LoopSpaceForm):
    """Exterior derivative on the parameter box by central differences."""

    def __init__(self, base, step_fraction=1e-4):
        self.base = base
        self.degree = base.degree + 1
        self.step_fraction = step_fraction

    def pulled(self, plot, u, dirs, loop):
        u = np.asarray(u, dtype=float).reshape(-1)
        h = self.step_fraction * plot.box_scale()
        total = 0.0
        for i, axis in enumerate(dirs):
            rest = tuple(d for j, d in enumerate(dirs) if j != i)
            up = u.copy()
            up[axis] += h
            dn = u.copy()
            dn[axis] -= h
            diff = (self.base.pulled(plot, up, rest, loop)
                    - self.base.pulled(plot, dn, rest, loop)) / (2 * h)
            total += (-1.0) ** i * diff
        return total


class InteriorKilling(LoopSpaceForm):
    """Contraction with the loop rotation direction via the extended plot."""

    def __init__(self, base):
        self.base = base
        self.degree = base.degree - 1

    def pulled(self, plot, u, dirs, loop):
        ext = extended_plot(plot)
        u_ext = np.append(np.asarray(u, dtype=float).reshape(-1), 0.0)
        return self.base.pulled(ext, u_ext, (plot.m,) + tuple(dirs), loop)


def pullback_sigma(word, plot, u, dirs, loop):
    return SigmaForm(word).pulled(plot, u, tuple(dirs), loop)


def interior_killing(form):
    return InteriorKilling(form)


def pulled_d(form):
    return PulledD(form)


def _basis_multi_indices(m, k):
    return list(itertools.combinations(range(m), k))


# -- the flagship identities ---------------------------------------------------------------


def chain_map_residual(word, plot, u, loop):
    """Max over basis multi-indices of |(d + i_X) Sigma(w) - Sigma((b+B)w)|."""
    sigma = SigmaForm(word)
    k = sigma.degree
    rhs_chain = cyclic_d(word)
    worst = 0.0
    for out_deg in (k + 1, k - 1):
        if out_deg < 0 or out_deg > plot.m:
            continue
        lhs = PulledD(sigma) if out_deg == k + 1 else InteriorKilling(sigma)
        rhs = ChainSigmaForm(rhs_chain, out_deg)
        for dirs in _basis_multi_indices(plot.m, out_deg):
            a = lhs.pulled(plot, u, dirs, loop)
            b = rhs.pulled(plot, u, dirs, loop)
            worst = max(worst, abs(a - b))
    return worst


def _simpson_weights(nodes):
    if nodes % 2 == 0:
        raise ValueError("composite Simpson needs an odd node count")
    w = np.ones(nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / w.sum() * 1.0


def cartan_residual(word, plot, u, loop, simpson_nodes=33):
    """Absolute defect of the four-term retraction homotopy identity.

    sigma = H0* sigma + d int_0^1 H^r* i_{X_r} sigma dr
            + int_0^1 H^r* i_{X_r} (d + i_X) sigma dr
            - int_0^1 H^r* i_{X_r} i_X sigma dr

    evaluated through the augmented plot at (u, gamma); all r-integrals by
    composite Simpson, the interior product with the contraction velocity by
    inserting the retraction axis.
    """
    sigma = SigmaForm(word)
    k = sigma.degree
    if k > plot.m:
        raise DegreeMismatch("form degree exceeds the plot dimension")
    aug = augmented_plot(plot)
    r_axis = plot.m
    u = np.asarray(u, dtype=float).reshape(-1)
    rs = np.linspace(0.0, 1.0, simpson_nodes)
    wts = _simpson_weights(simpson_nodes)

    def aug_u(r):
        return np.append(u, r)

    def r_integral(form, dirs):
        vals = [form.pulled(aug, aug_u(r), (r_axis,) + tuple(dirs), loop)
                for r in rs]
        return float(np.dot(wts, vals))

    equivariant = SumForm(PulledD(sigma), InteriorKilling(sigma)) \
        if k >= 1 else PulledD(sigma)

    class RIntegralFunctional(LoopSpaceForm):
        """u' -> int_0^1 (aug* sigma)((u', r); e_r, dirs') dr as a form on U."""

        def __init__(self, inner, degree):
            self.inner = inner
            self.degree = degree

        def pulled(self, plot_, u_, dirs_, loop_):
            vals = [self.inner.pulled(aug, np.append(u_, r),
                                      (r_axis,) + tuple(dirs_), loop_)
                    for r in rs]
            return float(np.dot(wts, vals))

    worst = 0.0
    for dirs in _basis_multi_indices(plot.m, k):
        lhs = sigma.pulled(plot, u, dirs, loop)
        a = sigma.pulled(aug, aug_u(0.0), dirs, loop)
        if k >= 1:
            b = PulledD(RIntegralFunctional(sigma, k - 1)).pulled(
                plot, u, dirs, loop)
        else:
            b = 0.0
        c = r_integral(equivariant, dirs)
        d = r_integral(InteriorKilling(sigma), dirs) if k >= 1 else 0.0
        worst = max(worst, abs(lhs - a - b - c + d))
    return worst


# -- convolution approximants of anticipative integrals ------------------------------------


def convolution_iterated(path, forms_or_fns, N, kernel_exponent=4, t=1.0,
                         return_tail=False):
    """Nested integral of the convolution-smoothed path.

    ``path`` is a loop; each factor is either a 1-form (paired with the
    smoothed Stratonovitch increments through its evaluator) or a callable
    F: points -> ambient covectors paired by the ambient dot product.  The
    kernel's shoulder windows contribute the reported tail when
    ``return_tail`` is set.
    """
    n = path.n
    sm = convolve(path, N, kernel_exponent)

    def increments(loop_like):
        pts = loop_like.points
        mids = 0.5 * (pts + np.roll(pts, -1, axis=0))
        dy = np.roll(pts, -1, axis=0) - pts
        incs = []
        for f in forms_or_fns:
            if callable(f) and not hasattr(f, "degree"):
                cov = f(mids)
                incs.append(np.sum(cov * dy, axis=-1))
            else:
                vs = dy[:, None, :]
                incs.append(f._value(mids, vs))
        return incs

    pref = _nested_prefix(increments(sm))
    value = float(pref[-1][int(round(t * n))])
    if not return_tail:
        return value
    # shoulder-only kernel: difference between the plateau kernel and its
    # hard-window idealization, applied at the last level
    g = plateau_kernel(n, N, kernel_exponent)
    hard = np.where(g >= g.max() * (1 - 1e-12), g.max(), 0.0)
    hard = hard / (hard.sum() / n)
    edge = (g - hard) / n
    fe = np.fft.rfft(edge)
    pts = np.empty_like(path.points)
    for c in range(path.points.shape[1]):
        pts[:, c] = np.fft.irfft(np.fft.rfft(path.points[:, c]) * fe, n)
    # the edge part is a signed correction to the smoothed path; its
    # contribution enters the last-level increments linearly
    mids = 0.5 * (sm.points + np.roll(sm.points, -1, axis=0))
    dy_edge = np.roll(pts, -1, axis=0) - pts
    f_last = forms_or_fns[-1]
    if callable(f_last) and not hasattr(f_last, "degree"):
        inc_edge = np.sum(f_last(mids) * dy_edge, axis=-1)
    else:
        inc_edge = f_last._value(mids, dy_edge[:, None, :])
    run = pref[-2] if len(forms_or_fns) > 1 else np.ones(n + 1)
    idx = int(round(t * n))
    tail = float(np.sum(0.5 * (run[:idx] + run[1:idx + 1]) * inc_edge[:idx]))
    return value, tail


# -- convergence studies ---------------------------------------------------------------------


def convergence_study(quantity, N_list, replicas, rng, manifold, n=None,
                      scheme="polygonal", quantity_name="quantity"):
    """Empirical-L2 Cauchy table against the finest scale.

    ``quantity(regularized_loop)`` is evaluated on regularizations of the
    same underlying bridges (common random numbers across N).  Rows report
    the per-N mean, the L2 gap to the finest N, and standard errors.
    """
    N_list = sorted(N_list)
    n = n or (8 * max(N_list))
    values = np.empty((len(N_list), replicas))
    for rep in range(replicas):
        loop = sample_bridge(manifold, manifold.random_point(rng), n, rng)
        for i, N in enumerate(N_list):
            reg = polygonal(loop, N) if scheme == "polygonal" \
                else convolve(loop, N)
            values[i, rep] = quantity(reg)
    ref = values[-1]
    rows = []
    for i, N in enumerate(N_list):
        diff2 = (values[i] - ref) ** 2
        gap = math.sqrt(float(diff2.mean()))
        if gap > 0:
            se = float(diff2.std(ddof=1)) / (2 * gap * math.sqrt(replicas))
        else:
            se = 0.0
        rows.append({
            "quantity": quantity_name,
            "scheme": scheme,
            "N": N,
            "replicas": replicas,
            "mean": float(values[i].mean()),
            "L2_gap": gap,
            "stderr": se,
        })
    return rows
