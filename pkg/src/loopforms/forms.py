"""Exterior and equivariant calculus on the embedded surfaces.

A differential form is an evaluator: value(x, vs) takes ambient points
x (..., d) and stacked tangent arguments vs (..., k, d) and returns the
alternating multilinear value (...).  Evaluators are defined by smooth
ambient formulas in a neighborhood of the surface, so finite-difference
exterior derivatives are meaningful; built-ins additionally carry analytic
derivative evaluators, and the combinators propagate them (Leibniz for the
wedge).

The fixed-point integral of the localization mechanism is exposed as
``dh_integral``: for an equivariantly closed even form mu it integrates
exp applied to minus the equivariant derivative of lambda times the dual
Killing 1-form, wedged with mu, and its value is independent of lambda.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import DegreeError, DegreeMismatch, NotClosedError, ParityError

FD_STEP = 1e-5


def _as_points(x):
    return np.asarray(x, dtype=float)


def _as_vectors(vs, k, d):
    if k == 0:
        return np.zeros((0, d)) if vs is None else np.asarray(vs, dtype=float)
    vs = np.asarray(vs, dtype=float)
    if vs.shape[-2] != k or vs.shape[-1] != d:
        raise DegreeMismatch(f"expected {k} tangent arguments of dimension {d}, "
                             f"got array of shape {vs.shape}")
    return vs


class DifferentialForm:
    """Degree-k alternating evaluator with an optional analytic derivative.

    The derivative can be supplied either as a raw evaluator (``dvalue``) or
    as a lazy factory producing the derivative form (``dform``); factories
    keep the analytic chain alive through repeated differentiation.
    """

    def __init__(self, degree, value, dvalue=None, dform=None, dim=None,
                 is_constant=False, name=None):
        self.degree = degree
        self.dim = dim
        self._value = value
        self._dvalue = dvalue
        self._dform_factory = dform
        self._dform_cache = None
        self.is_constant = is_constant
        self.name = name

    def __repr__(self):
        return f"DifferentialForm(degree={self.degree}, name={self.name!r})"

    @property
    def has_analytic_d(self):
        return self._dvalue is not None or self._dform_factory is not None

    def analytic_d(self):
        if self._dform_factory is not None:
            if self._dform_cache is None:
                self._dform_cache = self._dform_factory()
            return self._dform_cache
        if self._dvalue is not None:
            return DifferentialForm(self.degree + 1, self._dvalue, dim=self.dim,
                                    name=f"d({self.name})" if self.name else None)
        return None

    def value(self, x, vs=None):
        x = _as_points(x)
        vs = _as_vectors(vs, self.degree, x.shape[-1])
        return self._value(x, vs)

    def __call__(self, x, *vectors):
        x = _as_points(x)
        if self.degree == 0:
            return self._value(x, np.zeros(x.shape[:-1] + (0, x.shape[-1])))
        vs = np.stack([np.asarray(v, dtype=float) for v in vectors], axis=-2)
        return self.value(x, vs)

    # arithmetic -------------------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, DifferentialForm):
            return NotImplemented
        if other.degree != self.degree:
            raise DegreeError("can only add forms of equal degree")
        a, b = self, other
        dform = None
        if a.has_analytic_d and b.has_analytic_d:
            dform = lambda: a.analytic_d() + b.analytic_d()
        return DifferentialForm(self.degree,
                                lambda x, vs: a._value(x, vs) + b._value(x, vs),
                                dform=dform, dim=a.dim)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        a = self
        dform = (lambda: c * a.analytic_d()) if a.has_analytic_d else None
        return DifferentialForm(self.degree, lambda x, vs: c * a._value(x, vs),
                                dform=dform, dim=a.dim,
                                is_constant=a.is_constant)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        return self + (-other)

    def without_analytic_d(self):
        """Copy that forgets the analytic derivative (forces the FD path)."""
        return DifferentialForm(self.degree, self._value, dim=self.dim,
                                is_constant=self.is_constant, name=self.name)


def constant_form(c, dim=None):
    arr = float(c)
    return DifferentialForm(
        0, lambda x, vs: np.full(x.shape[:-1], arr),
        dform=lambda: zero_form(1, dim=dim),
        dim=dim, is_constant=True, name=f"const({c})")


def zero_form(degree, dim=None):
    return DifferentialForm(degree, lambda x, vs: np.zeros(x.shape[:-1]),
                            dform=lambda: zero_form(degree + 1, dim=dim),
                            dim=dim, name="0")


def _shuffles(p, q):
    """(p,q)-shuffles as (first block, second block, sign)."""
    idx = tuple(range(p + q))
    out = []
    for first in itertools.combinations(idx, p):
        second = tuple(i for i in idx if i not in first)
        perm = first + second
        inv = sum(1 for a in range(p + q) for b in range(a + 1, p + q)
                  if perm[a] > perm[b])
        out.append((first, second, -1.0 if inv % 2 else 1.0))
    return out


def wedge(a, b):
    """Exterior product; degrees add, analytic derivatives combine by Leibniz."""
    p, q = a.degree, b.degree
    shuffles = _shuffles(p, q)

    def value(x, vs):
        total = 0.0
        for first, second, sign in shuffles:
            va = vs[..., first, :]
            vb = vs[..., second, :]
            total = total + sign * a._value(x, va) * b._value(x, vb)
        return total

    dform = None
    if a.has_analytic_d and b.has_analytic_d:
        sgn = -1.0 if p % 2 else 1.0
        dform = lambda: (wedge(exterior_d(a), b)
                         + sgn * wedge(a, exterior_d(b)))

    return DifferentialForm(p + q, value, dform=dform, dim=a.dim or b.dim)


def exterior_d(form, fd_step=FD_STEP):
    """Exterior derivative: analytic when available, else central differences.

    The FD rule is the alternating sum of directional derivatives of the
    contracted form; evaluators are ambient-smooth so displaced points are
    legal arguments.
    """
    k = form.degree
    if form.has_analytic_d:
        return form.analytic_d()

    def value(x, vs):
        total = 0.0
        for i in range(k + 1):
            others = vs[..., [j for j in range(k + 1) if j != i], :]
            vi = vs[..., i, :]
            plus = form._value(x + fd_step * vi, others)
            minus = form._value(x - fd_step * vi, others)
            total = total + (-1.0) ** i * (plus - minus) / (2 * fd_step)
        return total

    return DifferentialForm(k + 1, value, dim=form.dim,
                            name=f"d({form.name})" if form.name else None)


def interior_product(field, form):
    """Contraction with a vector field (callable x -> ambient vectors)."""
    if form.degree == 0:
        raise DegreeError("interior product needs degree >= 1")
    k = form.degree

    def value(x, vs):
        fx = np.broadcast_to(field(x), x.shape)[..., None, :]
        allv = np.concatenate([fx, vs], axis=-2)
        return form._value(x, allv)

    return DifferentialForm(k - 1, value, dim=form.dim,
                            name=f"i_X({form.name})" if form.name else None)


def act_pullback(manifold, t, form):
    """Pullback through the circle action at parameter t (ambient-linear)."""
    m = manifold.act_matrix(t)

    def value(x, vs):
        return form._value(x @ m.T, vs @ m.T)

    dform = None
    if form.has_analytic_d:
        dform = lambda: act_pullback(manifold, t, exterior_d(form))
    return DifferentialForm(form.degree, value, dform=dform, dim=form.dim)


# -- polynomial forms (exact derivatives; the random-form generator) ------------------


def _poly_eval(poly, x):
    total = 0.0
    for expo, coeff in poly.items():
        term = coeff
        for i, e in enumerate(expo):
            if e:
                term = term * x[..., i] ** e
        total = total + term
    return total


def _poly_diff(poly, i):
    out = {}
    for expo, coeff in poly.items():
        if expo[i]:
            e2 = list(expo)
            e2[i] -= 1
            e2 = tuple(e2)
            out[e2] = out.get(e2, 0.0) + coeff * expo[i]
    return out


def _sort_index(idx):
    idx = list(idx)
    sign = 1.0
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
            elif idx[j] == idx[j + 1]:
                return None, 0.0
    return tuple(idx), sign


def polynomial_form(dim, terms, name=None):
    """Form sum_I p_I(x) dx_I with polynomial coefficients and exact d.

    ``terms`` maps sorted exterior multi-indices to polynomials, each a dict
    from exponent tuples to coefficients.
    """
    degs = {len(I) for I in terms} or {0}
    if len(degs) != 1:
        raise DegreeError("polynomial_form needs a homogeneous exterior degree")
    k = degs.pop()

    def value(x, vs):
        total = np.zeros(x.shape[:-1])
        for I, poly in terms.items():
            if k:
                mats = vs[..., list(I)]
                det = np.linalg.det(mats) if k > 1 else mats[..., 0, 0]
            else:
                det = 1.0
            total = total + _poly_eval(poly, x) * det
        return total

    dterms = {}
    for I, poly in terms.items():
        for i in range(dim):
            dp = _poly_diff(poly, i)
            if not dp:
                continue
            J, sign = _sort_index((i,) + I)
            if not sign:
                continue
            tgt = dterms.setdefault(J, {})
            for expo, c in dp.items():
                tgt[expo] = tgt.get(expo, 0.0) + sign * c

    def dform():
        if dterms:
            return polynomial_form(dim, dterms)
        return zero_form(k + 1, dim=dim)

    return DifferentialForm(k, value, dform=dform, dim=dim, name=name)


def random_polynomial_form(rng, dim, degree, n_terms=3, poly_degree=2, scale=1.0):
    terms = {}
    for _ in range(n_terms):
        I = tuple(sorted(rng.choice(dim, size=degree, replace=False))) if degree else ()
        poly = terms.setdefault(I, {})
        expo = tuple(rng.integers(0, poly_degree + 1, size=dim))
        poly[expo] = poly.get(expo, 0.0) + scale * rng.standard_normal()
    return polynomial_form(dim, terms)


# -- equivariant layer -------------------------------------------------------------------


class EquivariantForm:
    """Finite sum of forms of distinct degrees sharing one parity."""

    def __init__(self, components):
        comps = {}
        for form in components:
            if form.degree in comps:
                comps[form.degree] = comps[form.degree] + form
            else:
                comps[form.degree] = form
        parities = {d % 2 for d in comps}
        if len(parities) > 1:
            raise ParityError("mixed parity components")
        self.components = dict(sorted(comps.items()))
        self.parity = parities.pop() if parities else 0

    def __getitem__(self, degree):
        return self.components.get(degree)

    def degrees(self):
        return sorted(self.components)

    def component_or_zero(self, degree, dim=None):
        return self.components.get(degree, zero_form(degree, dim=dim))


def equivariant_d(manifold, mu):
    """The operator d + i_X on a single-parity form; output has opposite parity."""
    out = []
    for k, form in mu.components.items():
        out.append(exterior_d(form))
        if k >= 1:
            out.append(interior_product(manifold.killing_field, form))
    return EquivariantForm(out)


def invariance_residual(manifold, form, rng, n_points=32,
                        ts=(0.13, 0.37, 0.5, 0.81)):
    """Max deviation of the pullback through the action from the form itself."""
    x = manifold.random_point(rng, n_points)
    fr = manifold.frame(x)
    vs = fr[:, :form.degree, :]
    base = form.value(x, vs)
    worst = 0.0
    for t in ts:
        pulled = act_pullback(manifold, t, form).value(x, vs)
        worst = max(worst, float(np.max(np.abs(pulled - base))))
    return worst


# -- integration ---------------------------------------------------------------------------


def integrate(manifold, form, resolution=96):
    """Integral of a top-degree form over the surface.

    Sphere nodes are Gauss-Legendre in the polar cosine crossed with a
    periodic trapezoid in longitude; torus nodes are the product periodic
    trapezoid.  Both are spectrally accurate on smooth integrands.
    """
    if form.degree != manifold.intrinsic_dim:
        raise DegreeError("integrate expects a top-degree form")
    pts, frames, w = manifold.quadrature(resolution)
    return float(np.sum(w * form.value(pts, frames)))


def _equivariant_scale_samples(manifold, mu, rng, n=64):
    x = manifold.random_point(rng, n)
    fr = manifold.frame(x)
    scale = 0.0
    for k, form in mu.components.items():
        vs = fr[:, :k, :]
        scale = max(scale, float(np.max(np.abs(form.value(x, vs)))))
    return x, fr, scale


def closedness_residual(manifold, mu, rng, n=64):
    """Max pointwise value of (d + i_X) mu over sampled points and frames."""
    nu = equivariant_d(manifold, mu)
    x, fr, _ = _equivariant_scale_samples(manifold, mu, rng, n)
    worst = 0.0
    for k, form in nu.components.items():
        if k > manifold.intrinsic_dim:
            continue
        vs = fr[:, :k, :]
        worst = max(worst, float(np.max(np.abs(form.value(x, vs)))))
    return worst


def dh_integral(manifold, mu, lam, resolution=96, closed_tol=1e-8, rng=None,
                check_closed=True):
    """Equivariant localization integral with explicit scale parameter lam.

    Integrates exp(-lam*(dX^flat + |X|^2)) wedge mu, keeping the top-degree
    part.  A pretest rejects inputs that are not equivariantly closed; for
    closed even mu the value does not depend on lam.  ``check_closed=False``
    skips the pretest for decay studies on forms supported away from the
    fixed points (for closed such forms the value is identically zero, so the
    decay statement is only observable on non-closed ones).
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if mu.parity != 0:
        raise ParityError("localization integral needs even parity")
    if check_closed:
        rng = rng or np.random.default_rng(0)
        scale = max(1.0, _equivariant_scale_samples(manifold, mu, rng)[2])
        res = closedness_residual(manifold, mu, rng)
        if res > closed_tol * scale:
            raise NotClosedError(f"(d+i_X)mu residual {res:.3e} exceeds "
                                 f"{closed_tol:.1e} * scale {scale:.3e}")

    xflat = killing_flat(manifold)
    dxflat = exterior_d(xflat)

    def gauss(x, vs):
        X = manifold.killing_field(x)
        return np.exp(-lam * np.sum(X * X, axis=-1))

    weight = DifferentialForm(0, gauss, dim=manifold.ambient_dim)

    top = manifold.intrinsic_dim
    total = 0.0
    power = constant_form(1.0, dim=manifold.ambient_dim)
    for j in range(top // 2 + 1):
        mu_k = mu[top - 2 * j]
        if mu_k is not None:
            coeff = (-lam) ** j / math.factorial(j)
            piece = wedge(weight, wedge(power, mu_k)) * coeff
            total += integrate(manifold, piece, resolution)
        power = wedge(power, dxflat)
    return total


# -- built-in catalog ----------------------------------------------------------------------


def _constant_2form(dim, i, j, coeff, name=None):
    def value(x, vs):
        u, v = vs[..., 0, :], vs[..., 1, :]
        return coeff * (u[..., i] * v[..., j] - u[..., j] * v[..., i])

    return DifferentialForm(2, value, dform=lambda: zero_form(3, dim=dim),
                            dim=dim, name=name)


def _constant_1form(dim, comp, coeff, name=None):
    def value(x, vs):
        return coeff * vs[..., 0, comp]

    return DifferentialForm(1, value, dform=lambda: zero_form(2, dim=dim),
                            dim=dim, name=name)


def killing_flat(manifold):
    """The Killing field lowered through the metric, as an ambient 1-form."""
    if manifold.name == "s2":
        two_pi = 2 * np.pi

        def value(x, vs):
            v = vs[..., 0, :]
            return two_pi * (-x[..., 1] * v[..., 0] + x[..., 0] * v[..., 1])

        return DifferentialForm(
            1, value, dform=lambda: _constant_2form(3, 0, 1, 2 * two_pi),
            dim=3, name="killing_flat")
    if manifold.name == "t2":
        return _dtheta(manifold, 0, name="killing_flat")
    raise KeyError(manifold.name)


def _dtheta(manifold, axis, name=None):
    """dtheta_i on the torus, extended off the surface by the angular formula.

    The angular extension is closed as an ambient form, so d vanishes exactly.
    """
    k = 2 * axis

    def value(x, vs):
        v = vs[..., 0, :]
        rho2 = x[..., k] ** 2 + x[..., k + 1] ** 2
        return (-x[..., k + 1] * v[..., k] + x[..., k] * v[..., k + 1]) / (
            2 * np.pi * rho2)

    return DifferentialForm(1, value, dform=lambda: zero_form(2, dim=4),
                            dim=4, name=name or f"dtheta{axis + 1}")


def area_form(manifold):
    if manifold.name == "s2":
        def value(x, vs):
            u, v = vs[..., 0, :], vs[..., 1, :]
            return np.sum(x * np.cross(u, v), axis=-1)

        def d3(x, vs):
            return 3.0 * np.linalg.det(vs)

        dform = lambda: DifferentialForm(3, d3, dform=lambda: zero_form(4, dim=3),
                                         dim=3)
        return DifferentialForm(2, value, dform=dform, dim=3, name="area")
    if manifold.name == "t2":
        w = wedge(_dtheta(manifold, 0), _dtheta(manifold, 1))
        w.name = "area"
        return w
    raise KeyError(manifold.name)


def height_form(manifold):
    if manifold.name != "s2":
        raise KeyError("height form is a sphere built-in")

    def value(x, vs):
        return x[..., 2]

    return DifferentialForm(0, value, dform=lambda: _constant_1form(3, 2, 1.0),
                            dim=3, name="height")


def _torus_trig(manifold, axis, kind):
    """cos/sin of an angular coordinate; linear in ambient coordinates."""
    comp = 2 * axis + (0 if kind == "cos" else 1)
    scale = 1.0 / manifold.radius

    def value(x, vs):
        return scale * x[..., comp]

    return DifferentialForm(0, value,
                            dform=lambda: _constant_1form(4, comp, scale),
                            dim=4, name=f"{kind}_theta{axis + 1}")


def bump_band(manifold, half_width=0.5, center=0.0):
    """Smooth bump in the height coordinate, supported away from the poles."""
    if manifold.name != "s2":
        raise KeyError("bump_band is a sphere built-in")
    a = half_width
    c = center

    edge = 1.0 - 2e-3  # exp(-1/(1-u)) is below 1e-215 past this; treat as zero

    def profile(z):
        u = ((z - c) / a) ** 2
        inside = u < edge
        safe = np.where(inside, 1.0 - u, 1.0)
        return np.where(inside, np.exp(-1.0 / safe), 0.0)

    def dprofile(z):
        u = ((z - c) / a) ** 2
        inside = u < edge
        safe = np.where(inside, 1.0 - u, 1.0)
        val = np.exp(-1.0 / safe) * (-2.0 * (z - c) / a ** 2) / safe ** 2
        return np.where(inside, val, 0.0)

    def value(x, vs):
        return profile(x[..., 2])

    def dvalue(x, vs):
        return dprofile(x[..., 2]) * vs[..., 0, 2]

    def dform():
        return DifferentialForm(1, dvalue, dform=lambda: zero_form(2, dim=3), dim=3)

    return DifferentialForm(0, value, dform=dform, dim=3, name="bump_band")


def dh_pair(manifold):
    """The height/area equivariantly closed pair on the sphere."""
    if manifold.name != "s2":
        raise KeyError("dh_pair is a sphere built-in")
    return EquivariantForm([(-2 * np.pi) * height_form(manifold),
                            area_form(manifold)])


def localized_exact_pair(manifold):
    """Equivariantly exact even form supported away from the fixed points.

    Built as (d + i_X)(g * X_flat) for the band bump g; the 0-form component
    g*|X|^2 is assembled with polynomial |X|^2 so the closedness pretest runs
    on analytic derivatives.
    """
    if manifold.name != "s2":
        raise KeyError("localized_exact_pair is a sphere built-in")
    g = bump_band(manifold)
    tau = wedge(g, killing_flat(manifold))
    w2 = 4 * np.pi ** 2
    norm2 = polynomial_form(3, {(): {(2, 0, 0): w2, (0, 2, 0): w2}},
                            name="killing_norm2")
    return EquivariantForm([wedge(g, norm2), exterior_d(tau)])


def banded_pair(manifold, center=0.9, half_width=0.09):
    """Height/area pair cut off to a band near (but off) a pole.

    Not equivariantly closed; its localization integral decays exponentially
    in the scale parameter because the band avoids the fixed points.
    """
    if manifold.name != "s2":
        raise KeyError("banded_pair is a sphere built-in")
    g = bump_band(manifold, half_width=half_width, center=center)
    return EquivariantForm([wedge(g, (-2 * np.pi) * height_form(manifold)),
                            wedge(g, area_form(manifold))])


def form_by_name(manifold, name):
    catalog = {
        "one": lambda m: constant_form(1.0, dim=m.ambient_dim),
        "killing_flat": killing_flat,
        "area": area_form,
    }
    if manifold.name == "s2":
        catalog.update({
            "height": height_form,
            "bump_band": bump_band,
        })
    if manifold.name == "t2":
        catalog.update({
            "dtheta1": lambda m: _dtheta(m, 0),
            "dtheta2": lambda m: _dtheta(m, 1),
            "cos_theta1": lambda m: _torus_trig(m, 0, "cos"),
            "sin_theta1": lambda m: _torus_trig(m, 0, "sin"),
            "cos_theta2": lambda m: _torus_trig(m, 1, "cos"),
            "sin_theta2": lambda m: _torus_trig(m, 1, "sin"),
        })
    try:
        return catalog[name](manifold)
    except KeyError:
        raise KeyError(f"no form {name!r} on {manifold.name}; "
                       f"available: {sorted(catalog)}")
