"""The cyclic bar complex on tensor words of differential forms.

A word w1 (x) w2 (x) ... (x) wn carries the grading

    degree = deg w1 + sum_{i>=2} (deg wi - 1),

slot 1 unsuspended, later slots suspended.  The two differentials are the
Hochschild boundary b (degree +1) and the Connes rotation operator B
(degree -1); b + B squares to zero.

Sign table (frozen; Q_i = suspended prefix sums as above with Q_0 = 0,
R_i = fully suspended prefix sums, i.e. R_i = Q_i - deg-shift of slot 1):

    b:  merge slots (i, i+1)      ->  -(-1)^{Q_i}
        wraparound wn ^ w1        ->  (-1)^{(deg wn - 1) * Q_{n-1}}
        d in slot 1               ->  +1
        d in slot i >= 2          ->  -(-1)^{Q_{i-1}}

    (The multiplication faces carry the opposite overall sign from the
    suspension bookkeeping of the d-faces; both global choices satisfy the
    complex identities, and this one is the choice under which the boundary
    terms of the equivariant iterated integral match the Hochschild faces.)
    B:  rotation starting at wi   ->  (-1)^{R_{i-1} * (R_n - R_{i-1})}

The complex is normalized: any output word with a *constant* form in a slot
>= 2 is degenerate and dropped.  Words produced by b and B may carry
nonconstant 0-forms in interior slots (they arise from rotating a 0-form
out of slot 1); such words are legitimate chain terms and evaluate to zero
under the equivariant iterated integral.
"""

from __future__ import annotations

import numpy as np

from .errors import DegreeError
from .forms import DifferentialForm, constant_form, exterior_d, wedge


class FormWord:
    """Ordered tensor word of differential forms.

    ``strict=True`` (the default for hand-built words) enforces the
    positive-degree constraint on slots >= 2; the differentials construct
    relaxed words internally.
    """

    __slots__ = ("forms",)

    def __init__(self, forms, strict=True):
        forms = tuple(forms)
        if not forms:
            raise DegreeError("a word needs at least one slot")
        if strict:
            for f in forms[1:]:
                if f.degree == 0:
                    raise DegreeError(
                        "slots >= 2 of a word must have positive degree")
        self.forms = forms

    def __len__(self):
        return len(self.forms)

    def __iter__(self):
        return iter(self.forms)

    def __getitem__(self, i):
        return self.forms[i]

    def __repr__(self):
        return " (x) ".join(f.name or f"<deg {f.degree}>" for f in self.forms)

    @property
    def degenerate(self):
        return any(f.is_constant for f in self.forms[1:])

    def suspended_prefix(self):
        """Q_i with slot 1 unsuspended; Q[0] = 0."""
        q = [0]
        for j, f in enumerate(self.forms):
            q.append(q[-1] + (f.degree if j == 0 else f.degree - 1))
        return q

    def full_suspended_prefix(self):
        """R_i with every slot suspended; R[0] = 0."""
        r = [0]
        for f in self.forms:
            r.append(r[-1] + f.degree - 1)
        return r


def word_degree(word):
    """deg w1 + sum over later slots of (deg wi - 1); may be negative on
    relaxed internal words."""
    return word.suspended_prefix()[-1]


class Chain:
    """Finite real linear combination of words; terms with zero coefficient
    or a degenerate (interior-constant) word are pruned."""

    __slots__ = ("terms",)

    def __init__(self, terms=()):
        self.terms = [(float(c), w) for c, w in terms
                      if c != 0.0 and not w.degenerate]

    @classmethod
    def single(cls, word, coeff=1.0):
        return cls([(coeff, word)])

    def __iter__(self):
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)

    def __add__(self, other):
        return Chain(self.terms + other.terms)

    def __rmul__(self, c):
        return Chain([(c * a, w) for a, w in self.terms])

    def map_words(self, fn):
        out = []
        for c, w in self.terms:
            for c2, w2 in fn(w):
                out.append((c * c2, w2))
        return Chain(out)

    def degrees(self):
        return sorted({word_degree(w) for _, w in self.terms})


def hochschild_b(chain):
    """Hochschild boundary: adjacent wedges, the wraparound wedge, and the
    per-slot exterior derivative; raises word degree by one."""
    if isinstance(chain, FormWord):
        chain = Chain.single(chain)

    def boundary(word):
        n = len(word)
        q = word.suspended_prefix()
        out = []
        for i in range(1, n):  # merge slots i, i+1 (1-based)
            sign = -((-1.0) ** (q[i] % 2))
            merged = wedge(word[i - 1], word[i])
            out.append((sign, FormWord(word.forms[:i - 1] + (merged,)
                                       + word.forms[i + 1:], strict=False)))
        if n >= 2:
            vn = word[n - 1].degree - 1
            sign = (-1.0) ** ((vn * q[n - 1]) % 2)
            merged = wedge(word[n - 1], word[0])
            out.append((sign, FormWord((merged,) + word.forms[1:-1], strict=False)))
        for i in range(1, n + 1):
            sign = 1.0 if i == 1 else -((-1.0) ** (q[i - 1] % 2))
            out.append((sign, FormWord(word.forms[:i - 1]
                                       + (exterior_d(word[i - 1]),)
                                       + word.forms[i:], strict=False)))
        return out

    return chain.map_words(boundary)


def connes_B(chain):
    """Connes rotation operator: prefix the unit and cycle; lowers word
    degree by one.  Rotations whose output has an interior constant are
    degenerate and vanish (normalized complex)."""
    if isinstance(chain, FormWord):
        chain = Chain.single(chain)
    unit = constant_form(1.0)

    def rotate(word):
        n = len(word)
        r = word.full_suspended_prefix()
        out = []
        for i in range(1, n + 1):
            sign = (-1.0) ** ((r[i - 1] * (r[n] - r[i - 1])) % 2)
            rotated = FormWord((unit,) + word.forms[i - 1:] + word.forms[:i - 1],
                               strict=False)
            out.append((sign, rotated))
        return out

    return chain.map_words(rotate)


def cyclic_d(chain):
    """Total differential b + B of the cyclic complex."""
    if isinstance(chain, FormWord):
        chain = Chain.single(chain)
    return hochschild_b(chain) + connes_B(chain)


# -- pointwise evaluation oracle -----------------------------------------------------


def word_eval(word, x, frame):
    """Evaluate the wedge of the slots at a point on a supplied frame.

    This is the linear functional used to certify the algebraic identities
    numerically: it factors through the tensor product, so any chain that is
    zero in the complex evaluates to zero here for every (point, frame).
    """
    total = None
    for f in word:
        total = f if total is None else wedge(total, f)
    k = total.degree
    if k > frame.shape[-2]:
        return np.zeros(np.asarray(x).shape[:-1])
    return total.value(x, frame[..., :k, :])


def chain_eval(chain, x, frame):
    vals = 0.0
    for c, w in chain:
        vals = vals + c * word_eval(w, x, frame)
    return vals


def chain_residual(chain, manifold, rng, n_points=50, n_vectors=4):
    """Max |evaluation| of a chain over random points and random tangent tuples.

    Tangent tuples are random combinations of the orthonormal frame; on a
    surface any alternating value of degree above two then vanishes honestly,
    so the functional exercises exactly the wedge degrees the surface sees.
    """
    x = manifold.random_point(rng, n_points)
    fr = manifold.frame(x)
    coef = rng.standard_normal((n_points, n_vectors, manifold.intrinsic_dim))
    vs = np.einsum("nsi,nid->nsd", coef, fr)
    return float(np.max(np.abs(chain_eval(chain, x, vs))))
