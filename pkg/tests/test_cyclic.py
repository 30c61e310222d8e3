import numpy as np
import pytest

from loopforms import cyclic as C
from loopforms import forms as F
from loopforms.errors import DegreeError


def random_word(rng, manifold, length, max_degree=2):
    dim = manifold.ambient_dim
    degs = [int(rng.integers(0, max_degree + 1))]
    degs += [int(rng.integers(1, max_degree + 1)) for _ in range(length - 1)]
    return C.FormWord([F.random_polynomial_form(rng, dim, d, scale=0.6)
                       for d in degs])


def random_chain(rng, manifold, max_len=4, n_terms=3):
    terms = []
    for _ in range(n_terms):
        length = int(rng.integers(1, max_len + 1))
        terms.append((float(rng.standard_normal()),
                      random_word(rng, manifold, length)))
    return C.Chain(terms)


def test_word_validation(manifold):
    one = F.constant_form(1.0)
    a = F.killing_flat(manifold)
    with pytest.raises(DegreeError):
        C.FormWord([])
    with pytest.raises(DegreeError):
        C.FormWord([a, one])
    C.FormWord([a, one], strict=False)  # relaxed for differential outputs
    C.FormWord([one, a])


def test_word_degree_examples(manifold):
    one = F.constant_form(1.0)
    a = F.killing_flat(manifold)
    area = F.area_form(manifold)
    assert C.word_degree(C.FormWord([one])) == 0
    assert C.word_degree(C.FormWord([one, a])) == 0
    assert C.word_degree(C.FormWord([area, area, area])) == 4


def test_degenerate_pruned(manifold):
    one = F.constant_form(1.0)
    a = F.killing_flat(manifold)
    ch = C.Chain([(1.0, C.FormWord([a, one], strict=False))])
    assert len(ch) == 0


def test_b_on_function_is_d(manifold, rng):
    f = (F.height_form(manifold) if manifold.name == "s2"
         else F.form_by_name(manifold, "cos_theta1"))
    out = C.hochschild_b(C.FormWord([f]))
    assert len(out) == 1
    coeff, word = out.terms[0]
    assert coeff == 1.0 and len(word) == 1 and word[0].degree == 1
    x = manifold.random_point(rng, 20)
    fr = manifold.frame(x)
    assert np.allclose(word[0].value(x, fr[:, :1, :]),
                       F.exterior_d(f).value(x, fr[:, :1, :]), atol=1e-12)


def test_degree_shifts_exact(manifold, rng):
    for _ in range(10):
        w = random_word(rng, manifold, int(rng.integers(1, 5)))
        k = C.word_degree(w)
        for c, w2 in C.hochschild_b(w):
            assert C.word_degree(w2) == k + 1
        for c, w2 in C.connes_B(w):
            assert C.word_degree(w2) == k - 1


def test_B_structure(manifold, rng):
    a = F.killing_flat(manifold)
    out = C.connes_B(C.FormWord([a]))
    assert len(out) == 1
    coeff, word = out.terms[0]
    assert coeff == 1.0
    assert word[0].is_constant and len(word) == 2
    assert C.word_degree(word) == 0
    # B of a word led by the unit dies in the normalized complex
    one = F.constant_form(1.0)
    assert len(C.connes_B(C.FormWord([one, a]))) == 0


def test_b_squared(manifold, rng):
    for _ in range(8):
        ch = random_chain(rng, manifold)
        res = C.chain_residual(C.hochschild_b(C.hochschild_b(ch)), manifold, rng,
                               n_points=30)
        assert res < 1e-8


def test_B_squared(manifold, rng):
    for _ in range(8):
        ch = random_chain(rng, manifold)
        res = C.chain_residual(C.connes_B(C.connes_B(ch)), manifold, rng,
                               n_points=30)
        assert res < 1e-10


def test_anticommutator(manifold, rng):
    for _ in range(8):
        ch = random_chain(rng, manifold)
        mixed = (C.hochschild_b(C.connes_B(ch))
                 + C.connes_B(C.hochschild_b(ch)))
        assert C.chain_residual(mixed, manifold, rng, n_points=30) < 1e-8


def test_total_differential_squares_to_zero(manifold, rng):
    assert len(C.cyclic_d(C.Chain())) == 0
    for _ in range(8):
        ch = random_chain(rng, manifold)
        res = C.chain_residual(C.cyclic_d(C.cyclic_d(ch)), manifold, rng,
                               n_points=30)
        assert res < 1e-7


def test_parity_flip(manifold, rng):
    w = random_word(rng, manifold, 3)
    k = C.word_degree(w)
    for c, w2 in C.cyclic_d(w):
        assert (C.word_degree(w2) - k) % 2 == 1
