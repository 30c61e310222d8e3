import numpy as np
import pytest

from loopforms import diffeology as D
from loopforms import loops as L
from loopforms.errors import BoundaryError, PartitionError
from tests.test_loops import fourier_loop


def ambient_field(direction):
    direction = np.asarray(direction, dtype=float)

    def field(s, y):
        return np.broadcast_to(direction, y.shape)
    return field


def swirl_field(scale=1.0):
    def field(s, y):
        out = np.zeros_like(y)
        out[..., 0] = -scale * y[..., 1]
        out[..., 1] = scale * y[..., 0]
        return out
    return field


def two_field_plot(manifold, box=((-0.3, 0.3), (-0.3, 0.3))):
    d = manifold.ambient_dim
    e1 = np.zeros(d)
    e1[0] = 1.0
    fields = [ambient_field(e1), swirl_field(0.8)]
    return D.PlotSpec(box, [D.PlotPiece(D.Everything(), [D.ExpDeform(fields)])])


def test_identity_plot(manifold, rng):
    lp = fourier_loop(manifold, 64, rng)
    plot = D.identity_plot(manifold)
    out = D.apply_plot(plot, [0.5], lp)
    assert np.array_equal(out.points, lp.points)
    dfield = D.plot_derivative(plot, [0.5], 0, lp)
    assert np.allclose(dfield, 0.0)


def test_out_of_box_rejected(manifold, rng):
    lp = fourier_loop(manifold, 64, rng)
    with pytest.raises(ValueError):
        D.apply_plot(D.identity_plot(manifold), [2.0], lp)


def test_pure_rotation_piece(manifold, rng):
    lp = fourier_loop(manifold, 64, rng)
    plot = D.PlotSpec([(0.0, 1.0)],
                      [D.PlotPiece(D.Everything(), [], rotation=5 / 64)])
    out = D.apply_plot(plot, [0.3], lp)
    assert np.array_equal(out.points, L.rotate_loop(lp, 5 / 64).points)


def test_partition_must_be_disjoint(manifold, rng):
    lp = fourier_loop(manifold, 64, rng)
    plot = D.PlotSpec([(0.0, 1.0)], [D.PlotPiece(D.Everything(), []),
                                     D.PlotPiece(D.Everything(), [])])
    with pytest.raises(PartitionError):
        D.apply_plot(plot, [0.5], lp)


def test_two_piece_partition(manifold, rng):
    small = fourier_loop(manifold, 64, rng, radius=0.02)
    pieces = D.two_piece_partition(4, 0.2)
    plot = D.PlotSpec([(0.0, 1.0)],
                      [D.PlotPiece(pieces[0], []),
                       D.PlotPiece(pieces[1], [], rotation=0.5)])
    out = D.apply_plot(plot, [0.1], small)
    assert np.array_equal(out.points, small.points)


def test_expdeform_matches_pointwise_exp(manifold, rng):
    lp = fourier_loop(manifold, 64, rng)
    plot = two_field_plot(manifold)
    u = np.array([0.15, -0.2])
    out = D.apply_plot(plot, u, lp)
    d = manifold.ambient_dim
    e1 = np.zeros(d)
    e1[0] = 1.0
    v = (u[0] * manifold.tangent_project(lp.points, np.broadcast_to(e1, lp.points.shape))
         + u[1] * manifold.tangent_project(lp.points, swirl_field(0.8)(None, lp.points)))
    expected = manifold.exp_map(lp.points, v)
    assert np.allclose(out.points, expected, atol=1e-12)


def test_plot_derivative_analytic_vs_fd(manifold, rng):
    lp = fourier_loop(manifold, 64, rng)
    plot = two_field_plot(manifold)
    u = np.array([0.12, 0.07])
    for axis in (0, 1):
        ana = D.plot_derivative(plot, u, axis, lp, mode="auto")
        fd = D.plot_derivative(plot, u, axis, lp, mode="fd")
        denom = max(np.abs(fd).max(), 1e-12)
        assert np.max(np.abs(ana - fd)) / denom < 1e-6


def test_plot_derivative_linearity(manifold, rng):
    lp = fourier_loop(manifold, 64, rng)
    plot = two_field_plot(manifold)
    u = np.array([0.05, 0.1])
    d0 = D.plot_derivative(plot, u, 0, lp)
    d1 = D.plot_derivative(plot, u, 1, lp)
    h = 1e-5
    up = D.apply_plot(plot, u + h, lp).points
    dn = D.apply_plot(plot, u - h, lp).points
    fd_sum = (up - dn) / (2 * h)
    assert np.max(np.abs(fd_sum - (d0 + d1))) < 1e-6


def test_plot_derivative_boundary(manifold, rng):
    lp = fourier_loop(manifold, 64, rng)
    plot = D.identity_plot(manifold, box=((0.0, 1.0),))
    with pytest.raises(BoundaryError):
        D.plot_derivative(plot, [0.0], 0, lp, mode="fd")


def test_extended_plot(manifold, rng):
    lp = fourier_loop(manifold, 64, rng)
    plot = two_field_plot(manifold)
    ext = D.extended_plot(plot)
    u = np.array([0.1, -0.1])
    base = D.apply_plot(plot, u, lp)
    assert np.array_equal(D.apply_plot(ext, np.append(u, 0.0), lp).points,
                          base.points)
    t = 9 / 64
    rot = D.apply_plot(ext, np.append(u, t), lp)
    assert np.array_equal(rot.points, L.rotate_loop(base, t).points)
    # the circle-axis derivative is the loop time derivative
    tf = D.plot_derivative(ext, np.append(u, 0.0), 2, lp)
    n = lp.n
    fd = (np.roll(base.points, -1, axis=0) - np.roll(base.points, 1, axis=0)) * n / 2
    assert np.max(np.abs(tf - fd)) < np.max(np.abs(fd)) * 0.05
    # composing two rotations commutes
    ext2 = D.extended_plot(ext)
    a = D.apply_plot(ext2, np.concatenate([u, [5 / 64, 3 / 64]]), lp)
    b = D.apply_plot(ext2, np.concatenate([u, [3 / 64, 5 / 64]]), lp)
    assert np.array_equal(a.points, b.points)


def test_chord_endpoints(manifold, rng):
    x = manifold.random_point(rng, 20)
    fr = manifold.frame(x)
    y = manifold.exp_map(x, 0.2 * fr[:, 0] + 0.1 * fr[:, 1])
    assert np.allclose(D.chord(manifold, 0.0, x, y), x, atol=1e-12)
    assert np.allclose(D.chord(manifold, 1.0, x, y), y, atol=1e-10)


def test_retraction_identity_and_collapse(manifold, rng):
    lp = fourier_loop(manifold, 128, rng, radius=0.15)
    h1 = D.retraction(manifold, 1.0, lp)
    assert np.max(np.abs(h1.points - lp.points)) < 1e-12
    h0 = D.retraction(manifold, 0.0, lp)
    center = manifold.project(lp.points.mean(axis=0))
    assert np.max(np.abs(h0.points - center)) < 1e-10
    assert h0.diameter() < 1e-7


def test_retraction_equivariance_exact(manifold, rng):
    lp = fourier_loop(manifold, 128, rng, radius=0.15)
    for steps in (1, 17, 64):
        t = steps / 128
        a = D.retraction(manifold, 0.37, L.rotate_loop(lp, t))
        b = L.rotate_loop(D.retraction(manifold, 0.37, lp), t)
        assert np.max(np.abs(a.points - b.points)) < 1e-12


def test_retraction_homotopy_continuity(manifold, rng):
    lp = fourier_loop(manifold, 128, rng, radius=0.15)
    rs = np.linspace(0, 1, 9)
    prev = None
    consts = []
    for r in rs:
        cur = D.retraction(manifold, r, lp).points
        if prev is not None:
            sup = np.max(np.linalg.norm(cur - prev, axis=-1))
            consts.append(sup / (rs[1] - rs[0]))
        prev = cur
    assert max(consts) < 10.0 * lp.diameter()


def test_radial_field_fd_agreement(manifold, rng):
    lp = fourier_loop(manifold, 128, rng, radius=0.15)
    for r in (0.2, 0.7, 1.0):
        ana = D.radial_field(manifold, r, lp)
        h = 1e-6
        fd = (D.retraction(manifold, r + h, lp).points
              - D.retraction(manifold, r - h, lp).points) / (2 * h)
        assert np.max(np.abs(ana - fd)) < 1e-6


def test_radial_field_constant_loop(manifold, rng):
    x = manifold.random_point(rng)
    lp = L.DiscretizedLoop(manifold, np.tile(x, (64, 1)))
    assert np.max(np.abs(D.radial_field(manifold, 0.5, lp))) < 1e-12


def test_augmented_plot(manifold, rng):
    lp = fourier_loop(manifold, 128, rng, radius=0.12)
    plot = two_field_plot(manifold, box=((-0.1, 0.1), (-0.1, 0.1)))
    aug = D.augmented_plot(plot)
    assert aug.diffeology == 2
    u = np.array([0.05, -0.04])
    base = D.apply_plot(plot, u, lp)
    at1 = D.apply_plot(aug, np.append(u, 1.0), lp)
    assert np.max(np.abs(at1.points - base.points)) < 1e-12
    at0 = D.apply_plot(aug, np.append(u, 0.0), lp)
    assert at0.diameter() < 1e-7
    # derivative in r equals the radial field of the deformed loop
    r = 0.6
    ana = D.plot_derivative(aug, np.append(u, r), 2, lp)
    h = 1e-6
    fd = (D.apply_plot(aug, np.append(u, r + h), lp).points
          - D.apply_plot(aug, np.append(u, r - h), lp).points) / (2 * h)
    assert np.max(np.abs(ana - fd)) < 1e-6
    # rotation still commutes through the augmented plot on the grid
    t = 13 / 128
    a = D.apply_plot(aug, np.append(u, r), L.rotate_loop(lp, t))
    b = L.rotate_loop(D.apply_plot(aug, np.append(u, r), lp), t)
    assert np.max(np.abs(a.points - b.points)) < 1e-12


def test_dump_plot_description(manifold):
    plot = two_field_plot(manifold)
    text = D.extended_plot(plot).describe()
    assert "exp-deform" in text and "rotate" in text and "box" in text
