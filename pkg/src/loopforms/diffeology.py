"""Executable plots: parameterized families of loops and their derivatives.

A plot maps a parameter box U into loop space, piecewise over a partition of
loops by modulus events.  Two stage grammars are supported, mirroring the
two diffeologies: cylindrical exponential deformations with rotation offsets
(diffeology 1), and additionally grid-averaged functionals and the
equivariant retraction (diffeology 2).

The retraction H(r, .) averages geodesic chords under the circle action:

    H(r, gamma)(t) = project( mean_s exp_{gamma(s)}[ r * log_{gamma(s)} gamma(t) ] )

It commutes with grid rotations exactly (the mean over s is shift
invariant), fixes loops at r = 1, and contracts to the projected loop mean
at r = 0.
"""

from __future__ import annotations

import numpy as np

from .errors import BoundaryError, PartitionError, TubeError
from .loops import DiscretizedLoop, in_omega_N, rotate_loop

FD_STEP_FRACTION = 1e-4


# -- retraction --------------------------------------------------------------------


def chord(manifold, r, x, y):
    """exp_x(r * log_x(y)): the r-slide along the geodesic from x toward y."""
    return manifold.exp_map(x, r * manifold.log_map(x, y))


def _chord_mean(manifold, r, points, block=512):
    """mean over s of chord(r, gamma(s), gamma(t)), ambient, per t."""
    n = points.shape[0]
    out = np.empty_like(points)
    for start in range(0, n, block):
        tgt = points[start:start + block]
        v = manifold.log_map(points[:, None, :], tgt[None, :, :])
        ch = manifold.exp_map(np.broadcast_to(points[:, None, :], v.shape), r * v)
        out[start:start + block] = ch.mean(axis=0)
    return out


def retraction(manifold, r, loop):
    """The equivariant homotopy H(r, .) on a discretized loop."""
    mean = _chord_mean(manifold, r, loop.points)
    proj, bad = manifold.project(mean, return_flag=True)
    if bad.any():
        raise TubeError("chord mean left the projection tube")
    return DiscretizedLoop(manifold, proj)


def radial_field(manifold, r, loop):
    """d/dr H(r, gamma): the contraction velocity along the retracted loop."""
    n = loop.n
    pts = loop.points
    mean = np.zeros_like(pts)
    dmean = np.zeros_like(pts)
    block = 512
    for start in range(0, n, block):
        tgt = pts[start:start + block]
        base = np.broadcast_to(pts[:, None, :], (n,) + tgt.shape)
        v = manifold.log_map(pts[:, None, :], tgt[None, :, :])
        p, vel = manifold.geodesic_eval(base.reshape(-1, pts.shape[1]),
                                        v.reshape(-1, pts.shape[1]),
                                        np.array([r]))
        mean[start:start + block] = p[0].reshape(v.shape).mean(axis=0)
        dmean[start:start + block] = vel[0].reshape(v.shape).mean(axis=0)
    return manifold.dproject(mean, dmean)


# -- partition predicates ----------------------------------------------------------


class OmegaEvent:
    """Modulus event: windowed oscillation below r at scale 1/N."""

    def __init__(self, N, r):
        self.N = N
        self.r = r

    def __call__(self, loop):
        return in_omega_N(loop, self.N, self.r)

    def describe(self):
        return f"omega(N={self.N}, r={self.r})"


class Complement:
    def __init__(self, inner):
        self.inner = inner

    def __call__(self, loop):
        return not self.inner(loop)

    def describe(self):
        return f"not {self.inner.describe()}"


class Everything:
    def __call__(self, loop):
        return True

    def describe(self):
        return "all loops"


def two_piece_partition(N, r):
    ev = OmegaEvent(N, r)
    return [ev, Complement(ev)]


# -- deformation stages --------------------------------------------------------------


class ExpDeform:
    """y(s) -> exp_y( sum_j u_j * tangentialize(V_j(s, y)) )."""

    def __init__(self, fields, axes=None):
        self.fields = list(fields)
        self.axes = list(range(len(self.fields))) if axes is None else list(axes)

    def apply(self, manifold, u, pts, s):
        v = np.zeros_like(pts)
        for axis, field in zip(self.axes, self.fields):
            v += u[axis] * manifold.tangent_project(pts, field(s, pts))
        return manifold.exp_map(pts, v)

    def derivative(self, manifold, u, pts, s, axis):
        """Forward-mode d/du_axis when the stage input does not depend on u."""
        if axis not in self.axes:
            return np.zeros_like(pts)
        v = np.zeros_like(pts)
        for ax, field in zip(self.axes, self.fields):
            v += u[ax] * manifold.tangent_project(pts, field(s, pts))
        w = manifold.tangent_project(
            pts, self.fields[self.axes.index(axis)](s, pts))
        return manifold.dexp(pts, v, w)

    def describe(self):
        return f"exp-deform({len(self.fields)} fields, axes {self.axes})"


class Averaged:
    """gamma -> { s -> h(u, mean over inner grid tuples of F(u, samples, gamma(s))) }.

    Realizes the averaged-functional stages of the second plot grammar with
    one or two inner integration variables; the mean is the grid trapezoid.
    """

    def __init__(self, h, F, n_inner=1):
        if n_inner not in (1, 2):
            raise ValueError("averaged stages support 1 or 2 inner variables")
        self.h = h
        self.F = F
        self.n_inner = n_inner

    def apply(self, manifold, u, pts, s):
        n = pts.shape[0]
        if self.n_inner == 1:
            vals = self.F(u, pts[:, None, :], pts[None, :, :])  # (inner, s, d)
            avg = vals.mean(axis=0)
        else:
            acc = np.zeros_like(pts)
            for i in range(n):  # blockwise second inner variable
                vals = self.F(u, pts[:, None, :], pts[i], pts[None, :, :])
                acc += vals.mean(axis=0)
            avg = acc / n
        out = self.h(u, avg)
        proj, bad = manifold.project(out, return_flag=True)
        if bad.any():
            raise TubeError("averaged stage left the projection tube")
        return proj

    def describe(self):
        return f"averaged(n_inner={self.n_inner})"


class RotateBy:
    """Grid rotation by the circle coordinate carried on a parameter axis."""

    def __init__(self, axis):
        self.axis = axis

    def apply(self, manifold, u, pts, s):
        n = pts.shape[0]
        steps = int(round(u[self.axis] * n))
        return np.roll(pts, -steps, axis=0)

    def describe(self):
        return f"rotate(axis {self.axis})"


class Retract:
    """The equivariant retraction at fixed r or at a parameter axis."""

    def __init__(self, r=None, axis=None):
        if (r is None) == (axis is None):
            raise ValueError("exactly one of r, axis must be given")
        self.r = r
        self.axis = axis

    def apply(self, manifold, u, pts, s):
        r = self.r if self.axis is None else u[self.axis]
        mean = _chord_mean(manifold, r, pts)
        proj, bad = manifold.project(mean, return_flag=True)
        if bad.any():
            raise TubeError("retraction mean left the projection tube")
        return proj

    def describe(self):
        target = f"r={self.r}" if self.axis is None else f"axis {self.axis}"
        return f"retract({target})"


# -- the plot ---------------------------------------------------------------------------


class PlotPiece:
    def __init__(self, predicate, stages, rotation=0.0):
        self.predicate = predicate
        self.stages = list(stages)
        self.rotation = rotation


class PlotSpec:
    """Parameter box, partitioned stage programs, and axis roles.

    Axis kinds: "u" ordinary deformation parameters, "rot" circle coordinate
    of an extended plot, "ret" retraction coordinate of an augmented plot.
    """

    def __init__(self, box, pieces, diffeology=1, axis_kinds=None):
        self.box = np.asarray(box, dtype=float).reshape(-1, 2)
        self.pieces = list(pieces)
        self.diffeology = diffeology
        self.axis_kinds = (list(axis_kinds) if axis_kinds is not None
                           else ["u"] * len(self.box))
        if len(self.axis_kinds) != len(self.box):
            raise ValueError("axis_kinds must match the box dimension")

    @property
    def m(self):
        return self.box.shape[0]

    def contains(self, u):
        u = np.asarray(u, dtype=float)
        return np.all(u >= self.box[:, 0] - 1e-12) and np.all(
            u <= self.box[:, 1] + 1e-12)

    def box_scale(self):
        return float(np.max(self.box[:, 1] - self.box[:, 0]))

    def find_piece(self, loop):
        hits = [p for p in self.pieces if p.predicate(loop)]
        if len(hits) != 1:
            raise PartitionError(
                f"loop matched {len(hits)} pieces; partition must be exhaustive "
                "and disjoint")
        return hits[0]

    def describe(self):
        lines = [f"plot: m={self.m} box={self.box.tolist()} "
                 f"diffeology={self.diffeology} axes={self.axis_kinds}"]
        for i, p in enumerate(self.pieces):
            lines.append(f"  piece {i}: when {p.predicate.describe()} "
                         f"rotation={p.rotation}")
            for st in p.stages:
                lines.append(f"    {st.describe()}")
        return "\n".join(lines)


def identity_plot(manifold, box=((0.0, 1.0),)):
    return PlotSpec(box, [PlotPiece(Everything(), [])])


def apply_plot(plot, u, loop):
    u = np.asarray(u, dtype=float).reshape(-1)
    if not plot.contains(u):
        raise ValueError(f"parameter {u} outside the plot box")
    piece = plot.find_piece(loop)
    out = rotate_loop(loop, piece.rotation) if piece.rotation else loop
    pts = out.points
    s = np.arange(loop.n) / loop.n
    for stage in piece.stages:
        pts = stage.apply(loop.manifold, u, pts, s)
    return DiscretizedLoop(loop.manifold, pts)


def extended_plot(plot):
    """Plot over U x S^1 realizing (u, t) -> psi_t(phi(u))."""
    pieces = [PlotPiece(p.predicate, p.stages + [RotateBy(plot.m)], p.rotation)
              for p in plot.pieces]
    box = np.vstack([plot.box, [0.0, 1.0]])
    return PlotSpec(box, pieces, diffeology=plot.diffeology,
                    axis_kinds=plot.axis_kinds + ["rot"])


def augmented_plot(plot):
    """Plot over U x [0,1] realizing (u, r) -> H(r, phi(u)); diffeology 2."""
    pieces = [PlotPiece(p.predicate, p.stages + [Retract(axis=plot.m)], p.rotation)
              for p in plot.pieces]
    box = np.vstack([plot.box, [0.0, 1.0]])
    return PlotSpec(box, pieces, diffeology=2,
                    axis_kinds=plot.axis_kinds + ["ret"])


def time_derivative_field(loop):
    """The circle-direction derivative realized by Richardson differencing."""
    return loop.time_derivative()


def plot_derivative(plot, u, axis, loop, mode="auto", step=None):
    """Tangent field along apply_plot(plot, u, loop) for one parameter axis.

    Rotation axes always use the loop-time differencing field.  Analytic
    forward mode covers single-stage exponential deformations and the
    retraction coordinate; everything else falls back to central differences
    in the parameter (step 1e-4 times the box scale).
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    kind = plot.axis_kinds[axis]
    if kind == "rot":
        return time_derivative_field(apply_plot(plot, u, loop))
    if mode == "auto":
        piece = plot.find_piece(loop)
        stages = piece.stages
        if kind == "ret" and stages and isinstance(stages[-1], Retract) \
                and stages[-1].axis == axis:
            prefix = PlotSpec(plot.box[:-1], [PlotPiece(piece.predicate,
                                                        stages[:-1],
                                                        piece.rotation)],
                              axis_kinds=plot.axis_kinds[:-1])
            inner = apply_plot(prefix, u[:-1], loop)
            return radial_field(loop.manifold, u[axis], inner)
        if len(stages) == 1 and isinstance(stages[0], ExpDeform):
            base = rotate_loop(loop, piece.rotation) if piece.rotation else loop
            s = np.arange(loop.n) / loop.n
            return stages[0].derivative(loop.manifold, u, base.points, s, axis)
        mode = "fd"
    if mode == "analytic":
        raise ValueError("analytic derivative not available for this plot")
    h = step if step is not None else FD_STEP_FRACTION * plot.box_scale()
    lo, hi = plot.box[axis]
    if u[axis] - h < lo or u[axis] + h > hi:
        raise BoundaryError("derivative stencil leaves the parameter box")
    up = u.copy()
    up[axis] += h
    dn = u.copy()
    dn[axis] -= h
    return (apply_plot(plot, up, loop).points
            - apply_plot(plot, dn, loop).points) / (2 * h)
