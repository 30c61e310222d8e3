"""Embedded circle-symmetric manifolds: the unit sphere and the flat square torus.

Both manifolds sit isometrically in Euclidean space (the sphere in R^3, the
torus in R^4 as a product of two circles of radius 1/(2pi), so that the
intrinsic coordinates live on the unit square).  Every operation is
vectorized: points are arrays of shape (..., ambient_dim) and all maps
broadcast over leading axes.

Conventions fixed here and relied on everywhere else:
  * the circle parameter has period 1; the sphere action rotates by angle
    2*pi*t about the polar axis, the torus action translates the first
    angular coordinate by t;
  * the heat kernel is the transition density of the diffusion generated by
    (1/2) Laplace-Beltrami, so p_t(x, .) integrates to 1;
  * off-manifold extension of metric and maps goes through the nearest-point
    projection (radial on the sphere, per-circle radial on the torus).
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import legval

from .errors import CutLocusError, PrecisionError

TWO_PI = 2.0 * np.pi


class EmbeddedManifold:
    """Geometry oracle bundle for a compact surface with an isometric circle action.

    Subclasses provide the maps; this base class provides the pieces that are
    manifold-independent (tangential metric, validation helpers).
    """

    name: str
    intrinsic_dim: int
    ambient_dim: int
    injectivity_radius: float
    tube_radius: float
    heat_time_floor = 1e-3

    # -- projection and validation -------------------------------------------------

    def project(self, y, return_flag=False):
        raise NotImplementedError

    def in_tube(self, y):
        """True where y lies within tube_radius of the surface."""
        p = self.project(np.asarray(y, dtype=float))
        dist = np.linalg.norm(np.asarray(y, dtype=float) - p, axis=-1)
        return dist < self.tube_radius

    def on_manifold(self, x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.project(x), axis=-1) <= tol

    def tangent_project(self, x, v):
        """Orthogonal projection of ambient vectors v onto the tangent plane at x."""
        raise NotImplementedError

    def is_tangent(self, x, v, tol=1e-10):
        v = np.asarray(v, dtype=float)
        return np.linalg.norm(v - self.tangent_project(x, v), axis=-1) <= tol

    # -- metric ---------------------------------------------------------------------

    def metric(self, x, u, v):
        """Riemannian inner product; ambient inputs are projected tangentially first.

        The embedding is isometric, so on tangent vectors this is the ambient
        dot product; off the tangent plane the value is the pullback through
        the projection (tangential parts paired, normal parts discarded).
        """
        pu = self.tangent_project(x, u)
        pv = self.tangent_project(x, v)
        return np.sum(pu * pv, axis=-1)

    # -- geodesics -------------------------------------------------------------------

    def exp_map(self, x, v):
        raise NotImplementedError

    def log_map(self, x, y):
        raise NotImplementedError

    def geodesic_distance(self, x, y):
        raise NotImplementedError

    def geodesic_eval(self, x, v, taus):
        """Points and velocities of tau -> exp_x(tau * v) at the given taus.

        Returns (points, velocities) with a leading tau axis appended to the
        broadcast shape of (x, v).  Velocities are d/dtau, so they carry the
        full segment scale |v|.
        """
        raise NotImplementedError

    def dexp(self, x, v, w):
        """Directional derivative of v -> exp_x(v) at v along w (x held fixed)."""
        raise NotImplementedError

    def dproject(self, y, w):
        """Directional derivative of the projection at y along w."""
        raise NotImplementedError

    # -- circle action ----------------------------------------------------------------

    def act_matrix(self, t):
        """Ambient linear map realizing the action at circle parameter t."""
        raise NotImplementedError

    def act(self, t, x):
        x = np.asarray(x, dtype=float)
        return x @ self.act_matrix(t).T

    def killing_field(self, x):
        """Generator of the action: d/dt act(t, x) at t = 0."""
        raise NotImplementedError

    # -- heat kernel -------------------------------------------------------------------

    def heat_kernel(self, t, x, y):
        raise NotImplementedError

    def _check_heat_time(self, t):
        if t <= 0:
            raise PrecisionError(f"heat kernel needs t > 0, got {t}")
        if t < self.heat_time_floor:
            raise PrecisionError(
                f"heat kernel not certified below t = {self.heat_time_floor}, got {t}")

    # -- sampling and quadrature ----------------------------------------------------

    def random_point(self, rng, size=None):
        raise NotImplementedError

    def frame(self, x):
        """Orthonormal tangent basis at x, shape (..., intrinsic_dim, ambient_dim)."""
        raise NotImplementedError

    def quadrature(self, resolution):
        """Nodes for integrating 2-forms: (points, coordinate frames, weights).

        The frames are the coordinate tangent pairs of a positively oriented
        parametrization and the weights absorb the parameter Jacobian, so
        integral(omega) = sum_q w_q * omega(x_q; frame_q).
        """
        raise NotImplementedError

    def area_quadrature(self, resolution=64):
        """Nodes and weights for scalar integrals against the area measure."""
        pts, frames, w = self.quadrature(resolution)
        g11 = np.sum(frames[:, 0] * frames[:, 0], axis=-1)
        g12 = np.sum(frames[:, 0] * frames[:, 1], axis=-1)
        g22 = np.sum(frames[:, 1] * frames[:, 1], axis=-1)
        return pts, w * np.sqrt(g11 * g22 - g12 ** 2)


class Sphere(EmbeddedManifold):
    """Unit sphere in R^3 with rotation about the polar axis."""

    name = "s2"
    intrinsic_dim = 2
    ambient_dim = 3
    injectivity_radius = np.pi
    tube_radius = 0.5

    def project(self, y, return_flag=False):
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1, keepdims=True)
        # radial projection, clamped at the origin where the ray is undefined
        safe = np.maximum(r, 1e-12)
        p = y / safe
        if return_flag:
            out_of_tube = np.abs(r[..., 0] - 1.0) >= self.tube_radius
            return p, out_of_tube
        return p

    def tangent_project(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return v - np.sum(x * v, axis=-1, keepdims=True) * x

    def exp_map(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        small = nv < 1e-14
        nv_safe = np.where(small, 1.0, nv)
        vhat = np.where(small, 0.0, v / nv_safe)
        return np.cos(nv) * x + np.sin(nv) * vhat

    def log_map(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        c = np.clip(np.sum(x * y, axis=-1, keepdims=True), -1.0, 1.0)
        theta = np.arccos(c)
        if np.any(theta >= self.injectivity_radius - 1e-12):
            raise CutLocusError("antipodal points have no unique geodesic")
        w = y - c * x
        nw = np.linalg.norm(w, axis=-1, keepdims=True)
        small = nw < 1e-14
        scale = np.where(small, 1.0, theta / np.where(small, 1.0, nw))
        return scale * w

    def geodesic_distance(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.arccos(np.clip(np.sum(x * y, axis=-1), -1.0, 1.0))

    def geodesic_eval(self, x, v, taus):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        taus = np.asarray(taus, dtype=float)
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        small = nv < 1e-14
        nv_safe = np.where(small, 1.0, nv)
        vhat = np.where(small, 0.0, v / nv_safe)
        ang = taus.reshape((-1,) + (1,) * nv.ndim) * nv[None]   # (T, ..., 1)
        pts = np.cos(ang) * x[None] + np.sin(ang) * vhat[None]
        vel = nv[None] * (-np.sin(ang) * x[None] + np.cos(ang) * vhat[None])
        return pts, vel

    def dexp(self, x, v, w):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        a = np.linalg.norm(v, axis=-1, keepdims=True)
        small = a[..., 0] < 1e-12
        a_safe = np.where(a < 1e-12, 1.0, a)
        vhat = v / a_safe
        da = np.sum(vhat * w, axis=-1, keepdims=True)
        wperp = w - da * vhat
        out = (-np.sin(a) * da * x + np.cos(a) * da * vhat
               + np.sin(a) / a_safe * wperp)
        return np.where(small[..., None], w, out)

    def dproject(self, y, w):
        y = np.asarray(y, dtype=float)
        w = np.asarray(w, dtype=float)
        r = np.maximum(np.linalg.norm(y, axis=-1, keepdims=True), 1e-12)
        yhat = y / r
        return (w - np.sum(yhat * w, axis=-1, keepdims=True) * yhat) / r

    def act_matrix(self, t):
        a = TWO_PI * t
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def killing_field(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        out[..., 0] = -TWO_PI * x[..., 1]
        out[..., 1] = TWO_PI * x[..., 0]
        out[..., 2] = 0.0
        return out

    def heat_kernel(self, t, x, y):
        self._check_heat_time(t)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        c = np.clip(np.sum(x * y, axis=-1), -1.0, 1.0)
        L = self._spectral_order(t)
        ell = np.arange(L + 1, dtype=float)
        coeffs = (2 * ell + 1) * np.exp(-ell * (ell + 1) * t / 2.0) / (4 * np.pi)
        return legval(c, coeffs)

    def _spectral_order(self, t, tail=1e-12):
        # remainder past L is bounded by (2/t) exp(-L(L+1)t/2) since |P_l| <= 1
        L = 1
        bound = 4 * np.pi * tail
        while (2.0 / t) * np.exp(-L * (L + 1) * t / 2.0) >= bound:
            L += max(1, L // 8)
        return L

    def random_point(self, rng, size=None):
        shape = (3,) if size is None else (size, 3)
        g = rng.standard_normal(shape)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def frame(self, x):
        x = np.asarray(x, dtype=float)
        ref = np.zeros_like(x)
        polar = np.abs(x[..., 2]) > 0.9
        ref[..., 2] = np.where(polar, 0.0, 1.0)
        ref[..., 0] = np.where(polar, 1.0, 0.0)
        u = ref - np.sum(ref * x, axis=-1, keepdims=True) * x
        u = u / np.linalg.norm(u, axis=-1, keepdims=True)
        w = np.cross(x, u)
        return np.stack([u, w], axis=-2)

    def quadrature(self, resolution=64):
        nodes, wu = np.polynomial.legendre.leggauss(resolution)
        nphi = 2 * resolution
        phi = np.arange(nphi) * (TWO_PI / nphi)
        wphi = TWO_PI / nphi
        u, p = np.meshgrid(nodes, phi, indexing="ij")
        st = np.sqrt(1.0 - u ** 2)
        pts = np.stack([st * np.cos(p), st * np.sin(p), u], axis=-1).reshape(-1, 3)
        # coordinate frame (d/dtheta, d/dphi) with u = cos(theta)
        dth = np.stack([u * np.cos(p), u * np.sin(p), -st], axis=-1).reshape(-1, 3)
        dph = np.stack([-st * np.sin(p), st * np.cos(p), np.zeros_like(u)],
                       axis=-1).reshape(-1, 3)
        frames = np.stack([dth, dph], axis=-2)
        # dtheta dphi = du dphi / sin(theta)
        w = (wu[:, None] * wphi / np.maximum(st.reshape(resolution, nphi), 1e-300)
             ).reshape(-1)
        return pts, frames, w


class FlatTorus(EmbeddedManifold):
    """Flat square torus: product of two circles of radius 1/(2pi) in R^4.

    Intrinsic coordinates are angles theta in [0, 1)^2 and the induced metric
    is the flat unit-square metric, so geodesics are straight lines mod 1.
    """

    name = "t2"
    intrinsic_dim = 2
    ambient_dim = 4
    injectivity_radius = 0.5
    radius = 1.0 / TWO_PI
    tube_radius = 0.1

    # -- angle chart -----------------------------------------------------------------

    def to_angles(self, x):
        x = np.asarray(x, dtype=float)
        th1 = np.arctan2(x[..., 1], x[..., 0]) / TWO_PI
        th2 = np.arctan2(x[..., 3], x[..., 2]) / TWO_PI
        return np.stack([th1 % 1.0, th2 % 1.0], axis=-1)

    def from_angles(self, th):
        th = np.asarray(th, dtype=float)
        a1 = TWO_PI * th[..., 0]
        a2 = TWO_PI * th[..., 1]
        return self.radius * np.stack(
            [np.cos(a1), np.sin(a1), np.cos(a2), np.sin(a2)], axis=-1)

    @staticmethod
    def wrap(delta):
        return (delta + 0.5) % 1.0 - 0.5

    def coordinate_frame(self, x):
        """Unit vectors along the two angular directions; also the frame()."""
        x = np.asarray(x, dtype=float)
        e1 = np.zeros_like(x)
        e2 = np.zeros_like(x)
        e1[..., 0] = -x[..., 1] / self.radius
        e1[..., 1] = x[..., 0] / self.radius
        e2[..., 2] = -x[..., 3] / self.radius
        e2[..., 3] = x[..., 2] / self.radius
        return e1, e2

    # -- manifold interface ------------------------------------------------------------

    def project(self, y, return_flag=False):
        y = np.asarray(y, dtype=float)
        p = np.empty_like(y)
        flags = np.zeros(y.shape[:-1], dtype=bool)
        for k in (0, 2):
            pair = y[..., k:k + 2]
            r = np.linalg.norm(pair, axis=-1, keepdims=True)
            safe = np.maximum(r, 1e-12)
            p[..., k:k + 2] = self.radius * pair / safe
            flags |= np.abs(r[..., 0] - self.radius) >= self.tube_radius
        if return_flag:
            return p, flags
        return p

    def tangent_project(self, x, v):
        e1, e2 = self.coordinate_frame(x)
        v = np.asarray(v, dtype=float)
        a1 = np.sum(e1 * v, axis=-1, keepdims=True)
        a2 = np.sum(e2 * v, axis=-1, keepdims=True)
        return a1 * e1 + a2 * e2

    def exp_map(self, x, v):
        e1, e2 = self.coordinate_frame(x)
        v = np.asarray(v, dtype=float)
        dth = np.stack([np.sum(e1 * v, axis=-1), np.sum(e2 * v, axis=-1)], axis=-1)
        return self.from_angles(self.to_angles(x) + dth)

    def log_map(self, x, y):
        dth = self.wrap(self.to_angles(y) - self.to_angles(x))
        dist = np.linalg.norm(dth, axis=-1)
        if np.any(dist >= self.injectivity_radius - 1e-12):
            raise CutLocusError("points beyond the torus injectivity radius")
        e1, e2 = self.coordinate_frame(x)
        return dth[..., 0:1] * e1 + dth[..., 1:2] * e2

    def geodesic_distance(self, x, y):
        dth = self.wrap(self.to_angles(y) - self.to_angles(x))
        return np.linalg.norm(dth, axis=-1)

    def geodesic_eval(self, x, v, taus):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        taus = np.asarray(taus, dtype=float)
        e1, e2 = self.coordinate_frame(x)
        dth = np.stack([np.sum(e1 * v, axis=-1), np.sum(e2 * v, axis=-1)], axis=-1)
        th = self.to_angles(x)[None] + taus.reshape((-1,) + (1,) * dth.ndim) * dth[None]
        pts = self.from_angles(th)
        f1, f2 = self.coordinate_frame(pts)
        vel = dth[None, ..., 0:1] * f1 + dth[None, ..., 1:2] * f2
        return pts, vel

    def dexp(self, x, v, w):
        # exp is angle-additive; transport the frame components to the target
        x = np.asarray(x, dtype=float)
        e1, e2 = self.coordinate_frame(x)
        y = self.exp_map(x, v)
        f1, f2 = self.coordinate_frame(y)
        w = np.asarray(w, dtype=float)
        return (np.sum(e1 * w, axis=-1, keepdims=True) * f1
                + np.sum(e2 * w, axis=-1, keepdims=True) * f2)

    def dproject(self, y, w):
        y = np.asarray(y, dtype=float)
        w = np.asarray(w, dtype=float)
        out = np.empty_like(y)
        for k in (0, 2):
            q = y[..., k:k + 2]
            r = np.maximum(np.linalg.norm(q, axis=-1, keepdims=True), 1e-12)
            qhat = q / r
            wp = w[..., k:k + 2]
            out[..., k:k + 2] = self.radius * (
                wp - np.sum(qhat * wp, axis=-1, keepdims=True) * qhat) / r
        return out

    def act_matrix(self, t):
        a = TWO_PI * t
        c, s = np.cos(a), np.sin(a)
        m = np.eye(4)
        m[0, 0] = c
        m[0, 1] = -s
        m[1, 0] = s
        m[1, 1] = c
        return m

    def killing_field(self, x):
        e1, _ = self.coordinate_frame(x)
        return e1

    def heat_kernel(self, t, x, y, windings=8):
        self._check_heat_time(t)
        dth = self.wrap(self.to_angles(y) - self.to_angles(x))
        k = np.arange(-windings, windings + 1, dtype=float)
        out = np.ones(dth.shape[:-1])
        for i in (0, 1):
            z = dth[..., i, None] + k
            out = out * np.sum(
                np.exp(-z ** 2 / (2.0 * t)), axis=-1) / np.sqrt(TWO_PI * t)
        return out

    def random_point(self, rng, size=None):
        shape = (2,) if size is None else (size, 2)
        return self.from_angles(rng.random(shape))

    def frame(self, x):
        e1, e2 = self.coordinate_frame(x)
        return np.stack([e1, e2], axis=-2)

    def quadrature(self, resolution=64):
        g = (np.arange(resolution) + 0.5) / resolution
        t1, t2 = np.meshgrid(g, g, indexing="ij")
        pts = self.from_angles(np.stack([t1, t2], axis=-1).reshape(-1, 2))
        e1, e2 = self.coordinate_frame(pts)
        frames = np.stack([e1, e2], axis=-2)
        w = np.full(pts.shape[0], 1.0 / resolution ** 2)
        return pts, frames, w


_REGISTRY = {"s2": Sphere, "t2": FlatTorus}


def manifold_by_name(name):
    try:
        return _REGISTRY[name.lower()]()
    except KeyError:
        raise KeyError(f"unknown manifold {name!r}; expected one of {sorted(_REGISTRY)}")
