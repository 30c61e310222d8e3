"""Sampling and regularizing loops under the bridge-mixture measure.

The measure on free loops is the heat-kernel-weighted mixture of Brownian
bridges (basepoint density p_1(x,x) normalized, then the bridge law back to
the basepoint at time 1, generator Laplacian/2).  On the flat torus the
bridge is sampled exactly (winding number + Gaussian bridge); on the sphere
by heat-kernel-guided sequential Metropolis steps.

Loops are uniform grids of n points (n a power of two), closed by index
arithmetic; all samplers are pure functions of (seed, parameters).
"""

from __future__ import annotations

import io
import logging

import numpy as np

from .errors import ConvergenceError, CutLocusError, TubeError
from .geometry import manifold_by_name

log = logging.getLogger(__name__)

DEFAULT_GRID = 4096


class DiscretizedLoop:
    """A loop gamma as points gamma(j/n), j = 0..n-1, on the manifold."""

    def __init__(self, manifold, points):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != manifold.ambient_dim:
            raise ValueError("points must have shape (n, ambient_dim)")
        self.manifold = manifold
        self.points = points

    @property
    def n(self):
        return self.points.shape[0]

    def point(self, j):
        return self.points[j % self.n]

    def rotate(self, steps):
        """Exact rotation by an integer number of grid steps."""
        return type(self)(self.manifold, np.roll(self.points, -int(steps), axis=0))

    def time_derivative(self):
        """Five-point periodic differencing of the loop in loop time."""
        p = self.points
        n = self.n
        return (8.0 * (np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0))
                - (np.roll(p, -2, axis=0) - np.roll(p, 2, axis=0))) * (n / 12.0)

    def diameter(self, block=1024):
        """sup over grid pairs of the geodesic distance."""
        m = self.manifold
        worst = 0.0
        for start in range(0, self.n, block):
            chunk = self.points[start:start + block][:, None, :]
            d = m.geodesic_distance(chunk, self.points[None, :, :])
            worst = max(worst, float(d.max()))
        return worst

    def quadratic_variation(self):
        return float(np.sum(self.manifold.geodesic_distance(
            self.points, np.roll(self.points, -1, axis=0)) ** 2))


class RegularizedLoop(DiscretizedLoop):
    """A smoothed companion of a raw loop, resampled on the same grid."""

    def __init__(self, manifold, points, kind, N, base=None, kernel_exponent=None):
        super().__init__(manifold, points)
        self.kind = kind
        self.N = N
        self.base = base
        self.kernel_exponent = kernel_exponent

    def rotate(self, steps):
        r = RegularizedLoop(self.manifold, np.roll(self.points, -int(steps), axis=0),
                            self.kind, self.N, base=self.base,
                            kernel_exponent=self.kernel_exponent)
        return r


def as_loop(manifold, points):
    return DiscretizedLoop(manifold, points)


# -- basepoint and bridge samplers ---------------------------------------------------


def sample_basepoint(manifold, rng, oversample=4):
    """Rejection sampler for the density p_1(x,x)/normalization.

    Proposes uniformly and accepts against the heat-kernel diagonal; on both
    built-in manifolds the diagonal is constant by homogeneity so the
    acceptance ratio is one, but the sampler still exercises the oracle.
    """
    probe = manifold.random_point(rng, 64)
    ceiling = float(np.max(manifold.heat_kernel(1.0, probe, probe))) * (1 + 1e-9)
    while True:
        cand = manifold.random_point(rng, oversample)
        dens = manifold.heat_kernel(1.0, cand, cand)
        accept = rng.random(oversample) * ceiling < dens
        hits = np.nonzero(accept)[0]
        if hits.size:
            return cand[hits[0]]


def sample_bridge(manifold, x, n, rng, mh_iters=8, acceptance_floor=0.15,
                  max_winding=8):
    """Discrete Brownian bridge pinned at x at times 0 and 1."""
    if n < 8:
        raise ValueError("bridge grid must have n >= 8")
    if manifold.name == "t2":
        return _torus_bridge(manifold, x, n, rng, max_winding)
    if manifold.name == "s2":
        return _sphere_bridge(manifold, x, n, rng, mh_iters, acceptance_floor)
    raise KeyError(manifold.name)


def _torus_bridge(manifold, x, n, rng, max_winding):
    th0 = manifold.to_angles(x)
    ks = np.arange(-max_winding, max_winding + 1)
    weights = np.exp(-ks ** 2 / 2.0)
    weights /= weights.sum()
    winding = ks[rng.choice(ks.size, size=2, p=weights)]
    dw = rng.standard_normal((n, 2)) * np.sqrt(1.0 / n)
    w = np.concatenate([np.zeros((1, 2)), np.cumsum(dw, axis=0)])
    j = np.arange(n + 1)[:, None] / n
    bridge = w - j * w[-1]
    theta = th0 + bridge + j * winding
    return DiscretizedLoop(manifold, manifold.from_angles(theta[:n] % 1.0))


def _sphere_bridge(manifold, x, n, rng, mh_iters, acceptance_floor):
    """Guided sequential sampler with per-step Metropolis correction.

    Each step targets the exact one-step bridge density
    p_dt(y, y') p_{T-dt}(y', x) / p_T(y, x) (heat-kernel oracle), proposing
    from a tangent Gaussian at the geodesic interpolation toward the pin.
    """
    dt = 1.0 / n
    pts = np.empty((n, manifold.ambient_dim))
    pts[0] = x
    y = np.asarray(x, dtype=float)
    accepted = 0
    proposed = 0

    def log_target(cand, y, t_remaining):
        return (np.log(manifold.heat_kernel(dt, y, cand))
                + np.log(manifold.heat_kernel(t_remaining - dt, cand, x)))

    def propose(y, t_remaining, size):
        frac = dt / t_remaining
        mean = manifold.exp_map(y, frac * manifold.log_map(y, x))
        sigma = np.sqrt(dt * (1.0 - frac))
        fr = manifold.frame(mean)
        xi = sigma * rng.standard_normal((size, 2))
        cand = manifold.exp_map(np.broadcast_to(mean, (size, 3)),
                                xi[:, 0:1] * fr[0] + xi[:, 1:2] * fr[1])
        theta = np.linalg.norm(xi, axis=1)
        # tangent Gaussian density transported to the sphere area measure
        jac = np.where(theta < 1e-12, 1.0, theta / np.sin(np.minimum(theta, np.pi - 1e-9)))
        logq = -0.5 * np.sum(xi ** 2, axis=1) / sigma ** 2 \
            - np.log(2 * np.pi * sigma ** 2) + np.log(jac)
        return cand, logq

    for j in range(1, n):
        t_remaining = 1.0 - (j - 1) * dt
        cands, logqs = propose(y, t_remaining, mh_iters)
        logps = log_target(cands, y, t_remaining)
        cur = 0
        for it in range(1, mh_iters):
            logalpha = (logps[it] - logps[cur]) - (logqs[it] - logqs[cur])
            proposed += 1
            if np.log(rng.random()) < logalpha:
                cur = it
                accepted += 1
        y = cands[cur]
        pts[j] = y
    rate = accepted / max(proposed, 1)
    if rate < acceptance_floor:
        raise ConvergenceError(f"bridge acceptance {rate:.3f} below floor")
    return DiscretizedLoop(manifold, pts)


def sample_measure_loop(manifold, n, rng, **kw):
    """One draw from the bridge-mixture measure: basepoint, then bridge."""
    x = sample_basepoint(manifold, rng)
    return sample_bridge(manifold, x, n, rng, **kw)


# -- the circle action on loops ----------------------------------------------------------


def rotate_loop(loop, t):
    """psi_t on the grid.  Off-grid t is snapped to the nearest grid step."""
    n = loop.n
    steps = t * n
    snapped = int(round(steps))
    if abs(steps - snapped) > 1e-9:
        log.warning("rotation offset %g snapped to %d/%d", t, snapped % n, n)
    return loop.rotate(snapped)


# -- regularizations ------------------------------------------------------------------------


def polygonal(loop, N):
    """Broken-geodesic interpolation through the N knots gamma(j/N)."""
    n = loop.n
    if n % N != 0:
        raise ValueError(f"N = {N} must divide the grid size {n}")
    stride = n // N
    knots = loop.points[::stride]
    nxt = np.roll(knots, -1, axis=0)
    m = loop.manifold
    if np.any(m.geodesic_distance(knots, nxt) >= m.injectivity_radius - 1e-12):
        raise CutLocusError("consecutive knots beyond the injectivity radius")
    vs = m.log_map(knots, nxt)
    taus = np.arange(stride) / stride
    pts, _ = m.geodesic_eval(knots, vs, taus)      # (stride, N, d)
    pts = np.swapaxes(pts, 0, 1).reshape(n, -1)
    return RegularizedLoop(m, pts, "polygonal", N, base=loop)


def plateau_kernel(n, N, k=4):
    """Grid samples of the unit-mass plateau kernel with support [-1/N, 1/N].

    Flat on [-1/N + 1/N^k, 1/N - 1/N^k], smooth monotone shoulders, discrete
    mass exactly one so convolution preserves constant loops exactly.
    """
    if N < 2:
        raise ValueError("kernel needs N >= 2")
    times = np.arange(n) / n
    s = np.minimum(times, 1.0 - times)          # distance on the circle
    half = 1.0 / N
    flat = half - (1.0 / N) ** k
    vals = np.zeros(n)
    inside = s <= flat
    vals[inside] = 1.0
    shoulder = (~inside) & (s < half)
    u = (half - s[shoulder]) / (half - flat)
    vals[shoulder] = u * u * (3.0 - 2.0 * u)    # smoothstep down to 0
    return vals / (vals.sum() / n)              # density samples, mass exactly 1


def convolve(loop, N, k=4):
    """Smooth the loop by circular convolution in ambient space, then project."""
    n = loop.n
    if n < 4 * N:
        raise ValueError("need at least 4 grid steps per kernel half-width")
    g = plateau_kernel(n, N, k)
    fg = np.fft.rfft(g / n)                     # discrete weights summing to 1
    smoothed = np.empty_like(loop.points)
    for c in range(loop.points.shape[1]):
        smoothed[:, c] = np.fft.irfft(np.fft.rfft(loop.points[:, c]) * fg, n)
    m = loop.manifold
    proj, out = m.project(smoothed, return_flag=True)
    if out.any():
        raise TubeError("convolved loop left the projection tube; reduce N")
    return RegularizedLoop(m, proj, "convolution", N, base=loop, kernel_exponent=k)


# -- membership predicates -------------------------------------------------------------------


def in_omega_N(loop, N, r):
    """sup over |s-t| < 1/N of d(gamma(s), gamma(t)) stays below r."""
    m = loop.manifold
    window = max(1, loop.n // N)
    worst = 0.0
    for shift in range(1, window):
        d = m.geodesic_distance(loop.points, np.roll(loop.points, -shift, axis=0))
        worst = max(worst, float(d.max()))
        if worst >= r:
            return False
    return worst < r


def in_T_eps(loop, eps):
    """Small-diameter neighborhood of the constant loops."""
    return loop.diameter() < eps


def in_O_eps(loop, eps):
    """Complement of the closed eps-neighborhood of the constant loops."""
    return loop.diameter() > eps


# -- serialization -----------------------------------------------------------------------------


def save_loops(path_or_file, loops, seed=None):
    """Columnar text format: a header line, then n rows of ambient
    coordinates per loop."""
    loops = list(loops)
    m = loops[0].manifold
    n = loops[0].n
    header = f"# loopforms-loops manifold={m.name} n={n} count={len(loops)}"
    if seed is not None:
        header += f" seed={seed}"
    lines = [header]
    for lp in loops:
        if lp.n != n or lp.manifold.name != m.name:
            raise ValueError("all loops in one file share manifold and grid")
        for row in lp.points:
            lines.append(" ".join(f"{v:.17g}" for v in row))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(text)


def load_loops(path_or_file):
    if hasattr(path_or_file, "read"):
        text = path_or_file.read()
    else:
        with open(path_or_file) as fh:
            text = fh.read()
    lines = text.strip().split("\n")
    head = lines[0]
    if not head.startswith("# loopforms-loops"):
        raise ValueError("not a loop file")
    fields = dict(kv.split("=") for kv in head.split()[2:])
    m = manifold_by_name(fields["manifold"])
    n = int(fields["n"])
    count = int(fields["count"])
    data = np.loadtxt(io.StringIO("\n".join(lines[1:])))
    data = data.reshape(count, n, m.ambient_dim)
    return [DiscretizedLoop(m, block) for block in data]
