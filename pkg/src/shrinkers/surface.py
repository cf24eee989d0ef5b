"""Symmetric hypersurfaces in R^{n+1} and exact shrinkers.

A surface is stored through its profile curve gamma(s) = (u(s), v(s)) in the
(u, v) half plane; the hypersurface itself is the orbit

    { (u * w1, v * w2) : w1 in S^p, w2 in S^q }  subset  R^{p+1} x R^{q+1}

so that n = p + q + 1.  Planar curves are the case p = q = 0.  Each profile
sample is one *cell*; its area weight is the measure of the whole orbit swept
by the cell.

Sign conventions: H = div n is the trace of the second fundamental form, so a
round sphere with outward normal has positive principal curvatures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

AXIS_U = "axis-u"  # end meets {u = 0}: pole of S^p, or mirror when p = 0
AXIS_V = "axis-v"
WALL_U = "wall-u"  # mirror plane {u = c}; stencil condition only
WALL_V = "wall-v"
FREE = "free"

SPACING_TOL = 0.10


class SurfaceError(ValueError):
    """Raised when a profile or surface violates a construction invariant."""

    def __init__(self, message, cells=None):
        super().__init__(message)
        self.cells = [] if cells is None else list(cells)


def sphere_volume(m):
    """Volume of the unit sphere S^m (|S^0| = 2)."""
    return 2.0 * math.pi ** ((m + 1) / 2) / math.gamma((m + 1) / 2)


@dataclass(frozen=True)
class RotationSignature:
    p: int
    q: int

    def __post_init__(self):
        if self.p < 0 or self.q < 0:
            raise SurfaceError(f"signature must be nonnegative, got ({self.p}, {self.q})")

    @property
    def n(self):
        return self.p + self.q + 1

    @property
    def ambient_dim(self):
        return self.p + self.q + 2

    @property
    def multiplicities(self):
        """Multiplicity of (profile, S^p, S^q) principal curvatures."""
        return np.array([1, self.p, self.q])


@dataclass(frozen=True)
class End:
    """Boundary condition at one end of an open profile."""

    kind: str
    position: float = 0.0

    def __post_init__(self):
        if self.kind not in (AXIS_U, AXIS_V, WALL_U, WALL_V, FREE):
            raise SurfaceError(f"unknown end kind {self.kind!r}")

    @property
    def mirrored(self):
        return self.kind != FREE

    def reflect(self, pt):
        u, v = pt
        if self.kind == AXIS_U:
            return np.array([-u, v])
        if self.kind == AXIS_V:
            return np.array([u, -v])
        if self.kind == WALL_U:
            return np.array([2 * self.position - u, v])
        if self.kind == WALL_V:
            return np.array([u, 2 * self.position - v])
        raise SurfaceError("free ends have no mirror")


@dataclass(frozen=True)
class ProfileCurve:
    """Ordered profile samples, roughly equally spaced in arclength.

    ``points`` has shape (N, 2) with columns (u, v).  For open profiles the
    samples are cell centres: an end lying on an axis sits half a spacing away
    from it.
    """

    points: np.ndarray
    closed: bool = False
    ends: tuple = (End(FREE), End(FREE))

    @property
    def spacing(self):
        return float(np.mean(self.chords()))

    def chords(self):
        P = np.asarray(self.points, dtype=float)
        c = np.linalg.norm(np.diff(P, axis=0), axis=1)
        if self.closed:
            c = np.append(c, np.linalg.norm(P[0] - P[-1]))
        return c


@dataclass(frozen=True)
class GeneralizedCylinderSpec:
    """S^k(sqrt(2k)) x R^{n-k}, multiplicity one."""

    k: int
    n: int

    def __post_init__(self):
        if self.n < 1 or self.k < 0:
            raise SurfaceError(f"invalid cylinder ({self.k}, {self.n})")
        if self.k > self.n:
            raise SurfaceError(f"k = {self.k} exceeds n = {self.n}")

    @property
    def radius(self):
        return math.sqrt(2 * self.k)

    @property
    def mean_curvature(self):
        return math.sqrt(self.k / 2)

    @property
    def signature(self):
        if self.k == 0 or self.k == self.n:
            return RotationSignature(self.n - 1, 0)
        return RotationSignature(self.k, self.n - self.k - 1)

    @property
    def gaussian_area(self):
        """F(S^k x R^{n-k}) = (k / (2 pi e))^{k/2} |S^k|, equal to 1 for k = 0."""
        if self.k == 0:
            return 1.0
        k = self.k
        return (k / (2 * math.pi * math.e)) ** (k / 2) * sphere_volume(k)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteHypersurface:
    """Quadrature-cell view of a symmetric hypersurface.

    Per-cell arrays have length N (number of profile samples):

    ``profile``     (N, 2) profile coordinates (u, v)
    ``tangent``     (N, 2) unit profile tangent
    ``normal``      (N, 2) unit normal in the profile plane (nu_u, nu_v)
    ``kappa``       (N, 3) principal curvatures (profile, S^p block, S^q block)
    ``ds``          (N,)   cell arclength
    ``base_weight`` (N,)   orbit measure of the full cell
    ``fraction``    (N,)   portion of the cell kept by ball restrictions
    ``boundary``    (N,)   cells next to a free end
    """

    signature: RotationSignature
    profile: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    kappa: np.ndarray
    ds: np.ndarray
    base_weight: np.ndarray
    boundary: np.ndarray
    closed: bool
    ends: tuple
    provenance: str
    offset: np.ndarray = None
    fraction: np.ndarray = None
    interval: np.ndarray = None
    radius_edges: np.ndarray = None
    truncation: Optional[tuple] = None  # (block, dim, radius) for flat factors
    reflected: np.ndarray = None  # (N, 2) bool, orbit doubles an S^0 factor

    def __post_init__(self):
        N = len(self.profile)
        for name in ("profile", "tangent", "normal", "kappa", "ds", "base_weight"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "boundary", np.asarray(self.boundary, dtype=bool))
        if self.offset is None:
            object.__setattr__(self, "offset", np.zeros(self.signature.ambient_dim))
        object.__setattr__(self, "offset", _frozen(self.offset))
        if self.fraction is None:
            object.__setattr__(self, "fraction", np.ones(N))
        if self.interval is None:
            object.__setattr__(self, "interval", np.tile([0.0, 1.0], (N, 1)))
        if self.reflected is None:
            object.__setattr__(self, "reflected", _reflection_flags(self.profile, self.signature, self.closed))
        nrm = np.linalg.norm(self.normal, axis=1)
        if N and np.max(np.abs(nrm - 1.0)) > 1e-12:
            raise SurfaceError("normals must be unit vectors")
        if np.any(self.base_weight <= 0):
            bad = np.flatnonzero(self.base_weight <= 0)
            raise SurfaceError("area weights must be positive", bad)

    # -- basic geometry -------------------------------------------------

    def __len__(self):
        return int(np.count_nonzero(self.fraction > 0))

    @property
    def n(self):
        return self.signature.n

    @property
    def size(self):
        """Number of stored profile samples, kept or not."""
        return len(self.profile)

    @property
    def is_empty(self):
        return not np.any(self.fraction > 0)

    @property
    def active(self):
        return self.fraction > 0

    @property
    def area_weight(self):
        return self.base_weight * self.fraction

    @property
    def u(self):
        return self.profile[:, 0]

    @property
    def v(self):
        return self.profile[:, 1]

    @property
    def mean_curvature(self):
        return self.kappa @ self.signature.multiplicities

    H = mean_curvature

    @property
    def norm_A_squared(self):
        return (self.kappa ** 2) @ self.signature.multiplicities

    @property
    def principal_curvatures(self):
        """Expanded (N, n) array: profile, then p copies, then q copies."""
        p, q = self.signature.p, self.signature.q
        k = self.kappa
        cols = [k[:, :1]] + [k[:, 1:2]] * p + [k[:, 2:3]] * q
        return np.hstack(cols)

    @property
    def support(self):
        """<x, n> on each cell (untranslated surfaces)."""
        return np.sum(self.profile * self.normal, axis=1)

    @property
    def positions(self):
        """Representative ambient points (first basis vector of each sphere)."""
        p = self.signature.p
        X = np.zeros((self.size, self.signature.ambient_dim))
        X[:, 0] = self.u
        X[:, p + 1] = self.v
        return X + self.offset

    @property
    def normals(self):
        p = self.signature.p
        Nv = np.zeros((self.size, self.signature.ambient_dim))
        Nv[:, 0] = self.normal[:, 0]
        Nv[:, p + 1] = self.normal[:, 1]
        return Nv

    @property
    def radii(self):
        """|x| on each cell (constant along orbits of untranslated surfaces)."""
        return np.linalg.norm(self.profile, axis=1)

    @property
    def spacing(self):
        return float(np.median(self.ds))

    @property
    def translated_flag(self):
        return bool(np.any(self.offset != 0))

    def require_centred(self, what):
        if self.translated_flag:
            raise SurfaceError(f"{what} requires an untranslated surface")

    # -- rigid motions and dilations ---------------------------------------

    def translated(self, c):
        c = np.asarray(c, dtype=float)
        return replace(self, offset=self.offset + c, provenance=self.provenance)

    def scaled(self, s):
        """The dilation s * Sigma (about the origin)."""
        if s <= 0:
            raise SurfaceError("dilation factor must be positive")
        ends = tuple(End(e.kind, e.position * s) for e in self.ends)
        trunc = None
        if self.truncation is not None:
            block, dim, R = self.truncation
            trunc = (block, dim, R * s)
        edges = None if self.radius_edges is None else self.radius_edges * s
        return replace(
            self,
            profile=self.profile * s,
            kappa=self.kappa / s,
            ds=self.ds * s,
            base_weight=self.base_weight * s ** self.n,
            offset=self.offset * s,
            ends=ends,
            truncation=trunc,
            radius_edges=edges,
        )

    def with_fraction(self, fraction, interval):
        return replace(self, fraction=np.asarray(fraction, float), interval=np.asarray(interval, float))

    def to_profile(self):
        return ProfileCurve(np.array(self.profile), closed=self.closed, ends=self.ends)


def _reflection_flags(P, sig, closed):
    """Which S^0 factors double a cell's orbit (open profiles, nonzero coordinate)."""
    P = np.asarray(P, dtype=float)
    flags = np.zeros((len(P), 2), dtype=bool)
    if closed:
        return flags
    if sig.p == 0:
        flags[:, 0] = P[:, 0] != 0.0
    if sig.q == 0:
        flags[:, 1] = P[:, 1] != 0.0
    return flags


def orbit_measure(P, sig, reflected):
    """|S^p||S^q| |u|^p |v|^q with S^0 counted once or twice per cell."""
    P = np.asarray(P, dtype=float)
    fu = sphere_volume(sig.p) if sig.p > 0 else np.where(reflected[:, 0], 2.0, 1.0)
    fv = sphere_volume(sig.q) if sig.q > 0 else np.where(reflected[:, 1], 2.0, 1.0)
    return fu * fv * np.abs(P[:, 0]) ** sig.p * np.abs(P[:, 1]) ** sig.q


# -- profile geometry --------------------------------------------------------


def _ghosts(P, closed, ends):
    """Profile samples padded with one ghost point at each end."""
    if closed:
        return np.vstack([P[-1], P, P[0]])
    out = []
    for e, i0, i1, i2 in ((ends[0], 0, 1, 2), (ends[1], -1, -2, -3)):
        if e.mirrored:
            out.append(e.reflect(P[i0]))
        else:
            out.append(3 * P[i0] - 3 * P[i1] + P[i2])
    return np.vstack([out[0], P, out[1]])


def _integrated_rotational(kappa0, coord, from_end):
    """Rotational curvature from d(coord * k_rot) = kappa0 d(coord), started at a pole.

    Integrating the Codazzi relation keeps the profile and rotational
    curvatures consistent near the axis, where nu / coord is 0/0.
    """
    k = kappa0[::-1] if from_end else kappa0
    c = coord[::-1] if from_end else coord
    Q = np.empty_like(k)
    Q[0] = k[0] * c[0]
    Q[1:] = Q[0] + np.cumsum(0.5 * (k[1:] + k[:-1]) * np.diff(c))
    out = Q / c
    return out[::-1] if from_end else out


def profile_geometry(P, sig, closed, ends, curvature="fd"):
    """Tangents, oriented normals, curvatures and cell arclengths by finite differences.

    ``curvature="circle"`` takes the profile curvature from the circle through
    each three consecutive samples: still second order, and exact on circles.
    """
    P = np.asarray(P, dtype=float)
    N = len(P)
    if N < 3:
        raise SurfaceError("a profile needs at least 3 samples")
    E = _ghosts(P, closed, ends)
    d1 = 0.5 * (E[2:] - E[:-2])
    d2 = E[2:] - 2 * E[1:-1] + E[:-2]
    speed = np.linalg.norm(d1, axis=1)
    T = d1 / speed[:, None]
    nu = np.column_stack([T[:, 1], -T[:, 0]])
    chords = np.linalg.norm(np.diff(E, axis=0), axis=1)
    ds = 0.5 * (chords[:-1] + chords[1:])
    reflected = _reflection_flags(P, sig, closed)
    weight0 = orbit_measure(P, sig, reflected) * ds
    if np.sum(weight0 * np.sum(P * nu, axis=1)) < 0:
        nu = -nu
    if curvature == "circle":
        a, b = E[1:-1] - E[:-2], E[2:] - E[1:-1]
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        denom = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1) * np.linalg.norm(a + b, axis=1)
        side = nu[:, 0] * T[:, 1] - nu[:, 1] * T[:, 0]  # +1 for the right-hand normal
        kappa0 = 2 * cross / denom * side
    elif curvature == "fd":
        kappa0 = -np.sum(d2 * nu, axis=1) / speed ** 2
    else:
        raise ValueError(f"unknown curvature scheme {curvature!r}")
    kappa = np.zeros((N, 3))
    kappa[:, 0] = kappa0
    # cell length along the arc rather than the chord: c (1 + kappa^2 c^2 / 24)
    kp = np.concatenate([[kappa0[-1]], kappa0, [kappa0[0]]]) if closed else np.concatenate([[kappa0[0]], kappa0, [kappa0[-1]]])
    arcs = chords * (1 + (0.5 * (kp[1:] + kp[:-1]) * chords) ** 2 / 24)
    ds = 0.5 * (arcs[:-1] + arcs[1:])
    for col, m, axis_kind in ((1, sig.p, AXIS_U), (2, sig.q, AXIS_V)):
        if m == 0:
            continue
        coord = P[:, col - 1]
        poles = [i for i, e in enumerate(ends) if not closed and e.kind == axis_kind]
        if len(poles) == 2:
            raise SurfaceError(f"both ends are poles of the S^{m} factor; mirror one end instead")
        if poles:
            kappa[:, col] = _integrated_rotational(kappa0, coord, from_end=poles[0] == 1)
        else:
            kappa[:, col] = nu[:, col - 1] / coord
    boundary = np.zeros(N, dtype=bool)
    if not closed:
        boundary[0] = not ends[0].mirrored
        boundary[-1] = not ends[1].mirrored
    return dict(tangent=T, normal=nu, kappa=kappa, ds=ds, chords=chords, boundary=boundary,
                reflected=reflected, ghosts=E)


def cell_weights(P, ds, sig, closed, ends, reflected):
    """Orbit measure of each cell, with an endpoint correction at S^1 poles.

    Near a circle pole the integrand is s * G(s^2) in the arclength s from
    the axis, and the midpoint rule is off by  h^2/24 G(0) - 7 h^4/960 G'(0)
    (Euler-Maclaurin).  Both terms are extrapolated from the first three cells.
    """
    P = np.asarray(P, dtype=float)
    meas = orbit_measure(P, sig, reflected)
    w = meas * ds
    if closed or len(P) < 3:
        return w
    for which, e in enumerate(ends):
        col = {AXIS_U: 0, AXIS_V: 1}.get(e.kind)
        if col is None or (sig.p, sig.q)[col] != 1:
            continue
        idx = [0, 1, 2] if which == 0 else [-1, -2, -3]
        h = 2 * abs(P[idx[0], col])
        s = (np.arange(3) + 0.5) * h
        w[idx] += (-h * h / 24 * _EXTRAP_VALUE + 7 * h ** 4 / 960 * _EXTRAP_SLOPE / h ** 2) * meas[idx] / s
    return w


def _extrapolation_weights():
    # G(0) and G'(0) from samples at x = s^2 = (1, 9, 25) h^2/4, scaled to h = 1
    x = np.array([1.0, 9.0, 25.0]) / 4
    V = np.vander(x, 3, increasing=True)
    inv = np.linalg.inv(V)  # rows give polynomial coefficients c0, c1, c2
    return inv[0], inv[1]


_EXTRAP_VALUE, _EXTRAP_SLOPE = _extrapolation_weights()


def _radius_edges(E):
    """|x| at the two arclength edges of every cell (chord midpoints)."""
    mids = 0.5 * (E[1:] + E[:-1])
    r = np.linalg.norm(mids, axis=1)
    return np.column_stack([r[:-1], r[1:]])


def _check_spacing(P, closed, ends):
    E = _ghosts(P, closed, ends)
    c = np.linalg.norm(np.diff(E, axis=0), axis=1)
    if not closed:
        # chords to extrapolated ghosts carry no information
        keep = np.ones(len(c), dtype=bool)
        keep[0] = ends[0].mirrored
        keep[-1] = ends[1].mirrored
        c = c[keep]
    h = np.mean(c)
    bad = np.flatnonzero(np.abs(c - h) > SPACING_TOL * h)
    if len(bad):
        raise SurfaceError(f"sample spacing varies by more than 10% (h = {h:.4g})", bad)
    return h


def build_from_profile(profile, sig, provenance="discretized", truncation=None, curvature="fd"):
    """Discretize the hypersurface generated by ``profile`` under signature ``sig``."""
    P = np.asarray(profile.points, dtype=float)
    closed, ends = profile.closed, tuple(profile.ends)
    if sig.n == 1 and not closed and sig.p + sig.q != 0:
        raise SurfaceError("inconsistent signature")
    for col, m in ((0, sig.p), (1, sig.q)):
        if m > 0:
            bad = np.flatnonzero(P[:, col] <= 0)
            if len(bad):
                name = "uv"[col]
                raise SurfaceError(f"{name} must be positive on every cell of an S^{m} factor", bad)
    _check_spacing(P, closed, ends)
    g = profile_geometry(P, sig, closed, ends, curvature)
    w = cell_weights(P, g["ds"], sig, closed, ends, g["reflected"])
    return DiscreteHypersurface(
        signature=sig, profile=P, tangent=g["tangent"], normal=g["normal"], kappa=g["kappa"],
        ds=g["ds"], base_weight=w, boundary=g["boundary"], closed=closed, ends=ends,
        provenance=provenance, radius_edges=_radius_edges(g["ghosts"]), truncation=truncation,
        reflected=g["reflected"],
    )


DEFAULT_TRUNCATION = 40.0


def analytic_shrinker(spec, resolution=512, truncation=DEFAULT_TRUNCATION):
    """Exact S^k(sqrt(2k)) x R^{n-k}; unbounded factors cut at ``truncation``.

    Positions and curvatures are exact; spheres are sampled by a quarter
    circle of cell centres, flat factors by a ray of cell centres.
    """
    if resolution < 16:
        raise SurfaceError("resolution must be at least 16")
    k, n = spec.k, spec.n
    sig = spec.signature
    N = resolution
    kappa = np.zeros((N, 3))
    if k == n:
        r = spec.radius
        th = (np.arange(N) + 0.5) * (0.5 * np.pi / N)
        P = np.column_stack([r * np.sin(th), r * np.cos(th)])
        T = np.column_stack([np.cos(th), -np.sin(th)])
        nu = P / r
        ds = np.full(N, r * 0.5 * np.pi / N)
        kappa[:, 0] = 1 / r
        if sig.p:
            kappa[:, 1] = 1 / r
        ends = (End(AXIS_U), End(AXIS_V))
        trunc = None
    elif k == 0:
        h = truncation / N
        s = (np.arange(N) + 0.5) * h
        P = np.column_stack([s, np.zeros(N)])
        T = np.tile([1.0, 0.0], (N, 1))
        nu = np.tile([0.0, 1.0], (N, 1))
        ds = np.full(N, h)
        ends = (End(AXIS_U), End(WALL_U, truncation))
        trunc = ("u", n, truncation)
    else:
        h = truncation / N
        s = (np.arange(N) + 0.5) * h
        P = np.column_stack([np.full(N, spec.radius), s])
        T = np.tile([0.0, 1.0], (N, 1))
        nu = np.tile([1.0, 0.0], (N, 1))
        ds = np.full(N, h)
        kappa[:, 1] = 1 / spec.radius
        ends = (End(AXIS_V), End(WALL_V, truncation))
        trunc = ("v", n - k, truncation)
    reflected = _reflection_flags(P, sig, False)
    w = cell_weights(P, ds, sig, False, ends, reflected)
    E = _ghosts(P, False, ends)
    return DiscreteHypersurface(
        signature=sig, profile=P, tangent=T, normal=nu, kappa=kappa, ds=ds, base_weight=w,
        boundary=np.zeros(N, dtype=bool), closed=False, ends=ends, provenance="analytic",
        radius_edges=_radius_edges(E), truncation=trunc, reflected=reflected,
    )


def round_profile(radius, resolution, sig=None):
    """Quarter-circle profile of cell centres (sphere of any dimension, or circle)."""
    th = (np.arange(resolution) + 0.5) * (0.5 * np.pi / resolution)
    P = np.column_stack([radius * np.sin(th), radius * np.cos(th)])
    return ProfileCurve(P, closed=False, ends=(End(AXIS_U), End(AXIS_V)))


def cylinder_profile(radius, resolution, truncation=DEFAULT_TRUNCATION):
    """Straight profile u = radius along the flat factor, mirrored at both ends."""
    h = truncation / resolution
    s = (np.arange(resolution) + 0.5) * h
    P = np.column_stack([np.full(resolution, radius), s])
    return ProfileCurve(P, closed=False, ends=(End(AXIS_V), End(WALL_V, truncation)))


def circle_curve(radius, resolution):
    """Closed planar circle, counterclockwise, starting on the positive u axis."""
    th = 2 * np.pi * np.arange(resolution) / resolution
    return ProfileCurve(np.column_stack([radius * np.cos(th), radius * np.sin(th)]), closed=True)


# -- interrogation -------------------------------------------------------------


def shrinker_residual(surface):
    """H - <x, n>/2 per cell; zero exactly on shrinkers."""
    from .fields import scalar_field

    surface.require_centred("shrinker_residual")
    return scalar_field(surface, surface.mean_curvature - 0.5 * surface.support)


def restrict_to_ball(surface, R):
    """B_R intersected with the surface; cells straddling the sphere are clipped.

    The kept portion of each cell is an arclength sub-interval computed from
    the radii at the cell edges, so restricting twice equals restricting once.
    """
    if R <= 0:
        raise SurfaceError("ball radius must be positive")
    surface.require_centred("restrict_to_ball")
    r0, r1 = surface.radius_edges[:, 0], surface.radius_edges[:, 1]
    lo, hi = surface.interval[:, 0].copy(), surface.interval[:, 1].copy()
    dr = r1 - r0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(dr != 0, (R - r0) / dr, np.inf)
    inside_const = (dr == 0) & (r0 <= R)
    out_const = (dr == 0) & (r0 > R)
    rising = dr > 0
    falling = dr < 0
    hi = np.where(rising, np.minimum(hi, np.clip(t, 0, 1)), hi)
    lo = np.where(falling, np.maximum(lo, np.clip(t, 0, 1)), lo)
    hi = np.where(out_const, lo, hi)
    frac = np.clip(hi - lo, 0.0, 1.0)
    frac = np.where(inside_const, surface.fraction, frac)
    return surface.with_fraction(frac, np.column_stack([lo, np.maximum(hi, lo)]))


def grid_embedded(points, closed, h):
    """Indices of non-adjacent sample pairs closer than h/2 (empty if embedded)."""
    from scipy.spatial import cKDTree

    P = np.asarray(points, dtype=float)
    N = len(P)
    pairs = cKDTree(P).query_pairs(0.5 * h, output_type="ndarray")
    if len(pairs) == 0:
        return pairs
    gap = np.abs(pairs[:, 0] - pairs[:, 1])
    if closed:
        gap = np.minimum(gap, N - gap)
    return pairs[gap >= 2]


def resample_profile(profile, resolution=None):
    """Same curve, samples re-spaced uniformly in arclength (monotone cubic in chord length).

    Mirrored ends keep their half-cell offset from the mirror; free ends keep
    a sample on the endpoint.
    """
    P = np.asarray(profile.points, dtype=float)
    N = resolution or len(P)
    closed, ends = profile.closed, profile.ends
    if closed:
        Q = np.vstack([P[-3:], P, P[:4]])
        s = np.concatenate([[0], np.cumsum(np.linalg.norm(np.diff(Q, axis=0), axis=1))])
        a, b = s[3], s[3 + len(P)]
        t = a + np.arange(N) * (b - a) / N
    else:
        left = [ends[0].reflect(P[j]) for j in (2, 1, 0)] if ends[0].mirrored else []
        right = [ends[1].reflect(P[-1 - j]) for j in (0, 1, 2)] if ends[1].mirrored else []
        Q = np.vstack(left + [P] + right)
        s = np.concatenate([[0], np.cumsum(np.linalg.norm(np.diff(Q, axis=0), axis=1))])
        i0, i1 = len(left), len(left) + len(P) - 1
        a = 0.5 * (s[i0 - 1] + s[i0]) if left else s[i0]
        b = 0.5 * (s[i1] + s[i1 + 1]) if right else s[i1]
        offl, offr = (0.5 if left else 0.0), (0.5 if right else 0.0)
        h = (b - a) / (N - 1 + offl + offr)
        t = a + (offl + np.arange(N)) * h
    new = np.column_stack([PchipInterpolator(s, Q[:, j])(t) for j in range(2)])
    return ProfileCurve(new, closed=closed, ends=ends)


def perturb_normal(surface, phi, recompute=True):
    """Move every profile sample by phi * n.

    With ``recompute`` the geometry is rebuilt from the moved profile by
    finite differences (re-spaced in arclength if the spacing drifts past
    10%); otherwise only positions change, which makes
    perturbing by phi and then -phi an exact round trip.
    """
    surface.require_centred("perturb_normal")
    phi = np.asarray(getattr(phi, "values", phi), dtype=float)
    phi = np.broadcast_to(phi, (surface.size,))
    h = surface.spacing
    E = np.append(phi, phi[0]) if surface.closed else phi
    grad = np.abs(np.diff(E)) / h
    if np.any(grad > 1.0 / h):
        raise SurfaceError("perturbation is not smooth at grid scale", np.flatnonzero(grad > 1.0 / h))
    P = surface.profile + phi[:, None] * surface.normal
    clash = grid_embedded(P, surface.closed, h)
    if len(clash):
        raise SurfaceError("perturbation self-intersects at grid scale", clash[:, 0])
    if not np.any(phi):
        return surface
    if not recompute:
        return replace(surface, profile=P, provenance="perturbed")
    prof = ProfileCurve(P, closed=surface.closed, ends=surface.ends)
    try:
        _check_spacing(P, surface.closed, surface.ends)
    except SurfaceError:
        prof = resample_profile(prof)
    return build_from_profile(prof, surface.signature, provenance="perturbed", truncation=surface.truncation)


def axis_coordinate(surface):
    """Coordinate along the flat factor of a cylinder-like profile (v or u)."""
    if surface.truncation is not None and surface.truncation[0] == "u":
        return surface.u
    return surface.v


def bump(surface, amplitude, centre, width):
    """Gaussian bump exp(-(a - centre)^2 / width^2) along the flat coordinate."""
    a = axis_coordinate(surface)
    return amplitude * np.exp(-((a - centre) / width) ** 2)


def cosine_perturbation(surface, amplitude, wavenumber, period=20.0):
    """amplitude * cos(2 pi wavenumber a / period) along the flat coordinate."""
    return amplitude * np.cos(2 * np.pi * wavenumber * axis_coordinate(surface) / period)


# -- text formats ------------------------------------------------------------------


class ProfileParseError(ValueError):
    def __init__(self, message, line, column=1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def infer_ends(P):
    """Mirror an end when it sits within ~h/2 of an axis, otherwise leave it free."""
    h = float(np.mean(np.linalg.norm(np.diff(P, axis=0), axis=1)))
    ends = []
    for pt in (P[0], P[-1]):
        if abs(pt[0]) <= 0.75 * h:
            ends.append(End(AXIS_U))
        elif abs(pt[1]) <= 0.75 * h:
            ends.append(End(AXIS_V))
        else:
            ends.append(End(FREE))
    return tuple(ends)


def parse_profile(text):
    """Parse ``signature p q`` [``topology open|closed``] followed by ``u v`` lines."""
    sig = None
    closed = False
    pts = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        toks = line.split()
        col = raw.index(toks[0]) + 1
        if sig is None:
            if toks[0] != "signature" or len(toks) != 3:
                raise ProfileParseError("expected 'signature <p> <q>'", lineno, col)
            try:
                sig = RotationSignature(int(toks[1]), int(toks[2]))
            except ValueError:
                raise ProfileParseError("signature entries must be nonnegative integers", lineno, col) from None
            continue
        if toks[0] == "topology" and not pts:
            if len(toks) != 2 or toks[1] not in ("open", "closed"):
                raise ProfileParseError("expected 'topology open|closed'", lineno, col)
            closed = toks[1] == "closed"
            continue
        if len(toks) != 2:
            raise ProfileParseError(f"expected two numbers, found {len(toks)} fields", lineno, col)
        try:
            pts.append((float(toks[0]), float(toks[1])))
        except ValueError:
            bad = toks[0] if not _isfloat(toks[0]) else toks[1]
            raise ProfileParseError(f"not a number: {bad!r}", lineno, raw.index(bad) + 1) from None
    if sig is None:
        raise ProfileParseError("missing signature header", 1)
    if len(pts) < 3:
        raise ProfileParseError("a profile needs at least 3 samples", max(1, len(text.splitlines())))
    P = np.array(pts)
    ends = (End(FREE), End(FREE)) if closed else infer_ends(P)
    return ProfileCurve(P, closed=closed, ends=ends), sig


def _isfloat(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def read_profile(path):
    return parse_profile(Path(path).read_text())


def format_profile(profile, sig):
    lines = [f"signature {sig.p} {sig.q}"]
    if profile.closed:
        lines.append("topology closed")
    lines += [f"{u:.17g} {v:.17g}" for u, v in np.asarray(profile.points)]
    return "\n".join(lines) + "\n"


def write_profile(path, profile, sig):
    Path(path).write_text(format_profile(profile, sig))


def surface_records(surface):
    """Per-cell records (position, normal, curvatures, weight) for export."""
    X, Nv, K, W = surface.positions, surface.normals, surface.principal_curvatures, surface.area_weight
    return [
        {"position": X[i].tolist(), "normal": Nv[i].tolist(), "curvatures": K[i].tolist(), "weight": float(W[i])}
        for i in np.flatnonzero(surface.active)
    ]


# -- non-round shrinking curves ----------------------------------------------------


def abresch_langer_profile(turns=2, lobes=3, resolution=400):
    """A closed immersed shrinking curve that is not a circle.

    The curvature k(theta), as a function of the normal angle, solves
    k'' + k = 1/(2k); the orbit whose period in theta is 2 pi turns / lobes
    closes up after ``turns`` full rotations of the normal.  The curve is
    rebuilt from its support function <x, n> = 2k, so it is centred exactly.
    """
    if not 0.5 < turns / lobes < 1 / math.sqrt(2):
        raise SurfaceError("need 1/2 < turns/lobes < 1/sqrt(2) for a closed curve")
    half_period = math.pi * turns / lobes

    def rhs(_, y):
        return [y[1], 1 / (2 * y[0]) - y[0]]

    def half(kmin):
        ev = lambda t, y: y[1]
        ev.direction = -1
        ev.terminal = True
        sol = solve_ivp(rhs, (1e-9, 10), [kmin, 1e-12], events=ev, rtol=1e-12, atol=1e-13)
        return sol.t_events[0][0] - half_period

    kmin = brentq(half, 1e-3, 1 / math.sqrt(2) - 1e-6, xtol=1e-14)
    total = 2 * math.pi * turns

    # arclength along the curve is d s = d theta / k
    def rhs3(t, y):
        return [y[1], 1 / (2 * y[0]) - y[0], 1 / y[0]]

    sol = solve_ivp(rhs3, (0, total), [kmin, 0.0, 0.0], dense_output=True, rtol=1e-13, atol=1e-14)
    L = sol.y[2, -1]
    s_new = np.arange(resolution) * L / resolution
    grid = np.linspace(0, total, 20001)
    theta = np.interp(s_new, sol.sol(grid)[2], grid)
    for _ in range(4):
        k, _, s_cur = sol.sol(theta)
        theta = theta - (s_cur - s_new) * k
    k, dk, _ = sol.sol(theta)
    p, dp = 2 * k, 2 * dk
    nu = np.column_stack([np.cos(theta), np.sin(theta)])
    tan = np.column_stack([-np.sin(theta), np.cos(theta)])
    P = p[:, None] * nu + dp[:, None] * tan
    return ProfileCurve(P, closed=True)
