"""Gaussian surface areas F_{x0,t0}, entropy, tail bounds and the d_V distance.

All integrals are evaluated orbit-exactly: a cell is the orbit of a profile
sample under SO(p+1) x SO(q+1), and the Gaussian average over a round sphere
has a closed form in modified Bessel functions, so centres x0 off the
symmetry axes cost nothing extra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats
from scipy.linalg import expm
from scipy.optimize import minimize

from .surface import SurfaceError, restrict_to_ball, shrinker_residual


@dataclass(frozen=True)
class GaussianWindow:
    x0: tuple
    t0: float

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError(f"t0 must be positive, got {self.t0}")
        object.__setattr__(self, "x0", tuple(float(c) for c in self.x0))

    @classmethod
    def standard(cls, dim):
        return cls((0.0,) * dim, 1.0)


def _sphere_average(r, A, m, t):
    """Average of exp(-|r w - a|^2 / 4t) over w in S^m, |a| = A, m >= 1."""
    nu = (m - 1) / 2
    c = r * A / (2 * t)
    base = np.exp(-((r - A) ** 2) / (4 * t))
    small = c < 1e-8
    cs = np.where(small, 1.0, c)
    g = math.gamma((m + 1) / 2) * (2 / cs) ** nu * special.ive(nu, cs)
    return base * np.where(small, np.exp(-c), g)


def _factor_average(coord, centre, m, reflected, t):
    if m >= 1:
        return _sphere_average(np.abs(coord), np.linalg.norm(centre), m, t)
    a = float(centre[0])
    direct = np.exp(-((coord - a) ** 2) / (4 * t))
    mirror = np.exp(-((coord + a) ** 2) / (4 * t))
    return np.where(reflected, 0.5 * (direct + mirror), direct)


def gaussian_density(surface, x0, t0):
    """Orbit-averaged exp(-|x - x0|^2 / 4 t0) on every cell."""
    sig = surface.signature
    local = np.asarray(x0, dtype=float) - surface.offset
    a, b = local[: sig.p + 1], local[sig.p + 1:]
    ku = _factor_average(surface.u, a, sig.p, surface.reflected[:, 0], t0)
    kv = _factor_average(surface.v, b, sig.q, surface.reflected[:, 1], t0)
    return ku * kv


def _truncation_mass(surface, x0, t0):
    """Fraction of the flat factor's Gaussian kept by the truncation radius."""
    if surface.truncation is None or not np.all(surface.fraction == 1):
        return 1.0
    block, d, R = surface.truncation
    sig = surface.signature
    local = np.asarray(x0, dtype=float) - surface.offset
    y = local[: sig.p + 1] if block == "u" else local[sig.p + 1:]
    lam = float(y @ y) / (2 * t0)
    x = R * R / (2 * t0)
    if lam == 0:
        return float(stats.chi2.cdf(x, d))
    return float(stats.ncx2.cdf(x, d, lam))


def f_cells(surface, x0, t0):
    """F_{x0,t0} summed over the stored cells only (no truncation correction)."""
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    if surface.is_empty:
        return 0.0
    dens = gaussian_density(surface, x0, t0)
    return float((4 * np.pi * t0) ** (-surface.n / 2) * np.sum(surface.area_weight * dens))


def f_functional(surface, window):
    """F_{x0,t0}(Sigma); analytic flat factors get their cut-off Gaussian mass back."""
    if isinstance(window, tuple):
        window = GaussianWindow(*window)
    val = f_cells(surface, window.x0, window.t0)
    mass = _truncation_mass(surface, window.x0, window.t0)
    # windows that barely see the kept piece are left uncorrected
    return val / mass if mass > 1e-3 else val


def F(surface):
    """F = F_{0,1}."""
    return f_functional(surface, GaussianWindow.standard(surface.signature.ambient_dim))


# -- entropy ------------------------------------------------------------------------


@dataclass(frozen=True)
class EntropySearch:
    grid_points: int = 5
    log_t0_range: float = 6.0
    log_t0_points: int = 13
    inflate: float = 1.0
    starts: int = 3
    xatol: float = 1e-4
    max_evals: int = 500
    tie_tol: float = 1e-6  # windows this close to the max count as maximizers


@dataclass
class EntropyReport:
    value: float
    argmax: GaussianWindow
    search_trace: list = field(default_factory=list)
    tolerance: float = 0.0
    converged: bool = True

    @property
    def lam(self):
        return self.value


def _bounding_box(surface):
    sig = surface.signature
    lo = np.zeros(sig.ambient_dim)
    hi = np.zeros(sig.ambient_dim)
    act = surface.active
    for col, m, sl in ((0, sig.p, slice(0, sig.p + 1)), (1, sig.q, slice(sig.p + 1, None))):
        c = surface.profile[act, col]
        full = m >= 1 or np.any(surface.reflected[act, col])
        if full:
            R = np.max(np.abs(c))
            if surface.truncation is not None and surface.truncation[0] == "uv"[col]:
                # flat factors are translation invariant; stay well inside the cut
                R = min(R, surface.truncation[2] / 4)
            lo[sl], hi[sl] = -R, R
        else:
            lo[sl], hi[sl] = np.min(c), np.max(c)
    return lo + surface.offset, hi + surface.offset


def _window_fits(surface, x0, t0):
    """False when the Gaussian reaches the artificial cut of a flat factor."""
    if surface.truncation is None:
        return True
    block, _, R = surface.truncation
    sig = surface.signature
    local = np.asarray(x0, dtype=float) - surface.offset
    y = local[: sig.p + 1] if block == "u" else local[sig.p + 1:]
    return np.linalg.norm(y) + 6 * math.sqrt(t0) < R


def entropy(surface, search=None):
    """lambda(Sigma) = sup over windows of F_{x0,t0}: coarse grid, then simplex refinement."""
    if surface.is_empty:
        raise SurfaceError("entropy of an empty surface")
    search = search or EntropySearch()
    dim = surface.signature.ambient_dim
    sig = surface.signature
    lo, hi = _bounding_box(surface)
    lo, hi = lo - search.inflate, hi + search.inflate
    # F only sees |x0 block| for a rotating block, so the grid samples one ray per block
    axes = []
    for i, (l, h) in enumerate(zip(lo, hi)):
        block_start = 0 if i <= sig.p else sig.p + 1
        m = sig.p if i <= sig.p else sig.q
        c = surface.offset[i]
        if m >= 1 and i != block_start:
            axes.append(np.array([c]))
        elif m >= 1:
            axes.append(np.linspace(c, h, (search.grid_points + 1) // 2))
        else:
            axes.append(np.unique(np.linspace(l, h, search.grid_points)))
    # Gaussians narrower than a few cells are not resolved by the profile samples
    lt_min = max(-search.log_t0_range, math.log(8 * surface.spacing ** 2))
    log_ts = np.linspace(lt_min, search.log_t0_range, search.log_t0_points)
    trace = []
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    grid = np.vstack([np.zeros(dim), grid])
    for x0 in grid:
        for lt in log_ts:
            w = GaussianWindow(tuple(x0), float(np.exp(lt)))
            if _window_fits(surface, w.x0, w.t0):
                trace.append((w, f_functional(surface, w)))
    trace.sort(key=lambda wv: -wv[1])

    reach = 2 * math.sqrt(math.exp(search.log_t0_range))
    box_lo, box_hi = lo - reach, hi + reach

    def objective(z):
        x0, lt = z[:-1], z[-1]
        if not lt_min <= lt <= search.log_t0_range or np.any(x0 < box_lo) or np.any(x0 > box_hi):
            return 0.0
        if not _window_fits(surface, x0, math.exp(lt)):
            return 0.0
        return -f_functional(surface, GaussianWindow(tuple(x0), float(np.exp(lt))))

    best_val, best_w, tol, converged = -np.inf, None, np.inf, True
    seen = []
    for w, _ in trace:
        if len(seen) == search.starts:
            break
        z0 = np.append(w.x0, np.log(w.t0))
        if any(np.allclose(z0, s) for s in seen):
            continue
        seen.append(z0)
        simplex = np.vstack([z0] + [z0 + 0.5 * e for e in np.eye(dim + 1)])
        res = minimize(objective, z0, method="Nelder-Mead",
                       options=dict(initial_simplex=simplex, xatol=search.xatol, fatol=1e-12,
                                    maxfev=search.max_evals))
        wz = GaussianWindow(tuple(res.x[:-1]), float(np.exp(res.x[-1])))
        val = -res.fun
        trace.append((wz, val))
        diam = float(np.max(np.linalg.norm(res.final_simplex[0] - res.final_simplex[0][0], axis=1)))
        if val > best_val:
            best_val, best_w, tol = val, wz, diam
            converged = bool(res.success)
    std = GaussianWindow.standard(dim)
    f_std = f_functional(surface, std)
    trace.append((std, f_std))
    top_w, top_v = max(trace, key=lambda wv: wv[1])
    if top_v > best_val:
        best_val, best_w = top_v, top_w
    # degenerate maximizers (flat factors, planes): report the one nearest (0, 1)
    ties = [w for w, v in trace if v >= best_val - search.tie_tol]
    best_w = min(ties, key=lambda w: (float(np.dot(w.x0, w.x0)) + math.log(w.t0) ** 2, w.x0, w.t0))
    return EntropyReport(best_val, best_w, trace, tol, converged)


# -- estimates -------------------------------------------------------------------------


def gaussian_tail(surface, R, lambda0):
    """F-mass outside B_R against the bound 2^{n/2} exp(-R^2/8) lambda0."""
    total = F(surface)
    inside = f_cells(restrict_to_ball(surface, R), np.zeros(surface.signature.ambient_dim), 1.0)
    tail = max(total - inside, 0.0)
    bound = 2 ** (surface.n / 2) * math.exp(-R * R / 8) * lambda0
    return {"tail": tail, "bound": bound, "pass": tail <= bound}


def rescaling_inequality_check(surface, y, a, s, residual_tol=1e-3, quad_tol=1e-9):
    """Compare F_{s y, 1 + a s^2} with F_{y, 1 + a} on a shrinker."""
    if not s > 1:
        raise ValueError("s must exceed 1")
    if not 1 + a * s * s > 0:
        raise ValueError("need 1 + a s^2 > 0")
    res = shrinker_residual(surface).sup_norm()
    if res > residual_tol:
        raise SurfaceError(f"not a shrinker: residual {res:.3g} exceeds {residual_tol:.3g}")
    y = np.asarray(y, dtype=float)
    lhs = f_functional(surface, GaussianWindow(tuple(s * y), 1 + a * s * s))
    rhs = f_functional(surface, GaussianWindow(tuple(y), 1 + a))
    return {"lhs": lhs, "rhs": rhs, "pass": lhs <= rhs + quad_tol * max(1.0, rhs)}


# -- d_V -------------------------------------------------------------------------------


def _unpair(z):
    w = int((math.isqrt(8 * z + 1) - 1) // 2)
    j = z - w * (w + 1) // 2
    return w - j, j


def _lattice(dim, count):
    M = 1
    while (2 * M + 1) ** dim < 4 * count:
        M += 1
    axes = [np.arange(-M, M + 1)] * dim
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    order = sorted(range(len(pts)), key=lambda i: (int(pts[i] @ pts[i]), tuple(pts[i])))
    return pts[order[:count]].astype(float)


@dataclass(frozen=True)
class TestFunctionFamily:
    """Tents max(0, 1 - |x - c|/r) on lattice centres c, radii 2^-j, in pairing order."""

    dim: int
    K: int = 64
    __test__ = False

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("truncation index K must be at least 1")

    @property
    def members(self):
        idx = [_unpair(k) for k in range(self.K)]
        pts = _lattice(self.dim, max(i for i, _ in idx) + 1)
        return [(pts[i], 2.0 ** -j) for i, j in idx]

    def __call__(self, k, x):
        c, r = self.members[k - 1]
        d = np.linalg.norm(np.atleast_2d(x) - c, axis=1)
        return np.maximum(0.0, 1.0 - d / r)


def _orbit_nodes(m, Q):
    """cos(angle) nodes and normalized weights for averaging over S^m."""
    th, w = np.polynomial.legendre.leggauss(Q)
    th = 0.5 * np.pi * (th + 1)
    w = w * np.sin(th) ** (m - 1)
    return np.cos(th), w / w.sum()


def test_integrals(surface, fam, rotation=None, nodes=64):
    """The vector (int f_k e^{-|x|^2/4} dmu)_k; ``rotation`` moves the surface by O."""
    surface.require_centred("measure_distance")
    sig = surface.signature
    members = fam.members
    centres = np.array([c for c, _ in members])
    if rotation is not None:
        centres = centres @ np.asarray(rotation)
    act = surface.active
    u, v = surface.u[act], surface.v[act]
    w = surface.area_weight[act] * np.exp(-(u * u + v * v) / 4)
    refl = surface.reflected[act]
    out = np.zeros(len(members))

    def factor(coord, cvec, m, ref):
        if m >= 1:
            cs, ws = _orbit_nodes(m, nodes)
            A = np.linalg.norm(cvec)
            r = np.abs(coord)[:, None]
            return r * r + A * A - 2 * r * A * cs[None, :], np.broadcast_to(ws, (len(coord), nodes))
        a = float(cvec[0])
        d2 = np.column_stack([(coord - a) ** 2, (coord + a) ** 2])
        wt = np.column_stack([np.where(ref, 0.5, 1.0), np.where(ref, 0.5, 0.0)])
        return d2, wt

    for k, ((c, rad), cen) in enumerate(zip(members, centres)):
        a, b = cen[: sig.p + 1], cen[sig.p + 1:]
        A = np.linalg.norm(a) if sig.p else None
        B = np.linalg.norm(b) if sig.q else None
        du = np.abs(np.abs(u) - A) if sig.p else np.minimum(np.abs(u - a[0]), np.where(refl[:, 0], np.abs(u + a[0]), np.inf))
        dv = np.abs(np.abs(v) - B) if sig.q else np.minimum(np.abs(v - b[0]), np.where(refl[:, 1], np.abs(v + b[0]), np.inf))
        near = du * du + dv * dv < rad * rad
        if not np.any(near):
            continue
        d2u, wu = factor(u[near], a, sig.p, refl[near, 0])
        d2v, wv = factor(v[near], b, sig.q, refl[near, 1])
        d = np.sqrt(np.maximum(d2u[:, :, None] + d2v[:, None, :], 0))
        tent = np.maximum(0.0, 1.0 - d / rad)
        avg = np.einsum("ij,ik,ijk->i", wu, wv, tent)
        out[k] = np.sum(w[near] * avg)
    return out


def measure_distance(a, b, fam=None, rotation_b=None):
    """d_V(a, O b) = sum_k 2^-k |int f_k e^{-|x|^2/4} d(mu_a - mu_(O b))|."""
    fam = fam or TestFunctionFamily(a.signature.ambient_dim)
    ia = test_integrals(a, fam)
    ib = test_integrals(b, fam, rotation=rotation_b)
    k = np.arange(1, fam.K + 1)
    return float(np.sum(2.0 ** -k * np.abs(ia - ib)))


def rotation_from_params(z, dim):
    S = np.zeros((dim, dim))
    S[np.triu_indices(dim, 1)] = z
    return expm(S - S.T)


def fit_rotation(surface, reference, fam=None, max_evals=200):
    """Rotation O minimizing d_V(surface, O reference), by simplex search from the identity."""
    fam = fam or TestFunctionFamily(surface.signature.ambient_dim)
    dim = surface.signature.ambient_dim
    ia = test_integrals(surface, fam)
    k = 2.0 ** -np.arange(1, fam.K + 1)

    def obj(z):
        O = rotation_from_params(z, dim)
        return float(np.sum(k * np.abs(ia - test_integrals(reference, fam, rotation=O))))

    npar = dim * (dim - 1) // 2
    z0 = np.zeros(npar)
    simplex = np.vstack([z0] + [0.05 * e for e in np.eye(npar)])
    res = minimize(obj, z0, method="Nelder-Mead",
                   options=dict(initial_simplex=simplex, xatol=1e-4, fatol=1e-12, maxfev=max_evals))
    best = min((obj(z0), z0), (res.fun, res.x), key=lambda t: t[0])
    return rotation_from_params(best[1], dim), float(best[0])
