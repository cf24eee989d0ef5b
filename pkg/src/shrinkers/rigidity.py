"""Spectrum of the shape quotient tau = A/H, the bounds that control it, and a cylinder classifier."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import LinearRing, LineString

from .functionals import F, fit_rotation
from .operators import G_MIN, build_stencil, profile_derivative, shape_quotient, tau_gradient_certificate
from .surface import (
    AXIS_U,
    AXIS_V,
    GeneralizedCylinderSpec,
    SurfaceError,
    _ghosts,
    analytic_shrinker,
    grid_embedded,
    restrict_to_ball,
)

SHARP_H, SHARP_A = 0.25, 2.0


@dataclass(frozen=True)
class ClusterConfig:
    zero_scale: float = 10.0  # near-zero if |kappa| <= max(zero_scale * eps_tau, 1/sqrt(100 n))
    zero_const: float = 100.0
    sphere_const: float = 4.0  # spherical if kappa >= 1/sqrt(4 n)
    sphere_slack: float = 1e-2  # at n = 4 the threshold equals 1/n itself

    def zero_threshold(self, n, eps_tau=0.0):
        return max(self.zero_scale * eps_tau, 1 / math.sqrt(self.zero_const * n))

    def sphere_threshold(self, n):
        return 1 / math.sqrt(self.sphere_const * n)


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray  # (cells, n), sorted ascending per cell
    near_zero: np.ndarray  # (cells, n) bool
    cells: np.ndarray  # surface indices of the rows
    k: int
    cluster_gap: float
    trace_error: float
    ambiguous: int = 0
    k_per_cell: np.ndarray = None

    @property
    def consistent(self):
        return self.k_per_cell is not None and bool(np.all(self.k_per_cell == self.k))


def tau_spectrum(surface, h_min=G_MIN, mask=None, eps_tau=0.0, clusters=None):
    """Eigenvalues kappa_i / H per cell, split into near-zero and spherical clusters."""
    clusters = clusters or ClusterConfig()
    n = surface.n
    sel = surface.active.copy() if mask is None else (np.asarray(mask) & surface.active)
    H = surface.mean_curvature
    bad = np.flatnonzero(sel & ~(H >= h_min))
    if len(bad):
        raise SurfaceError(f"H below h_min = {h_min:g}", bad)
    cells = np.flatnonzero(sel)
    ev = np.sort(surface.principal_curvatures[cells] / H[cells, None], axis=1)
    zthr = clusters.zero_threshold(n, eps_tau)
    sthr = clusters.sphere_threshold(n)
    near = np.abs(ev) <= zthr
    amb = int(np.count_nonzero(~near & (ev < sthr * (1 - clusters.sphere_slack))))
    kc = n - near.sum(axis=1)
    k = int(np.bincount(kc).argmax()) if len(kc) else n
    gap = math.inf
    if len(cells) and np.any(near) and np.any(~near):
        lo = np.where(near, np.abs(ev), -np.inf).max(axis=1)
        hi = np.where(~near, ev, np.inf).min(axis=1)
        both = np.isfinite(lo) & np.isfinite(hi)
        if np.any(both):
            gap = float(np.min(hi[both] - lo[both]))
    trace = float(np.max(np.abs(ev.sum(axis=1) - 1))) if len(cells) else 0.0
    return SpectrumReport(ev, near, cells, k, gap, trace, amb, kc)


def almost_parallel_curvature_bound(eps, kappa):
    """2 eps (1/|kappa| + 1/kappa^2)."""
    if kappa == 0:
        raise ValueError("kappa must be nonzero")
    if not 0 <= eps <= 1:
        raise ValueError("need 0 <= eps <= 1")
    return 2 * eps * (1 / abs(kappa) + 1 / kappa ** 2)


def eigenvalue_product_bound(eps, delta, k1, k2):
    """|k1 k2| against 2 eps / delta^2 (1/|k1 - k2| + 1/|k1 - k2|^2)."""
    if k1 == k2:
        raise ValueError("eigenvalues must differ")
    if not delta > 0:
        raise ValueError("delta must be positive")
    if eps > 1:
        raise ValueError("need eps <= 1")
    d = abs(k1 - k2)
    bound = 2 * eps / delta ** 2 * (1 / d + 1 / d ** 2)
    prod = abs(k1 * k2)
    return {"bound": bound, "product": prod, "pass": prod <= bound}


# -- Gauss equation ------------------------------------------------------------------


def gauss_equation_check(surface, axis_margin=0.25):
    """Intrinsic sectional curvatures of principal planes (from the profile alone) vs kappa_i kappa_j.

    Returns, per plane type present, the max |K_intrinsic - kappa_i kappa_j|
    over interior cells.  Planes that divide by u (or v) skip cells with
    u < axis_margin: (1 - u'^2)/u^2 is 0/0 at a pole and its error there is
    h^2/u^2 rather than h^2.
    """
    sig = surface.signature
    E = _ghosts(surface.profile, surface.closed, surface.ends)
    c = np.linalg.norm(np.diff(E, axis=0), axis=1)
    d1 = (E[2:] - E[:-2]) / (c[:-1] + c[1:])[:, None]
    d2 = 2 * ((E[2:] - E[1:-1]) / c[1:, None] - (E[1:-1] - E[:-2]) / c[:-1, None]) / (c[:-1] + c[1:])[:, None]
    u, v = surface.u, surface.v
    k0, kp, kq = surface.kappa.T
    ok = ~surface.boundary & surface.active
    far_u, far_v = np.abs(u) >= axis_margin, np.abs(v) >= axis_margin
    out = {}
    with np.errstate(divide="ignore", invalid="ignore"):
        if sig.p >= 1:
            out["profile-p"] = (-d2[:, 0] / u, k0 * kp, far_u)
        if sig.p >= 2:
            out["p-p"] = ((1 - d1[:, 0] ** 2) / u ** 2, kp * kp, far_u)
        if sig.q >= 1:
            out["profile-q"] = (-d2[:, 1] / v, k0 * kq, far_v)
        if sig.q >= 2:
            out["q-q"] = ((1 - d1[:, 1] ** 2) / v ** 2, kq * kq, far_v)
        if sig.p >= 1 and sig.q >= 1:
            out["p-q"] = (-d1[:, 0] * d1[:, 1] / (u * v), kp * kq, far_u & far_v)
    return {name: float(np.max(np.abs(a - b)[ok & m])) for name, (a, b, m) in out.items()}


# -- axis fields ----------------------------------------------------------------------


def _free_u(surface):
    return surface.signature.p >= 1 or np.any(surface.reflected[:, 0])


def _free_v(surface):
    return surface.signature.q >= 1 or np.any(surface.reflected[:, 1])


def axis_coherence_check(surface, p, L, eps_tau, C=100.0, clusters=None, samples=41):
    """Constant fields v_i = v_i(p) projected to the tangent space over Omega, and three sup norms.

    v_i(p) are the near-zero eigendirections of tau at cell p.  Omega is the
    union of the orbits of cells within profile arclength L of p.  Over an
    orbit a fixed ambient vector w meets the frame through the angles
    alpha = <w_u, omega_1> and beta = <w_v, omega_2>, which are sampled.
    """
    sig = surface.signature
    spec = tau_spectrum(surface, mask=np.arange(surface.size) == p, eps_tau=eps_tau, clusters=clusters)
    near = spec.near_zero[0]
    if not np.any(near):
        raise SurfaceError("no near-zero eigenvalue of tau at p", [p])
    tau = shape_quotient(surface).values
    T = surface.tangent
    # near-zero directions at p, as (|w_u|, |w_v|, kind); the orbit angles are sampled below
    ev_block = np.array([tau[p, 0], tau[p, 1], tau[p, 2]])
    zthr = (clusters or ClusterConfig()).zero_threshold(surface.n, eps_tau)
    dirs = []
    if abs(ev_block[0]) <= zthr:
        dirs.append((T[p, 0], T[p, 1]))
    if sig.p and abs(ev_block[1]) <= zthr:
        dirs.append((1.0, 0.0) if sig.p else None)
    if sig.q and abs(ev_block[2]) <= zthr:
        dirs.append((0.0, 1.0))
    s = np.concatenate([[0], np.cumsum(0.5 * (surface.ds[1:] + surface.ds[:-1]))])
    dist = np.abs(s - s[p])
    if surface.closed:
        dist = np.minimum(dist, s[-1] + surface.ds[-1] - dist)
    omega = np.flatnonzero((dist <= L) & ~surface.boundary & surface.active)
    st = build_stencil(surface)
    omega = omega[st.interior[omega]]
    A = surface.kappa
    dA = np.column_stack([profile_derivative(surface, A[:, j]) for j in range(3)])
    with np.errstate(divide="ignore", invalid="ignore"):
        cu = np.where(sig.p > 0, T[:, 0] / surface.u, 0.0)
        cv = np.where(sig.q > 0, T[:, 1] / surface.v, 0.0)
    gradT2 = dA[:, 0] ** 2 + sig.p * dA[:, 1] ** 2 + sig.q * dA[:, 2] ** 2
    rot_p2 = 2 * cu ** 2 * (A[:, 0] - A[:, 1]) ** 2
    rot_q2 = 2 * cv ** 2 * (A[:, 0] - A[:, 2]) ** 2
    nu = surface.normal
    dev = tv = ga = 0.0
    grid = np.linspace(-1, 1, samples)
    for wu, wv in dirs:
        al = grid * abs(wu) if _free_u(surface) else np.array([wu])
        be = grid * abs(wv) if _free_v(surface) else np.array([wv])
        a, b = np.meshgrid(al, be, indexing="ij")
        a, b = a.ravel(), b.ravel()
        for i in omega:
            n_w = nu[i, 0] * a + nu[i, 1] * b
            cT = T[i, 0] * a + T[i, 1] * b
            cp2 = np.maximum(wu * wu - a * a, 0.0) if sig.p else 0.0
            cq2 = np.maximum(wv * wv - b * b, 0.0) if sig.q else 0.0
            dev = max(dev, float(np.max(np.abs(n_w))))
            t2 = (tau[i, 0] * cT) ** 2 + tau[i, 1] ** 2 * cp2 + tau[i, 2] ** 2 * cq2
            tv = max(tv, float(np.sqrt(np.max(t2))))
            g2 = cT ** 2 * gradT2[i] + cp2 * rot_p2[i] + cq2 * rot_q2[i]
            ga = max(ga, float(np.sqrt(np.max(g2))))
    bounds = (C * (L + L * L) * eps_tau, C * (1 + L * L) * eps_tau, C * (1 + L) * (1 + L * L) * eps_tau)
    return {"dev_v": dev, "tau_v": tv, "gradA_v": ga, "bounds": bounds,
            "pass": dev <= bounds[0] + 1e-10 and tv <= bounds[1] + 1e-10 and ga <= bounds[2] + 1e-10}


# -- classifier -----------------------------------------------------------------------


@dataclass
class RigidityCertificate:
    R: float
    delta0: float
    C0: float
    lambda0: float
    min_H: float = float("nan")
    max_A: float = float("nan")
    eps_tau: float = float("nan")
    checks: dict = field(default_factory=dict)
    verdict: str = "inconclusive"
    k: int = -1
    residual: float = float("nan")
    dV: float = float("nan")
    failed_stage: str = ""
    spectrum: SpectrumReport = None


def is_embedded(surface):
    """Grid-scale separation plus an exact segment-crossing test of the profile polyline."""
    P = surface.profile
    if len(grid_embedded(P, surface.closed, surface.spacing)):
        return False
    line = LinearRing(P) if surface.closed else LineString(P)
    return bool(line.is_simple)


def cylinder_distance(surface, k):
    """Distance of every cell to S^k(sqrt(2k)) x R^{n-k} in the surface's own frame."""
    sig = surface.signature
    r = math.sqrt(2 * k)
    if k == surface.n:
        return np.abs(surface.radii - r)
    if sig.p == k:
        return np.abs(np.abs(surface.u) - r)
    raise SurfaceError(f"signature ({sig.p}, {sig.q}) cannot hold S^{k} as its rotating factor")


def classify_cylinder(surface, R, delta0=0.1, C0=4.0, lambda0=None, C_tau=1.0, clusters=None,
                      residual_tol=0.05, fit=True, trace_tol=1e-10, check_embedding=True):
    """Run the staged checks and return a certificate; the verdict is cylinder-k only if all pass."""
    cert = RigidityCertificate(R, delta0, C0, lambda0 if lambda0 is not None else math.inf)
    n = surface.n

    def fail(stage):
        cert.failed_stage = stage
        cert.verdict = "inconclusive"
        return cert

    if check_embedding:
        cert.checks["embedded"] = is_embedded(surface)
        if not cert.checks["embedded"]:
            return fail("embedded")
    if lambda0 is not None:
        Fv = F(surface)
        cert.checks["entropy"] = Fv <= lambda0
        if not cert.checks["entropy"]:
            return fail("entropy")
    ball = restrict_to_ball(surface, R)
    st = build_stencil(surface)
    region = ball.active & st.interior
    H = surface.mean_curvature[region]
    A = np.sqrt(surface.norm_A_squared[region])
    cert.min_H, cert.max_A = float(H.min()), float(A.max())
    cert.checks["bounds"] = cert.min_H >= delta0 and cert.max_A <= C0
    if not cert.checks["bounds"]:
        return fail("bounds")
    try:
        tc = tau_gradient_certificate(surface, R, delta0, C0, lambda0, C_tau)
    except SurfaceError:
        cert.checks["tau-certificate"] = False
        return fail("tau-certificate")
    cert.eps_tau = tc["eps_tau"]
    cert.checks["tau-certificate"] = tc["pass"]
    if not tc["pass"]:
        return fail("tau-certificate")
    inner = restrict_to_ball(surface, max(R - 2, 1e-9)).active & st.interior
    spec = tau_spectrum(surface, mask=inner, eps_tau=cert.eps_tau, clusters=clusters)
    cert.spectrum = spec
    cert.k = spec.k
    cert.checks["spectrum"] = spec.consistent and spec.ambiguous == 0 and spec.k >= 1
    if not cert.checks["spectrum"]:
        return fail("spectrum")
    eps = min(cert.eps_tau, 1.0)
    prod_ok = True
    if spec.k < n:
        k1 = np.where(spec.near_zero, spec.eigenvalues, np.nan)
        k2 = np.where(~spec.near_zero, spec.eigenvalues, np.nan)
        i1 = np.nanargmax(np.abs(k1), axis=1)
        i2 = np.nanargmin(k2, axis=1)
        rows = np.arange(len(spec.cells))
        Hc = surface.mean_curvature[spec.cells]
        for a, b, h in zip(k1[rows, i1] * Hc, k2[rows, i2] * Hc, Hc):
            if not eigenvalue_product_bound(eps, delta0, a, b)["pass"]:
                prod_ok = False
                break
    cert.checks["product-bound"] = prod_ok
    if not prod_ok:
        return fail("product-bound")
    cert.checks["trace"] = spec.trace_error <= trace_tol and spec.cluster_gap > 0
    if not cert.checks["trace"]:
        return fail("trace")
    try:
        dist = cylinder_distance(surface, spec.k)
    except SurfaceError:
        cert.checks["residual"] = False
        return fail("residual")
    cert.residual = float(np.max(dist[ball.active]))
    if fit and surface.provenance != "analytic":
        ref = analytic_shrinker(GeneralizedCylinderSpec(spec.k, n), 256)
        if spec.k == n or ref.signature == surface.signature:
            _, cert.dV = fit_rotation(surface, ref, max_evals=30)
    elif fit:
        cert.dV = 0.0
    cert.checks["residual"] = cert.residual <= residual_tol
    if not cert.checks["residual"]:
        return fail("residual")
    cert.verdict = f"cylinder-{spec.k}"
    return cert


# -- iteration harness ----------------------------------------------------------------


def _extent(surface):
    if surface.truncation is not None:
        return surface.truncation[2]
    return float(np.max(surface.radius_edges))


def iteration_experiment(surface, R_init, rounds=5, theta=0.1, delta0=0.1, C0=4.0):
    """Relaxed bounds on B_{(1+theta)R}, then sharp bounds on B_{(1+theta)R - 3}, for growing R."""
    st = build_stencil(surface)

    def stats(R):
        m = restrict_to_ball(surface, R).active & st.interior
        if not np.any(m):
            return math.inf, 0.0
        return float(surface.mean_curvature[m].min()), float(np.sqrt(surface.norm_A_squared[m].max()))

    h0, a0 = stats(R_init)
    if not (h0 >= SHARP_H and a0 <= SHARP_A):
        raise SurfaceError(f"sharp bounds fail on B_{R_init:g}: min H = {h0:.4g}, max|A| = {a0:.4g}")
    table = []
    R = R_init
    extent = _extent(surface)
    for j in range(rounds):
        big = (1 + theta) * R
        hr, ar = stats(big)
        relaxed = hr >= delta0 and ar <= C0
        hs, as_ = stats(big - 3)
        sharp = hs >= SHARP_H and as_ <= SHARP_A
        row = {"round": j, "R": R, "relaxed_R": big, "min_H": hr, "max_A": ar,
               "relaxed": relaxed, "sharp_R": big - 3, "sharp_min_H": hs, "sharp_max_A": as_, "sharp": sharp}
        if not relaxed:
            row["failed"] = "H >= delta0" if hr < delta0 else "|A| <= C0"
        elif not sharp:
            row["failed"] = "H >= 1/4" if hs < SHARP_H else "|A| <= 2"
        table.append(row)
        if "failed" in row:
            break
        if big >= extent:
            row["stopped"] = "surface exhausted"
            break
        R = big
    return table
