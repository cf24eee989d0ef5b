"""Drift Laplacians on profile-reduced surfaces and the identity/estimate checks built on them.

A rotation-invariant function f(s) of the profile arclength has

    Lf = (1 / (g J)) d/ds (g J df/ds) - <x, T> df/ds / 2,   J = |u|^p |v|^q,

for the weighted operator L_g = L + <grad log g, grad .>.  The stencil is the
conservative (flux) form of the Laplacian part: fluxes at chord midpoints,
cell masses by Simpson's rule so that the cells next to a pole get their
true volume.  The drift -<x, T> f'/2 is a centred difference.  Diagonal
tensors pick up reaction terms from the rotating frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import EVEN, EXTRAPOLATE, ODD, SCALAR, TENSOR, FieldOnSurface, scalar_field, tensor_field
from .surface import SurfaceError, _ghosts, restrict_to_ball, shrinker_residual

G_MIN = 1e-3
SHRINKER_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class OperatorStencil:
    """Three-point flux stencil plus frame reaction coefficients.

    ``lo``/``hi`` multiply f_{i-1} - f_i and f_{i+1} - f_i; rows therefore
    sum to zero.  ``interior`` marks the cells the stencil is valid on.
    """

    surface: object
    weight: str
    lo: np.ndarray
    hi: np.ndarray
    mass: np.ndarray
    interior: np.ndarray
    react_u: np.ndarray  # (u'/u)^2, frame reaction for the S^p block
    react_v: np.ndarray

    def apply_scalar(self, values, ghost=(EVEN, EVEN)):
        E = extend(self.surface, values, ghost)
        out = self.lo * (E[:-2] - E[1:-1]) + self.hi * (E[2:] - E[1:-1])
        return np.where(self.interior, out, np.nan)

    def apply_tensor(self, values):
        sig = self.surface.signature
        B = np.asarray(values, dtype=float)
        out = np.column_stack([self.apply_scalar(B[:, j]) for j in range(3)])
        dp = B[:, 0] - B[:, 1]
        dq = B[:, 0] - B[:, 2]
        out[:, 0] += -2 * sig.p * self.react_u * dp - 2 * sig.q * self.react_v * dq
        out[:, 1] += 2 * self.react_u * dp
        out[:, 2] += 2 * self.react_v * dq
        return _mask_blocks(out, sig)

    def __call__(self, field):
        if field.kind == TENSOR:
            return field.like(self.apply_tensor(field.values))
        return field.like(self.apply_scalar(field.values, field.ghost))


def _mask_blocks(B, sig):
    B = np.array(B)
    if sig.p == 0:
        B[:, 1] = 0.0
    if sig.q == 0:
        B[:, 2] = 0.0
    return B


def extend(surface, values, ghost=(EVEN, EVEN)):
    """Values padded with one ghost per end, following each end's ghost policy."""
    f = np.asarray(values, dtype=float)
    if surface.closed:
        return np.concatenate([[f[-1]], f, [f[0]]])
    pads = []
    for e, policy, (i0, i1, i2) in zip(surface.ends, ghost, ((0, 1, 2), (-1, -2, -3))):
        if not e.mirrored:
            pads.append(np.nan)
        elif policy == EVEN:
            pads.append(f[i0])
        elif policy == ODD:
            pads.append(-f[i0])
        elif policy == EXTRAPOLATE:
            pads.append(3 * f[i0] - 3 * f[i1] + f[i2])
        else:
            raise ValueError(f"unknown ghost policy {policy!r}")
    return np.concatenate([[pads[0]], f, [pads[1]]])


def build_stencil(surface, g=None, drift=True):
    """Stencil of L_g (g = None means g = 1); ``drift=False`` drops the Gaussian weight."""
    surface.require_centred("drift operators")
    sig = surface.signature
    N = surface.size
    E = _ghosts(surface.profile, surface.closed, surface.ends)
    mids = 0.5 * (E[1:] + E[:-1])
    c = np.linalg.norm(np.diff(E, axis=0), axis=1)
    gvals = np.ones(N) if g is None else np.asarray(getattr(g, "values", g), dtype=float)
    gE = extend(surface, gvals)
    gE = np.where(np.isnan(gE), np.concatenate([[gvals[0]], gvals, [gvals[-1]]]), gE)
    gmid = 0.5 * (gE[1:] + gE[:-1])

    def density(pts):
        return np.abs(pts[:, 0]) ** sig.p * np.abs(pts[:, 1]) ** sig.q

    Wm = density(mids) * gmid
    Wc = density(surface.profile) * gvals
    mass = surface.ds * (Wm[:-1] + 4 * Wc + Wm[1:]) / 6
    lo = Wm[:-1] / c[:-1] / mass
    hi = Wm[1:] / c[1:] / mass
    if drift:
        # the Gaussian changes by O(1) per cell far out, so it is not folded into the flux
        xT = np.sum(surface.profile * surface.tangent, axis=1)
        d = 0.5 * xT / (c[:-1] + c[1:])
        lo, hi = lo + d, hi - d
    interior = ~surface.boundary & surface.active
    if np.count_nonzero(interior) < 5:
        raise SurfaceError("need at least 5 interior profile samples")
    T = surface.tangent
    with np.errstate(divide="ignore", invalid="ignore"):
        ru = np.where(sig.p > 0, (T[:, 0] / surface.u) ** 2, 0.0)
        rv = np.where(sig.q > 0, (T[:, 1] / surface.v) ** 2, 0.0)
    weight = ("1" if g is None else "f") + ("*gauss" if drift else "")
    return OperatorStencil(surface, weight, lo, hi, mass, interior, ru, rv)


def _stencil_for(field, g=None, drift=True):
    return build_stencil(field.surface, g=g, drift=drift)


def drift_laplacian(u, drift=True):
    """L u = Delta u - <x, grad u>/2 on interior cells (NaN elsewhere)."""
    return _stencil_for(u, drift=drift)(u)


def weighted_drift_laplacian(u, g):
    """L_g u = L u + <grad log g, grad u>."""
    return _stencil_for(u, g=g)(u)


def stability_operator(u, drift=True):
    """L u = (drift Laplacian) u + (|A|^2 + 1/2) u."""
    s = u.surface
    Lu = drift_laplacian(u, drift=drift)
    pot = s.norm_A_squared + 0.5
    vals = Lu.values + (pot[:, None] if u.kind == TENSOR else pot) * u.values
    if u.kind == TENSOR:
        vals = _mask_blocks(vals, s.signature)
    return u.like(vals)


def mean_curvature_field(surface):
    return scalar_field(surface, surface.mean_curvature)


def second_fundamental_form(surface):
    return tensor_field(surface, _mask_blocks(surface.kappa, surface.signature))


def _check_g(g, interior, g_min=G_MIN):
    bad = np.flatnonzero(interior & ~(np.abs(g) >= g_min))
    if len(bad):
        raise SurfaceError(f"|g| below g_min = {g_min:g} on {len(bad)} cells", bad)


def weighted_quotient_laplacian(tau, g, g_min=G_MIN):
    """Both sides of the quotient rule L_{g^2}(tau/g) = (g L tau - tau L g) / g^2."""
    s = tau.surface
    gv = np.asarray(g.values, dtype=float)
    st = build_stencil(s)
    _check_g(gv, st.interior, g_min)
    st2 = build_stencil(s, g=gv ** 2)
    q = tau.values / (gv[:, None] if tau.kind == TENSOR else gv)
    lhs = st2(tau.like(q))
    Lt = st(tau).values
    Lg = st.apply_scalar(gv, g.ghost)
    if tau.kind == TENSOR:
        rhs = (gv[:, None] * Lt - tau.values * Lg[:, None]) / gv[:, None] ** 2
        rhs = _mask_blocks(rhs, s.signature)
    else:
        rhs = (gv * Lt - tau.values * Lg) / gv ** 2
    return {"lhs": lhs, "rhs": tau.like(rhs)}


# -- gradients ----------------------------------------------------------------------


def profile_derivative(surface, values, ghost=(EVEN, EVEN)):
    """Centred d/ds with ghosts; NaN on cells next to free ends."""
    E = extend(surface, values, ghost)
    G = _ghosts(surface.profile, surface.closed, surface.ends)
    c = np.linalg.norm(np.diff(G, axis=0), axis=1)
    return (E[2:] - E[:-2]) / (c[:-1] + c[1:])


def _frame_terms(surface, B):
    """Connection components of grad B: sqrt(2)(u'/u)(b0 - b_p) and likewise for v."""
    sig = surface.signature
    T = surface.tangent
    with np.errstate(divide="ignore", invalid="ignore"):
        cu = T[:, 0] / surface.u if sig.p else np.zeros(surface.size)
        cv = T[:, 1] / surface.v if sig.q else np.zeros(surface.size)
    return cu * (B[:, 0] - B[:, 1]), cv * (B[:, 0] - B[:, 2])


def gradient_components(field):
    """Per-cell components of grad f whose weighted squares sum to |grad f|^2.

    Returns (values, multiplicities).  Scalars have one component; diagonal
    tensors have the three profile derivatives plus the two frame terms.
    """
    s = field.surface
    sig = s.signature
    if field.kind == SCALAR:
        d = profile_derivative(s, field.values, field.ghost)
        return d[:, None], np.array([1.0])
    B = _mask_blocks(field.values, sig)
    d = np.column_stack([profile_derivative(s, B[:, j]) for j in range(3)])
    fu, fv = _frame_terms(s, B)
    comps = np.column_stack([d, fu, fv])
    mult = np.array([1.0, sig.p, sig.q, 2.0 * sig.p, 2.0 * sig.q])
    return comps, mult


def gradient_norm_squared(field):
    comps, mult = gradient_components(field)
    return (comps ** 2) @ mult


def hessian_norm_squared(field):
    """|grad^2 f|^2 approximated by profile derivatives of the gradient components."""
    s = field.surface
    comps, mult = gradient_components(field)
    # derivatives of even fields are odd across mirrors
    dd = np.column_stack([profile_derivative(s, comps[:, j], (ODD, ODD)) for j in range(comps.shape[1])])
    return (dd ** 2) @ mult


def integration_by_parts(u, v, f=None):
    """Both sides of  sum (L_f u) v f rho dmu = - sum <grad u, grad v> f rho dmu."""
    s = u.surface
    fv = np.ones(s.size) if f is None else np.asarray(getattr(f, "values", f), dtype=float)
    st = build_stencil(s, g=fv)
    rho = np.exp(-s.radii ** 2 / 4) * s.area_weight * fv
    Lu = st.apply_scalar(u.values, u.ghost)
    du = profile_derivative(s, u.values, u.ghost)
    dv = profile_derivative(s, v.values, v.ghost)
    ok = st.interior
    lhs = float(np.sum((Lu * v.values * rho)[ok]))
    rhs = -float(np.sum((du * dv * rho)[ok]))
    return lhs, rhs


# -- identities ---------------------------------------------------------------------


def _shrinker_gate(surface, tol):
    res = shrinker_residual(surface).sup_norm()
    if res > tol:
        raise SurfaceError(f"not a shrinker: residual {res:.3g} exceeds {tol:.3g}")
    return res


def shape_quotient(surface):
    """tau = A / H as a tensor field (NaN where H = 0)."""
    H = surface.mean_curvature
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = surface.kappa / H[:, None]
    return tensor_field(surface, _mask_blocks(tau, surface.signature))


def simons_identity_check(surface, g_min=G_MIN, shrinker_tol=SHRINKER_TOL, drift=True):
    """Residuals of L_{H^2}(A/H) = 0 and L_{H^2}(|A|^2/H^2) = 2|grad(A/H)|^2."""
    _shrinker_gate(surface, shrinker_tol)
    H = surface.mean_curvature
    # reject small H before the H^2-weighted masses are formed
    _check_g(H, build_stencil(surface).interior, g_min)
    st = build_stencil(surface, g=H ** 2, drift=drift)
    tau = shape_quotient(surface)
    r1 = tau.like(st.apply_tensor(tau.values))
    q = surface.norm_A_squared / H ** 2
    r2 = st.apply_scalar(q) - 2 * gradient_norm_squared(tau)
    r2 = scalar_field(surface, r2)
    mask = st.interior
    return {
        "res1": r1.sup_norm(mask), "res1_l2": r1.l2_norm(mask),
        "res2": r2.sup_norm(mask), "res2_l2": r2.l2_norm(mask),
    }


def shrinker_identities(surface, shrinker_tol=SHRINKER_TOL, drift=True):
    """Sup norms of LH - H, LA - A (componentwise) and L|x|^2 - (2n - |x|^2) on interior cells.

    The last one is the one used as a negative control: it involves the
    drift term on any shrinker with x^T != 0.
    """
    _shrinker_gate(surface, shrinker_tol)
    Hf = mean_curvature_field(surface)
    A = second_fundamental_form(surface)
    st = build_stencil(surface, drift=drift)
    mask = st.interior
    LH = stability_operator(Hf, drift=drift) - Hf
    LA = stability_operator(A, drift=drift) - A
    r2 = surface.radii ** 2
    ghost = tuple(EVEN if e.kind in ("axis-u", "axis-v") or surface.closed else EXTRAPOLATE for e in surface.ends)
    Lx = st.apply_scalar(r2, ghost) - (2 * surface.n - r2)
    comp = np.max(np.abs(np.where(mask[:, None], LA.values, 0.0)), axis=0)
    return {
        "LH-H": LH.sup_norm(mask),
        "LA-A": float(np.max(comp)),
        "LA-A components": comp,
        "Lx2": float(np.nanmax(np.abs(Lx[mask]))),
    }


# -- estimates ----------------------------------------------------------------------


def effective_gradient_bound(surface, R, s, tol=1e-9):
    """Weighted |grad(A/H)|^2 H^2 on B_{R-s} against (4/s^2) sup|A|^2 Vol(B_R) e^{-(R-s)^2/4}."""
    if not 0 < s < R:
        raise ValueError("need 0 < s < R")
    ball = restrict_to_ball(surface, R)
    st = build_stencil(surface)
    inside = ball.active & st.interior
    H = surface.mean_curvature
    bad = np.flatnonzero(inside & ~(H > 0))
    if len(bad):
        raise SurfaceError("H must be positive on B_R", bad)
    tau = shape_quotient(surface)
    grad2 = gradient_norm_squared(tau)
    inner = restrict_to_ball(surface, R - s)
    keep = inner.active & st.interior
    w = inner.area_weight * np.exp(-surface.radii ** 2 / 4)
    lhs = float(np.sum((grad2 * H ** 2 * w)[keep]))
    supA = float(np.max(surface.norm_A_squared[ball.active])) if np.any(ball.active) else 0.0
    vol = float(np.sum(ball.area_weight))
    rhs = 4 / s ** 2 * supA * vol * math.exp(-((R - s) ** 2) / 4)
    return {"lhs": lhs, "rhs": rhs, "pass": lhs <= rhs + tol}


def tau_gradient_certificate(surface, R, delta0=0.1, C0=4.0, lambda0=None, C_tau=1.0):
    """eps_tau = sup over B_{R-2} of (|grad tau|^2 + R^-2 |grad^2 tau|^2)^(1/2), with its bound."""
    ball = restrict_to_ball(surface, R)
    st = build_stencil(surface)
    region = ball.active & st.interior
    H = surface.mean_curvature
    normA = np.sqrt(surface.norm_A_squared)
    for cond, what in ((H >= delta0, f"H >= delta0 = {delta0:g}"), (normA <= C0, f"|A| <= C0 = {C0:g}")):
        bad = np.flatnonzero(region & ~cond)
        if len(bad):
            raise SurfaceError(f"hypothesis {what} fails at cell {bad[0]}", bad[:1])
    tau = shape_quotient(surface)
    val = gradient_norm_squared(tau) + hessian_norm_squared(tau) / R ** 2
    inner = restrict_to_ball(surface, max(R - 2, 0.0) or 1e-300)
    keep = inner.active & st.interior & np.isfinite(val)
    eps = float(np.sqrt(np.max(val[keep]))) if np.any(keep) else 0.0
    bound = C_tau * R ** (2 * surface.n) * math.exp(-R / 4)
    return {"eps_tau": eps, "bound": bound, "pass": eps <= bound}


def observed_order(errors, ratio=2.0, floor=1e-12):
    """Convergence orders between successive refinements; None where both errors sit at the floor."""
    out = []
    for a, b in zip(errors[:-1], errors[1:]):
        if a <= floor and b <= floor:
            out.append(None)
        else:
            out.append(math.log(max(a, 1e-300) / max(b, 1e-300)) / math.log(ratio))
    return out
