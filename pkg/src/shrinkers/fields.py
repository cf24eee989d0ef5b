"""Scalar and symmetric-tensor data attached to the cells of a surface."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCALAR = "scalar"
TENSOR = "tensor"

# ghost policies used when a stencil reaches past a mirrored end
EVEN = "even"
ODD = "odd"
EXTRAPOLATE = "extrapolate"


@dataclass(frozen=True, eq=False)
class FieldOnSurface:
    """Per-cell values on a :class:`DiscreteHypersurface`.

    Tensor fields are rotation invariant, hence diagonal in the principal
    frame; they are stored as (N, 3) arrays of (profile, S^p block, S^q block)
    components.  Cells where a value is undefined hold NaN.
    """

    values: np.ndarray
    surface: object
    kind: str = SCALAR
    ghost: tuple = (EVEN, EVEN)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        N = self.surface.size
        expect = (N,) if self.kind == SCALAR else (N, 3)
        if vals.shape != expect:
            raise ValueError(f"{self.kind} field needs shape {expect}, got {vals.shape}")

    def __len__(self):
        return len(self.values)

    def like(self, values, kind=None, ghost=None):
        return FieldOnSurface(values, self.surface, kind or self.kind, ghost or self.ghost)

    def pointwise_norm(self):
        """|f| per cell; tensor norms count block multiplicities."""
        if self.kind == SCALAR:
            return np.abs(self.values)
        m = self.surface.signature.multiplicities
        return np.sqrt((self.values ** 2) @ m)

    def _mask(self, mask):
        ok = np.isfinite(self.pointwise_norm()) & self.surface.active
        return ok if mask is None else ok & mask

    def sup_norm(self, mask=None):
        vals = self.pointwise_norm()[self._mask(mask)]
        return float(np.max(vals)) if len(vals) else 0.0

    def l2_norm(self, mask=None):
        """Gaussian-weighted L^2 norm, normalized like F_{0,1}."""
        s = self.surface
        ok = self._mask(mask)
        w = s.area_weight * np.exp(-s.radii ** 2 / 4) * (4 * np.pi) ** (-s.n / 2)
        return float(np.sqrt(np.sum(w[ok] * self.pointwise_norm()[ok] ** 2)))

    def __sub__(self, other):
        b = other.values if isinstance(other, FieldOnSurface) else other
        return self.like(self.values - b)

    def __add__(self, other):
        b = other.values if isinstance(other, FieldOnSurface) else other
        return self.like(self.values + b)


def scalar_field(surface, values, ghost=(EVEN, EVEN)):
    return FieldOnSurface(np.broadcast_to(np.asarray(values, float), (surface.size,)), surface, SCALAR, ghost)


def tensor_field(surface, values):
    return FieldOnSurface(values, surface, TENSOR)
