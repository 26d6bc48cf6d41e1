"""Closed-form bubble fields, the linearization kernel, and symmetries.

Fields are small composable evaluators: a ``Field`` wraps a vectorized
function of point arrays of shape ``(..., N)`` and supports arithmetic, so
residuals and glued operators can be assembled once and then sampled at
arbitrary quadrature nodes.  All fields here are smooth on R^N (the
bubbles have no poles); the inversion transform is the only operation
with a restricted domain (y != 0).
"""

from __future__ import annotations

from math import gamma

import numpy as np

from .core import BubbleConfig, ProblemParams


class Field:
    """Scalar field on R^N evaluable on arrays of points.

    Calling a field with an array of shape ``(..., N)`` returns values of
    shape ``(...)``.  Fields are immutable and evaluation is pure.
    """

    __slots__ = ("_fn",)

    def __init__(self, fn):
        self._fn = fn

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        if pts.ndim == 1:
            return float(self._fn(pts[None, :])[0])
        return self._fn(pts)

    def __add__(self, other):
        other = as_field(other)
        return Field(lambda pts: self._fn(pts) + other._fn(pts))

    __radd__ = __add__

    def __sub__(self, other):
        other = as_field(other)
        return Field(lambda pts: self._fn(pts) - other._fn(pts))

    def __rsub__(self, other):
        other = as_field(other)
        return Field(lambda pts: other._fn(pts) - self._fn(pts))

    def __mul__(self, other):
        other = as_field(other)
        return Field(lambda pts: self._fn(pts) * other._fn(pts))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(lambda pts: -self._fn(pts))

    def __abs__(self):
        return Field(lambda pts: np.abs(self._fn(pts)))

    def __pow__(self, exponent: float):
        """Plain power; use signed_power for odd nonlinearities of signed fields."""
        return Field(lambda pts: self._fn(pts) ** exponent)


def as_field(obj) -> Field:
    if isinstance(obj, Field):
        return obj
    value = float(obj)
    return Field(lambda pts: np.full(pts.shape[:-1], value))


def signed_power(f: Field, exponent: float) -> Field:
    """sign(f) |f|^exponent, continuous through zeros of f."""

    def fn(pts):
        v = f._fn(pts)
        return np.sign(v) * np.abs(v) ** exponent

    return Field(fn)


def amplitude(params: ProblemParams) -> float:
    """Normalization making (-Delta)^s of the standard bubble equal its p-th power.

    The profile (1+|y|^2)^{-(N-2s)/2} is an eigenfunction of the multiplier
    operator up to the factor 2^{2s} Gamma((N+2s)/2) / Gamma((N-2s)/2);
    raising that factor to (N-2s)/(4s) turns it into the bubble amplitude.
    The grid-based calibration in the spectral module recovers this value
    and the two are cross-checked in the test suite.
    """
    N, s = params.N, params.s
    factor = 2.0 ** (2 * s) * gamma((N + 2 * s) / 2) / gamma((N - 2 * s) / 2)
    return factor ** ((N - 2 * s) / (4 * s))


def standard_bubble(params: ProblemParams, c: float | None = None) -> Field:
    """U(y) = c (1+|y|^2)^{-(N-2s)/2}, centered at the origin with unit scale."""
    beta = params.sobolev_decay / 2.0
    c = amplitude(params) if c is None else c
    return Field(lambda pts: c * (1.0 + (pts**2).sum(-1)) ** -beta)


def scaled_bubble(
    params: ProblemParams, mu: float, xi, c: float | None = None
) -> Field:
    """w_mu(y - xi) = mu^{-(N-2s)/2} U((y - xi)/mu), for any mu > 0 and center xi.

    Evaluated as c mu^{(N-2s)/2} (mu^2 + |y-xi|^2)^{-(N-2s)/2}, which stays
    accurate for concentration scales far below machine-representable
    offsets of the center.
    """
    beta = params.sobolev_decay / 2.0
    c = amplitude(params) if c is None else c
    xi = np.asarray(xi, dtype=float)
    pref = c * mu**beta

    def fn(pts):
        d2 = ((pts - xi) ** 2).sum(-1)
        return pref * (mu**2 + d2) ** -beta

    return Field(fn)


def ring_bubble(cfg: BubbleConfig, j: int, c: float | None = None) -> Field:
    """U_j = w_mu(. - xi_j) for the j-th ring center (1-based)."""
    if not 1 <= j <= cfg.k:
        raise IndexError(f"bubble index must lie in 1..{cfg.k}, got {j}")
    return scaled_bubble(cfg.params, cfg.mu, cfg.centers[j - 1], c=c)


def bubble_sum(cfg: BubbleConfig, c: float | None = None) -> Field:
    """Sum of the k ring bubbles, evaluated in one vectorized pass."""
    params = cfg.params
    beta = params.sobolev_decay / 2.0
    c = amplitude(params) if c is None else c
    mu, centers = cfg.mu, cfg.centers
    if cfg.k == 0:
        return as_field(0.0)
    pref = c * mu**beta

    def fn(pts):
        # (..., k) distances to every center
        d2 = ((pts[..., None, :] - centers) ** 2).sum(-1)
        return pref * ((mu**2 + d2) ** -beta).sum(-1)

    return Field(fn)


def kernel_field(params: ProblemParams, l: int, c: float | None = None) -> Field:
    """Element l of the (N+1)-dimensional kernel of the linearized operator.

    l = 1..N are the translation derivatives dU/dy_l; l = N+1 is the
    dilation derivative y . grad U + (N-2s)/2 U, with the closed form
    -c (N-2s)/2 (|y|^2 - 1)(1+|y|^2)^{-(N-2s)/2 - 1}.
    """
    N = params.N
    beta = params.sobolev_decay / 2.0
    c = amplitude(params) if c is None else c
    if not 1 <= l <= N + 1:
        raise IndexError(f"kernel index must lie in 1..{N + 1}, got {l}")
    if l <= N:

        def fn(pts):
            r2 = (pts**2).sum(-1)
            return -2.0 * beta * c * pts[..., l - 1] * (1.0 + r2) ** (-beta - 1)

    else:

        def fn(pts):
            r2 = (pts**2).sum(-1)
            return -beta * c * (r2 - 1.0) * (1.0 + r2) ** (-beta - 1)

    return Field(fn)


def kelvin_transform(
    field: Field, params: ProblemParams, covariant: bool = False
) -> Field:
    """Inversion y -> y/|y|^2 with weight |y|^{2s-N} (or |y|^{-(N+2s)}).

    The default exponent 2s-N is the transform under which the bubbles are
    invariant; ``covariant=True`` uses -(N+2s), the weight that residual-type
    quantities pick up.  Evaluation at the origin is rejected.
    """
    expo = -(params.N + 2 * params.s) if covariant else 2 * params.s - params.N

    def fn(pts):
        r2 = (pts**2).sum(-1)
        if np.any(r2 == 0.0):
            raise ValueError("Kelvin transform is undefined at y = 0")
        return r2 ** (expo / 2.0) * field._fn(pts / r2[..., None])

    return Field(fn)


def rotation_matrix(params: ProblemParams, angle: float) -> np.ndarray:
    """Rotation by ``angle`` in the (y1,y2)-plane, identity elsewhere."""
    R = np.eye(params.N)
    ca, sa = np.cos(angle), np.sin(angle)
    R[0, 0] = ca
    R[0, 1] = -sa
    R[1, 0] = sa
    R[1, 1] = ca
    return R


def symmetry_group(cfg: BubbleConfig) -> list[np.ndarray]:
    """Matrices of the group generated by the 2 pi / k rotation and the
    sign flips of y_2, ..., y_N.  For k = 0 only the flips remain."""
    N = cfg.params.N
    gens = []
    if cfg.k >= 1:
        gens.append(rotation_matrix(cfg.params, 2.0 * np.pi / cfg.k))
    for axis in range(1, N):
        F = np.eye(N)
        F[axis, axis] = -1.0
        gens.append(F)
    group = [np.eye(N)]
    frontier = list(group)
    while frontier:
        new = []
        for g in frontier:
            for h in gens:
                cand = h @ g
                if not any(np.allclose(cand, m, atol=1e-12) for m in group):
                    group.append(cand)
                    new.append(cand)
        frontier = new
    return group


def symmetry_orbit(cfg: BubbleConfig, y) -> np.ndarray:
    """Orbit of a point under the configuration's symmetry group.

    Returns an (m, N) array of distinct points; m divides 2^{N-1} k.
    """
    y = np.asarray(y, dtype=float)
    pts = np.array([g @ y for g in symmetry_group(cfg)])
    keep = []
    for p in pts:
        if not any(np.allclose(p, q, atol=1e-12) for q in keep):
            keep.append(p)
    return np.array(keep)
