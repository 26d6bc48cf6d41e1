"""Graded multi-region quadrature over R^3 for bubble-type integrands.

The integrands of interest concentrate at k points on a horizontal ring
(scale mu), vary on the inter-bubble scale 1/k near the ring, and decay
polynomially at infinity.  The scheme tiles R^3 exactly (up to measure
zero) with regions adapted to those scales:

* ``ball:j``     -- balls of radius eta/k around each center, geometric
                    radial panels down to a fraction of mu;
* ``annulus:j``  -- spherical shells from eta/k out to the separation
                    radius rho_c (a fixed fraction of half the minimal
                    center spacing);
* ``gusset``     -- the ring tube {dist(y, ring) <= rho_c} minus the
                    separation balls, in toroidal coordinates with exact
                    closed-form angular exclusion limits;
* ``shell``      -- the rest of |y| <= R_far in spherical coordinates whose
                    radial panels conform exactly to the tube boundary
                    r = rho sin(theta) +/- sqrt(rho_c^2 - rho^2 cos^2(theta));
* ``far``        -- |y| > R_far mapped through y -> y/|y|^2 onto a graded
                    near-origin mesh (nodes are stored pre-mapped, weights
                    carry the |z|^{-2N} Jacobian).

In symmetric mode the nodes cover one rotation wedge (ball, annulus and
gusset nodes of the first bubble only; shell and far nodes restricted to
azimuth in (-pi/k, pi/k]) and all weights carry the factor k.  This is
exact for integrands invariant under the 2 pi / k rotation.  Full mode
replicates the wedge around the ring and is valid for any integrand.

Accumulation is compensated: node values are reduced in fixed-size chunks
with exact summation of the chunk totals, so results are independent of
the number of evaluation threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .bubbles import Field, kernel_field
from .core import BubbleConfig, ProblemParams

_CHUNK = 131072


def thread_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("FRACBUBBLES_THREADS")
    return max(1, int(env)) if env else 1


# ---------------------------------------------------------------------------
# one-dimensional panel rules


def gauss_on_panels(breaks: np.ndarray, order: int):
    """Gauss-Legendre nodes/weights on consecutive panels between breaks."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    lo = np.asarray(breaks[:-1], dtype=float)
    hi = np.asarray(breaks[1:], dtype=float)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    nodes = (mid[:, None] + half[:, None] * xg).ravel()
    weights = (half[:, None] * wg).ravel()
    return nodes, weights


def geometric_breaks(lo: float, hi: float, ratio: float, lead_zero=False):
    """Breakpoints lo, lo*ratio, ... capped at hi (optionally prefixed by 0)."""
    if hi <= lo:
        raise ValueError(f"empty panel range [{lo}, {hi}]")
    pts = [lo]
    while pts[-1] * ratio < hi:
        pts.append(pts[-1] * ratio)
    pts.append(hi)
    if lead_zero:
        pts.insert(0, 0.0)
    return np.array(pts)


def sphere_nodes(n_polar: int, n_azimuth: int, phi_lo=0.0, phi_hi=2.0 * np.pi):
    """Product rule on the unit sphere: Gauss in cos(theta), uniform azimuth.

    Integrates smooth functions over the (partial) sphere; weights sum to
    (phi_hi - phi_lo) * 2.
    """
    u, wu = np.polynomial.legendre.leggauss(n_polar)
    width = phi_hi - phi_lo
    phi = phi_lo + width * (np.arange(n_azimuth) + 0.5) / n_azimuth
    wphi = width / n_azimuth
    U, PH = np.meshgrid(u, phi, indexing="ij")
    st = np.sqrt(np.clip(1.0 - U**2, 0.0, None))
    dirs = np.stack([st * np.cos(PH), st * np.sin(PH), U], axis=-1)
    w = np.repeat(wu[:, None], n_azimuth, axis=1) * wphi
    return dirs.reshape(-1, 3), w.ravel()


# ---------------------------------------------------------------------------
# scheme


@dataclass(frozen=True)
class Region:
    name: str
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class NormResult:
    value: float
    est_rel_error: float
    region_breakdown: dict
    converged: bool
    level: int


class QuadratureScheme:
    """Node/weight tiling of R^3 adapted to a bubble configuration.

    ``level`` controls panel gradation ratios and rule orders; ``variant``
    selects one of two deliberately different mesh families ("A"/"B") used
    for cross-mesh validation.  ``core_floor`` is the innermost radius of
    the per-bubble grading as a multiple of mu.
    """

    def __init__(
        self,
        cfg: BubbleConfig,
        level: int = 0,
        symmetric: bool = True,
        variant: str = "A",
        tol_rel: float = 1e-2,
        tol_abs: float = 1e-6,
        core_floor: float = 1e-2,
    ):
        if cfg.params.N != 3:
            raise NotImplementedError("quadrature schemes are built for N = 3")
        self.cfg = cfg
        self.params = cfg.params
        self.level = level
        self.symmetric = symmetric and cfg.k >= 1
        self.variant = variant
        self.tol_rel = tol_rel
        self.tol_abs = tol_abs
        self.core_floor = core_floor
        self.regions = _build_regions(self)
        self._refined = None

    # knobs -----------------------------------------------------------------
    @property
    def _ratio(self) -> float:
        base = {"A": (1.7, 1.45, 1.3, 1.22), "B": (1.55, 1.38, 1.27, 1.2)}[self.variant]
        return base[min(self.level, len(base) - 1)]

    @property
    def _order(self) -> int:
        return (4 if self.variant == "A" else 5) + 2 * self.level

    @property
    def _n_polar(self) -> int:
        return (8 if self.variant == "A" else 10) + 4 * self.level

    @property
    def _n_azimuth(self) -> int:
        return (12 if self.variant == "A" else 14) + 6 * self.level

    @property
    def _r_far(self) -> float:
        return 6.0 if self.variant == "A" else 8.0

    @property
    def _sep_factor(self) -> float:
        return 0.9 if self.variant == "A" else 0.72

    @property
    def separation_radius(self) -> float:
        cfg = self.cfg
        if cfg.k < 2:
            return 0.25
        half_min = cfg.ring_radius * np.sin(np.pi / cfg.k)
        return min(self._sep_factor * half_min, 0.25)

    def refined(self) -> "QuadratureScheme":
        if self._refined is None:
            self._refined = QuadratureScheme(
                self.cfg,
                level=self.level + 1,
                symmetric=self.symmetric,
                variant=self.variant,
                tol_rel=self.tol_rel,
                tol_abs=self.tol_abs,
                core_floor=self.core_floor,
            )
        return self._refined

    @property
    def node_count(self) -> int:
        return sum(len(r.weights) for r in self.regions)


def build_scheme(cfg: BubbleConfig, **kwargs) -> QuadratureScheme:
    return QuadratureScheme(cfg, **kwargs)


def _rotations(k: int):
    ang = 2.0 * np.pi * np.arange(k) / k
    mats = np.zeros((k, 3, 3))
    mats[:, 0, 0] = np.cos(ang)
    mats[:, 0, 1] = -np.sin(ang)
    mats[:, 1, 0] = np.sin(ang)
    mats[:, 1, 1] = np.cos(ang)
    mats[:, 2, 2] = 1.0
    return mats


def _build_regions(sch: QuadratureScheme) -> list:
    cfg = sch.cfg
    regions = []
    if cfg.k >= 1:
        regions += _bubble_regions(sch)
        regions.append(_gusset_region(sch))
    regions.append(_shell_region(sch))
    regions.append(_far_region(sch))
    return regions


def _bubble_regions(sch: QuadratureScheme) -> list:
    cfg = sch.cfg
    rho_c = sch.separation_radius
    r_ball = min(cfg.cutoff_radius, rho_c)
    r_in = min(sch.core_floor * cfg.mu, r_ball / 10.0) if cfg.mu > 0 else r_ball / 50.0
    ball_breaks = geometric_breaks(r_in, r_ball, sch._ratio, lead_zero=True)
    ann_breaks = geometric_breaks(r_ball, rho_c, sch._ratio)
    dirs, wd = sphere_nodes(max(6, sch._n_polar - 2), sch._n_azimuth)

    def spherical_patch(center, breaks):
        r, wr = gauss_on_panels(breaks, sch._order)
        pts = center[None, None, :] + r[:, None, None] * dirs[None, :, :]
        w = (wr * r**2)[:, None] * wd[None, :]
        return pts.reshape(-1, 3), w.ravel()

    regions = []
    indices = [0] if sch.symmetric else range(cfg.k)
    factor = cfg.k if sch.symmetric else 1
    for j in indices:
        pts, w = spherical_patch(cfg.centers[j], ball_breaks)
        regions.append(Region(f"ball:{j + 1}", pts, factor * w))
        pts, w = spherical_patch(cfg.centers[j], ann_breaks)
        regions.append(Region(f"annulus:{j + 1}", pts, factor * w))
    return regions


def _gusset_region(sch: QuadratureScheme) -> Region:
    """Ring tube minus the separation balls.

    Toroidal coordinates x = ((rho + t cos psi) cos a, (rho + t cos psi)
    sin a, t sin psi) with Jacobian t (rho + t cos psi).  For t < rho_c the
    azimuth interval |a| < a*(t, psi) lies inside the first separation
    ball, where sin^2(a*/2) = (rho_c^2 - t^2) / (4 rho (rho + t cos psi));
    the complement within the wedge is integrated with panels graded
    toward the excluded interval.
    """
    cfg = sch.cfg
    rho = cfg.ring_radius
    rho_c = sch.separation_radius
    k = cfg.k
    wedge = np.pi / k

    n_t = sch._order
    t_breaks = np.array([0.0, 0.25, 0.5, 0.75, 1.0]) * rho_c
    t_nodes, t_w = gauss_on_panels(t_breaks, n_t)
    n_psi = sch._n_azimuth
    psi = 2.0 * np.pi * (np.arange(n_psi) + 0.5) / n_psi
    w_psi = 2.0 * np.pi / n_psi

    pts_all, w_all = [], []
    for t, wt in zip(t_nodes, t_w):
        for ps in psi:
            arm = rho + t * np.cos(ps)
            z = t * np.sin(ps)
            jac = t * arm
            arg = (rho_c**2 - t**2) / (4.0 * rho * arm)
            a_star = 2.0 * np.arcsin(np.sqrt(max(arg, 0.0))) if arg > 0 else 0.0
            a_star = min(a_star, wedge)
            if a_star >= wedge:
                continue
            width = wedge - a_star
            a_breaks = a_star + width * np.array([0.0, 0.15, 0.45, 1.0])
            a_nodes, a_w = gauss_on_panels(a_breaks, sch._order)
            for sign in (1.0, -1.0):
                ang = sign * a_nodes
                pts = np.stack(
                    [arm * np.cos(ang), arm * np.sin(ang), np.full_like(ang, z)],
                    axis=-1,
                )
                pts_all.append(pts)
                w_all.append(a_w * jac * wt * w_psi)
    pts = np.concatenate(pts_all)
    w = np.concatenate(w_all)
    if sch.symmetric:
        return Region("gusset", pts, k * w)
    rot = _rotations(k)
    pts_full = (rot[:, None, :, :] @ pts[None, :, :, None])[..., 0].reshape(-1, 3)
    w_full = np.tile(w, k)
    return Region("gusset", pts_full, w_full)


def _shell_radial_breaks(sch, r_lo_cut, r_hi_cut):
    """Radial breakpoints on [0, r_far] conforming to a tube cut (if any)."""
    cfg = sch.cfg
    rho = cfg.ring_radius
    rho_c = sch.separation_radius
    r_far = sch._r_far
    coarse = np.array([0.0, 0.12, 0.3, 0.55, 0.8, 0.95, 1.05, 1.25, 1.6, 2.2, 3.2, 4.5, r_far]) * (
        rho if rho > 0 else 1.0
    )
    coarse = np.clip(coarse, 0.0, r_far)
    if r_lo_cut is None:
        return [np.unique(coarse)]
    # approach panels at scale rho_c on both sides of the cut
    steps = rho_c * np.array([4.0, 2.0, 1.0, 0.0])
    inner = np.concatenate([coarse[coarse < r_lo_cut - 4.5 * rho_c], r_lo_cut - steps])
    outer = np.concatenate([r_hi_cut + steps[::-1], coarse[coarse > r_hi_cut + 4.5 * rho_c]])
    return [np.unique(np.clip(inner, 0.0, r_far)), np.unique(np.clip(outer, 0.0, r_far))]


def _shell_region(sch: QuadratureScheme) -> Region:
    """|y| <= r_far minus the ring tube, in conforming spherical coordinates."""
    cfg = sch.cfg
    rho = cfg.ring_radius if cfg.k >= 1 else 0.0
    rho_c = sch.separation_radius if cfg.k >= 1 else 0.0
    wedge = np.pi / cfg.k if sch.symmetric else np.pi

    # polar panels graded toward the equator, with a break exactly at the
    # tube's polar shadow |cos(theta)| = rho_c/rho where the radial cut
    # appears with a square-root kink
    if cfg.k >= 1:
        w_edge = np.arcsin(min(rho_c / rho, 1.0))
        offs = [0.0, 0.5 * w_edge, w_edge]
        while offs[-1] < np.pi / 2 - 1e-12:
            offs.append(min(2.0 * offs[-1], np.pi / 2))
        thetas = np.pi / 2 - np.array(offs)
        th_breaks = np.unique(np.concatenate([thetas, np.pi - thetas]))
    else:
        th_breaks = np.linspace(0.0, np.pi, 7)
    u_breaks = np.cos(th_breaks)[::-1]
    u_nodes, u_w = gauss_on_panels(u_breaks, sch._order)

    n_phi = max(4, sch._n_azimuth // (cfg.k if sch.symmetric else 1))
    phi = -wedge + 2.0 * wedge * (np.arange(n_phi) + 0.5) / n_phi
    w_phi = 2.0 * wedge / n_phi

    pts_all, w_all = [], []
    for u, wu in zip(u_nodes, u_w):
        st = np.sqrt(1.0 - u**2)
        disc = rho_c**2 - rho**2 * u**2 if cfg.k >= 1 else -1.0
        if disc > 0:
            half = np.sqrt(disc)
            r_lo_cut = rho * st - half
            r_hi_cut = rho * st + half
            groups = _shell_radial_breaks(sch, r_lo_cut, r_hi_cut)
        else:
            groups = _shell_radial_breaks(sch, None, None)
        for breaks in groups:
            if len(breaks) < 2:
                continue
            r, wr = gauss_on_panels(breaks, sch._order)
            pts = np.stack(
                [
                    r[:, None] * st * np.cos(phi)[None, :],
                    r[:, None] * st * np.sin(phi)[None, :],
                    np.broadcast_to(r[:, None] * u, (len(r), n_phi)),
                ],
                axis=-1,
            )
            w = np.repeat((wr * r**2)[:, None] * (wu * w_phi), n_phi, axis=1)
            pts_all.append(pts.reshape(-1, 3))
            w_all.append(w.ravel())
    pts = np.concatenate(pts_all)
    w = np.concatenate(w_all)
    if sch.symmetric:
        w = cfg.k * w
    return Region("shell", pts, w)


def _far_region(sch: QuadratureScheme) -> Region:
    """|y| > r_far via the inversion z = y/|y|^2; nodes stored pre-mapped."""
    r_far = sch._r_far
    z_breaks = np.concatenate(
        [[0.0], geometric_breaks(1e-4 / r_far, 1.0 / r_far, 2.2)]
    )
    z, wz = gauss_on_panels(z_breaks, sch._order)
    dirs, wd = sphere_nodes(sch._n_polar, sch._n_azimuth)
    Z = z[:, None, None] * dirs[None, :, :]
    jac = (wz * z**2)[:, None] * wd[None, :] * (z ** (-6.0))[:, None]
    Y = Z / (z**2)[:, None, None]
    return Region("far", Y.reshape(-1, 3), jac.ravel())


# ---------------------------------------------------------------------------
# integration


def _region_sum(fn, region: Region, threads: int) -> float:
    pts, w = region.nodes, region.weights
    chunks = range(0, len(w), _CHUNK)

    def one(i):
        return float(np.dot(w[i : i + _CHUNK], fn(pts[i : i + _CHUNK])))

    if threads > 1 and len(w) > _CHUNK:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(one, chunks))
    else:
        parts = [one(i) for i in chunks]
    return math.fsum(parts)


def integrate(fn, scheme: QuadratureScheme, threads: int | None = None):
    """Integral of fn over R^3 with per-region breakdown.

    ``fn`` may be a Field or any callable mapping (m,3) arrays to (m,)
    values.  Symmetric schemes require fn to be invariant under the
    configuration's ring rotation.
    """
    nthreads = thread_count(threads)
    call = fn._fn if isinstance(fn, Field) else fn
    breakdown = {}
    for region in scheme.regions:
        breakdown[region.name] = breakdown.get(region.name, 0.0) + _region_sum(
            call, region, nthreads
        )
    return math.fsum(breakdown.values()), breakdown


def integrate_with_error(fn, scheme: QuadratureScheme, threads: int | None = None):
    """Integral at the scheme level and its refinement; returns
    (refined value, richardson error estimate, refined breakdown)."""
    v0, _ = integrate(fn, scheme, threads)
    v1, breakdown = integrate(fn, scheme.refined(), threads)
    denom = max(abs(v1), 1e-300)
    return v1, abs(v1 - v0) / denom, breakdown


# ---------------------------------------------------------------------------
# weighted norms and projections


def lq_weight_exponent(params: ProblemParams) -> float:
    return params.N + 2.0 * params.s - 2.0 * params.N / params.q


def _lq_integrand(h, params: ProblemParams):
    a = lq_weight_exponent(params)
    q = params.q
    call = h._fn if isinstance(h, Field) else h

    def fn(pts):
        r = np.sqrt((pts**2).sum(-1))
        return np.abs((1.0 + r) ** a * call(pts)) ** q

    return fn


def _select(breakdown: dict, region: str) -> float:
    if region == "all":
        keys = breakdown
    elif region == "exterior":
        keys = [k for k in breakdown if not k.startswith("ball:")]
    elif region == "interior":
        keys = [k for k in breakdown if k.startswith("ball:")]
    else:
        raise ValueError(f"unknown region selector {region!r}")
    return math.fsum(breakdown[k] for k in keys)


def weighted_lq_norm(
    h,
    params: ProblemParams,
    scheme: QuadratureScheme,
    region: str = "all",
    threads: int | None = None,
) -> NormResult:
    """|| (1+|y|)^{N+2s-2N/q} h ||_{L^q} with a two-level error estimate.

    ``region`` restricts the reported norm to a subset of the tiling:
    "all" (the full space), "exterior" (everything outside the eta/k
    bubble balls) or "interior" (the balls alone).  The region breakdown
    of the raw q-th-power integral is attached either way.
    """
    fn = _lq_integrand(h, params)
    q = params.q
    _, b0 = integrate(fn, scheme, threads)
    _, b1 = integrate(fn, scheme.refined(), threads)
    raw0, raw1 = _select(b0, region), _select(b1, region)
    v0, v1 = raw0 ** (1.0 / q), raw1 ** (1.0 / q)
    err = abs(v1 - v0) / max(abs(v1), 1e-300)
    return NormResult(
        value=v1,
        est_rel_error=err,
        region_breakdown=b1,
        converged=bool(err <= scheme.tol_rel),
        level=scheme.level + 1,
    )


def kernel_projection(
    h,
    l: int,
    params: ProblemParams,
    scheme: QuadratureScheme,
    c: float | None = None,
    threads: int | None = None,
):
    """Integral of h against the l-th kernel field, with error estimate.

    The far-field contribution converges only when h decays at least like
    |y|^{-(N+2s)}; a far-dominated result is flagged.
    """
    v = kernel_field(params, l, c=c)
    call = h._fn if isinstance(h, Field) else h
    fn = Field(lambda pts: call(pts) * v._fn(pts))
    value, est, breakdown = integrate_with_error(fn, scheme, threads)
    scale = math.fsum(abs(x) for x in breakdown.values())
    far_fraction = abs(breakdown.get("far", 0.0)) / max(scale, 1e-300)
    return value, est, far_fraction


def weighted_sup_norm(
    phi,
    params: ProblemParams,
    cfg: BubbleConfig | None = None,
    n_dirs: int = 48,
    n_radii: int = 160,
    polish_iters: int = 60,
) -> float:
    """sup (1+|y|)^{N-2s} |phi(y)| by structured sampling plus ray polish.

    Candidates: log-spaced radii along a spread of directions, the bubble
    centers with a scan across the concentration scale, and golden-section
    refinement along the most promising rays.  The result is a certified
    lower bound that converges from below as the budget grows.
    """
    a = params.sobolev_decay
    call = phi._fn if isinstance(phi, Field) else phi

    def weighted(pts):
        r = np.sqrt((pts**2).sum(-1))
        return (1.0 + r) ** a * np.abs(call(pts))

    rng = np.random.default_rng(7)
    dirs = rng.standard_normal((n_dirs, params.N))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    extra = np.zeros((2 * params.N, params.N))
    for i in range(params.N):
        extra[2 * i, i] = 1.0
        extra[2 * i + 1, i] = -1.0
    dirs = np.concatenate([dirs, extra])
    radii = np.geomspace(1e-3, 1e3, n_radii)
    best = 0.0
    best_ray = None
    for d in dirs:
        pts = radii[:, None] * d
        vals = weighted(pts)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, best_ray = vals[i], (d, radii[max(i - 1, 0)], radii[min(i + 1, len(radii) - 1)])
    if cfg is not None and cfg.k >= 1:
        for xi in cfg.centers:
            d = xi / np.linalg.norm(xi)
            r0 = np.linalg.norm(xi)
            scales = np.concatenate([[0.0], np.geomspace(max(cfg.mu, 1e-14) * 1e-2, 5 * cfg.cutoff_radius, 40)])
            for sgn in (1.0, -1.0):
                pts = (r0 + sgn * scales)[:, None] * d
                vals = weighted(pts)
                i = int(np.argmax(vals))
                if vals[i] > best:
                    lo = r0 + sgn * scales[max(i - 1, 0)]
                    hi = r0 + sgn * scales[min(i + 1, len(scales) - 1)]
                    best, best_ray = vals[i], (d, min(lo, hi), max(lo, hi))
    if best_ray is not None:
        d, lo, hi = best_ray
        gr = (np.sqrt(5.0) - 1.0) / 2.0
        x1, x2 = hi - gr * (hi - lo), lo + gr * (hi - lo)
        f1, f2 = weighted(np.array([x1 * d]))[0], weighted(np.array([x2 * d]))[0]
        for _ in range(polish_iters):
            if f1 < f2:
                lo, x1, f1 = x1, x2, f2
                x2 = lo + gr * (hi - lo)
                f2 = weighted(np.array([x2 * d]))[0]
            else:
                hi, x2, f2 = x2, x1, f1
                x1 = hi - gr * (hi - lo)
                f1 = weighted(np.array([x1 * d]))[0]
        best = max(best, f1, f2)
    return float(best)
