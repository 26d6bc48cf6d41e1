"""The k-bubble ansatz, its closed-form residual, cutoffs, and glued operators.

The ansatz is U* = U - sum_j U_j: one positive bubble at the origin minus k
shrunk bubbles on the ring.  Because every individual bubble solves the
equation exactly and the operator is linear, the residual of U* reduces to
pure nonlinear-interaction algebra with no differentiation:

    E = U^p - sum_j U_j^p - |U*|^{p-1} U*.

Signed powers with non-integer exponent are evaluated as sign(v) |v|^p,
which is continuous through sign changes of U*.
"""

from __future__ import annotations

import numpy as np

from .bubbles import (
    Field,
    amplitude,
    as_field,
    bubble_sum,
    ring_bubble,
    signed_power,
    standard_bubble,
)
from .core import BubbleConfig


class Ansatz:
    """U* = U - sum_j U_j together with its residual and building blocks."""

    def __init__(self, cfg: BubbleConfig, c: float | None = None):
        self.cfg = cfg
        self.params = cfg.params
        self.c = amplitude(cfg.params) if c is None else c
        self.central = standard_bubble(cfg.params, c=self.c)
        self.ring_sum = bubble_sum(cfg, c=self.c)
        self.field = self.central - self.ring_sum

    def __call__(self, pts):
        return self.field(pts)

    def residual(self) -> Field:
        """Closed form of (-Delta)^s U* - |U*|^{p-1} U*.

        Assembled in a single vectorized pass so that the large cancelling
        terms near the bubble cores are combined at full precision.
        """
        params, cfg, c = self.params, self.cfg, self.c
        p = params.p
        beta = params.sobolev_decay / 2.0
        mu, centers = cfg.mu, cfg.centers
        pref = c * mu**beta

        def fn(pts):
            r2 = (pts**2).sum(-1)
            central = c * (1.0 + r2) ** -beta
            if cfg.k == 0:
                star = central
            else:
                d2 = ((pts[..., None, :] - centers) ** 2).sum(-1)
                bubbles = pref * (mu**2 + d2) ** -beta
                ring_p = (bubbles**p).sum(-1)
                star = central - bubbles.sum(-1)
            out = central**p - np.sign(star) * np.abs(star) ** p
            if cfg.k != 0:
                out -= ring_p
            return out

        return Field(fn)

    def linear_potential(self) -> Field:
        """p |U*|^{p-1}, the potential of the linearization at the ansatz."""
        p = self.params.p
        return as_field(self.params.p) * abs(self.field) ** (p - 1.0)


def nonlinear_remainder(ansatz: Ansatz, phi: Field) -> Field:
    """N(phi) = |U*+phi|^{p-1}(U*+phi) - |U*|^{p-1}U* - p|U*|^{p-1} phi."""
    p = ansatz.params.p
    base = ansatz.field

    def fn(pts):
        u = base._fn(pts)
        v = phi._fn(pts)
        w = u + v
        return (
            np.sign(w) * np.abs(w) ** p
            - np.sign(u) * np.abs(u) ** p
            - p * np.abs(u) ** (p - 1.0) * v
        )

    return Field(fn)


def _smoothstep(t):
    """Quintic ramp: 0 at t<=0, 1 at t>=1, C^2 monotone in between."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def cutoff_profile(t):
    """Radial profile: 1 on [0, 1/2], smooth decay on [1/2, 1], 0 beyond."""
    t = np.asarray(t, dtype=float)
    return 1.0 - _smoothstep(2.0 * t - 1.0)


def bubble_cutoff(cfg: BubbleConfig, j: int) -> Field:
    """Cutoff zeta_j: 1 inside |y-xi_j| < eta/(2k), 0 outside |y-xi_j| > eta/k,
    with the argument replaced by its inversion image for |y| >= 1.

    Using the inverted distance on {|y| >= 1} makes zeta_j(y) = zeta_j(y/|y|^2)
    hold identically, so cutoffs commute with the Kelvin symmetry of the
    glued system.  The support is the eta/k ball around xi_j together with
    its inversion image (both concentrate at xi_j as eta/k and mu shrink).
    """
    if not 1 <= j <= cfg.k:
        raise IndexError(f"cutoff index must lie in 1..{cfg.k}, got {j}")
    xi = cfg.centers[j - 1]
    scale = cfg.k / cfg.eta

    def fn(pts):
        r2 = (pts**2).sum(-1)
        d_plain = np.sqrt(((pts - xi) ** 2).sum(-1))
        safe = np.maximum(r2, 1e-300)
        inv = pts / safe[..., None]
        d_inv = np.sqrt(((inv - xi) ** 2).sum(-1))
        d = np.where(r2 >= 1.0, d_inv, d_plain)
        return cutoff_profile(scale * d)

    return Field(fn)


def cutoff_sum(cfg: BubbleConfig) -> Field:
    total = as_field(0.0)
    for j in range(1, cfg.k + 1):
        total = total + bubble_cutoff(cfg, j)
    return total


class GluedOperators:
    """Potentials and remainder pieces of the glued outer equation.

    V1 lives where no cutoff is active (exterior region), V2 inside the
    cutoff balls; M1 and M2 are the linear and residual source terms and
    M3 wraps the nonlinear remainder of a candidate correction.
    """

    def __init__(self, ansatz: Ansatz):
        self.ansatz = ansatz
        cfg, params = ansatz.cfg, ansatz.params
        p = params.p
        zsum = cutoff_sum(cfg)
        self.cutoffs = [bubble_cutoff(cfg, j) for j in range(1, cfg.k + 1)]
        self.cutoff_sum = zsum
        U = ansatz.central
        pot_star = abs(ansatz.field) ** (p - 1.0)
        pot_central = U ** (p - 1.0)
        self.V1 = as_field(-p) * (pot_star - pot_central) * (as_field(1.0) - zsum)
        self.V2 = as_field(p) * pot_central * zsum
        self._pot_star = pot_star
        self._one_minus = as_field(1.0) - zsum

    def M1(self, phi_tilde: list[Field]) -> Field:
        """-p |U*|^{p-1} sum_j (1 - zeta_j) phi_j for bubble-local corrections."""
        p = self.ansatz.params.p
        acc = as_field(0.0)
        for zeta_j, phi_j in zip(self.cutoffs, phi_tilde):
            acc = acc + (as_field(1.0) - zeta_j) * phi_j
        return as_field(-p) * self._pot_star * acc

    def M2(self) -> Field:
        """(1 - sum_j zeta_j) E: the residual source seen by the outer piece."""
        return self._one_minus * self.ansatz.residual()

    def M3(self, phi_total: Field, psi: Field) -> Field:
        """-(1 - sum_j zeta_j) N(phi_total + psi)."""
        return -self._one_minus * nonlinear_remainder(self.ansatz, phi_total + psi)

    def M(self, phi_tilde: list[Field], psi: Field) -> Field:
        phi_total = as_field(0.0)
        for phi_j in phi_tilde:
            phi_total = phi_total + phi_j
        return self.M1(phi_tilde) + self.M2() + self.M3(phi_total, psi)


def glued_potentials(ansatz: Ansatz) -> GluedOperators:
    return GluedOperators(ansatz)


def local_source_split(
    ansatz: Ansatz, phi_tilde: list[Field], psi: Field
) -> list[Field]:
    """Five-term split of the source driving the first bubble's local equation.

    Diagnostic decomposition: cutoff-weighted potential mismatch acting on
    phi_1, the complementary potential term, the outer-coupling term, the
    cutoff nonlinear remainder, and the cutoff residual.  Their sum is the
    full local source.
    """
    cfg, params = ansatz.cfg, ansatz.params
    p = params.p
    zeta1 = bubble_cutoff(cfg, 1)
    one = as_field(1.0)
    U1 = ring_bubble(cfg, 1, c=ansatz.c)
    pot_star = abs(ansatz.field) ** (p - 1.0)
    phi1 = phi_tilde[0]
    phi_total = as_field(0.0)
    for phi_j in phi_tilde:
        phi_total = phi_total + phi_j
    f1 = as_field(p) * zeta1 * (U1 ** (p - 1.0) - pot_star) * phi1
    f2 = as_field(p) * (one - zeta1) * U1 ** (p - 1.0) * phi1
    f3 = as_field(-p) * zeta1 * pot_star * psi
    f4 = -zeta1 * nonlinear_remainder(ansatz, phi_total + psi)
    f5 = zeta1 * ansatz.residual()
    return [f1, f2, f3, f4, f5]
