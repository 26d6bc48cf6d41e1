"""Problem parameters, bubble configurations, and the circle geometry.

Everything downstream works with two small frozen dataclasses:

* ``ProblemParams`` -- dimension N >= 3, fractional order s in (0,1), the
  critical exponents p = (N+2s)/(N-2s) and 2N/(N-2s), and the weight
  exponent q used by the weighted L^q residual norm.
* ``BubbleConfig`` -- bubble count k, scale parameter delta, the derived
  concentration mu = delta^{2/(N-2s)} k^{-3}, and the k centers placed on
  the circle of radius sqrt(1-mu^2) in the (y1,y2)-plane.  The radius is
  tied to mu so that every ring bubble is invariant under the inversion
  y -> y/|y|^2 (see bubbles.kelvin_transform).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_ETA = 0.1
# Weight exponent pinned for the reference case (N,s)=(3,1/2); the admissible
# interval is (N/(2s), N/s) and any interior value works.
DEFAULT_Q = 4.0


@dataclass(frozen=True)
class ProblemParams:
    """Dimension, fractional order, and derived critical exponents."""

    N: int = 3
    s: float = 0.5
    q: float = DEFAULT_Q

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise ValueError(f"N must be an integer >= 3, got {self.N}")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0,1), got {self.s}")
        lo, hi = self.q_interval
        if not lo < self.q < hi:
            raise ValueError(f"q outside (N/2s, N/s) = ({lo:g}, {hi:g}): q={self.q}")

    @property
    def two_star(self) -> float:
        return 2.0 * self.N / (self.N - 2.0 * self.s)

    @property
    def p(self) -> float:
        return self.two_star - 1.0

    @property
    def q_interval(self) -> tuple[float, float]:
        return self.N / (2.0 * self.s), self.N / self.s

    @property
    def sobolev_decay(self) -> float:
        """Exponent N-2s governing bubble decay and the sup-norm weight."""
        return self.N - 2.0 * self.s


@dataclass(frozen=True)
class BubbleConfig:
    """A ring of k shrunk bubbles compatible with the inversion symmetry."""

    params: ProblemParams
    k: int
    delta: float
    eta: float = DEFAULT_ETA
    mu: float = field(init=False)
    centers: np.ndarray = field(init=False)  # shape (k, N)

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"k must be a nonnegative integer, got {self.k}")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must lie in (0,1), got {self.eta}")
        p = self.params
        if self.k == 0:
            mu = 0.0
            centers = np.zeros((0, p.N))
        else:
            mu = self.delta ** (2.0 / p.sobolev_decay) * float(self.k) ** -3
            if mu >= 1.0:
                raise ValueError(
                    f"concentration mu = {mu:g} >= 1: delta={self.delta:g} too "
                    f"large for k={self.k}"
                )
            centers = ring_centers(p.N, self.k, mu)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "centers", centers)
        self.centers.setflags(write=False)

    @property
    def cutoff_radius(self) -> float:
        """Radius eta/k of the per-bubble cutoff balls."""
        if self.k == 0:
            return np.inf
        return self.eta / self.k

    @property
    def ring_radius(self) -> float:
        return float(np.sqrt(1.0 - self.mu**2))


def ring_centers(N: int, k: int, mu: float) -> np.ndarray:
    """k points on the circle of radius sqrt(1-mu^2) in the (y1,y2)-plane."""
    ang = 2.0 * np.pi * np.arange(k) / k
    rho = np.sqrt(1.0 - mu**2)
    xs = np.zeros((k, N))
    xs[:, 0] = rho * np.cos(ang)
    xs[:, 1] = rho * np.sin(ang)
    return xs


def make_config(
    params: ProblemParams,
    k: int,
    delta: float = 1.0,
    eta: float = DEFAULT_ETA,
) -> BubbleConfig:
    """Build a bubble ring configuration; rejects parameters with mu >= 1.

    k = 0 is allowed and yields the empty ring (the ansatz degenerates to
    the single positive bubble).
    """
    return BubbleConfig(params=params, k=k, delta=delta, eta=eta)


def pairwise_center_distance(cfg: BubbleConfig, i: int, j: int) -> float:
    """Chord distance |xi_i - xi_j| = 2 sqrt(1-mu^2) sin(pi |i-j| / k).

    Indices are 1-based to match the j = 1..k labelling of the centers.
    """
    if not (1 <= i <= cfg.k and 1 <= j <= cfg.k):
        raise IndexError(f"center indices must lie in 1..{cfg.k}, got ({i}, {j})")
    if i == j:
        raise IndexError("pairwise distance requires two distinct centers")
    return 2.0 * cfg.ring_radius * abs(np.sin(np.pi * (i - j) / cfg.k))


def load_config(source) -> BubbleConfig:
    """Read a configuration from a JSON file path, file object, or dict.

    Recognized keys: N, s, q, k, delta, eta.  Omitted q and eta fall back
    to the package defaults.
    """
    if isinstance(source, dict):
        doc = dict(source)
    elif hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source) as fh:
            doc = json.load(fh)
    known = {"N", "s", "q", "k", "delta", "eta"}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    params = ProblemParams(
        N=doc.get("N", 3), s=doc.get("s", 0.5), q=doc.get("q", DEFAULT_Q)
    )
    return make_config(
        params,
        k=doc.get("k", 8),
        delta=doc.get("delta", 1.0),
        eta=doc.get("eta", DEFAULT_ETA),
    )
