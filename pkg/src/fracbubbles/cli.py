"""Experiment runner: decay studies, invariance suites, reduction solves,
grid refinements and operator oracles, emitting CSV artifacts.

One experiment per invocation.  Specs come from a JSON file (--config) or
flags; flags override file values, and FRACBUBBLES_THREADS overrides
--threads.  Every CSV starts with a provenance comment line carrying the
fully resolved spec, then an RFC-4180 header+body with scientific-notation
values at 17 significant digits.

Exit codes: 0 success, 2 tolerance failure, 3 configuration error,
4 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import quadrature as quad
from . import reduction as red
from . import spectral as sp
from .ansatz import Ansatz, bubble_cutoff
from .bubbles import kelvin_transform, scaled_bubble, standard_bubble, symmetry_group
from .core import DEFAULT_ETA, DEFAULT_Q, BubbleConfig, ProblemParams, make_config

KINDS = ("decay", "invariance", "reduction", "refine", "oracle")

EXIT_OK = 0
EXIT_TOLERANCE = 2
EXIT_CONFIG = 3
EXIT_NONCONVERGED = 4


@dataclass
class ExperimentSpec:
    kind: str
    params: ProblemParams = field(default_factory=ProblemParams)
    k_list: tuple = (8, 16)
    delta: float = 1.0
    deltas: tuple = (3.0, 6.0, 12.0)
    eta: float = DEFAULT_ETA
    grid_n: int = 128
    grid_L: float = 16.0
    level: int = 0
    tol: float = 1e-2
    threads: int = 1
    scaling: str = "standard"  # or "balanced" (reduction/refine regime)
    out: str = "experiment.csv"

    def validate(self):
        if self.kind not in KINDS:
            raise SpecError(f"kind: must be one of {KINDS}, got {self.kind!r}")
        if any(b <= a for a, b in zip(self.k_list, self.k_list[1:])):
            raise SpecError("k_list: values must be strictly increasing")
        if any(int(k) != k or k < 1 for k in self.k_list):
            raise SpecError("k_list: values must be positive integers")
        if self.scaling not in ("standard", "balanced"):
            raise SpecError(f"scaling: unknown value {self.scaling!r}")
        if self.delta <= 0:
            raise SpecError("delta: must be positive")
        return self

    def resolved(self) -> dict:
        return {
            "kind": self.kind,
            "N": self.params.N,
            "s": self.params.s,
            "q": self.params.q,
            "k_list": list(self.k_list),
            "delta": self.delta,
            "deltas": list(self.deltas),
            "eta": self.eta,
            "grid_n": self.grid_n,
            "grid_L": self.grid_L,
            "level": self.level,
            "tol": self.tol,
            "threads": self.threads,
            "scaling": self.scaling,
            "out": self.out,
        }


class SpecError(ValueError):
    pass


def parse_config(source) -> ExperimentSpec:
    """Build a validated spec from a JSON file path, file object, or dict."""
    if isinstance(source, dict):
        doc = dict(source)
    elif hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source) as fh:
            doc = json.load(fh)
    known = {
        "kind", "N", "s", "q", "k_list", "k", "delta", "deltas", "eta",
        "grid_n", "grid_L", "level", "tol", "threads", "scaling", "out",
    }
    unknown = sorted(set(doc) - known)
    if unknown:
        raise SpecError(f"{unknown[0]}: unknown configuration key")
    if "kind" not in doc:
        raise SpecError("kind: required key missing")
    try:
        params = ProblemParams(
            N=doc.get("N", 3), s=doc.get("s", 0.5), q=doc.get("q", DEFAULT_Q)
        )
    except ValueError as exc:
        raise SpecError(f"q: {exc}") from exc
    k_list = doc.get("k_list")
    if k_list is None:
        k_list = [doc.get("k", 8)]
    spec = ExperimentSpec(
        kind=doc["kind"],
        params=params,
        k_list=tuple(k_list),
        delta=doc.get("delta", 1.0),
        deltas=tuple(doc.get("deltas", (3.0, 6.0, 12.0))),
        eta=doc.get("eta", DEFAULT_ETA),
        grid_n=doc.get("grid_n", 128),
        grid_L=doc.get("grid_L", 16.0),
        level=doc.get("level", 0),
        tol=doc.get("tol", 1e-2),
        threads=doc.get("threads", 1),
        scaling=doc.get("scaling", "standard"),
        out=doc.get("out", "experiment.csv"),
    )
    return spec.validate()


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.16e}"
    return str(x)


class CsvSink:
    """CSV writer with a provenance comment line and failure markers."""

    def __init__(self, path: str, spec: ExperimentSpec, header: list):
        self.path = path
        self.fh = open(path, "w", newline="")
        self.fh.write("# spec " + json.dumps(spec.resolved(), sort_keys=True) + "\r\n")
        self.writer = csv.writer(self.fh)
        self.writer.writerow(header)
        self.fh.flush()

    def row(self, values):
        self.writer.writerow([_fmt(v) for v in values])
        self.fh.flush()

    def fail(self, reason: str):
        self.fh.write("# FAILED " + reason.replace("\n", " ") + "\r\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


def _config_for(spec: ExperimentSpec, k: int, delta: float) -> BubbleConfig:
    if spec.scaling == "balanced":
        return red.balanced_config(spec.params, k, delta, eta=spec.eta)
    return make_config(spec.params, k, delta, eta=spec.eta)


# ---------------------------------------------------------------------------
# experiment bodies


def run_decay(spec: ExperimentSpec, sink: CsvSink) -> int:
    params = spec.params
    prev = None
    worst = EXIT_OK
    values = []
    for k in spec.k_list:
        cfg = _config_for(spec, int(k), spec.delta)
        E = Ansatz(cfg).residual()
        scheme = quad.QuadratureScheme(cfg, level=spec.level, tol_rel=spec.tol)
        res_ext = quad.weighted_lq_norm(E, params, scheme, region="exterior",
                                        threads=spec.threads)
        res_full = quad.weighted_lq_norm(E, params, scheme, region="all",
                                         threads=spec.threads)
        core = _core_rescaled_norm(cfg, E)
        ratio = res_ext.value / prev if prev else float("nan")
        slope = np.log2(ratio) if prev else float("nan")
        sink.row([k, res_ext.value, res_ext.est_rel_error, ratio, slope,
                  res_full.value, core])
        values.append(res_ext)
        prev = res_ext.value
        if not np.isfinite(res_ext.value):
            worst = max(worst, EXIT_NONCONVERGED)
        elif res_ext.est_rel_error > spec.tol:
            worst = max(worst, EXIT_TOLERANCE)
    return worst


def _core_rescaled_norm(cfg: BubbleConfig, E) -> float:
    """Weighted q-norm of the first-bubble residual in concentration units."""
    params = cfg.params
    a = quad.lq_weight_exponent(params)
    q = params.q
    mu, xi1 = cfg.mu, cfg.centers[0]
    expo = (params.N + 2.0 * params.s) / 2.0
    R = cfg.cutoff_radius / mu

    def fn(y):
        x = xi1 + mu * y
        r = np.sqrt((y**2).sum(-1))
        return np.abs((1.0 + r) ** a * mu**expo * E._fn(x)) ** q

    breaks = np.concatenate([[0.0], np.geomspace(1e-2, R, 50)])
    r, wr = quad.gauss_on_panels(breaks, 6)
    dirs, wd = quad.sphere_nodes(10, 16)
    pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    w = ((wr * r**2)[:, None] * wd[None, :]).ravel()
    return float(np.dot(w, fn(pts))) ** (1.0 / q)


def run_invariance(spec: ExperimentSpec, sink: CsvSink) -> int:
    params = spec.params
    k = int(spec.k_list[-1])
    cfg = _config_for(spec, k, spec.delta)
    ansatz = Ansatz(cfg)
    E = ansatz.residual()
    rng = np.random.default_rng(11)
    pts = rng.standard_normal((100, params.N)) * 1.5
    pts = pts[np.linalg.norm(pts, axis=1) > 1e-3]

    checks = []
    # ring bubbles are inversion-invariant exactly on the compatibility shell
    U1 = scaled_bubble(params, cfg.mu, cfg.centers[0])
    hatU1 = kelvin_transform(U1, params)
    defect = np.abs(hatU1(pts) - U1(pts)) / np.abs(U1(pts))
    checks.append(("kelvin_on_shell", float(defect.max()), 1e-12, True))
    # off the shell the transform must visibly fail
    mu_off = 0.1
    xi_off = np.zeros(params.N)
    xi_off[0] = np.sqrt(0.9 - mu_off**2)
    w_off = scaled_bubble(params, mu_off, xi_off)
    y = np.zeros(params.N)
    y[0] = 2.0
    off = abs(kelvin_transform(w_off, params)(y) - w_off(y))
    checks.append(("kelvin_off_shell_defect_exceeds", float(off), 1e-6, False))
    # involution
    U = standard_bubble(params)
    double = kelvin_transform(kelvin_transform(U, params), params)
    inv = np.abs(double(pts) - U(pts)).max()
    checks.append(("kelvin_involution", float(inv), 1e-12, True))
    # ansatz symmetry group invariance
    worst = 0.0
    for g in symmetry_group(cfg):
        worst = max(worst, float(np.abs(ansatz(pts @ g.T) - ansatz(pts)).max()))
    checks.append(("ansatz_group_invariance", worst, 1e-10, True))
    # residual rotation/reflection invariance and inversion covariance
    rot = symmetry_group(cfg)[1] if cfg.k >= 1 else np.eye(params.N)
    drot = float(np.abs(E(pts @ rot.T) - E(pts)).max())
    checks.append(("residual_rotation_invariance", drot, 1e-10, True))
    refl = pts.copy()
    refl[:, -1] *= -1.0
    checks.append(
        ("residual_reflection_evenness", float(np.abs(E(refl) - E(pts)).max()), 1e-10, True)
    )
    hatE = kelvin_transform(E, params, covariant=True)
    cov = np.abs(hatE(pts) - E(pts)) / np.maximum(np.abs(E(pts)), 1e-300)
    checks.append(("residual_kelvin_covariance", float(cov.max()), 1e-9, True))
    # cutoff inversion symmetry
    z1 = bubble_cutoff(cfg, 1)
    r2 = (pts**2).sum(-1)
    dz = np.abs(z1(pts / r2[:, None]) - z1(pts)).max()
    checks.append(("cutoff_inversion_symmetry", float(dz), 1e-12, True))

    worst_code = EXIT_OK
    for name, defect, tol, upper in checks:
        ok = defect <= tol if upper else defect >= tol
        sink.row([name, defect, tol, ok])
        if not ok:
            worst_code = EXIT_TOLERANCE
    return worst_code


def run_reduction(spec: ExperimentSpec, sink: CsvSink) -> int:
    params = spec.params
    a, spread = red.interaction_coefficient(params)
    C = red.dilation_constant(params)
    d0 = red.balanced_delta(params, a)
    worst = EXIT_OK
    if spread > 1e-6:
        worst = EXIT_NONCONVERGED
    for k in spec.k_list:
        k = int(k)
        cfg0 = red.balanced_config(params, k, 1.0, eta=spec.eta)
        S_k = red.interaction_sum(cfg0)
        for d in spec.deltas:
            cfg = red.balanced_config(params, k, d, eta=spec.eta)
            pr = red.dilation_projection(cfg, level=spec.level, threads=spec.threads)
            lead = red.leading_projection(params, k, d, a, C)
            sink.row([k, d, S_k, a, C, d0, pr.value, lead,
                      pr.first_ball, pr.other_balls, pr.exterior, pr.est_rel_error])
            if pr.est_rel_error > max(spec.tol, 1e-2) * 5:
                worst = max(worst, EXIT_NONCONVERGED)
    return worst


def run_refine(spec: ExperimentSpec, sink: CsvSink) -> int:
    params = spec.params
    k = int(spec.k_list[-1])
    cfg = _config_for(spec, k, spec.delta)
    gspec = sp.GridSpec(L=spec.grid_L, n=spec.grid_n)
    ansatz = Ansatz(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = sp.refine(
            ansatz, gspec, mode="direct", tol=1e-9, tol_rel=5e-3,
            max_steps=30, inner_iters=200,
        )
    damp = [float("nan")] + list(result.damping_history)
    for i, r in enumerate(result.residual_history):
        sink.row([i, r, damp[i] if i < len(damp) else float("nan")])
    if not result.converged:
        return EXIT_NONCONVERGED
    if result.residual_history[-1] > 0.1 * result.residual_history[0]:
        return EXIT_TOLERANCE
    return EXIT_OK


def run_oracle(spec: ExperimentSpec, sink: CsvSink) -> int:
    params = spec.params
    gspec = sp.GridSpec(L=spec.grid_L, n=spec.grid_n)
    rows = []
    c_cal = sp.calibrate_amplitude(gspec, params)
    rows.append(("multiplier_identity_sup", sp.multiplier_oracle_error(gspec, params, c=c_cal), 5e-3))
    # closed-form residual identity on a grid-resolvable ring
    k = int(spec.k_list[-1])
    mu_target = 2.0 * gspec.h
    cfg = make_config(params, k, delta=mu_target * k**3, eta=spec.eta)
    A = Ansatz(cfg, c=c_cal)
    mask = sp.half_box_mask(gspec)
    E_exact = sp.sample_field(A.residual(), gspec, taper=False).values
    lhs = sp.frac_laplacian(sp.sample_field(A.field, gspec), params.s).values - sp.signed_pow(
        sp.sample_field(A.field, gspec, taper=False).values, params.p
    )
    ident = float(np.abs(lhs[mask] - E_exact[mask]).max() / np.abs(E_exact[mask]).max())
    rows.append(("residual_identity_sup", ident, 1e-2))
    # quadrature exactness
    probe = make_config(params, 8, 1.0, eta=spec.eta)
    scheme = quad.QuadratureScheme(probe, level=spec.level)
    from .bubbles import Field as _F

    val, _, _ = quad.integrate_with_error(
        _F(lambda pts: (1.0 + (pts**2).sum(-1)) ** -params.N), scheme
    )
    from scipy.integrate import quad as quad1d

    ref = 4.0 * np.pi * quad1d(lambda r: r**2 * (1 + r**2) ** -params.N, 0, np.inf)[0]
    rows.append(("quadrature_reference_integral", abs(val - ref) / ref, 1e-3))
    worst = EXIT_OK
    for name, err, bound in rows:
        sink.row([name, err, bound])
        if err > bound:
            worst = EXIT_TOLERANCE
    return worst


HEADERS = {
    "decay": ["k", "norm_weighted", "est_rel_error", "ratio_to_prev", "local_slope",
              "norm_weighted_full", "norm_core_rescaled"],
    "invariance": ["check_name", "max_defect", "tolerance", "pass"],
    "reduction": ["k", "delta", "interaction_sum", "interaction_coefficient",
                  "projection_constant", "delta_star", "projection", "leading",
                  "first_ball", "other_balls", "exterior", "est_rel_error"],
    "refine": ["iter", "residual_norm", "damping"],
    "oracle": ["test_name", "measured_error", "bound"],
}

RUNNERS = {
    "decay": run_decay,
    "invariance": run_invariance,
    "reduction": run_reduction,
    "refine": run_refine,
    "oracle": run_oracle,
}


def run(spec: ExperimentSpec) -> int:
    """Execute one experiment, writing its CSV; returns the exit code."""
    sink = CsvSink(spec.out, spec, HEADERS[spec.kind])
    try:
        code = RUNNERS[spec.kind](spec, sink)
    except Exception as exc:  # flush a marker so partial output is usable
        sink.fail(f"{type(exc).__name__}: {exc}")
        sink.close()
        return EXIT_NONCONVERGED
    sink.close()
    return code


def build_argparser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fracbubbles",
        description="bubble-ring experiments for the critical fractional equation",
    )
    ap.add_argument("--config", help="JSON experiment spec")
    ap.add_argument("--kind", choices=KINDS)
    ap.add_argument("--k", help="ring size or comma-separated list, e.g. 8,16,32")
    ap.add_argument("--delta", type=float)
    ap.add_argument("--deltas", help="comma-separated scale grid for reduction")
    ap.add_argument("--out")
    ap.add_argument("--threads", type=int)
    ap.add_argument("--grid-n", type=int, dest="grid_n")
    ap.add_argument("--grid-L", type=float, dest="grid_L")
    ap.add_argument("--tol", type=float)
    ap.add_argument("--level", type=int)
    ap.add_argument("--scaling", choices=("standard", "balanced"))
    return ap


def main(argv=None) -> int:
    args = build_argparser().parse_args(argv)
    try:
        if args.config:
            spec = parse_config(args.config)
        else:
            if not args.kind:
                raise SpecError("kind: required (flag --kind or config file)")
            spec = ExperimentSpec(kind=args.kind).validate()
        if args.kind:
            spec.kind = args.kind
        if args.k:
            spec.k_list = tuple(int(x) for x in str(args.k).split(","))
        if args.delta is not None:
            spec.delta = args.delta
        if args.deltas:
            spec.deltas = tuple(float(x) for x in args.deltas.split(","))
        if args.out:
            spec.out = args.out
        if args.threads is not None:
            spec.threads = args.threads
        env_threads = os.environ.get("FRACBUBBLES_THREADS")
        if env_threads:
            spec.threads = int(env_threads)
        if args.grid_n is not None:
            spec.grid_n = args.grid_n
        if args.grid_L is not None:
            spec.grid_L = args.grid_L
        if args.tol is not None:
            spec.tol = args.tol
        if args.level is not None:
            spec.level = args.level
        if args.scaling:
            spec.scaling = args.scaling
        spec.validate()
    except (SpecError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code = run(spec)
    if code == EXIT_OK:
        print(f"ok: wrote {spec.out}")
    else:
        print(f"completed with exit code {code}: {spec.out}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
