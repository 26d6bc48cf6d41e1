"""End-to-end acceptance checks, one per headline criterion.

Each test prints a single PASS line after its assertions; run with
``pytest tests/test_acceptance.py -v -s`` to see the per-criterion report.
The grid-based checks use the reference configuration (N, s) = (3, 1/2),
q = 4 throughout.
"""

import time
import warnings

import numpy as np
import pytest

from fracbubbles import quadrature as quad
from fracbubbles import reduction as red
from fracbubbles import spectral as sp
from fracbubbles.ansatz import Ansatz
from fracbubbles.bubbles import (
    amplitude,
    kelvin_transform,
    kernel_field,
    scaled_bubble,
    standard_bubble,
)
from fracbubbles.core import ProblemParams, make_config

pytestmark = pytest.mark.acceptance

PARAMS = ProblemParams(N=3, s=0.5, q=4.0)
GRID = sp.GridSpec(L=16.0, n=128)


def report(name, **vals):
    details = "  ".join(f"{k}={v:.3e}" if isinstance(v, float) else f"{k}={v}"
                        for k, v in vals.items())
    print(f"\n[PASS] {name}: {details}")


@pytest.fixture(scope="module")
def calibrated():
    t0 = time.time()
    c = sp.calibrate_amplitude(GRID, PARAMS)
    err = sp.multiplier_oracle_error(GRID, PARAMS, c=c)
    return c, err, time.time() - t0


def test_spectral_oracle_amplitude_calibration(calibrated):
    c, err, elapsed = calibrated
    assert elapsed < 60.0
    assert err <= 5e-3
    assert c == pytest.approx(amplitude(PARAMS), rel=5e-3)
    report(
        "spectral oracle / amplitude calibration",
        calibrated_amplitude=c,
        rel_sup_error=err,
        seconds=elapsed,
    )


def test_closed_form_residual_identity(calibrated):
    c, _, _ = calibrated
    # grid-resolvable ring: mu = 2h so the sampled profile is faithful
    mu_target = 2.0 * GRID.h
    cfg = make_config(PARAMS, 8, delta=mu_target * 8**3)
    ansatz = Ansatz(cfg, c=c)
    mask = sp.half_box_mask(GRID)
    closed = sp.sample_field(ansatz.residual(), GRID, taper=False).values
    grid_side = sp.frac_laplacian(
        sp.sample_field(ansatz.field, GRID), PARAMS.s
    ).values - sp.signed_pow(
        sp.sample_field(ansatz.field, GRID, taper=False).values, PARAMS.p
    )
    err = np.abs(grid_side[mask] - closed[mask]).max() / np.abs(closed[mask]).max()
    assert err <= 1e-2

    # the empty ring solves the equation exactly: closed form is identically 0
    empty = Ansatz(make_config(PARAMS, 0, 1.0), c=c)
    pts = np.random.default_rng(3).standard_normal((200, 3))
    assert np.abs(empty.residual()(pts)).max() == 0.0
    report("closed-form residual identity", rel_sup_error=err, k0_residual=0.0)


def test_kelvin_suite():
    rng = np.random.default_rng(17)
    pts = rng.standard_normal((140, 3)) * 1.5
    pts = pts[np.linalg.norm(pts, axis=1) > 1e-2][:100]
    assert len(pts) == 100
    cfg = make_config(PARAMS, 8, 1.0)
    w_on = scaled_bubble(PARAMS, cfg.mu, cfg.centers[0])
    on_defect = np.abs(
        kelvin_transform(w_on, PARAMS)(pts) - w_on(pts)
    ) / np.abs(w_on(pts))
    assert on_defect.max() <= 1e-12

    mu_off = 0.1
    xi_off = np.array([np.sqrt(0.9 - mu_off**2), 0.0, 0.0])
    w_off = scaled_bubble(PARAMS, mu_off, xi_off)
    y = np.array([2.0, 0.0, 0.0])
    off_defect = abs(kelvin_transform(w_off, PARAMS)(y) - w_off(y))
    assert off_defect >= 1e-6

    f = standard_bubble(PARAMS) + kernel_field(PARAMS, 4)
    twice = kelvin_transform(kelvin_transform(f, PARAMS), PARAMS)
    inv_defect = float(np.abs(twice(pts) - f(pts)).max())
    assert inv_defect <= 1e-12
    report(
        "Kelvin suite",
        on_shell_defect=float(on_defect.max()),
        off_shell_defect=float(off_defect),
        involution_defect=inv_defect,
    )


def test_residual_norm_decay():
    t0 = time.time()
    ks = (8, 16, 32, 64, 128)
    values, errors = [], []
    for k in ks:
        cfg = make_config(PARAMS, k, 1.0)
        E = Ansatz(cfg).residual()
        scheme = quad.QuadratureScheme(cfg, level=0, tol_rel=1e-2)
        res = quad.weighted_lq_norm(E, PARAMS, scheme, region="exterior")
        values.append(res.value)
        errors.append(res.est_rel_error)
    elapsed = time.time() - t0
    assert elapsed < 600.0
    assert max(errors) <= 1e-2
    ratios = [b / a for a, b in zip(values, values[1:])]
    assert all(r <= 2.0**-0.70 for r in ratios)
    slope = np.polyfit(np.log(ks), np.log(values), 1)[0]
    report(
        "residual norm decay (exterior region)",
        ratios=str([f"{r:.3f}" for r in ratios]),
        fitted_slope=float(slope),
        gap_to_weak_rate=float(slope - (-0.75)),
        gap_to_strong_rate=float(slope - (-1.75)),
        seconds=elapsed,
    )


def test_kernel_orthogonality_by_symmetry():
    cfg = make_config(PARAMS, 8, 1.0)
    E = Ansatz(cfg).residual()
    scheme = quad.QuadratureScheme(cfg, level=0, symmetric=False)
    scale_norm = quad.weighted_lq_norm(
        E, PARAMS, quad.QuadratureScheme(cfg, level=0), region="exterior"
    ).value
    worst = 0.0
    for l in (1, 2, 3):
        v = kernel_field(PARAMS, l)
        vq = quad.weighted_lq_norm(v, PARAMS, quad.QuadratureScheme(cfg, level=0)).value
        val, _, _ = quad.kernel_projection(E, l, PARAMS, scheme)
        assert abs(val) <= 1e-6 * scale_norm * vq
        worst = max(worst, abs(val) / (scale_norm * vq))
    report("kernel orthogonality by symmetry", worst_normalized_projection=worst)


def test_reduction_balance():
    a, spread = red.interaction_coefficient(PARAMS)
    assert abs(a - 1.0 / 6.0) <= 1e-4
    assert spread <= 1e-8
    d0 = red.balanced_delta(PARAMS, a)
    assert d0 == pytest.approx(6.0, abs=1e-3)

    lo = red.dilation_projection(red.balanced_config(PARAMS, 128, 3.0))
    hi = red.dilation_projection(red.balanced_config(PARAMS, 128, 12.0))
    assert np.sign(lo.value) != np.sign(hi.value)

    C = red.dilation_constant(PARAMS)
    rem_scaled = {}
    for delta in (3.0, 12.0):
        rems = []
        for k in (32, 64, 128):
            pr = red.dilation_projection(red.balanced_config(PARAMS, k, delta))
            lead = red.leading_projection(PARAMS, k, delta, a, C)
            rems.append(abs(pr.value - lead) * k ** (PARAMS.N - PARAMS.s))
        assert max(rems) / min(rems) <= 3.0
        rem_scaled[delta] = rems
    report(
        "finite-dimensional reduction",
        interaction_coefficient=a,
        delta_root=d0,
        sign_change=f"({lo.value:.2e}, {hi.value:.2e})",
        remainder_spread_delta3=max(rem_scaled[3.0]) / min(rem_scaled[3.0]),
        remainder_spread_delta12=max(rem_scaled[12.0]) / min(rem_scaled[12.0]),
    )


def test_projected_linear_solve():
    spec = sp.GridSpec(L=12.0, n=64)
    kernel = sp.kernel_grid_fields(spec, PARAMS)
    qmat = sp._orthonormal_basis(kernel)
    from fracbubbles.bubbles import Field

    target = sp.sample_field(
        Field(lambda pts: (1.0 + (pts**2).sum(-1)) ** -3), spec
    ).values.ravel()
    target = target - qmat @ (qmat.T @ target)
    phi_star = sp.GridField(target.reshape((64,) * 3), spec)
    h = sp.apply_linearized(phi_star, PARAMS)
    phi, rep = sp.projected_solve(h, PARAMS, tol=1e-9, maxiter=600)
    sol = phi.values.ravel()
    sol = sol - qmat @ (qmat.T @ sol)
    rec_err = np.linalg.norm(sol - target) / np.linalg.norm(target)
    assert rec_err <= 1e-2

    worst = 0.0
    mask = sp.half_box_mask(GRID)
    for l in range(1, PARAMS.N + 2):
        v = sp.sample_field(kernel_field(PARAMS, l), GRID)
        Lv = sp.apply_linearized(v, PARAMS)
        ratio = float(np.abs(Lv.values[mask]).max() / v.sup())
        assert ratio <= 5e-3
        worst = max(worst, ratio)
    report(
        "projected linear solve",
        manufactured_recovery_l2=float(rec_err),
        kernel_annihilation_sup=worst,
        solver_iterations=rep.iterations,
    )


@pytest.mark.slow
def test_refinement():
    t0 = time.time()
    cfg = make_config(PARAMS, 8, 6.0)  # delta at the reduction root
    ansatz = Ansatz(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = sp.refine(
            ansatz, GRID, mode="direct", tol=1e-9, tol_rel=5e-3,
            max_steps=30, inner_iters=200,
        )
    elapsed = time.time() - t0
    assert elapsed < 1800.0
    hist = result.residual_history
    assert hist[-1] <= 0.1 * hist[0]

    phi = result.correction
    i0 = GRID.n // 2
    i1 = i0 + int(round(1.0 / GRID.h))
    u_origin = ansatz.field(np.zeros(3)) + phi.values[i0, i0, i0]
    u_center = ansatz.field(cfg.centers[0]) + phi.values[i1, i0, i0]
    assert u_origin > 0
    assert u_center < 0

    defect = sp.symmetry_defect(result.field.values, cfg.k)
    assert defect <= 1e-10
    gap = sp.assembled_energy_gap(ansatz, phi)
    assert gap <= 0.05
    report(
        "grid refinement",
        residual_reduction=hist[-1] / hist[0],
        u_at_origin=float(u_origin),
        u_at_first_center=float(u_center),
        symmetry_defect=float(defect),
        energy_gap=float(gap),
        seconds=elapsed,
    )
