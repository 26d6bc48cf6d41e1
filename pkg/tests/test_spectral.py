import warnings

import numpy as np
import pytest

from fracbubbles import reduction as red
from fracbubbles import spectral as sp
from fracbubbles.ansatz import Ansatz
from fracbubbles.bubbles import Field, amplitude, kernel_field, standard_bubble
from fracbubbles.core import make_config


@pytest.fixture(scope="module")
def small_spec():
    return sp.GridSpec(L=8.0, n=32)


def gaussian_field(width=1.5, shift=(0.0, 0.0, 0.0)):
    shift = np.asarray(shift)
    return Field(lambda pts: np.exp(-((pts - shift) ** 2).sum(-1) / width**2))


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        sp.GridSpec(L=8.0, n=24)  # not a power of two
    with pytest.raises(ValueError):
        sp.GridSpec(L=8.0, n=8)
    with pytest.raises(ValueError):
        sp.GridSpec(L=2.0, n=32)
    assert sp.GridSpec(L=16.0, n=128).h == 0.25
    assert sp.GridSpec(L=16.0, n=128).resolves(0.6)
    assert not sp.GridSpec(L=16.0, n=128).resolves(0.01)


def test_frac_laplacian_of_zero(small_spec, params):
    z = sp.GridField(np.zeros((32, 32, 32)), small_spec)
    assert sp.frac_laplacian(z, params.s).sup() == 0.0


def test_frac_laplacian_linearity(small_spec, params, rng):
    f = sp.GridField(rng.standard_normal((32, 32, 32)), small_spec)
    g = sp.GridField(rng.standard_normal((32, 32, 32)), small_spec)
    lhs = sp.frac_laplacian(
        sp.GridField(2.0 * f.values - 3.0 * g.values, small_spec), params.s
    )
    rhs = (
        2.0 * sp.frac_laplacian(f, params.s).values
        - 3.0 * sp.frac_laplacian(g, params.s).values
    )
    assert np.abs(lhs.values - rhs).max() <= 1e-10 * max(1.0, np.abs(rhs).max())


def test_frac_laplacian_self_adjoint(small_spec, params, rng):
    f = sp.GridField(rng.standard_normal((32, 32, 32)), small_spec)
    g = sp.GridField(rng.standard_normal((32, 32, 32)), small_spec)
    a = sp.frac_laplacian(f, params.s).inner(g)
    b = f.inner(sp.frac_laplacian(g, params.s))
    assert a == pytest.approx(b, rel=1e-12)


def test_frac_laplacian_commutes_with_grid_symmetries(small_spec, params):
    f = sp.sample_field(gaussian_field(shift=(0.9, 0.3, -0.4)), small_spec)
    Lf = sp.frac_laplacian(f, params.s)
    for op in sp.grid_symmetry_ops(4)[1:]:
        lhs = sp.frac_laplacian(sp.GridField(op(f.values), small_spec), params.s)
        assert np.abs(lhs.values - op(Lf.values)).max() <= 1e-12


def test_multiplier_identity_on_moderate_grid(params):
    spec = sp.GridSpec(L=12.0, n=64)
    c = sp.calibrate_amplitude(spec, params)
    assert c == pytest.approx(amplitude(params), rel=5e-3)
    err = sp.multiplier_oracle_error(spec, params, c=c)
    assert err <= 1e-2


def test_linearized_operator_algebra(params):
    # at the bubble itself the linearization reduces to (1-p) U^p
    spec = sp.GridSpec(L=12.0, n=64)
    U = sp.sample_field(standard_bubble(params), spec)
    LU = sp.apply_linearized(U, params)
    target = (1.0 - params.p) * sp.sample_field(
        standard_bubble(params), spec, taper=False
    ).values ** params.p
    m = sp.half_box_mask(spec)
    err = np.abs(LU.values[m] - target[m]).max() / np.abs(target[m]).max()
    assert err <= 1e-2


def test_kernel_fields_annihilated(params):
    spec = sp.GridSpec(L=12.0, n=64)
    for l in (1, 4):
        v = sp.sample_field(kernel_field(params, l), spec)
        Lv = sp.apply_linearized(v, params)
        m = sp.half_box_mask(spec)
        assert np.abs(Lv.values[m]).max() <= 2e-2 * v.sup()


def test_projected_solve_manufactured(params):
    spec = sp.GridSpec(L=12.0, n=64)
    kernel = sp.kernel_grid_fields(spec, params)
    qmat = sp._orthonormal_basis(kernel)
    target = sp.sample_field(
        Field(lambda pts: (1.0 + (pts**2).sum(-1)) ** -3), spec
    ).values.ravel()
    target = target - qmat @ (qmat.T @ target)
    phi_star = sp.GridField(target.reshape((64,) * 3), spec)
    h = sp.apply_linearized(phi_star, params)
    phi, report = sp.projected_solve(h, params, tol=1e-9, maxiter=600)
    # compare in a fixed gauge: both solutions projected off the kernel
    sol = phi.values.ravel()
    sol = sol - qmat @ (qmat.T @ sol)
    err = np.linalg.norm(sol - target) / np.linalg.norm(target)
    assert err <= 1e-2
    assert report.residual <= 1e-6


def test_projected_solve_annihilates_kernel_datum(params):
    spec = sp.GridSpec(L=12.0, n=64)
    h = sp.sample_field(kernel_field(params, 1), spec)
    phi, report = sp.projected_solve(h, params, tol=1e-9, maxiter=200)
    assert report.kernel_overlap > 0.99
    assert phi.l2() <= 1e-6 * h.l2()


def test_projected_solve_weighted_bound_stability(params):
    from fracbubbles import quadrature as quad

    ratios = []
    for n in (32, 64):
        spec = sp.GridSpec(L=12.0, n=n)
        h = sp.sample_field(gaussian_field(width=2.0), spec)
        kernel = sp.kernel_grid_fields(spec, params)
        qmat = sp._orthonormal_basis(kernel)
        vals = h.values.ravel() - qmat @ (qmat.T @ h.values.ravel())
        h = sp.GridField(vals.reshape((n,) * 3), spec)
        phi, _ = sp.projected_solve(h, params, tol=1e-8, maxiter=400)
        m = sp.half_box_mask(spec)
        r = spec.radius()
        a = params.sobolev_decay
        wsup = float(((1 + r[m]) ** a * np.abs(phi.values[m])).max())
        aq = quad.lq_weight_exponent(params)
        wq = float(
            (
                ((1 + r[m]) ** aq * np.abs(h.values[m])) ** params.q
            ).sum()
            * spec.h**3
        ) ** (1 / params.q)
        ratios.append(wsup / wq)
    assert 0.4 <= ratios[0] / ratios[1] <= 2.5


def test_symmetrize_and_defect(params, rng):
    arr = rng.standard_normal((32, 32, 32))
    sym = sp.symmetrize(arr, 4)
    assert sp.symmetry_defect(sym, 4) <= 1e-13
    assert sp.symmetry_defect(sp.symmetrize(sym, 4), 4) <= 1e-13


def test_save_load_roundtrip(tmp_path, params, small_spec, rng):
    f = sp.GridField(rng.standard_normal((32, 32, 32)), small_spec)
    path = str(tmp_path / "field.bin")
    sp.save_field(f, path, meta={"N": 3, "s": 0.5, "k": 4, "delta": 1.0})
    g = sp.load_field(path)
    assert g.spec.n == 32 and g.spec.L == 8.0
    assert np.array_equal(f.values, g.values)


def test_coarse_samples_match_pointwise_when_resolved(params):
    # with mu comparable to the grid spacing, the cell averages agree with
    # point values away from the centers and smooth the core cells
    spec = sp.GridSpec(L=8.0, n=64)
    cfg = make_config(params, 4, delta=0.5 * 64)  # mu = 0.5
    A = Ansatz(cfg)
    coarse = sp.coarse_samples(A.field, spec, cfg).values
    point = sp.sample_field(A.field, spec, taper=False).values
    far = sp.GridSpec(L=8.0, n=64)
    mask = np.ones((64,) * 3, dtype=bool)
    ax = spec.axis()
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1)
    d = np.linalg.norm(pts[..., None, :] - cfg.centers, axis=-1).min(-1)
    near = d <= 2.5 * spec.h
    scale = np.abs(point).max()
    assert np.allclose(coarse[~near], point[~near], rtol=0, atol=1e-12 * scale)
    rel = np.abs(coarse[near] - point[near]) / np.abs(point[near]).max()
    assert rel.max() <= 0.2


@pytest.mark.slow
def test_refine_direct_small_grid(params):
    cfg = make_config(params, 4, delta=0.5 * 64)  # resolvable mu = 0.5
    spec = sp.GridSpec(L=8.0, n=64)
    A = Ansatz(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = sp.refine(A, spec, mode="direct", tol=1e-9, max_steps=10, inner_iters=120)
    assert res.residual_history[-1] <= 0.1 * res.residual_history[0]
    assert sp.symmetry_defect(res.field.values, 4) <= 1e-12


@pytest.mark.slow
def test_refine_gluing_contracts(params):
    cfg = make_config(params, 4, delta=0.5 * 64, eta=0.9)
    spec = sp.GridSpec(L=8.0, n=64)
    A = Ansatz(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = sp.refine(A, spec, mode="gluing", tol=1e-10, max_steps=8, inner_iters=150)
    assert res.residual_history[-1] < res.residual_history[0]
    ratios = res.diagnostics["contraction_ratios"]
    assert len(ratios) >= 1
    assert ratios[-1] < 1.0


def test_refine_rejects_unknown_mode(params, small_spec):
    A = Ansatz(make_config(params, 4, 1.0))
    with pytest.raises(ValueError):
        sp.refine(A, small_spec, mode="other")
    with warnings.catch_warnings(), pytest.raises(ValueError, match="k must be 4"):
        warnings.simplefilter("ignore")
        sp.refine(Ansatz(make_config(params, 8, 1.0)), small_spec, mode="gluing")


def test_refine_warns_unresolved(params, small_spec):
    A = Ansatz(make_config(params, 4, 1.0))  # mu = 1/64 << h
    with pytest.warns(UserWarning, match="resolve"):
        sp.refine(A, small_spec, mode="direct", max_steps=0)
