import numpy as np
import pytest

from slaglab.charts import (
    PairingStructure,
    chart_jacobian,
    evaluate_chart,
    hessian_fit,
    l2_gram,
    normalize_cycles_to_identity,
    pairing_structure,
    pullback_BW,
    sample_grid,
    synthetic_grid,
    tangent_cochains,
    transition_affine_fit,
)
from slaglab.dec import HodgeStructure
from slaglab.errors import (
    AsymmetricJacobianError,
    InsufficientSamplesError,
    SingularJacobianError,
)
from slaglab.fixtures import cylinder_translation, interval_c1, two_handle
from slaglab.immersion import ImmersionFamily, pullback_metric, reparametrize
from slaglab.meshes import absolute_cycle_basis, relative_cycle_basis


@pytest.fixture(scope="module")
def cyl():
    fx = cylinder_translation(1)
    rel = relative_cycle_basis(fx.mesh)
    ab = absolute_cycle_basis(fx.mesh)
    hs = HodgeStructure(fx.mesh, pullback_metric(fx.model, fx.base))
    pair = pairing_structure(hs, rel, ab)
    ab, pair = normalize_cycles_to_identity(pair, ab)
    return fx, rel, ab, hs, pair


@pytest.fixture(scope="module")
def handles():
    fx = two_handle(1)
    rel = relative_cycle_basis(fx.mesh)
    ab = absolute_cycle_basis(fx.mesh)
    hs = HodgeStructure(fx.mesh, pullback_metric(fx.model, fx.base))
    pair = pairing_structure(hs, rel, ab)
    ab, pair = normalize_cycles_to_identity(pair, ab)
    return fx, rel, ab, hs, pair


def test_pairing_is_certified_integer(cyl):
    fx, rel, ab, hs, pair = cyl
    assert pair.certification_residual < 1e-10
    assert np.array_equal(pair.P, np.eye(1))


def test_pairing_interval():
    fx = interval_c1(1)
    rel = relative_cycle_basis(fx.mesh)
    ab = absolute_cycle_basis(fx.mesh)
    hs = HodgeStructure(fx.mesh, pullback_metric(fx.model, fx.base))
    pair = pairing_structure(hs, rel, ab)
    assert pair.is_signed_permutation


def test_chart_at_origin_is_zero(cyl):
    fx, rel, ab, *_ = cyl
    sample = evaluate_chart(fx.model, fx.family, [0.0], rel, ab)
    assert np.abs(sample.R).max() == 0.0 and np.abs(sample.S).max() == 0.0


def test_chart_linearity_for_translation_family(cyl):
    fx, rel, ab, *_ = cyl
    s1 = evaluate_chart(fx.model, fx.family, [0.1], rel, ab)
    s2 = evaluate_chart(fx.model, fx.family, [0.2], rel, ab)
    assert np.allclose(2 * s1.R, s2.R, atol=1e-14)
    assert np.allclose(2 * s1.S, s2.S, atol=1e-14)


def test_jacobian_matches_periods(cyl):
    fx, rel, ab, hs, pair = cyl
    report = chart_jacobian(fx.model, fx.family, hs, rel, ab)
    assert report.dR_error < 1e-12
    assert report.dS_error < 1e-12
    assert report.dR[0, 0] == pytest.approx(-0.5, abs=1e-12)


def test_singular_jacobian_for_duplicated_direction(cyl):
    fx, rel, ab, hs, pair = cyl
    dup = ImmersionFamily.translation(
        fx.base, [np.array([0, 1, 0, 0.0]), np.array([0, 1, 0, 0.0])]
    )
    with pytest.raises(SingularJacobianError):
        chart_jacobian(fx.model, dup, hs, rel, ab)


def test_transition_translation(cyl):
    fx, rel, ab, *_ = cyl
    us = [np.array([x]) for x in (-0.08, -0.02, 0.05, 0.1)]
    shift = np.array([0.04])
    s1 = [evaluate_chart(fx.model, fx.family, u, rel, ab) for u in us]
    s2 = [
        evaluate_chart(fx.model, fx.family, u - shift, rel, ab, base_shift=shift)
        for u in us
    ]
    shift_sample = evaluate_chart(fx.model, fx.family, shift, rel, ab)
    for coord in ("R", "S"):
        fit = transition_affine_fit(s1, s2, coord)
        assert np.abs(fit.A - np.eye(1)).max() < 1e-12
        expected_b = -(shift_sample.R if coord == "R" else shift_sample.S)
        assert np.abs(fit.b - expected_b).max() < 1e-12
        assert fit.residual < 1e-12
        assert fit.volume_defect < 1e-12


def test_transition_under_reparametrized_lift(cyl):
    """Rotating the lift acts trivially on classes: transition is the identity."""
    fx, rel, ab, *_ = cyl
    n_circ = 16
    psi = np.array([
        (v // n_circ) * n_circ + ((v % n_circ) + 2) % n_circ
        for v in range(fx.mesh.n_vertices)
    ])
    base2 = reparametrize(fx.base, psi)
    family2 = ImmersionFamily.translation(base2, [np.array([0, 1, 0, 0.0])])
    us = [np.array([x]) for x in (-0.06, 0.0, 0.04, 0.09)]
    s1 = [evaluate_chart(fx.model, fx.family, u, rel, ab) for u in us]
    s2 = [evaluate_chart(fx.model, family2, u, rel, ab) for u in us]
    fit = transition_affine_fit(s1, s2, "R")
    assert np.abs(fit.A - np.eye(1)).max() < 1e-12
    assert np.abs(fit.b).max() < 1e-14
    assert fit.volume_defect < 1e-12


def test_transition_rejects_degenerate_samples(cyl):
    fx, rel, ab, *_ = cyl
    one = evaluate_chart(fx.model, fx.family, [0.1], rel, ab)
    with pytest.raises(InsufficientSamplesError):
        transition_affine_fit([one], [one], "R")
    with pytest.raises(InsufficientSamplesError):
        transition_affine_fit([one, one, one], [one, one, one], "R")


def test_transition_negative_control_nonaffine():
    rng = np.random.default_rng(0)

    class FakeSample:
        def __init__(self, r):
            self.R = r

    xs = [FakeSample(rng.normal(size=2)) for _ in range(12)]
    ys = [FakeSample(np.array([x.R[0] ** 3, np.sin(3 * x.R[1])])) for x in xs]
    fit = transition_affine_fit(xs, ys, "R")
    assert fit.residual > 1e-2


def test_bw_pullback_and_l2(cyl):
    fx, rel, ab, hs, pair = cyl
    grid = sample_grid(fx.model, fx.family, rel, ab, radius=0.1, points_per_axis=5)
    emb = pullback_BW(grid, pair)
    assert emb.W_max == 0.0
    thetas = tangent_cochains(fx.model, fx.family)
    L2 = l2_gram(hs, thetas)
    assert np.abs(emb.B_gram - L2).max() < 1e-12
    assert L2[0, 0] == pytest.approx(0.5, abs=1e-12)


def test_bw_pullback_two_handles(handles):
    fx, rel, ab, hs, pair = handles
    grid = sample_grid(fx.model, fx.family, rel, ab, radius=0.08, points_per_axis=5)
    emb = pullback_BW(grid, pair)
    assert emb.W_max < 1e-14
    thetas = tangent_cochains(fx.model, fx.family)
    L2 = l2_gram(hs, thetas)
    assert np.allclose(np.diag(L2), fx.expected["l2_gram_diag"], atol=1e-12)
    assert np.abs(emb.B_gram - L2).max() < 1e-12


def test_l2_gram_orthogonal_directions_and_zero_tangent(handles):
    fx, rel, ab, hs, pair = handles
    thetas = tangent_cochains(fx.model, fx.family)
    L2 = l2_gram(hs, thetas)
    assert abs(L2[0, 1]) < 1e-14
    zero = tangent_cochains(fx.model, fx.family, directions=np.zeros((1, 2)))
    Lz = l2_gram(hs, zero)
    assert np.abs(Lz).max() == 0.0


def test_hessian_fit_exact_for_linear_graph(cyl):
    fx, rel, ab, hs, pair = cyl
    grid = sample_grid(fx.model, fx.family, rel, ab, radius=0.1, points_per_axis=7)
    fit = hessian_fit(grid, pair)
    assert fit.symmetry_residual == 0.0
    assert fit.gradient_residual < 1e-12
    assert fit.hessian[0, 0] == pytest.approx(2.0, rel=1e-6)
    assert fit.hessian_vs_B < 1e-6


def test_hessian_fit_two_handles(handles):
    fx, rel, ab, hs, pair = handles
    grid = sample_grid(fx.model, fx.family, rel, ab, radius=0.08, points_per_axis=7)
    fit = hessian_fit(grid, pair)
    assert fit.symmetry_residual < 1e-12
    assert np.allclose(fit.hessian, np.diag([2.0, 4.0]), atol=1e-5)


def test_hessian_fit_rejects_curl_field():
    grid = synthetic_grid(np.linspace(-0.1, 0.1, 5), lambda u: np.array([u[1], -u[0]]))
    with pytest.raises(AsymmetricJacobianError):
        hessian_fit(grid, PairingStructure(np.eye(2), 0.0))


def test_hessian_fit_accepts_gradient_field():
    grid = synthetic_grid(
        np.linspace(-0.1, 0.1, 7),
        lambda u: np.array([2 * u[0] + u[1], u[0] + 3 * u[1]]),  # grad of quadratic
    )
    fit = hessian_fit(grid, PairingStructure(np.eye(2), 0.0))
    assert fit.symmetry_residual < 1e-12
    assert np.allclose(fit.hessian, [[2, 1], [1, 3]], atol=1e-6)
