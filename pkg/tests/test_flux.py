import numpy as np
import pytest

from slaglab.dec import HodgeStructure, hodge_star
from slaglab.errors import (
    EndpointMismatchError,
    NonLagrangianSampleError,
    NonSpecialSampleError,
    VelocityUnavailableError,
)
from slaglab.fixtures import cylinder_translation, interval_c1, two_handle
from slaglab.flux import (
    ImmersionPath,
    dual_form,
    homotopy_invariance_harness,
    relative_flux,
    special_flux,
    swept_rf_oracle,
    swept_sf_oracle,
    tangent_one_form,
)
from slaglab.immersion import (
    ImmersionFamily,
    permutation_on_cochains,
    pullback_metric,
    reparametrize,
)
from slaglab.meshes import absolute_cycle_basis, relative_cycle_basis


@pytest.fixture(scope="module")
def cyl():
    fx = cylinder_translation(1)
    rel = relative_cycle_basis(fx.mesh)
    ab = absolute_cycle_basis(fx.mesh)
    return fx, rel, ab


def test_static_path_has_zero_fluxes(cyl):
    fx, rel, ab = cyl
    path = ImmersionPath.straight(fx.family, [0.0], n_samples=9)
    assert np.abs(relative_flux(fx.model, path, rel).period_vector).max() == 0.0
    assert np.abs(special_flux(fx.model, path, ab).period_vector).max() == 0.0
    assert swept_rf_oracle(fx.model, path, rel.cycles[0]) == 0.0
    assert swept_sf_oracle(fx.model, path, ab.cycles[0]) == 0.0


def test_tangent_form_on_fixture_edges(cyl):
    """Vertical unit motion: theta = -(axial edge extent), zero circumferentially."""
    fx, rel, ab = cyl
    path = ImmersionPath.straight(fx.family, [1.0], n_samples=3)
    theta = tangent_one_form(fx.model, path, 0)
    frames = fx.base.simplex_frames(fx.model, 1)
    assert np.allclose(theta.values, -frames[:, 0, 0], atol=1e-15)
    phi = dual_form(fx.model, path, 0)
    assert np.allclose(phi.values, frames[:, 0, 2], atol=1e-15)


def test_fixture_periods_closed_form(cyl):
    fx, rel, ab = cyl
    a = 0.3
    path = ImmersionPath.straight(fx.family, [a], n_samples=33)
    rf = relative_flux(fx.model, path, rel)
    sf = special_flux(fx.model, path, ab)
    assert rf.period_vector[0] == pytest.approx(-a * 0.5, abs=1e-14)
    assert abs(sf.period_vector[0]) == pytest.approx(a, abs=1e-14)
    assert rf.diagnostics["max_sample_closedness"] == 0.0
    assert rf.diagnostics["max_sample_boundary_value"] == 0.0
    assert sf.diagnostics["max_sample_closedness"] == 0.0
    assert rf.diagnostics["rule"] == "simpson"
    assert rf.diagnostics["richardson_error"] <= 1e-15


def test_even_sample_count_falls_back_to_trapezoid(cyl):
    fx, rel, _ = cyl
    path = ImmersionPath.straight(fx.family, [0.3], n_samples=10)
    rf = relative_flux(fx.model, path, rel)
    assert rf.diagnostics["rule"] == "trapezoid"
    assert rf.period_vector[0] == pytest.approx(-0.15, abs=1e-14)


def test_oracle_matches_periods_on_fixture(cyl):
    fx, rel, ab = cyl
    path = ImmersionPath.straight(fx.family, [0.3], n_samples=33)
    rf = relative_flux(fx.model, path, rel)
    sf = special_flux(fx.model, path, ab)
    assert swept_rf_oracle(fx.model, path, rel.cycles[0]) == pytest.approx(
        rf.period_vector[0], abs=1e-12
    )
    assert swept_sf_oracle(fx.model, path, ab.cycles[0]) == pytest.approx(
        sf.period_vector[0], abs=1e-12
    )


def test_concatenation_additivity_and_reversal(cyl):
    fx, rel, _ = cyl
    a = 0.3

    def segment(u0, u1, n=17):
        return ImmersionPath(
            fx.family,
            lambda t: np.array([u0 + t * (u1 - u0)]),
            derivative=lambda t: np.array([u1 - u0]),
            n_samples=n,
        )

    whole = relative_flux(fx.model, segment(0.0, a), rel).period_vector
    first = relative_flux(fx.model, segment(0.0, 0.4 * a), rel).period_vector
    second = relative_flux(fx.model, segment(0.4 * a, a), rel).period_vector
    assert np.allclose(first + second, whole, atol=1e-14)
    back = relative_flux(fx.model, segment(a, 0.0), rel).period_vector
    assert np.allclose(whole + back, 0.0, atol=1e-14)


def test_reparametrized_path_pulls_back_tangent_form(cyl):
    """Covariance: the rotated lift produces exactly the permuted cochain."""
    fx, rel, ab = cyl
    n_circ = 16
    psi = np.array([
        (v // n_circ) * n_circ + ((v % n_circ) + 1) % n_circ
        for v in range(fx.mesh.n_vertices)
    ])
    base2 = reparametrize(fx.base, psi)
    family2 = ImmersionFamily.translation(base2, [np.array([0, 1, 0, 0.0])])
    path1 = ImmersionPath.straight(fx.family, [0.3], n_samples=5)
    path2 = ImmersionPath.straight(family2, [0.3], n_samples=5)
    theta1 = tangent_one_form(fx.model, path1, 2)
    theta2 = tangent_one_form(fx.model, path2, 2)
    idx, sgn = permutation_on_cochains(fx.mesh, psi, 1)
    assert np.array_equal(theta2.values, sgn * theta1.values[idx])
    # periods over the cycle basis agree: the rotation acts trivially on classes
    rf1 = relative_flux(fx.model, path1, rel).period_vector
    rf2 = relative_flux(fx.model, path2, rel).period_vector
    assert np.allclose(rf1, rf2, atol=1e-14)


def test_l2_pairing_invariant_under_reparametrization(cyl):
    fx, rel, ab = cyl
    n_circ = 16
    psi = np.array([
        (v // n_circ) * n_circ + ((v % n_circ) + 7) % n_circ
        for v in range(fx.mesh.n_vertices)
    ])
    base2 = reparametrize(fx.base, psi)
    family2 = ImmersionFamily.translation(base2, [np.array([0, 1, 0, 0.0])])
    path1 = ImmersionPath.straight(fx.family, [1.0], n_samples=3)
    path2 = ImmersionPath.straight(family2, [1.0], n_samples=3)
    theta1 = tangent_one_form(fx.model, path1, 0)
    theta2 = tangent_one_form(fx.model, path2, 0)
    hs1 = HodgeStructure(fx.mesh, pullback_metric(fx.model, fx.base))
    hs2 = HodgeStructure(fx.mesh, pullback_metric(fx.model, base2))
    assert hs1.inner(theta1, theta1) == pytest.approx(hs2.inner(theta2, theta2), abs=1e-15)


def test_non_lagrangian_sample_rejected(cyl):
    fx, rel, _ = cyl

    def tilted(u):
        out = fx.base.positions.copy()
        out[:, 1] += u[0] * (1.0 + 0.5 * out[:, 2])  # shear grows along x2
        return out

    family = ImmersionFamily(fx.mesh, 1, tilted, lambda u, w: None)
    path = ImmersionPath(family, lambda t: np.array([0.01 * t]), n_samples=5,
                         velocity_mode="fd")
    with pytest.raises(NonLagrangianSampleError):
        relative_flux(fx.model, path, rel)


def test_non_special_sample_rejected(cyl):
    fx, _, ab = cyl

    def bent(u):
        out = fx.base.positions.copy()
        # piecewise-linear graph y1 = s * x1 stays Lagrangian but not calibrated
        out[:, 1] += u[0] * out[:, 0]
        return out

    family = ImmersionFamily(fx.mesh, 1, bent, None)
    path = ImmersionPath(family, lambda t: np.array([1e-2 * t]), n_samples=5,
                         velocity_mode="fd")
    with pytest.raises(NonSpecialSampleError):
        special_flux(fx.model, path, ab)
    # ... while the relative flux is still legitimate on the same path
    rel = relative_cycle_basis(fx.mesh)
    rf = relative_flux(fx.model, path, rel)
    assert rf.diagnostics["max_lagrangian_residual"] <= 1e-12


def test_velocity_unavailable():
    fx = cylinder_translation(1)
    with pytest.raises(VelocityUnavailableError):
        ImmersionPath(fx.family, lambda t: np.array([t]), n_samples=2,
                      velocity_mode="fd")


def test_fd_velocity_matches_analytic(cyl):
    fx, rel, _ = cyl
    curve = lambda t: np.array([0.3 * t])
    fd_path = ImmersionPath(fx.family, curve, n_samples=33, velocity_mode="fd")
    an_path = ImmersionPath(fx.family, curve, derivative=lambda t: np.array([0.3]),
                            n_samples=33)
    rf_fd = relative_flux(fx.model, fd_path, rel).period_vector
    rf_an = relative_flux(fx.model, an_path, rel).period_vector
    assert np.allclose(rf_fd, rf_an, atol=1e-12)  # linear motion: fd is exact


def test_homotopy_invariance_and_endpoint_check(cyl):
    fx, rel, ab = cyl
    straight = ImmersionPath.straight(fx.family, [0.3], n_samples=65)
    quad_profile = (lambda t: t * t * (3 - 2 * t), lambda t: 6 * t * (1 - t))
    curved = ImmersionPath.straight(fx.family, [0.3], n_samples=65,
                                    profile=quad_profile)
    report = homotopy_invariance_harness(fx.model, straight, curved, rel, ab)
    assert report.rf_discrepancy <= 1e-12
    assert report.sf_discrepancy <= 1e-12
    other_end = ImmersionPath.straight(fx.family, [0.2], n_samples=17)
    with pytest.raises(EndpointMismatchError):
        homotopy_invariance_harness(fx.model, straight, other_end, rel, ab)


def test_time_reparametrized_path_same_flux(cyl):
    fx, rel, ab = cyl
    straight = ImmersionPath.straight(fx.family, [0.3], n_samples=33)
    squared = ImmersionPath.straight(
        fx.family, [0.3], n_samples=33, profile=(lambda t: t * t, lambda t: 2 * t)
    )
    rf1 = relative_flux(fx.model, straight, rel).period_vector
    rf2 = relative_flux(fx.model, squared, rel).period_vector
    assert np.allclose(rf1, rf2, atol=1e-14)


def test_duality_along_path_is_exact(cyl):
    """Discrete star of the tangent form equals the dual form on flat fixtures."""
    fx, rel, ab = cyl
    hs = HodgeStructure(fx.mesh, pullback_metric(fx.model, fx.base))
    path = ImmersionPath.straight(fx.family, [0.3], n_samples=9)
    for j in (0, 4, 8):
        theta = tangent_one_form(fx.model, path, j)
        phi = dual_form(fx.model, path, j)
        st = hodge_star(hs, theta)
        assert np.abs(st.values - phi.values).max() < 1e-13


def test_two_handle_fluxes_are_componentwise():
    fx = two_handle(1)
    rel = relative_cycle_basis(fx.mesh)
    ab = absolute_cycle_basis(fx.mesh)
    path = ImmersionPath.straight(fx.family, [0.4, 0.0], n_samples=17)
    rf = relative_flux(fx.model, path, rel).period_vector
    sf = special_flux(fx.model, path, ab).period_vector
    # only the first handle moves
    assert np.count_nonzero(np.abs(rf) > 1e-14) == 1
    assert np.count_nonzero(np.abs(sf) > 1e-14) == 1


def test_interval_flux_and_oracles():
    fx = interval_c1(1)
    rel = relative_cycle_basis(fx.mesh)
    ab = absolute_cycle_basis(fx.mesh)
    path = ImmersionPath.straight(fx.family, [0.25], n_samples=33)
    rf = relative_flux(fx.model, path, rel)
    sf = special_flux(fx.model, path, ab)
    assert rf.period_vector[0] == pytest.approx(-0.25 * 0.5, abs=1e-14)
    assert sf.period_vector[0] == pytest.approx(0.25, abs=1e-14)
    assert swept_rf_oracle(fx.model, path, rel.cycles[0]) == pytest.approx(
        rf.period_vector[0], abs=1e-14
    )
    assert swept_sf_oracle(fx.model, path, ab.cycles[0]) == pytest.approx(
        sf.period_vector[0], abs=1e-14
    )
