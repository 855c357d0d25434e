import numpy as np
import pytest

from slaglab.ambient import BoundaryLagrangian, make_model
from slaglab.errors import (
    ConfigError,
    DegreeMismatchError,
    LabelViolationError,
    NotAutomorphismError,
)
from slaglab.expressions import CoordinateMap, ScalarExpression, parse_expression
from slaglab.fixtures import cylinder_translation, interval_c1, two_handle
from slaglab.immersion import (
    Immersion,
    ImmersionFamily,
    permutation_on_cochains,
    pullback_metric,
    pullback_n_form,
    pullback_two_form,
    reparametrize,
    validate,
)


@pytest.fixture(scope="module")
def cyl():
    return cylinder_translation(1)


def cylinder_rotation(fx, steps=1):
    """Vertex permutation rotating the circumferential direction."""
    n_circ = 16
    psi = np.empty(fx.mesh.n_vertices, dtype=int)
    for v in range(fx.mesh.n_vertices):
        i, j = divmod(v, n_circ)
        psi[v] = i * n_circ + (j + steps) % n_circ
    return psi


def cylinder_axial_flip(fx):
    # composing the axial flip with a circumferential reflection maps the
    # diagonal split of each quad onto itself, giving a true automorphism
    n_circ, n_axial = 16, 8
    psi = np.empty(fx.mesh.n_vertices, dtype=int)
    for v in range(fx.mesh.n_vertices):
        i, j = divmod(v, n_circ)
        psi[v] = (n_axial - i) * n_circ + (-j) % n_circ
    return psi


def test_fixture_validates_cleanly(cyl):
    report = validate(cyl.model, cyl.base, cyl.lagrangians)
    assert report.ok and report.special_ok
    assert report.lagrangian_residual <= 1e-14
    assert report.special_residual <= 1e-14
    assert report.boundary_distance <= 1e-14
    assert report.transversality_margin > 0.05


def test_two_handle_validates():
    fx = two_handle(1)
    report = validate(fx.model, fx.base, fx.lagrangians)
    assert report.ok and report.special_ok


def test_displaced_boundary_detected(cyl):
    positions = cyl.base.positions.copy()
    boundary_circle = np.nonzero(cyl.mesh.boundary_component_of_vertex() == 1)[0]
    positions[boundary_circle, 3] += 1e-3  # off the y2 = 0 subtorus
    moved = Immersion(cyl.mesh, positions)
    report = validate(cyl.model, moved, cyl.lagrangians)
    assert report.boundary_distance == pytest.approx(1e-3, rel=1e-6)
    assert not report.ok


def test_tangent_boundary_lagrangian_kills_transversality(cyl):
    # a boundary condition whose plane contains the surface tangent plane
    tangent_lam = BoundaryLagrangian(
        1, np.zeros(4), np.array([[1, 0, 0, 0], [0, 0, 1, 0]], dtype=float)
    )
    lams = [tangent_lam, cyl.lagrangians[1]]
    report = validate(cyl.model, cyl.base, lams)
    assert report.transversality_margin < 1e-12
    assert not report.ok


def test_pullback_metric_scaling():
    # euclidean target: no wrap-around, so dilation acts linearly on every edge
    fx = interval_c1(1)
    model = make_model(1)
    base = Immersion(fx.mesh, fx.base.positions)
    metric = pullback_metric(model, base)
    dilated = Immersion(fx.mesh, 0.5 * fx.base.positions)
    metric2 = pullback_metric(model, dilated)
    assert np.allclose(metric2.gram, 0.25 * metric.gram)


def test_pullback_metric_conformal_mode():
    fx = cylinder_translation(1, almost_cy=True)
    plain = pullback_metric(fx.model, fx.base, conformal=False)
    tilde = pullback_metric(fx.model, fx.base)
    assert np.allclose(tilde.gram, 0.5 * plain.gram)  # rho^{-2/n} with rho = 2, n = 2


def test_pullback_forms_vanish_on_fixture(cyl):
    omega = pullback_two_form(cyl.model, cyl.base, "omega")
    im = pullback_n_form(cyl.model, cyl.base, "ImOmega")
    assert np.abs(omega.values).max() <= 1e-14
    assert np.abs(im.values).max() <= 1e-14


def test_shear_has_nonzero_symplectic_pullback(cyl):
    # tilt the surface in y1 proportionally to the circumference coordinate
    positions = cyl.base.positions.copy()
    kappa = 0.1
    positions[:, 1] += kappa * positions[:, 2]
    sheared = Immersion(cyl.mesh, positions)
    omega = pullback_two_form(cyl.model, sheared, "omega")
    vals = np.abs(omega.values)
    assert vals.max() > 0
    # away from the wrap seam the 2x2 determinant formula gives kappa times
    # half the coordinate cell area
    interior = vals[vals < vals.max() / 2]
    assert interior.min() == pytest.approx(kappa * (0.5 / 8) * (1 / 16) / 2, rel=1e-10)


def test_two_form_rejected_on_curves():
    fx = interval_c1(1)
    with pytest.raises(DegreeMismatchError):
        pullback_two_form(fx.model, fx.base, "omega")


def test_identity_reparametrization(cyl):
    psi = np.arange(cyl.mesh.n_vertices)
    same = reparametrize(cyl.base, psi)
    assert np.array_equal(same.positions, cyl.base.positions)


def test_rotation_preserves_validation_exactly(cyl):
    psi = cylinder_rotation(cyl, steps=3)
    rotated = reparametrize(cyl.base, psi)
    r1 = validate(cyl.model, cyl.base, cyl.lagrangians)
    r2 = validate(cyl.model, rotated, cyl.lagrangians)
    assert r1.lagrangian_residual == r2.lagrangian_residual
    assert r1.special_residual == r2.special_residual
    assert r1.boundary_distance == r2.boundary_distance
    assert r1.transversality_margin == pytest.approx(r2.transversality_margin, abs=1e-14)


def test_rotation_permutes_pullback_metric(cyl):
    psi = cylinder_rotation(cyl, steps=5)
    rotated = reparametrize(cyl.base, psi)
    g1 = pullback_metric(cyl.model, cyl.base)
    g2 = pullback_metric(cyl.model, rotated)
    # the flat fixture metric is triangle-wise congruent, so equality is exact
    assert np.allclose(np.sort(g1.gram.ravel()), np.sort(g2.gram.ravel()))


def test_boundary_swap_is_label_violation(cyl):
    psi = cylinder_axial_flip(cyl)
    with pytest.raises(LabelViolationError):
        reparametrize(cyl.base, psi)


def test_non_simplicial_map_rejected(cyl):
    psi = np.arange(cyl.mesh.n_vertices)
    psi[0], psi[40] = psi[40], psi[0]  # swap two far-apart vertices
    with pytest.raises(NotAutomorphismError):
        reparametrize(cyl.base, psi)
    with pytest.raises(NotAutomorphismError):
        reparametrize(cyl.base, np.zeros(cyl.mesh.n_vertices, dtype=int))


def test_permutation_on_cochains_is_signed_bijection(cyl):
    psi = cylinder_rotation(cyl, steps=1)
    idx, sgn = permutation_on_cochains(cyl.mesh, psi, 1)
    assert sorted(idx.tolist()) == list(range(cyl.mesh.n_simplices(1)))
    assert set(np.abs(sgn)) == {1.0}


def test_family_expressions_match_translation(cyl):
    family = ImmersionFamily.from_expressions(
        cyl.base, 2, {"y1": "y1 + a*u1"}, ["u1"], constants={"a": 1.0}
    )
    u = [0.37]
    expected = cyl.base.positions.copy()
    expected[:, 1] += 0.37
    assert np.allclose(family.positions(u), expected)
    vel = family.velocity(u, [1.0])
    assert np.allclose(vel[:, 1], 1.0)
    assert np.abs(vel[:, [0, 2, 3]]).max() == 0.0


def test_expression_velocity_chain_rule(cyl):
    family = ImmersionFamily.from_expressions(
        cyl.base, 2, {"y1": "y1 + sin(u1)"}, ["u1"]
    )
    vel = family.velocity([0.2], [1.0])
    assert np.allclose(vel[:, 1], np.cos(0.2))


def test_expression_rejects_unknown_symbols():
    with pytest.raises(ConfigError):
        parse_expression("y1 + q*t", ["y1", "t"])


def test_scalar_expression_constant_and_field():
    rho = ScalarExpression(2.0, 4)
    assert np.allclose(rho(np.zeros((3, 4))), 2.0)
    field = ScalarExpression("1 + x1", 2)
    pts = np.array([[0.0, 0.0], [0.5, 1.0]])
    assert np.allclose(field(pts), [1.0, 1.5])


def test_coordinate_map_defaults_keep_coordinates():
    cmap = CoordinateMap({"y1": "y1 + u1"}, 2, ["u1"])
    base = np.random.default_rng(0).normal(size=(5, 4))
    out = cmap.positions(base, [0.0])
    assert np.allclose(out, base)
