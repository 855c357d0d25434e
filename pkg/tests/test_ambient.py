import numpy as np
import pytest

from slaglab.ambient import (
    BoundaryLagrangian,
    lagrangian_check,
    make_model,
    standard_top_form,
)
from slaglab.errors import (
    ArityMismatchError,
    NormalizationFailureError,
    NotKaehlerError,
)


def vec(*entries):
    return np.array(entries, dtype=float)


def test_standard_models_normalize_exactly():
    for n in (1, 2, 3):
        model = make_model(n)
        assert model.normalization_residual < 1e-15
        assert model.rho_value == 1.0


def test_scaled_top_form_needs_rho():
    with pytest.raises(NormalizationFailureError):
        make_model(2, Omega_scale=2.0)
    model = make_model(2, Omega_scale=2.0, rho_expr=2.0)
    assert model.rho_value == pytest.approx(2.0)


def test_varying_rho_with_constant_forms_fails():
    with pytest.raises(NormalizationFailureError):
        make_model(1, topology="torus", rho_expr="1 + x1/2")


def test_omega_values():
    model = make_model(2)
    assert model.eval_form("omega", None, [vec(1, 0, 0, 0), vec(0, 1, 0, 0)]) == 1.0
    assert model.eval_form("omega", None, [vec(1, 0, 0, 0), vec(0, 0, 1, 0)]) == 0.0


def test_im_omega_values_from_expansion():
    # dz1 ^ dz2 = (dx1 + i dy1) ^ (dx2 + i dy2)
    model = make_model(2)
    dx1, dy1, dx2, dy2 = np.eye(4)
    assert model.eval_form("ImOmega", None, [dx1, dx2]) == 0.0
    assert model.eval_form("ImOmega", None, [dx1, dy2]) == 1.0
    assert model.eval_form("ImOmega", None, [dy1, dx2]) == 1.0
    assert model.eval_form("ReOmega", None, [dx1, dx2]) == 1.0
    assert model.eval_form("ReOmega", None, [dy1, dy2]) == -1.0


def test_metric_and_conformal_metric():
    model = make_model(2, Omega_scale=2.0, rho_expr=2.0, topology="torus")
    u = vec(1, 0, 0, 0)
    g = model.eval_form("g", None, [u, u])
    gt = model.eval_form("gtilde", None, [u, u])
    assert g == pytest.approx(1.0)
    assert gt == pytest.approx(model.rho_value ** (-2.0 / model.n) * g, rel=1e-14)


def test_gtilde_equals_g_when_rho_is_one():
    model = make_model(2)
    rng = np.random.default_rng(0)
    for _ in range(5):
        u, v = rng.normal(size=(2, 4))
        assert model.eval_form("g", None, [u, v]) == pytest.approx(
            model.eval_form("gtilde", None, [u, v]), abs=1e-14
        )


def test_arity_mismatch():
    model = make_model(2)
    with pytest.raises(ArityMismatchError):
        model.eval_form("omega", None, [vec(1, 0, 0, 0)])
    with pytest.raises(ArityMismatchError):
        model.eval_form("g", None, [vec(1, 0, 0, 0)])


def test_j_compatibility_enforced():
    bad_j = np.eye(4)
    with pytest.raises(NotKaehlerError):
        make_model(2, J=bad_j)


def test_omega_j_invariance_and_spd_on_random_frames():
    model = make_model(2)
    rng = np.random.default_rng(1)
    J = model.J
    for _ in range(100):
        u, v = rng.normal(size=(2, 4))
        lhs = model.eval_form("omega", None, [J @ u, J @ v])
        rhs = model.eval_form("omega", None, [u, v])
        assert lhs == pytest.approx(rhs, abs=1e-14)
        assert model.eval_form("g", None, [u, u]) > 0


def test_torus_periodicity_of_evaluations():
    model = make_model(2, topology="torus")
    rng = np.random.default_rng(2)
    point = rng.normal(size=4)
    shift = point + model.lattice[0] + 2 * model.lattice[3]
    frames = rng.normal(size=(2, 4))
    assert model.eval_form("omega", point, frames) == model.eval_form(
        "omega", shift, frames
    )
    assert np.allclose(model.reduce_points(point), model.reduce_points(shift))


def test_lagrangian_check_examples():
    model = make_model(2, topology="torus")
    good = BoundaryLagrangian(
        1, np.zeros(4), np.array([[0, 1, 0, 0], [0, 0, 1, 0]], dtype=float)
    )
    assert lagrangian_check(model, good) == 0.0
    bad = BoundaryLagrangian(
        1, np.zeros(4), np.array([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=float)
    )
    assert lagrangian_check(model, bad) == 1.0
    line_model = make_model(1)
    line = BoundaryLagrangian(1, np.zeros(2), np.array([[0.3, 0.7]]))
    assert lagrangian_check(line_model, line) == 0.0


def test_disjointness_lattice_aware():
    model = make_model(2, topology="torus")
    span = np.array([[0, 1, 0, 0], [0, 0, 1, 0]], dtype=float)
    l1 = BoundaryLagrangian(1, vec(0, 0, 0, 0), span)
    l2 = BoundaryLagrangian(2, vec(0.5, 0, 0, 0), span)
    model.check_disjoint([l1, l2])
    l3 = BoundaryLagrangian(3, vec(1.0, 0, 0, 0), span)  # same subtorus as l1 mod lattice
    with pytest.raises(NotKaehlerError):
        model.check_disjoint([l1, l3])


def test_wedge_and_contraction():
    form = standard_top_form(2)
    dx1, dy1 = np.eye(4)[0], np.eye(4)[1]
    contracted = form.imag().contract(np.eye(4)[1])  # i_{dy1} Im(Omega)
    # Im(Omega) = dx1^dy2 + dy1^dx2, so contraction gives dx2
    assert contracted(np.eye(4)[2][None, :]) == pytest.approx(1.0)
    assert contracted(np.eye(4)[3][None, :]) == pytest.approx(0.0)
    omega = make_model(2).omega
    top = omega.wedge(omega)
    assert top.coeffs[(0, 1, 2, 3)] == pytest.approx(2.0)


def test_form_antisymmetry():
    omega = make_model(2).omega
    rng = np.random.default_rng(3)
    u, v = rng.normal(size=(2, 4))
    assert float(omega(np.stack([u, v]))) == pytest.approx(
        -float(omega(np.stack([v, u]))), abs=1e-14
    )
