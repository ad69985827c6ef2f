import numpy as np
import pytest

from geom_oracles import unit_velocity
from jetspray.bundle import BundlePoint
from jetspray.errors import (BadOrder, GridTooShort, NotTransversal,
                             SingularAt)
from jetspray.flow import base_state, integrate_geodesic
from jetspray.jacobi import (build_chart, build_frame, check_J1_J2,
                             check_transversality, conjugate_point_detector,
                             connection_map, covariant_derivative,
                             frame_matrix, integrate_jacobi_tensor,
                             invert_transversal, jacobi_equation_residual,
                             jacobi_field_equivalence, parallel_transport,
                             riccati_residual, shape_operator,
                             tensor_from_variation,
                             tensor_variation_roundtrip_residual,
                             variation_from_tensor)

PROJ = np.array([[1.0, 0.0], [0.0, 0.0]])  # projector onto the transverse line


def _base(S, x0, v0, t1=1.5, step=2e-3):
    return integrate_geodesic(S, 0, base_state(S.n, x0, v0), (0.0, t1), step)


def _unit_setup(S, K, t1=1.5, step=2e-3):
    """Metric-unit-speed base geodesic from (1, 0) plus its parallel frame."""
    x0 = np.array([1.0, 0.0])
    v0 = unit_velocity(x0, [0.0, 1.0], K)
    base = _base(S, x0, v0, t1, step)
    return base, build_frame(S, base)


@pytest.fixture(scope="module")
def sphere_unit(sphere2):
    return _unit_setup(sphere2, 1.0)


@pytest.fixture(scope="module")
def sphere_J(sphere2, sphere_unit):
    base, _ = sphere_unit
    return integrate_jacobi_tensor(sphere2, base, np.zeros((2, 2)), PROJ)


# -- transport and frames --------------------------------------------------------


def test_parallel_transport_decays_with_damping(damped2):
    base = _base(damped2, [0.0, 0.0], [1.0, 0.0])
    v = parallel_transport(damped2, base, [0.3, -0.7])
    expect = np.exp(-base.t_grid)[:, None] * np.array([0.3, -0.7])
    assert np.max(np.abs(v.comps - expect)) < 1e-12


def test_transported_vectors_have_zero_covariant_derivative(sphere2, sphere_unit):
    base, frame = sphere_unit
    v = parallel_transport(sphere2, base, frame.e[0, :, 0])
    dv = covariant_derivative(v)
    assert np.max(np.abs(dv.comps)) < 1e-8


def test_velocity_is_parallel_along_spray_geodesics(sphere2, sphere_unit):
    base, frame = sphere_unit
    cdot = frame.basis_all()[:, :, 0]
    from jetspray.jacobi import TensorAlongCurve
    T = TensorAlongCurve((1, 0), base.t_grid, cdot, base.pos[:, 0],
                         base.vel[:, 0], sphere2)
    assert np.max(np.abs(covariant_derivative(T).comps)) < 1e-8


def test_frame_stays_well_conditioned(hyper2):
    base, frame = _unit_setup(hyper2, -1.0)
    assert np.max(frame.condition_numbers()) < 1e3


# -- Jacobi tensors -----------------------------------------------------------------


@pytest.mark.parametrize("K,profile", [
    (1.0, np.sin), (0.0, lambda t: t), (-1.0, np.sinh)])
def test_transverse_tensor_profiles_by_curvature(K, profile):
    from jetspray.spray import constant_curvature_spray, flat_spray
    S = flat_spray(2) if K == 0.0 else constant_curvature_spray(2, K)
    if K == 0.0:
        base = _base(S, [0.0, 0.0], [0.0, 1.0], t1=2.0, step=5e-3)
        frame = build_frame(S, base)
    else:
        base, frame = _unit_setup(S, K, t1=2.0, step=5e-3)
    J = integrate_jacobi_tensor(S, base, np.zeros((2, 2)), PROJ)
    Mf = frame_matrix(J.J.comps, frame)[:, 0, 0]
    assert np.max(np.abs(Mf - profile(base.t_grid))) < 1e-7
    assert J.residual < 1e-6


def test_tensor_requires_an_unlifted_base(sphere2):
    g = integrate_geodesic(sphere2, 1,
                           (BundlePoint(2, 1, [[0.1, 0], [0, 0.1]]),
                            BundlePoint(2, 1, [[1.0, 0], [0, 0]])),
                           (0.0, 1.0), 1e-2)
    with pytest.raises(BadOrder):
        integrate_jacobi_tensor(sphere2, g, np.zeros((2, 2)), PROJ)


def test_tensor_applied_to_parallel_vector_is_a_deviation_field(sphere2, sphere_unit, sphere_J):
    base, frame = sphere_unit
    J = sphere_J
    v = parallel_transport(sphere2, base, frame.e[0, :, 0])
    assert jacobi_field_equivalence(sphere2, base, v, J) < 1e-8


def test_equation_residual_flags_a_non_solution(sphere2, sphere_unit, sphere_J):
    from jetspray.jacobi import TensorAlongCurve
    base, frame = sphere_unit
    good = sphere_J.J
    comps = good.comps + 0.05 * np.sin(3.0 * base.t_grid)[:, None, None]
    bogus = TensorAlongCurve(good.valence, good.t_grid, comps,
                             good.curve_pos, good.curve_vel, good.S)
    assert jacobi_equation_residual(bogus) > 1e-2


# -- transversality ----------------------------------------------------------------


def test_transversality_check_and_hypotheses(sphere2, sphere_unit, sphere_J):
    base, frame = sphere_unit
    J = sphere_J
    chk = check_transversality(J, frame)
    assert chk["transversal"] and chk["hypotheses_hold"]
    assert chk["conclusion_matches"]


def test_full_identity_initial_slope_is_not_transversal(sphere2, sphere_unit):
    base, frame = sphere_unit
    J = integrate_jacobi_tensor(sphere2, base, np.zeros((2, 2)), np.eye(2))
    assert not check_transversality(J, frame)["transversal"]
    with pytest.raises(NotTransversal):
        invert_transversal(J, frame, window=(0.3, 1.2))


def test_inversion_rejects_vanishing_windows(sphere2):
    base, frame = _unit_setup(sphere2, 1.0, t1=3.5, step=5e-3)
    J = integrate_jacobi_tensor(sphere2, base, np.zeros((2, 2)), PROJ)
    with pytest.raises(SingularAt):
        # the transverse determinant is sin t, vanishing near pi
        invert_transversal(J, frame, window=(3.0, 3.3), det_floor=5e-3)
    inv = invert_transversal(J, frame, window=(0.3, 1.2))
    Mf = frame_matrix(inv.comps, inv.frame)[:, 0, 0]
    assert np.max(np.abs(Mf - 1.0 / np.sin(inv.t_grid))) < 1e-7


def test_window_needs_enough_grid_points(sphere2, sphere_unit, sphere_J):
    base, frame = sphere_unit
    J = sphere_J
    with pytest.raises(GridTooShort):
        invert_transversal(J, frame, window=(0.5, 0.504))


# -- Riccati operators ---------------------------------------------------------------


def test_riccati_operator_profile_and_defect(sphere2, sphere_unit, sphere_J):
    base, frame = sphere_unit
    J = sphere_J
    L, defect = riccati_residual(J, frame, window=(0.3, 1.2))
    Lf = frame_matrix(L.comps, L.frame)[:, 0, 0]
    assert np.max(np.abs(Lf - 1.0 / np.tan(L.t_grid))) < 1e-7
    assert defect < 1e-5


def test_flat_radial_riccati_profile(flat2):
    base = _base(flat2, [0.0, 0.0], [0.0, 1.0], t1=2.0)
    frame = build_frame(flat2, base)
    J = integrate_jacobi_tensor(flat2, base, np.zeros((2, 2)), PROJ)
    L, defect = riccati_residual(J, frame, window=(0.4, 1.8))
    Lf = frame_matrix(L.comps, L.frame)[:, 0, 0]
    assert np.max(np.abs(Lf - 1.0 / L.t_grid)) < 1e-9
    assert defect < 1e-6


# -- tensor <-> variation correspondence ------------------------------------------------


def test_variation_rebuilt_from_tensor_round_trips(sphere2, sphere_unit, sphere_J):
    base, frame = sphere_unit
    J = sphere_J
    assert tensor_variation_roundtrip_residual(J, frame) < 1e-6


def test_tensor_extracted_from_a_variation_solves_the_equation(sphere2, sphere_unit, sphere_J):
    base, frame = sphere_unit
    J = sphere_J
    V = variation_from_tensor(J, frame)
    J2 = tensor_from_variation(V, frame)
    assert J2.residual < 1e-5
    # the two tensors agree on the transverse line
    a = frame_matrix(J.J.comps, frame)
    b = frame_matrix(J2.J.comps, frame)
    assert np.max(np.abs(a - b)) < 1e-6


def test_rebuilding_needs_transversality(sphere2, sphere_unit):
    base, frame = sphere_unit
    J = integrate_jacobi_tensor(sphere2, base, np.zeros((2, 2)), np.eye(2))
    with pytest.raises(NotTransversal):
        variation_from_tensor(J, frame)


# -- connection map and shape operators ---------------------------------------------------


def test_connection_map_splits_off_the_damping(damped2):
    xi = BundlePoint(2, 2, [[0.1, 0.2], [1.0, 0.5], [0.3, -0.2], [0.4, 0.6]])
    out = connection_map(damped2, xi)
    # N = Id, so the fiber part is Y + X
    assert np.allclose(out.blocks[0], [0.1, 0.2])
    assert np.allclose(out.blocks[1], [0.7, 0.4], atol=1e-13)


def test_shape_operator_of_flat_radial_field(flat2):
    def init(s):
        return np.zeros(2), np.array([np.cos(s[0]), np.sin(s[0])])

    from jetspray.variation import GeodesicVariation
    V = GeodesicVariation(flat2, 1, 0.4, init, (0.0, 2.0), 2e-3)
    A = shape_operator(V, window=(0.5, 1.8))
    assert A.riccati_residual < 1e-6
    base = _base(flat2, [0.0, 0.0], [1.0, 0.0], t1=2.0)
    frame = build_frame(flat2, base)
    sl = slice(250, 901)
    Af = frame_matrix(A.A.comps, _subframe(frame, sl))[:, 0, 0]
    assert np.max(np.abs(Af - 1.0 / A.A.t_grid)) < 1e-6


def _subframe(frame, sl):
    from jetspray.jacobi import ParallelFrame, _slice_record
    return ParallelFrame(frame.S, _slice_record(frame.base, sl), frame.e[sl])


def test_shape_operator_matches_the_riccati_operator(sphere2, sphere_unit, sphere_J):
    base, frame = sphere_unit
    J = sphere_J
    V = variation_from_tensor(J, frame)
    res_j1, res_j2 = check_J1_J2(V, J, frame, window=(0.3, 1.2))
    assert res_j1 < 1e-4
    assert res_j2 < 1e-4


# -- charts and conjugate points -----------------------------------------------------------


def test_flat_chart_matches_its_closed_form(flat2):
    base = _base(flat2, [0.0, 0.0], [0.0, 1.0], t1=1.0, step=2e-3)
    frame = build_frame(flat2, base)
    J = integrate_jacobi_tensor(flat2, base, PROJ, np.zeros((2, 2)))
    ch = build_chart(J, frame)
    assert ch.t_line_residual < 1e-9
    for t in (0.0, 0.25, 0.5, 1.0):
        for s in (-0.4 * ch.eps, 0.0, 0.3 * ch.eps):
            assert np.allclose(ch(t, [s]), [s, t], atol=1e-12)


def test_curved_chart_passes_its_own_checks(sphere2, sphere_unit, sphere_J):
    base, frame = sphere_unit
    J = sphere_J
    ch = build_chart(J, frame, window=(0.3, 1.2))
    assert ch.jacobian_min > 1e-8
    assert ch.t_line_residual < 1e-6
    assert ch.eps > 1e-6


def test_conjugate_location_on_the_round_sphere(sphere2):
    base, frame = _unit_setup(sphere2, 1.0, t1=3.5, step=5e-3)
    zeros = conjugate_point_detector(sphere2, base, frame)
    assert len(zeros) == 1
    assert zeros[0] == pytest.approx(np.pi, abs=1e-4)


def test_no_conjugate_points_in_negative_curvature(hyper2):
    base, frame = _unit_setup(hyper2, -1.0, t1=3.0, step=5e-3)
    assert conjugate_point_detector(hyper2, base, frame) == []
