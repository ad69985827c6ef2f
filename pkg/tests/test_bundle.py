import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetspray import bundle as bd
from jetspray.errors import (BadIndex, BadLevel, BadOrder, BaseMismatch)


def _pt(*vals):
    """Order-r point over a 1-dimensional chart from 2^r scalars."""
    vals = np.array(vals, float).reshape(-1, 1)
    r = int(np.log2(len(vals)))
    return bd.BundlePoint(1, r, vals)


def _random(n, r, seed):
    rng = np.random.default_rng(seed)
    return bd.random_point(n, r, rng)


# -- single-point examples -----------------------------------------------------


def test_involution_swaps_middle_blocks():
    out = bd.involution(_pt(1, 2, 3, 4), 2)
    assert np.array_equal(out.blocks.ravel(), [1, 3, 2, 4])


def test_projections_drop_blocks():
    xi = _pt(1, 2, 3, 4)
    assert np.array_equal(bd.project(xi, "pi").blocks.ravel(), [1, 2])
    assert np.array_equal(bd.project(xi, "dpi").blocks.ravel(), [1, 3])
    with pytest.raises(BadOrder):
        bd.project(xi, "ddpi")


def test_fiber_addition():
    out = bd.fiber_combine(_pt(1, 2), _pt(1, 5), mode="add")
    assert np.array_equal(out.blocks.ravel(), [1, 7])


def test_fiber_addition_rejects_mismatched_base():
    with pytest.raises(BaseMismatch):
        bd.fiber_combine(_pt(1, 2), _pt(2, 5), mode="add")


def test_fiber_scaling():
    out = bd.fiber_combine(_pt(1, 2, 3, 4), lam=3.0, mode="scale")
    assert np.array_equal(out.blocks.ravel(), [1, 2, 9, 12])


def test_liouville_vector():
    out = bd.liouville(_pt(1, 2))
    assert (out.r, out.n) == (2, 1)
    assert np.array_equal(out.blocks.ravel(), [1, 2, 0, 2])


def test_slashed_membership():
    assert not bd.in_slashed(_pt(1, 0)).member
    assert not bd.in_slashed(_pt(1, 2, 0, 4)).member
    assert bd.in_slashed(_pt(1, 0, 3, 0)).member


def test_canonical_projection_examples():
    xi = _pt(1, 2, 3, 4)
    assert np.array_equal(bd.canonical_projection(xi, 1).blocks.ravel(), [1, 2])
    assert np.array_equal(bd.canonical_projection(xi, 2).blocks.ravel(), [1, 3])
    with pytest.raises(BadIndex):
        bd.canonical_projection(xi, 3)


def test_representative_map_is_multilinear_polynomial():
    W = bd.representative_map(_pt(1, 2, 3, 4))
    for s1, s2 in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.5, -0.3), (2.0, 7.0)]:
        assert W(s1, s2)[0] == pytest.approx(1 + 3 * s1 + 2 * s2 + 4 * s1 * s2,
                                             abs=1e-12)


def test_involution_level_bounds():
    with pytest.raises(BadLevel):
        bd.involution(_pt(1, 2), 1)
    with pytest.raises(BadLevel):
        bd.involution(_pt(1, 2, 3, 4), 3)


# -- structure-map identities (property-based) ----------------------------------


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 3), r=st.integers(2, 4), seed=st.integers(0, 10 ** 6))
def test_involution_is_involutive(n, r, seed):
    xi = _random(n, r, seed)
    for level in range(2, r + 1):
        assert bd.involution(bd.involution(xi, level), level).allclose(xi)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 3), r=st.integers(2, 4), seed=st.integers(0, 10 ** 6))
def test_lower_projection_after_top_involution(n, r, seed):
    # dropping the top order after the top swap equals the once-shifted drop
    xi = _random(n, r, seed)
    assert bd.project(xi, "dpi").allclose(
        bd.project(bd.involution(xi, r), "pi"))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 3), r=st.integers(3, 4), seed=st.integers(0, 10 ** 6))
def test_projection_commutes_with_inner_involution(n, r, seed):
    xi = _random(n, r, seed)
    assert bd.project(bd.involution(xi, r - 1), "pi").allclose(
        bd.involution(bd.project(xi, "pi"), r - 1))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 3), r=st.integers(2, 4), seed=st.integers(0, 10 ** 6))
def test_double_drops_commute(n, r, seed):
    xi = _random(n, r, seed)
    assert bd.project(bd.project(xi, "dpi"), "pi").allclose(
        bd.project(bd.project(xi, "pi"), "pi"))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 3), r=st.integers(3, 4), seed=st.integers(0, 10 ** 6))
def test_deep_drop_after_shallow_drop(n, r, seed):
    xi = _random(n, r, seed)
    assert bd.project(bd.project(xi, "pi"), "dpi").allclose(
        bd.project(bd.project(xi, "ddpi"), "pi"))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 3), r=st.integers(3, 4), seed=st.integers(0, 10 ** 6))
def test_deep_drop_commutes_with_top_involution(n, r, seed):
    xi = _random(n, r, seed)
    assert bd.project(bd.involution(xi, r), "ddpi").allclose(
        bd.involution(bd.project(xi, "ddpi"), r - 1))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 3), r=st.integers(1, 4), seed=st.integers(0, 10 ** 6))
def test_canonical_projection_matches_recursive_form(n, r, seed):
    xi = _random(n, r, seed)
    for a in range(1, r + 1):
        assert bd.canonical_projection(xi, a).allclose(
            bd.canonical_projection_recursive(xi, a))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 3), r=st.integers(1, 4), seed=st.integers(0, 10 ** 6))
def test_canonical_projections_share_the_base(n, r, seed):
    xi = _random(n, r, seed)
    for a in range(1, r + 1):
        p = bd.canonical_projection(xi, a)
        assert np.array_equal(p.base, xi.base)


def test_canonical_projections_are_pairwise_distinct_maps():
    xi = _random(2, 3, 11)
    outs = [bd.canonical_projection(xi, a).blocks for a in range(1, 4)]
    for a in range(3):
        for b in range(a + 1, 3):
            assert not np.array_equal(outs[a], outs[b])


def test_extreme_canonical_projections():
    xi = _random(2, 3, 5)
    # lowest index: iterated top-drop down to order 1
    low = bd.project(bd.project(xi, "pi"), "pi")
    assert bd.canonical_projection(xi, 1).allclose(low)
    # highest index: base paired with the top derivative block
    hi = bd.canonical_projection(xi, 3)
    assert np.array_equal(hi.blocks[1], xi.blocks[1 << 2])


# -- representative maps -------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 3), r=st.integers(1, 3), seed=st.integers(0, 10 ** 6))
def test_representative_map_matches_nested_form(n, r, seed):
    xi = _random(n, r, seed)
    W = bd.representative_map(xi)
    Wn = bd.representative_map_recursive(xi)
    rng = np.random.default_rng(seed + 1)
    for _ in range(5):
        s = rng.standard_normal(r)
        assert np.allclose(W(*s), Wn(*s), atol=1e-12)


def test_representative_map_derivatives_recover_blocks():
    xi = _random(2, 2, 9)
    W = bd.representative_map(xi)
    h = 1e-3
    base = W(0.0, 0.0)
    d1 = (W(h, 0.0) - W(-h, 0.0)) / (2 * h)      # outermost parameter
    d2 = (W(0.0, h) - W(0.0, -h)) / (2 * h)      # innermost parameter
    d12 = (W(h, h) - W(h, -h) - W(-h, h) + W(-h, -h)) / (4 * h * h)
    assert np.allclose(base, xi.blocks[0], atol=1e-6)
    assert np.allclose(d2, xi.blocks[1], atol=1e-6)
    assert np.allclose(d1, xi.blocks[2], atol=1e-6)
    assert np.allclose(d12, xi.blocks[3], atol=1e-6)


def test_canonical_projection_of_mixed_derivative_blocks():
    # p_a keeps the base and the single-parameter derivative block {a}
    xi = _random(3, 3, 21)
    for a in range(1, 4):
        p = bd.canonical_projection(xi, a)
        assert np.array_equal(p.blocks[1], xi.blocks[1 << (a - 1)])


# -- assembly and serialization --------------------------------------------------


def test_assemble_disassemble_roundtrip():
    pos = _random(2, 2, 1)
    vel = _random(2, 2, 2)
    xi = bd.assemble(pos, vel)
    assert xi.r == 3
    p, v = bd.disassemble(xi)
    assert p.allclose(pos) and v.allclose(vel)


def test_json_roundtrip_is_exact():
    xi = _random(3, 2, 7)
    text = xi.to_json()
    again = bd.BundlePoint.from_json(text)
    assert again.allclose(xi)
    payload = json.loads(text)
    assert payload["n"] == 3 and payload["r"] == 2


def test_shape_validation():
    with pytest.raises(BadOrder):
        bd.BundlePoint(2, 1, np.zeros((3, 2)))
