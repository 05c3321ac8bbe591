import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from rand_acim.maps import (
    Branch,
    BranchBoundaryError,
    ConvergenceFailure,
    PiecewiseMap,
    apply_transfer,
    d_LY,
    doubling_map,
    eval_derivative,
    eval_map,
    example_family,
    identity_map,
    invert_branch,
    make_family,
    perturb_family,
    polynomial_map,
    preimage,
    rotation_map,
    translate_perturbation,
    validate_bounds,
)

omegas = st.floats(0.0, 1.0, exclude_max=True, allow_nan=False)


def total_length(pieces):
    return sum(hi - lo for lo, hi in pieces)


# ---------------------------------------------------------------------------
# example family values


def test_example_left_limit_of_first_branch_wraps_to_zero():
    T = example_family(0.0)
    x = 1 / 3 - 1e-13
    assert T.lifted_values(np.array([x]))[0] == pytest.approx(1.0, abs=1e-11)
    v = eval_map(T, x)
    assert min(v, 1 - v) < 1e-11


def test_example_value_at_origin():
    assert eval_map(example_family(0.0), 0.0) == 0.0


def test_example_second_branch_value():
    expected = -0.5 + 2.9 / 36
    assert eval_map(example_family(0.0), 0.5) == pytest.approx(expected % 1.0, abs=1e-14)
    assert eval_map(example_family(0.0), 0.5) == pytest.approx(0.580556, abs=1e-6)


def test_example_derivatives():
    T = example_family(0.0)
    assert eval_derivative(T, 1e-12) == pytest.approx(3 + 2.9 / 3, abs=1e-9)
    assert eval_derivative(T, 2 / 3 + 1e-9) == pytest.approx(7 / 3, abs=1e-12)
    assert eval_derivative(T, 2 / 3, side="right") == pytest.approx(7 / 3, abs=1e-12)


def test_example_min_slope():
    rep = validate_bounds(example_family(0.0), 10_000)
    assert rep.passed
    assert rep.n_branches == 3
    assert rep.min_slope >= 2.0
    assert rep.min_slope == pytest.approx(3 - 2.9 / 3, abs=1e-6)


@given(omegas)
@settings(max_examples=30, deadline=None)
def test_example_passes_bounds_at_every_fiber(omega):
    rep = validate_bounds(example_family(omega), 2000)
    assert rep.passed, rep.failures


# ---------------------------------------------------------------------------
# evaluation


def test_identity_and_doubling_values():
    assert eval_map(identity_map(), 0.25) == 0.25
    assert eval_map(doubling_map(), 0.75) == 0.5
    np.testing.assert_allclose(eval_map(doubling_map(), np.array([0.1, 0.6])), [0.2, 0.2])


@given(st.floats(0.0, 1.0, exclude_max=True))
def test_doubling_derivative_is_two(x):
    if x == 0.5 or x == 0.0:
        assert eval_derivative(doubling_map(), x, side="left") == 2.0
    else:
        assert eval_derivative(doubling_map(), x) == 2.0


def test_derivative_at_breakpoint_raises():
    with pytest.raises(BranchBoundaryError):
        eval_derivative(example_family(0.0), 1 / 3)
    with pytest.raises(BranchBoundaryError):
        eval_derivative(doubling_map(), 0.5)


def test_left_limit_convention():
    T = example_family(0.0)
    left = eval_derivative(T, T.breaks[1], side="left")
    # branch 1 at u = 1/3: 3 - 2.9 (2u - 1/3)
    assert left == pytest.approx(3 - 2.9 / 3, abs=1e-12)


@given(omegas)
@settings(max_examples=20, deadline=None)
def test_partition_closure(omega):
    T = example_family(omega)
    bps = T.breaks
    assert bps[-1] == bps[0] + 1.0
    for a, b in zip(T.branches, T.branches[1:]):
        assert a.end == b.start
    assert np.all(np.diff(bps) > 0)


def test_partition_must_tile_the_circle():
    br = Branch(0.0, 0.9, lambda x: 2 * x, lambda x: 2 + 0 * x)
    with pytest.raises(ValueError):
        PiecewiseMap((br,))


@given(omegas)
@settings(max_examples=20, deadline=None)
def test_derivative_matches_finite_difference(omega):
    T = example_family(omega)
    h = 1e-6
    for br in T.branches:
        x = np.linspace(br.start, br.end, 50)[1:-2]
        fd = (br.values(x + h) - br.values(x)) / h
        assert np.max(np.abs(fd - br.derivs(x))) <= 10 * h


# ---------------------------------------------------------------------------
# inversion and preimages


def test_invert_branch_against_brentq():
    T = example_family(0.3)
    for br in T.branches:
        lo, hi = br.image()
        for y in np.linspace(lo, hi, 7)[1:-1]:
            ref = brentq(lambda x: br.value_fn(x) - y, br.start, br.end, xtol=1e-15)
            assert invert_branch(br, y)[0] == pytest.approx(ref, abs=1e-13)


def test_invert_branch_out_of_image():
    br = doubling_map().branches[0]
    with pytest.raises(ConvergenceFailure):
        invert_branch(br, 1.5)
    with pytest.raises(ConvergenceFailure):
        invert_branch(br, np.nan)


def test_doubling_preimage_of_half():
    pieces = sorted(preimage(doubling_map(), (0.0, 0.5)))
    np.testing.assert_allclose(pieces, [(0.0, 0.25), (0.5, 0.75)], atol=1e-15)


def test_identity_preimage_and_empty_target():
    np.testing.assert_allclose(preimage(identity_map(), (0.2, 0.3)), [(0.2, 0.3)], atol=1e-15)
    assert preimage(example_family(0.1), (0.4, 0.4)) == []


@given(st.floats(0, 1), st.floats(0, 1))
def test_doubling_preserves_length(a, b):
    c, d = min(a, b), max(a, b)
    assert total_length(preimage(doubling_map(), (c, d))) == pytest.approx(d - c, abs=1e-15)


@given(omegas, st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=40, deadline=None)
def test_preimage_additivity(omega, a, b, c):
    p, q, r = sorted([a, b, c])
    T = example_family(omega)
    left = total_length(preimage(T, (p, q))) + total_length(preimage(T, (q, r)))
    assert left == pytest.approx(total_length(preimage(T, (p, r))), abs=1e-10)


@given(omegas)
@settings(max_examples=15, deadline=None)
def test_preimage_of_whole_circle_is_whole_circle(omega):
    assert total_length(preimage(example_family(omega), (0.0, 1.0))) == pytest.approx(1.0, abs=1e-10)


def test_transfer_preserves_integral_and_fixes_lebesgue_for_doubling():
    y = (np.arange(2000) + 0.5) / 2000
    np.testing.assert_allclose(apply_transfer(doubling_map(), np.ones_like, y), 1.0, atol=1e-14)
    Lf = apply_transfer(example_family(0.2), lambda x: 1 + np.cos(2 * np.pi * x), y)
    # midpoint rule across the jumps of Lf
    assert Lf.mean() == pytest.approx(1.0, abs=1e-3)
    assert Lf.min() > 0


# ---------------------------------------------------------------------------
# validation


def test_doubling_bounds():
    rep = validate_bounds(doubling_map())
    assert rep.passed
    assert rep.min_slope == 2.0
    assert rep.n_branches == 2


def test_contraction_fails_expansion():
    contraction = PiecewiseMap((Branch(0.0, 1.0, lambda x: x / 2, lambda x: 0.5 + 0 * x),), modulus=True)
    rep = validate_bounds(contraction)
    assert not rep.passed
    assert any("expansion" in f for f in rep.failures)


def test_too_many_branches_fails():
    bps = [0, 0.25, 0.5, 0.75, 1.0]
    coeffs = [[-4 * a, 4.0] for a in bps[:-1]]
    rep = validate_bounds(polynomial_map(bps, coeffs), b=3)
    assert any("branch count" in f for f in rep.failures)


def test_custom_polynomial_reproduces_doubling():
    T = polynomial_map([0.0, 0.5, 1.0], [[0.0, 2.0], [-1.0, 2.0]])
    x = np.linspace(0, 0.999, 101)
    np.testing.assert_allclose(eval_map(T, x), eval_map(doubling_map(), x), atol=1e-15)


def test_polynomial_map_rejects_short_partition():
    with pytest.raises(ValueError):
        polynomial_map([0.0, 0.5, 0.9], [[0, 2], [0, 2]])


# ---------------------------------------------------------------------------
# d_LY and perturbations


@given(omegas)
@settings(max_examples=20, deadline=None)
def test_d_ly_zero_on_diagonal(omega):
    T = example_family(omega)
    assert d_LY(T, T) == 0.0


@given(omegas, omegas)
@settings(max_examples=20, deadline=None)
def test_d_ly_symmetric(w1, w2):
    S, T = example_family(w1), example_family(w2)
    assert d_LY(S, T) == d_LY(T, S)


def test_d_ly_branch_count_mismatch():
    assert d_LY(doubling_map(), example_family(0.0)) == 1.0


@given(omegas, st.floats(1e-6, 0.2))
@settings(max_examples=30, deadline=None)
def test_d_ly_of_translate_is_rho(omega, rho):
    T = example_family(omega)
    assert d_LY(T, translate_perturbation(T, rho)) == pytest.approx(rho, abs=1e-6)


def test_translate_perturbation_values():
    T = doubling_map()
    assert translate_perturbation(T, 0.0) is T
    assert eval_map(translate_perturbation(T, 0.1), 0.0) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        translate_perturbation(T, -0.1)


def test_d_ly_small_translate():
    T = example_family(0.0)
    assert d_LY(T, translate_perturbation(T, 0.01)) == pytest.approx(0.01, abs=1e-6)


def test_families_by_name():
    fam = make_family("example35")
    assert fam.depends_on_omega
    assert fam(0.25).breaks[0] == 0.25
    assert tuple(make_family("doubling")(0.3).breaks) == (0.0, 0.5, 1.0)
    rot = make_family("rotation", {"beta": 0.25})(0.0)
    assert eval_map(rot, 0.5) == 0.75
    with pytest.raises(ValueError):
        make_family("tent")
    p = perturb_family(fam, 0.01)
    assert p.params["perturbation"] == 0.01
    assert eval_map(p(0.0), 0.0) == pytest.approx(0.01)


def test_rotation_is_not_expanding():
    assert not validate_bounds(rotation_map(0.25)).passed
