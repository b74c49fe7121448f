"""Group actions: parsing, closure, projectors, counting, quotients."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ikrr.actions import (
    TorusElement,
    apply_action,
    count_invariant,
    invariant_columns,
    invariant_projector,
    parse_action,
    quotient_invariants,
    sample_elements,
)
from ikrr.errors import ConfigurationError, UnknownQuotientError
from ikrr.spectra import (
    Sphere2,
    Torus,
    enumerate_eigenbasis,
    geodesic_distance,
    uniform_sample,
)

T1, T2, S2 = Torus(1), Torus(2), Sphere2()


def _nonidentity(action):
    return [e for e in action.finite if e != action.identity]


def roster():
    """The built-in (manifold, action) pairs exercised across tests."""
    return [
        (T1, parse_action(T1, "trivial")),
        (T1, parse_action(T1, "reflect:0")),
        (T1, parse_action(T1, "shift:pi/4")),
        (T2, parse_action(T2, "shift:pi,0")),
        (T2, parse_action(T2, "perm:(0 1)")),
        (T2, parse_action(T2, "signflip:0,1")),
        (T2, parse_action(T2, "subtorus:[1,0]")),
        (T2, parse_action(T2, "subtorus:[1,0]+shift:0,pi")),
        (S2, parse_action(S2, "antipodal")),
        (S2, parse_action(S2, "axisrot")),
        (S2, parse_action(S2, "antipodal+axisrot")),
    ]


# ---------------------------------------------------------------------------
# parsing and applying


def test_apply_circle_reflection():
    action = parse_action(T1, "reflect:0")
    (tau,) = _nonidentity(action)
    assert apply_action(action, tau, [0.3])[0] == pytest.approx(math.pi - 0.3)


def test_apply_torus_shift():
    action = parse_action(T2, "shift:pi,0")
    (tau,) = _nonidentity(action)
    out = apply_action(action, tau, [0.5, 1.0])
    assert out[0] == pytest.approx((0.5 + math.pi) % (2 * math.pi))
    assert out[1] == pytest.approx(1.0)


def test_apply_identity():
    for manifold, action in roster():
        x = uniform_sample(manifold, 3, 1)[0]
        if action.identity is None:
            continue
        assert np.allclose(apply_action(action, action.identity, x), x)


def test_invalid_element_handle():
    refl = parse_action(T1, "reflect:0")
    shift2 = parse_action(T2, "shift:pi,0")
    with pytest.raises(ConfigurationError):
        apply_action(refl, shift2.finite[0], [0.1])
    with pytest.raises(ConfigurationError):
        elem = TorusElement(refl.identity.matrix, refl.identity.shift, (0.5,))
        apply_action(refl, elem, [0.1])


def test_bad_specs_rejected():
    for spec in ["", "wobble", "shift:1.23", "shift:pi", "perm:(0 5)",
                 "reflect:7", "subtorus:[1]", "subtorus:(1,0)"]:
        with pytest.raises(ConfigurationError):
            parse_action(T2, spec)
    with pytest.raises(ConfigurationError):
        parse_action(S2, "reflect:0")


def test_group_orders():
    assert parse_action(T1, "shift:pi/4").order == 8
    assert parse_action(T1, "shift:2pi/3").order == 3
    assert parse_action(T2, "perm:(0 1)").order == 2
    assert parse_action(T2, "signflip:0,1").order == 2
    assert parse_action(T2, "signflip:0+signflip:1").order == 4
    assert parse_action(T2, "shift:pi,pi+perm:(0 1)").order == 4
    assert parse_action(T2, "subtorus:[1,0]").order is None


def test_group_closure():
    for spec in ["shift:pi/4", "reflect:0+shift:pi", "perm:(0 1)+shift:pi,0",
                 "signflip:0,1+shift:pi,pi"]:
        manifold = T1 if spec.count(",") == 0 and "perm" not in spec else T2
        action = parse_action(manifold, spec)
        elems = set(action.finite)
        for a in action.finite:
            assert a.inverse() in elems
            for b in action.finite:
                assert a.compose(b) in elems


def test_isometry_of_all_elements():
    rng = np.random.default_rng(11)
    for manifold, action in roster():
        X = uniform_sample(manifold, 21, 1000)
        Y = uniform_sample(manifold, 22, 1000)
        base = geodesic_distance(manifold, X, Y)
        for e in sample_elements(action, rng, 4):
            if e is None:
                continue
            moved = geodesic_distance(
                manifold, apply_action(action, e, X), apply_action(action, e, Y)
            )
            assert np.abs(moved - base).max() <= 1e-9


# ---------------------------------------------------------------------------
# projectors


def test_projector_circle_reflection_lambda4():
    action = parse_action(T1, "reflect:0")
    basis = enumerate_eigenbasis(T1, 9)
    proj = invariant_projector(action, 4.0, basis)
    # invariant span at lambda=4 is exactly cos(2 theta)
    assert proj.rank == 1
    entries = [e for e in basis.entries if e.lam == 4.0]
    cos_idx = [i for i, e in enumerate(entries) if e.parity == "cos"][0]
    vec = proj.matrix[:, cos_idx]
    assert vec[cos_idx] == pytest.approx(1.0, abs=1e-12)


def test_reflection_invariants_are_odd_sines_even_cosines():
    # invariant functions of the circle reflection: the constant,
    # sin((2k+1) theta), and cos(2k theta)
    action = parse_action(T1, "reflect:0")
    basis = enumerate_eigenbasis(T1, 100.0)
    kept = {
        (e.k[0], e.parity)
        for _, sl, C in invariant_columns(action, basis)
        for j in np.nonzero(np.abs(C).max(axis=1) > 1e-9)[0]
        for e in [basis.entries[sl][j]]
    }
    for k in range(1, 11):
        expected = "sin" if k % 2 == 1 else "cos"
        assert (k, expected) in kept
        assert (k, "cos" if expected == "sin" else "sin") not in kept
    assert (0, "const") in kept


def test_projector_lost_eigenspace():
    action = parse_action(T2, "shift:pi,0")
    basis = enumerate_eigenbasis(T2, 4)
    assert invariant_projector(action, 2.0, basis).rank == 0


def test_projector_trivial_identity():
    action = parse_action(T2, "trivial")
    basis = enumerate_eigenbasis(T2, 4)
    proj = invariant_projector(action, 1.0, basis)
    assert proj.rank == 4
    assert np.allclose(proj.matrix, np.eye(4))


def test_projector_missing_eigenvalue():
    action = parse_action(T1, "trivial")
    basis = enumerate_eigenbasis(T1, 9)
    with pytest.raises(ConfigurationError):
        invariant_projector(action, 3.0, basis)


def test_projector_symmetric_idempotent_all_actions():
    for manifold, action in roster():
        basis = enumerate_eigenbasis(manifold, 100.0)
        for lam, _ in basis.eigenvalue_groups():
            proj = invariant_projector(action, lam, basis)
            P = proj.matrix
            assert np.abs(P - P.T).max() <= 1e-12
            assert np.abs(P @ P - P).max() <= 1e-10
            assert abs(np.trace(P) - proj.rank) <= 1e-8


def test_quadrature_matches_selection_rules():
    for manifold, spec in [(T2, "subtorus:[1,0]"), (T2, "subtorus:[1,1]"),
                           (S2, "axisrot"), (S2, "antipodal+axisrot")]:
        action = parse_action(manifold, spec)
        basis = enumerate_eigenbasis(manifold, 36.0)
        for lam, _ in basis.eigenvalue_groups():
            exact = invariant_projector(action, lam, basis)
            quad = invariant_projector(action, lam, basis, method="quadrature")
            assert np.abs(exact.matrix - quad.matrix).max() <= 1e-9
            assert exact.rank == quad.rank


def test_rank_from_selection_equals_projector_trace():
    for manifold, action in roster():
        basis = enumerate_eigenbasis(manifold, 100.0)
        blocks = {lam: C.shape[1] for lam, _, C in invariant_columns(action, basis)}
        for lam, _ in basis.eigenvalue_groups():
            proj = invariant_projector(action, lam, basis)
            assert blocks.get(lam, 0) == proj.rank, (action.spec, lam)


def test_invariant_columns_are_invariant_functions():
    rng = np.random.default_rng(5)
    from ikrr.spectra import eval_basis

    for manifold, action in roster():
        basis = enumerate_eigenbasis(manifold, 30.0)
        X = uniform_sample(manifold, 51, 200)
        Phi = eval_basis(manifold, basis.entries, X)
        for e in sample_elements(action, rng, 3):
            if e is None:
                continue
            PhiT = eval_basis(manifold, basis.entries, apply_action(action, e, X))
            for lam, sl, C in invariant_columns(action, basis):
                f = Phi[:, sl] @ C
                ft = PhiT[:, sl] @ C
                assert np.abs(f - ft).max() <= 1e-9, (action.spec, lam)


# ---------------------------------------------------------------------------
# counting


def test_count_examples():
    refl = parse_action(T1, "reflect:0")
    count, pred = count_invariant(refl, 4)
    assert count == 3 and pred == pytest.approx(2.0)

    sub = parse_action(T2, "subtorus:[1,0]")
    count, pred = count_invariant(sub, 4)
    assert count == 5 and pred == pytest.approx(4.0)

    anti = parse_action(S2, "antipodal")
    count, pred = count_invariant(anti, 6)
    assert count == 6 and pred == pytest.approx(3.0)


def test_count_matches_projector_ranks():
    for manifold, action in roster():
        basis = enumerate_eigenbasis(manifold, 100.0)
        by_rank = 0
        for lam, _ in basis.eigenvalue_groups():
            by_rank += invariant_projector(action, lam, basis).rank
        count, _ = count_invariant(action, 100.0)
        assert count == by_rank, action.spec


def test_monotone_loss():
    for manifold, action in roster():
        basis = enumerate_eigenbasis(manifold, 60.0)
        cum_inv = 0
        cum_full = 0
        for lam, sl in basis.eigenvalue_groups():
            rank = invariant_projector(action, lam, basis).rank
            mult = sl.stop - sl.start
            assert rank <= mult
            cum_inv += rank
            cum_full += mult
            ci, _ = count_invariant(action, lam)
            assert ci == cum_inv
            assert ci <= cum_full


@given(
    st.integers(1, 2),
    st.lists(st.fractions(0, 1, max_denominator=4), min_size=1, max_size=2),
    st.integers(0, 30),
)
def test_shift_group_count_brute_force(dim, turns, lam):
    turns = (turns * dim)[:dim]
    spec = "shift:" + ",".join(_turn_to_token(t) for t in turns)
    action = parse_action(Torus(dim), spec)
    basis = enumerate_eigenbasis(Torus(dim), lam)
    expected = sum(
        invariant_projector(action, l, basis).rank
        for l, _ in basis.eigenvalue_groups()
    )
    assert count_invariant(action, lam)[0] == expected


def _turn_to_token(t: Fraction) -> str:
    half = t * 2  # fractions of pi
    if half == 0:
        return "0"
    return f"{half.numerator}pi/{half.denominator}"


# ---------------------------------------------------------------------------
# quotient invariants


def test_quotient_examples():
    q = quotient_invariants(parse_action(T2, "trivial"))
    assert (q.d_eff, q.quotient_volume, q.effective_sample_factor) == (
        2,
        pytest.approx(4 * math.pi**2),
        pytest.approx(1.0),
    )
    q = quotient_invariants(parse_action(T1, "reflect:0"))
    assert (q.d_eff, q.quotient_volume, q.effective_sample_factor) == (
        1,
        pytest.approx(math.pi),
        pytest.approx(2.0),
    )
    q = quotient_invariants(parse_action(S2, "axisrot"))
    assert q.d_eff == 1
    assert q.quotient_volume == pytest.approx(math.pi)
    q = quotient_invariants(parse_action(T2, "subtorus:[1,0]"))
    assert q.d_eff == 1
    assert q.quotient_volume == pytest.approx(2 * math.pi)
    # effective-sample factor: ((omega_2/(2pi)^2)/(omega_1/(2pi))) * vol ratio = pi/2
    assert q.effective_sample_factor == pytest.approx(math.pi / 2)


def test_quotient_diagonal_subtorus_volume():
    q = quotient_invariants(parse_action(T2, "subtorus:[1,1]"))
    assert q.quotient_volume == pytest.approx(2 * math.pi / math.sqrt(2))


def test_quotient_subtorus_with_shift():
    # the shift acts on the quotient circle as a half turn
    q = quotient_invariants(parse_action(T2, "subtorus:[1,0]+shift:0,pi"))
    assert q.d_eff == 1
    assert q.quotient_volume == pytest.approx(math.pi)
    # a shift along the subtorus itself is absorbed
    q = quotient_invariants(parse_action(T2, "subtorus:[1,0]+shift:pi,0"))
    assert q.quotient_volume == pytest.approx(2 * math.pi)


def test_unknown_quotient_composite():
    action = parse_action(T2, "subtorus:[1,0]+signflip:0,1")
    with pytest.raises(UnknownQuotientError):
        quotient_invariants(action)
    # counting still works
    count, pred = count_invariant(action, 16.0)
    assert count >= 1 and math.isnan(pred)


def test_finite_group_factor_is_order():
    for spec in ["shift:pi/4", "reflect:0"]:
        action = parse_action(T1, spec)
        q = quotient_invariants(action)
        assert q.effective_sample_factor == pytest.approx(action.order)
        assert q.quotient_volume == pytest.approx(2 * math.pi / action.order)
