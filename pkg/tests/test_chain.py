import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainkit.chain import (
    BasisFamily,
    ChainSpec,
    Coupling,
    Potential,
    eval_coupling,
    transfer_matrix,
    validate_chain,
)
from chainkit.errors import ChainSpecError, CouplingError
from chainkit.measure import composite_rule, discrete_space

ALL_COUPLINGS = [
    Coupling.exponential(),
    Coupling.cosh(),
    Coupling.sinh(),
    Coupling.power_law(0.3, 1.5, N=3),
    Coupling.series([0.5, -0.25, 0.1]),
]


def test_coupling_examples():
    assert eval_coupling(Coupling.exponential(), 0.0, 5.0) == 1.0
    assert eval_coupling(Coupling.cosh(), 0.0, 3.7) == 2.0
    assert eval_coupling(Coupling.sinh(), 0.0, 3.7) == 0.0
    assert eval_coupling(Coupling.power_law(0.0, 2.5, N=4), 1.3, -0.7) == 1.0


def test_coupling_closed_forms():
    x, y = 0.7, -1.1
    t = x * y
    assert eval_coupling(Coupling.exponential(), x, y) == pytest.approx(math.exp(t), rel=1e-15)
    assert eval_coupling(Coupling.cosh(), x, y) == pytest.approx(2 * math.cosh(t), rel=1e-15)
    assert eval_coupling(Coupling.sinh(), x, y) == pytest.approx(2 * math.sinh(t), rel=1e-15)
    assert eval_coupling(Coupling.power_law(0.3, 1.5, N=3), x, y) == pytest.approx((1 - 0.3 * t) ** 0.5, rel=1e-15)
    r = [0.5, -0.25, 0.1]
    series = 1 + r[0] * t + r[0] * r[1] * t**2 + r[0] * r[1] * r[2] * t**3
    assert eval_coupling(Coupling.series(r), x, y) == pytest.approx(series, rel=1e-15)


@pytest.mark.parametrize("c", [Coupling.exponential(), Coupling.power_law(0.2, 0.0, N=2), Coupling.series([1.0, 2.0])])
def test_taylor_couplings_are_one_at_origin(c):
    assert eval_coupling(c, 0.0, 0.0) == 1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.sampled_from(range(len(ALL_COUPLINGS))))
def test_coupling_symmetric_in_arguments(x, y, k):
    c = ALL_COUPLINGS[k]
    assert eval_coupling(c, x, y) == eval_coupling(c, y, x)


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.sampled_from(range(len(ALL_COUPLINGS))))
def test_log_abs_sign_reconstructs_value(x, y, k):
    c = ALL_COUPLINGS[k]
    t = x * y
    if c.kind == "power" and abs(c.z * t) >= 1:
        return
    log_f, sign = c.log_abs_sign(np.array([t]))
    direct = eval_coupling(c, x, y)
    assert sign[0] * math.exp(log_f[0]) == pytest.approx(direct, rel=1e-13, abs=1e-300)


def test_power_law_pole_raises():
    with pytest.raises(CouplingError):
        eval_coupling(Coupling.power_law(0.5, 0.0, N=2), 2.0, 1.0)


def test_power_law_needs_bound_N():
    with pytest.raises(CouplingError):
        Coupling.power_law(0.5, 0.0).exponent


@settings(max_examples=60, deadline=None)
@given(
    st.floats(-0.9, 0.9),
    st.floats(-2.0, 0.0),
    st.integers(1, 6),
    st.integers(1, 40),
    st.floats(-1.0, 1.0),
)
def test_power_law_series_converges_with_bound(z, shift, N, K, t):
    # r(i) = z (a - N + i) / i; with a - N in [-2, 0] every |r(i)| <= |z|
    a = N + shift
    series = Coupling.series_from_rule(lambda i: z * (a - N + i) / i, terms=K)
    closed = Coupling.power_law(z, a, N=N)
    zt = abs(z * t)
    err = abs(eval_coupling(series, t, 1.0) - eval_coupling(closed, t, 1.0))
    assert err <= zt ** (K + 1) / (1 - zt) + 1e-14


def test_series_from_rule_tail_check():
    with pytest.raises(CouplingError):
        Coupling.series_from_rule(lambda i: 0.9, terms=5, span=1.0)
    c = Coupling.series_from_rule(lambda i: 1.0 / i, terms=40, span=1.0)
    assert eval_coupling(c, 1.0, 1.0) == pytest.approx(math.e, rel=1e-14)


def test_basis_degrees():
    assert BasisFamily("all").degrees(4).tolist() == [0, 1, 2, 3]
    assert BasisFamily("even").degrees(4).tolist() == [0, 2, 4, 6]
    assert BasisFamily("odd").degrees(4).tolist() == [1, 3, 5, 7]
    assert BasisFamily("odd").degree(1) == 1
    with pytest.raises(ValueError):
        BasisFamily("prime")


def test_basis_monomials_shape():
    vals = BasisFamily("odd").monomials(3, [2.0, -1.0])
    np.testing.assert_array_equal(vals, [[2.0, -1.0], [8.0, -1.0], [32.0, -1.0]])


def test_potentials():
    assert Potential.quadratic(2.0)(np.array([1.5])).tolist() == [4.5]
    assert Potential.quartic(1.0, 0.5)(2.0) == pytest.approx(12.0)
    assert Potential.polynomial([1.0, 0.0, 3.0]).parity == "even"
    assert Potential.polynomial([1.0, 0.5]).parity == "any"
    with pytest.raises(ValueError):
        Potential((0.0, 1.0), "even")


def _space(points):
    return discrete_space(points, [1.0] * len(points))


def test_single_level_chain_is_valid():
    spec = ChainSpec(1, 1, [_space([0.0])], [Potential.quadratic()])
    assert validate_chain(spec).m == 1


def test_missing_couplings_reported():
    spec = ChainSpec(2, 1, [_space([0.0])] * 2, [Potential.quadratic()] * 2, [])
    with pytest.raises(ChainSpecError) as info:
        validate_chain(spec)
    assert any("couplings length must be m-1" in v for v in info.value.violations)


def test_odd_basis_on_asymmetric_nodes():
    spec = ChainSpec(1, 1, [_space([0.0, 1.0, 2.0])], [Potential.quadratic()], basis="odd")
    with pytest.raises(ChainSpecError) as info:
        validate_chain(spec)
    assert any("parity violation" in v and "level 1" in v for v in info.value.violations)


def test_all_violations_collected():
    spec = ChainSpec(
        2, 3,
        [_space([0.0, 1.0]), _space([0.0, 1.0, 2.0])],
        [Potential.polynomial([0.0, 1.0]), Potential.quadratic()],
        [Coupling.power_law(0.9, 0.0)],
        basis="even",
    )
    with pytest.raises(ChainSpecError) as info:
        validate_chain(spec)
    v = info.value.violations
    assert any("level 1" in s and "cannot hold" in s for s in v)
    assert any("level 1" in s and "even potential" in s for s in v)
    assert any("level 2" in s and "symmetric" in s for s in v)
    assert any("coupling 1" in s and "|z*x*y|" in s for s in v)


def test_infinite_weight_reported():
    spec = ChainSpec(1, 1, [_space([0.0, 40.0])], [Potential.polynomial([0.0, 0.0, -1.0])])
    with pytest.raises(ChainSpecError, match="not finite"):
        validate_chain(spec)


def test_validation_binds_power_law_N():
    spec = ChainSpec(2, 2, [_space([-0.5, 0.5])] * 2, [Potential.quadratic()] * 2, [Coupling.power_law(0.3, 0.5)])
    out = validate_chain(spec)
    assert out.couplings[0].N == 2
    assert out.couplings[0].exponent == pytest.approx(0.5)


def test_transfer_matrix_includes_half_potentials():
    space = composite_rule(3, [(-1, 1)])
    spec = validate_chain(ChainSpec(2, 1, [space] * 2, [Potential.quadratic(), Potential.quartic(1.0, 1.0)],
                                    [Coupling.exponential()]))
    A = transfer_matrix(spec, 0)
    x = y = space.nodes
    direct = np.exp(np.outer(y, x) - 0.5 * (y**2 + y**4)[:, None] - 0.5 * (x**2)[None, :])
    np.testing.assert_allclose(A, direct, rtol=1e-14)


def test_transfer_matrix_survives_large_arguments():
    # exp(x*y) alone overflows at x = y = 30, the combined exponent does not
    space = composite_rule(8, [(-30, 30)])
    spec = validate_chain(ChainSpec(2, 1, [space] * 2, [Potential.quadratic()] * 2, [Coupling.exponential()]))
    A = transfer_matrix(spec, 0, y=[30.0], x=[30.0])
    assert A[0, 0] == pytest.approx(1.0)
