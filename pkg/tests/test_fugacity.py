import math

import mpmath
import numpy as np
import pytest

from zrphydro import FugacityTable, JumpRateFn, ValidationError, rate_fn_by_name

LINEAR = rate_fn_by_name("linear")
INDICATOR = rate_fn_by_name("indicator")
CAPPED3 = rate_fn_by_name("capped", cap=3)
TABLE = JumpRateFn("table", table=(0.5, 1.0, 1.25), tail_slope=0.0)

ALL_RATES = [LINEAR, INDICATOR, CAPPED3, TABLE]


def mp_partition(rate_fn, phi, terms=4000):
    """Independent high-precision oracle for Z and R by direct summation."""
    with mpmath.workdps(50):
        z = mpmath.mpf(1)
        r = mpmath.mpf(0)
        w = mpmath.mpf(1)
        for k in range(1, terms):
            w = w * mpmath.mpf(phi) / mpmath.mpf(rate_fn(k))
            z += w
            r += k * w
        return float(z), float(r / z)


def test_rate_fn_basics():
    assert LINEAR(0) == 0 and LINEAR(5) == 5.0
    assert INDICATOR(0) == 0 and INDICATOR(1) == 1.0 and INDICATOR(9) == 1.0
    assert CAPPED3(2) == 2.0 and CAPPED3(7) == 3.0
    assert TABLE(1) == 0.5 and TABLE(3) == 1.25 and TABLE(10) == 1.25
    for rf in ALL_RATES:
        ks = np.arange(0, 50)
        vals = np.asarray(rf(ks))
        assert vals[0] == 0.0
        assert np.all(vals[1:] > 0)
        assert np.all(np.diff(vals) >= 0)
        assert np.abs(np.diff(vals)).max() <= rf.gstar + 1e-15


def test_phi_c():
    assert math.isinf(LINEAR.phi_c)
    assert INDICATOR.phi_c == 1.0
    assert CAPPED3.phi_c == 3.0
    assert TABLE.phi_c == 1.25
    assert math.isinf(JumpRateFn("table", table=(1.0,), tail_slope=0.5).phi_c)


def test_partition_trivial():
    for rf in ALL_RATES:
        assert FugacityTable(rf).partition_function(0.0) == 1.0


def test_partition_closed_forms():
    # DERIVED: Z = e^phi for linear, 1/(1-phi) for indicator
    assert abs(FugacityTable(LINEAR).partition_function(1.0) - math.e) < 1e-11
    assert abs(FugacityTable(INDICATOR).partition_function(0.5) - 2.0) < 1e-11
    assert abs(FugacityTable(LINEAR).partition_function(2.5) - math.exp(2.5)) < 1e-10


def test_partition_vs_highprecision_oracle():
    # DERIVED: 50-digit direct summation for the non-closed-form rates
    for rf, phi in [(CAPPED3, 2.0), (CAPPED3, 0.7), (TABLE, 0.9), (TABLE, 0.3)]:
        table = FugacityTable(rf)
        z_ref, r_ref = mp_partition(rf, phi)
        assert abs(table.partition_function(phi) - z_ref) < 1e-9 * z_ref
        assert abs(table.density_of_fugacity(phi) - r_ref) < 1e-9 * max(r_ref, 1)


def test_density_closed_forms():
    # DERIVED: R = phi (Poisson mean) and phi/(1-phi) (geometric)
    assert FugacityTable(LINEAR).density_of_fugacity(0.0) == 0.0
    assert abs(FugacityTable(LINEAR).density_of_fugacity(2.0) - 2.0) < 1e-11
    assert abs(FugacityTable(INDICATOR).density_of_fugacity(0.5) - 1.0) < 1e-11


def test_density_strictly_increasing():
    for rf, top in [(LINEAR, 5.0), (INDICATOR, 0.95), (CAPPED3, 2.9), (TABLE, 1.2)]:
        table = FugacityTable(rf)
        grid = np.linspace(0.0, top, 40)
        vals = [table.density_of_fugacity(p) for p in grid]
        assert np.all(np.diff(vals) > 0)


def test_fugacity_inverse_closed_forms():
    # DERIVED: inverses of the closed-form bijections
    assert FugacityTable(LINEAR).fugacity_of_density(0.0) == 0.0
    assert abs(FugacityTable(LINEAR).fugacity_of_density(3.0) - 3.0) < 1e-9
    assert abs(FugacityTable(INDICATOR).fugacity_of_density(1.0) - 0.5) < 1e-9


def test_fugacity_inverse_consistency():
    for rf in ALL_RATES:
        table = FugacityTable(rf)
        for rho in (0.1, 0.5, 1.0, 2.0, 4.0):
            phi = table.fugacity_of_density(rho)
            assert phi < table.phi_c
            assert abs(table.density_of_fugacity(phi) - rho) < 1e-9


def test_mean_jump_rate_equals_fugacity():
    # the telescoping identity nu_rho(g) = fugacity(rho), both routes
    for rf in ALL_RATES:
        table = FugacityTable(rf)
        for rho in np.linspace(0.0, 3.0, 13):
            rate = table.mean_jump_rate(float(rho))
            phi = table.fugacity_of_density(float(rho))
            assert abs(rate - phi) < 1e-9


def test_mean_jump_rate_closed_forms():
    assert FugacityTable(LINEAR).mean_jump_rate(0.0) == 0.0
    assert abs(FugacityTable(LINEAR).mean_jump_rate(2.0) - 2.0) < 1e-9
    assert abs(FugacityTable(INDICATOR).mean_jump_rate(1.0) - 0.5) < 1e-9


def test_phi_lipschitz():
    for rf in ALL_RATES:
        table = FugacityTable(rf)
        rng = np.random.default_rng(11)
        rhos = rng.uniform(0.0, 4.0, size=30)
        phis = np.array([table.fugacity_of_density(r) for r in rhos])
        for i in range(len(rhos)):
            for j in range(i):
                assert (abs(phis[i] - phis[j])
                        <= rf.gstar * abs(rhos[i] - rhos[j]) + 1e-8)


def test_divergence_errors():
    with pytest.raises(ValidationError):
        FugacityTable(INDICATOR).partition_function(1.0)
    with pytest.raises(ValidationError):
        FugacityTable(CAPPED3).partition_function(3.5)
    with pytest.raises(ValidationError):
        FugacityTable(LINEAR).partition_function(-0.1)
    with pytest.raises(ValidationError):
        FugacityTable(LINEAR).fugacity_of_density(-1.0)


def test_range_error_unreachable_density():
    with pytest.raises(ValidationError):
        FugacityTable(INDICATOR).fugacity_of_density(1e15)


def test_pmf_normalization_and_mean():
    for rf, phi in [(LINEAR, 1.5), (INDICATOR, 0.6), (CAPPED3, 2.0), (TABLE, 1.0)]:
        table = FugacityTable(rf)
        pmf = table.pmf(phi)
        assert abs(pmf.sum() - 1.0) < 1e-10
        mean = float(np.arange(len(pmf)) @ pmf)
        assert abs(mean - table.density_of_fugacity(phi)) < 1e-9


def test_pmf_at_zero():
    assert np.array_equal(FugacityTable(LINEAR).pmf(0.0), np.array([1.0]))


def test_sampling_poisson_moments():
    # DERIVED: for linear g the product marginal is Poisson(rho)
    table = FugacityTable(LINEAR)
    rng = np.random.Generator(np.random.Philox(key=77))
    n = 100_000
    rho = 2.0
    occ = table.sample_occupancies(np.full(n, table.fugacity_of_density(rho)), rng)
    se = math.sqrt(rho / n)
    assert abs(occ.mean() - rho) < 4 * se
    assert abs(occ.var() - rho) < 5 * math.sqrt(2 * rho ** 2 / n) + 0.01


def test_sampling_geometric_pmf():
    table = FugacityTable(INDICATOR)
    rng = np.random.Generator(np.random.Philox(key=78))
    phi = 0.5
    occ = table.sample_occupancies(np.full(50_000, phi), rng)
    counts = np.bincount(occ)
    expected = 50_000 * (1 - phi) * phi ** np.arange(len(counts))
    keep = expected > 25
    chi2 = float(((counts[keep] - expected[keep]) ** 2 / expected[keep]).sum())
    # ~11 bins: generous threshold far above the 1% quantile
    assert chi2 < 40.0


def test_vectorized_matches_scalar():
    for rf in ALL_RATES:
        table = FugacityTable(rf)
        rhos = np.array([0.0, 0.3, 1.1, 2.7])
        vec = table.fugacity_of_density_vec(rhos)
        scal = [table.fugacity_of_density(float(r)) for r in rhos]
        assert np.allclose(vec, scal, atol=2e-10)
        phis = vec[1:]
        s0, s1 = table._sums_vec(phis)
        assert np.allclose(s0, [table.partition_function(p) for p in phis],
                           rtol=1e-12)


def test_interpolator_linear_exact():
    interp = FugacityTable(LINEAR).phi_of_density_interpolator(5.0)
    x = np.linspace(0, 5, 333)
    assert np.abs(interp(x) - x).max() < 1e-8


def test_interpolator_matches_pointwise():
    table = FugacityTable(INDICATOR)
    interp = table.phi_of_density_interpolator(4.0)
    for rho in (0.05, 0.37, 1.9, 3.3):
        assert abs(interp(rho) - table.fugacity_of_density(rho)) < 1e-8


def test_table_rate_validation():
    with pytest.raises(ValidationError):
        JumpRateFn("table", table=())
    with pytest.raises(ValidationError):
        JumpRateFn("table", table=(1.0, 0.5))
    with pytest.raises(ValidationError):
        JumpRateFn("table", table=(1.0,), tail_slope=-1.0)
    with pytest.raises(ValidationError):
        JumpRateFn("capped", cap=0)
