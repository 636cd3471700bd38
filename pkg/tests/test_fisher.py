import math

import numpy as np
import pytest

from igopt import substream
from igopt.families import BernoulliFamily, LogitBernoulliFamily, SingularFisher
from igopt.fisher import (
    FisherMatrix,
    exact_fisher,
    invert,
    mc_fisher,
    reliability_check,
    solve,
)


def test_exact_fisher_bernoulli_hand_values():
    fam = BernoulliFamily(2)
    F = exact_fisher(fam, np.array([0.5, 0.2]))
    np.testing.assert_allclose(np.diag(F.matrix), [4.0, 6.25])
    assert F.provenance == "exact"
    logit = LogitBernoulliFamily(1)
    F0 = exact_fisher(logit, np.zeros(1))
    assert F0.matrix[0, 0] == pytest.approx(0.25)


def test_exact_fisher_vs_negative_log_density_hessian():
    # independent oracle: I = -E[d^2 ln P / d theta^2], second-order central
    # differences on the exact log-density, averaged by enumeration
    fam = BernoulliFamily(3)
    rng = substream(31, 0)
    theta = rng.uniform(0.2, 0.8, size=3)
    pts = fam.enumerate_points()
    probs = np.exp(fam.log_density(theta, pts))
    eps = 1e-4
    hess = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            tpp, tpm, tmp, tmm = (theta.copy() for _ in range(4))
            tpp[i] += eps; tpp[j] += eps
            tpm[i] += eps; tpm[j] -= eps
            tmp[i] -= eps; tmp[j] += eps
            tmm[i] -= eps; tmm[j] -= eps
            second = (fam.log_density(tpp, pts) - fam.log_density(tpm, pts)
                      - fam.log_density(tmp, pts) + fam.log_density(tmm, pts)) / (4 * eps**2)
            hess[i, j] = -(probs @ second)
    F = exact_fisher(fam, theta).matrix
    np.testing.assert_allclose(hess, F, rtol=1e-4, atol=1e-6)


def test_mc_fisher_bernoulli_converges_to_exact():
    fam = BernoulliFamily(2)
    theta = np.array([0.5, 0.5])
    est = mc_fisher(fam, theta, 100000, substream(32, 0))
    assert est.provenance == "monte_carlo" and est.sample_count == 100000
    # diagonal entries are +-2 squared = 4 for every sample, exactly
    np.testing.assert_allclose(np.diag(est.matrix), [4.0, 4.0], rtol=1e-12)
    # off-diagonal: mean of +-4 signs, se = 4 / sqrt(M)
    assert abs(est.matrix[0, 1]) <= 3.0 * 4.0 / math.sqrt(100000)


def test_mc_fisher_sample_count_guard():
    fam = BernoulliFamily(3)
    with pytest.raises(ValueError):
        mc_fisher(fam, np.full(3, 0.5), 2, substream(33, 0))


def test_mc_fisher_rank_deficiency_with_duplicated_samples():
    fam = BernoulliFamily(3)
    theta = np.full(3, 0.5)
    dup = np.tile(np.array([[1, 0, 1]], dtype=np.uint8), (3, 1))
    est = mc_fisher(fam, theta, 3, substream(34, 0), samples=dup)
    with pytest.raises(SingularFisher):
        invert(est)
    distinct = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=np.uint8)
    est2 = mc_fisher(fam, theta, 3, substream(34, 1), samples=distinct)
    assert np.linalg.matrix_rank(est2.matrix) == 3


def test_mc_fisher_unbiased_scaling():
    # averaging R independent estimates shrinks the deviation like 1/sqrt(R)
    fam = BernoulliFamily(2)
    theta = np.array([0.35, 0.6])
    exact = exact_fisher(fam, theta).matrix
    m = 200

    def deviation(n_estimates, tag):
        mats = [mc_fisher(fam, theta, m, substream(35, tag, k)).matrix
                for k in range(n_estimates)]
        return np.abs(np.mean(mats, axis=0) - exact).max()

    single = np.mean([deviation(1, 100 + i) for i in range(8)])
    pooled = deviation(100, 0)
    ratio = single / pooled
    assert 5.0 < ratio < 20.0  # sqrt(100) = 10 within a factor of 2


def test_reliability_check_identity_and_scaled():
    rng = substream(36, 0)
    A = rng.normal(size=(4, 4))
    spd = A @ A.T + 4 * np.eye(4)
    f1 = FisherMatrix(spd.copy())
    f2 = FisherMatrix(spd.copy())
    assert reliability_check(f1, f2) == "pass"
    assert f1.mean_eigenvalue == pytest.approx(1.0)
    f3 = FisherMatrix(3.0 * spd)
    assert reliability_check(f3, f2) == "fail"
    assert f3.mean_eigenvalue == pytest.approx(3.0)


def test_reliability_check_singular_second_estimate():
    f1 = FisherMatrix(np.eye(2))
    f2 = FisherMatrix(np.zeros((2, 2)))
    assert reliability_check(f1, f2) == "fail"


def test_reliability_log_variant():
    f1 = FisherMatrix(np.diag([1.9, 1 / 1.9]))
    f2 = FisherMatrix(np.eye(2))
    # mean eigenvalue (1.9 + 0.526)/2 = 1.21 passes, log variant fails at ln 2 bound
    assert reliability_check(f1, f2, variant="mean") == "pass"
    assert reliability_check(f1, f2, variant="log", log_bound=0.5) == "fail"
    assert reliability_check(FisherMatrix(np.eye(2)), f2, variant="log") == "pass"


def test_invert_hand_value_and_guards():
    fm = FisherMatrix(np.diag([4.0, 4.0]))
    np.testing.assert_allclose(invert(fm), np.diag([0.25, 0.25]))
    rank1 = FisherMatrix(np.outer([1.0, 2.0], [1.0, 2.0]))
    with pytest.raises(SingularFisher):
        invert(rank1)


def test_invert_with_ridge_flags_provenance():
    near = FisherMatrix(np.diag([1.0, 1e-15]), provenance="monte_carlo")
    with pytest.raises(SingularFisher):
        invert(near)
    inv = invert(near, ridge=1e-3)
    assert np.isfinite(inv).all()
    assert near.provenance.endswith("+ridge")
    assert near.notes["ridge"] == 1e-3


def test_solve_matches_invert():
    rng = substream(37, 0)
    A = rng.normal(size=(3, 3))
    fm = FisherMatrix(A @ A.T + 3 * np.eye(3))
    rhs = rng.normal(size=3)
    np.testing.assert_allclose(solve(fm, rhs), invert(fm) @ rhs, rtol=1e-10)


def test_symmetry_enforced():
    with pytest.raises(ValueError):
        FisherMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_csv_export(tmp_path):
    fm = FisherMatrix(np.diag([2.0, 3.0]))
    path = tmp_path / "fisher.csv"
    fm.to_csv(path)
    loaded = np.loadtxt(path, delimiter=",")
    np.testing.assert_allclose(loaded, fm.matrix)


def test_kl_expansion_defines_fisher_metric():
    # KL(P_{theta+d} || P_theta) = (1/2) d^T I d + O(|d|^3): the remainder
    # shrinks ~8x when the perturbation halves (enumeration-exact KL)
    fam = BernoulliFamily(3)
    rng = substream(38, 0)
    theta = rng.uniform(0.25, 0.75, size=3)
    F = exact_fisher(fam, theta).matrix
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)

    def remainder(scale):
        d = scale * direction
        return abs(fam.exact_kl(theta + d, theta) - 0.5 * d @ F @ d)

    r1, r2, r3 = remainder(0.04), remainder(0.02), remainder(0.01)
    assert 4.0 < r1 / r2 < 16.0
    assert 4.0 < r2 / r3 < 16.0


def test_rbm_reliability_calibration_baseline():
    # two split M=10000 estimates on freshly initialized 16+1 machines pass
    # the cross-validation on (at least) 95% of seeds; regression baseline
    from igopt.families import JointRbmFamily, rbm_init
    fam = JointRbmFamily(16, 1, burn_in=60)
    passes = 0
    seeds = 40
    for seed in range(seeds):
        theta = rbm_init(16, 1, substream(39, seed, 0)).flat()
        stats_rng = substream(39, seed, 1)
        x, h = fam.sample(theta, 10000, stats_rng)
        stats = fam.sufficient_stats((x, h))
        half = 5000
        f1 = FisherMatrix(np.cov(stats[:half].T, bias=True), "monte_carlo", half)
        f2 = FisherMatrix(np.cov(stats[half:].T, bias=True), "monte_carlo", half)
        passes += reliability_check(f1, f2) == "pass"
    assert passes / seeds >= 0.95
