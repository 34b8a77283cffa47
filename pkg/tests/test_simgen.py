import numpy as np
import pytest

from chigan.simgen import (
    SimSpec,
    build_populations,
    sample_normal_wishart,
    sample_wishart,
    simulate,
    simulate_outcomes,
    subpopulation_params,
    target_ates,
)


def test_spec_defaults_and_validation():
    s = SimSpec()
    assert s.d == 10 and s.n_sub == 2000 and s.kappa0 == 0.1 and s.nu0 == 12
    np.testing.assert_array_equal(s.psi, np.eye(10))
    with pytest.raises(ValueError):
        SimSpec(d=3, nu0=1.5)
    with pytest.raises(ValueError):
        SimSpec(d=2, psi=np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        SimSpec(d=2, psi=-np.eye(2))
    with pytest.raises(ValueError):
        SimSpec(kappa0=0.0)


def test_target_ates():
    assert target_ates(SimSpec()) == {"mixture": 50.0, "overlap": 70.0}


def test_wishart_mean():
    rng = np.random.default_rng(0)
    d = 10
    mean = sum(sample_wishart(d + 2.0, np.eye(d), rng) for _ in range(1000)) / 1000
    diag = np.diag(mean)
    assert np.all(np.abs(diag - 12.0) / 12.0 < 0.10)
    off = mean[~np.eye(d, dtype=bool)]
    assert np.max(np.abs(off)) < 1.2


def test_wishart_mean_with_general_scale():
    rng = np.random.default_rng(1)
    psi = np.array([[2.0, 0.5], [0.5, 1.0]])
    mean = sum(sample_wishart(5.0, psi, rng) for _ in range(4000)) / 4000
    np.testing.assert_allclose(mean, 5.0 * psi, rtol=0.08, atol=0.15)


def test_normal_wishart_draw_is_valid_and_reproducible():
    spec = SimSpec(seed=3)
    mean, cov = sample_normal_wishart(spec, "A")
    np.testing.assert_array_equal(cov, cov.T)
    np.linalg.cholesky(cov)
    mean2, cov2 = sample_normal_wishart(spec, "A")
    np.testing.assert_array_equal(mean, mean2)
    np.testing.assert_array_equal(cov, cov2)
    mean3, _ = sample_normal_wishart(spec, "B")
    assert not np.array_equal(mean, mean3)


def test_population_structure():
    arm1, arm2 = build_populations(SimSpec(seed=2))
    assert arm1.n == arm2.n == 4000
    assert set(arm1.labels) == {"A", "B"} and set(arm2.labels) == {"A", "C"}
    assert np.sum(arm1.labels == "A") == 2000
    assert arm1.unit_ids[0] == "1-0" and arm2.unit_ids[-1] == "2-3999"
    # A rows are fresh draws in each arm
    assert not np.array_equal(arm1.features[arm1.labels == "A"], arm2.features[arm2.labels == "A"])


def test_shared_subpopulation_parameters():
    spec = SimSpec(seed=4, n_sub=5000)
    mean_a, cov_a = subpopulation_params(spec)["A"]
    arm1, arm2 = build_populations(spec)
    for arm in (arm1, arm2):
        XA = arm.features[arm.labels == "A"]
        se = np.sqrt(np.diag(cov_a) / XA.shape[0])
        assert np.all(np.abs(XA.mean(axis=0) - mean_a) < 5 * se)


def test_outcome_targets():
    spec = SimSpec(seed=5)
    arm1, arm2 = simulate(spec)
    n1, n2 = arm1.n, arm2.n
    mix = arm1.outcomes.mean() - arm2.outcomes.mean()
    se_mix = np.sqrt(arm1.outcomes.var(ddof=1) / n1 + arm2.outcomes.var(ddof=1) / n2)
    assert abs(mix - 50.0) <= 3 * se_mix
    ya = arm1.outcomes[arm1.labels == "A"]
    yb = arm2.outcomes[arm2.labels == "A"]
    assert abs(ya.mean() - yb.mean() - 70.0) <= 3 * np.sqrt(1 / 2000 + 1 / 2000)
    for arm in (arm1, arm2):
        for lab in set(arm.labels):
            assert abs(arm.outcomes[arm.labels == lab].std(ddof=1) - 1.0) < 0.05


def test_missing_labels():
    arm1, arm2 = build_populations(SimSpec(d=2, n_sub=10))
    arm1.labels = None
    with pytest.raises(ValueError):
        simulate_outcomes([arm1, arm2], SimSpec(d=2, n_sub=10))


def test_seed_changes_draws_but_not_structure():
    a = simulate(SimSpec(d=3, n_sub=50, seed=0))
    b = simulate(SimSpec(d=3, n_sub=50, seed=1))
    c = simulate(SimSpec(d=3, n_sub=50, seed=0))
    assert not np.array_equal(a[0].features, b[0].features)
    np.testing.assert_array_equal(a[0].features, c[0].features)
    np.testing.assert_array_equal(a[1].outcomes, c[1].outcomes)
    for x, y in zip(a, b):
        assert x.features.shape == y.features.shape
        np.testing.assert_array_equal(x.labels, y.labels)


def test_metadata_is_json_friendly():
    import json
    meta = SimSpec(d=2).metadata()
    assert json.loads(json.dumps(meta))["outcome_means"] == {"1A": 60.0, "1B": 40.0, "2A": -10.0, "2C": 10.0}


def test_shifted_mixture_structure():
    from chigan.simgen import shifted_mixture
    a1, a2 = shifted_mixture(d=4, n_sub=3000, shift=3.0, seed=1)
    assert a1.n == a2.n == 6000 and a1.dim == 4
    assert set(a1.labels) == {"A", "B"} and set(a2.labels) == {"A", "C"}
    for arm, own in ((a1, "B"), (a2, "C")):
        np.testing.assert_allclose(arm.features[arm.labels == "A"].mean(axis=0), 0.0, atol=0.08)
        assert abs(np.linalg.norm(arm.features[arm.labels == own].mean(axis=0)) - 3.0) < 0.1
    b1, _ = shifted_mixture(d=4, n_sub=3000, shift=3.0, seed=1)
    np.testing.assert_array_equal(a1.features, b1.features)
    with pytest.raises(ValueError):
        shifted_mixture(shift=-1.0)
