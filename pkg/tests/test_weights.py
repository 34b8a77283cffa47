import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chigan.cohort import DataValidationError, StudyArm
from chigan.nets import Discriminator, Generator, StandardizationStats
from chigan.trainer import TrainedModel
from chigan.weights import (
    DegenerateWeightsError,
    extract_weights,
    normalize,
    raw_ratios,
    read_weights_csv,
    sir_resample,
    write_weights_csv,
)


def _model(d=2, zero_last=True, bias=0.0):
    gen = Generator.create(4, d, hidden=(6,), seed=0)
    discs = [Discriminator.create(d, hidden=(6,), seed=s, zero_last=zero_last) for s in (1, 2)]
    for dc in discs:
        dc.params[-1][:] = bias
    stats = StandardizationStats(np.zeros(d), np.ones(d))
    return TrainedModel(gen, discs, stats, ["1", "2"])


def _arm(n=5, d=2, arm_id="1", seed=0):
    return StudyArm(np.random.default_rng(seed).standard_normal((n, d)), arm_id=arm_id)


def test_zero_critic_output_gives_half_ln2():
    r = raw_ratios(_model(), _arm())
    np.testing.assert_allclose(r, np.log(2.0) / 2.0, rtol=0, atol=1e-15)
    assert r[0] == pytest.approx(0.34657, abs=1e-5)


def test_very_negative_critic_output_excludes_unit():
    r = raw_ratios(_model(bias=-800.0), _arm())
    np.testing.assert_array_equal(r, 0.0)
    with pytest.raises(DegenerateWeightsError, match="degenerate weights: no overlap detected"):
        extract_weights(_model(bias=-800.0), [_arm()])


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        raw_ratios(_model(d=2), _arm(d=3))


def test_unknown_arm_id():
    with pytest.raises(KeyError):
        raw_ratios(_model(), _arm(arm_id="7"))


def test_normalize_examples():
    np.testing.assert_allclose(normalize([1.0, 0.0, 3.0]).weights, [0.25, 0.0, 0.75], rtol=0, atol=1e-15)
    np.testing.assert_allclose(normalize(np.full(8, 2.5)).weights, 1 / 8, rtol=0, atol=1e-15)
    with pytest.raises(DegenerateWeightsError):
        normalize([0.0, 0.0])
    with pytest.raises(ValueError):
        normalize([1.0, -1.0])
    with pytest.raises(ValueError):
        normalize([])


@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(0, 1e6)).filter(lambda a: a.sum() > 0))
def test_normalize_sums_to_one(r):
    w = normalize(r).weights
    assert abs(w.sum() - 1.0) < 1e-12
    assert np.all(w >= 0)


def test_extraction_is_repeatable():
    model = _model(zero_last=False)
    arms = [_arm(50, arm_id="1"), _arm(50, arm_id="2", seed=1)]
    a = extract_weights(model, arms)
    b = extract_weights(model, arms)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.weights, y.weights)
        assert np.all(x.raw >= 0)


def test_sir_point_mass():
    arm = _arm(4)
    idx, rows = sir_resample(arm, normalize([0.0, 0.0, 1.0, 0.0]), 500, seed=3)
    assert np.all(idx == 2)
    np.testing.assert_array_equal(rows, np.repeat(arm.features[2:3], 500, axis=0))


def test_sir_uniform_frequencies():
    n, m = 10, 100_000
    arm = _arm(n)
    idx, _ = sir_resample(arm, normalize(np.ones(n)), m, seed=4)
    freq = np.bincount(idx, minlength=n) / m
    assert np.all(np.abs(freq - 1 / n) <= 3 * np.sqrt(0.25 / m))


def test_sir_errors():
    arm = _arm(3)
    with pytest.raises(ValueError):
        sir_resample(arm, normalize(np.ones(3)), 0)
    with pytest.raises(DataValidationError):
        sir_resample(arm, normalize(np.ones(4)), 5)


def test_weights_csv_roundtrip(tmp_path):
    arm = _arm(6)
    w = normalize([1.0, 2.0, 0.0, 0.5, 1 / 3, 7.0], "1")
    write_weights_csv(tmp_path / "w.csv", arm, w, method="cgan")
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "unit_id,arm,raw_ratio,weight,method"
    assert [ln.split(",")[0] for ln in lines[1:]] == list(arm.unit_ids)
    ids, back = read_weights_csv(tmp_path / "w.csv")
    np.testing.assert_array_equal(back.weights, w.weights)
    np.testing.assert_array_equal(back.raw, w.raw)
    assert back.arm == "1"


def test_identity_ratios_concentrate_near_one(identity_report):
    model = identity_report.details["model"]
    arms = identity_report.details["arms"]
    for arm in arms:
        q1, q3 = np.percentile(raw_ratios(model, arm), [25, 75])
        assert 0.7 <= q1 and q3 <= 1.4, (q1, q3)


@pytest.mark.slow
def test_simulation_resampling_draws_from_shared_subpopulation(sim_runs):
    run = sim_runs[0]
    for arm, w in zip(run.arms, run.weights):
        idx, _ = sir_resample(arm, w, 2000, seed=0)
        assert np.mean(arm.labels[idx] == "A") >= 0.95
