"""
Tests for Monte Carlo mismatch sampling and CMRR statistics.
"""

import math

import numpy as np
import pytest

from bgamp.analysis.mismatch import (
    _statistics,
    cmrr_db,
    cmrr_monte_carlo,
    cmrr_statistics,
    sample,
    sample_normals,
    sample_one,
)
from bgamp.core.exceptions import ConvergenceError, DomainError
from bgamp.models.circuit import TopologyKind
from bgamp.schemas.reports import MismatchSpec
from tests.conftest import fail_samples


def test_normals_are_standard():
    """Test the first two moments of one sample's stream."""
    z = sample_normals(seed=5, index=0, count=100_000)
    assert abs(z.mean()) < 4.0 / math.sqrt(z.size)
    assert z.std() == pytest.approx(1.0, abs=0.01)


def test_streams_are_reproducible_and_distinct():
    """Test that (seed, index) fixes the stream and either part changes it."""
    a = sample_normals(7, 3, 16)
    assert np.array_equal(a, sample_normals(7, 3, 16))
    assert not np.array_equal(a, sample_normals(7, 4, 16))
    assert not np.array_equal(a, sample_normals(8, 3, 16))
    assert np.array_equal(sample_normals(7, 3, 8), a[:8])


def test_seed_and_index_range():
    """Test the 64-bit seed and non-negative index checks."""
    with pytest.raises(DomainError):
        sample_normals(-1, 0, 4)
    with pytest.raises(DomainError):
        sample_normals(2**64, 0, 4)
    with pytest.raises(DomainError):
        sample_normals(0, -1, 4)
    assert sample_normals(2**64 - 1, 0, 4).shape == (4,)


def test_samples_are_independent_of_order(dcmfb):
    """Test that sample i can be drawn on its own."""
    params = {d.name: d.params for d in dcmfb.devices}
    spec = MismatchSpec(samples=4, seed=11)
    drawn = sample(params, spec)
    assert len(drawn) == 4
    assert sample_one(params, spec, 2) == drawn[2]
    assert drawn[0]["M1"].vt0 != drawn[1]["M1"].vt0


def test_sigma_scales_with_area(nmos):
    """Test that a device four times larger sees half the threshold spread and the same kprime spread."""
    spec = MismatchSpec(avt_v_um=5e-3, sigma_kprime_rel=0.01, seed=1)
    small = sample_one({"M": nmos}, spec, 0)["M"]
    large = sample_one({"M": nmos.with_geometry(width=4.0 * nmos.width)}, spec, 0)["M"]
    assert large.vt0 - nmos.vt0 == pytest.approx(0.5 * (small.vt0 - nmos.vt0), rel=1e-9)
    z = sample_normals(1, 0, 2)
    assert small.kprime == pytest.approx(nmos.kprime * (1.0 + 0.01 * z[1]), rel=1e-12)
    assert large.kprime == small.kprime


def test_zero_sigma_leaves_cards_untouched(dcmfb):
    """Test that a zero mismatch model reproduces the nominal cards and CMRR."""
    spec = MismatchSpec(avt_v_um=0.0, sigma_kprime_rel=0.0, samples=3, seed=2)
    params = {d.name: d.params for d in dcmfb.devices}
    assert all(s == params for s in sample(params, spec))
    stats = cmrr_statistics(dcmfb, spec)
    assert stats.std_db == 0.0
    assert stats.mean_db == pytest.approx(cmrr_db(dcmfb), rel=1e-9)
    assert (stats.samples, stats.n_failed, stats.valid) == (3, 0, True)


def test_statistics():
    """Test the mean and sample standard deviation helper."""
    mean, std = _statistics([1.0, 2.0, 3.0, 4.0])
    assert mean == 2.5
    assert std == pytest.approx(math.sqrt(5.0 / 3.0), rel=1e-15)
    assert _statistics([7.0]) == (7.0, 0.0)
    assert all(math.isnan(v) for v in _statistics([]))


def test_statistics_ignore_order():
    """Test that permuting the values gives bitwise-identical results."""
    values = list(np.random.default_rng(4).normal(60.0, 0.3, 257))
    reference = _statistics(values)
    assert _statistics(values[::-1]) == reference
    assert _statistics(sorted(values)) == reference


def test_statistics_run_is_deterministic(dcmfb):
    """Test that two runs with one seed agree exactly."""
    spec = MismatchSpec(samples=3, seed=9)
    first = cmrr_statistics(dcmfb, spec)
    assert cmrr_statistics(dcmfb, spec) == first
    assert first.seed == 9
    assert first.length_um == 1.0
    assert first.kind is TopologyKind.DIFF_DCMFB


def test_rejects_single_ended_topologies(ccs_ol):
    """Test that CMRR statistics need a differential stage."""
    spec = MismatchSpec(samples=2)
    with pytest.raises(DomainError):
        cmrr_statistics(ccs_ol, spec)
    with pytest.raises(DomainError):
        cmrr_monte_carlo(TopologyKind.CCS_BG, [1.0], spec)


def test_failed_samples_are_excluded(dcmfb, monkeypatch):
    """Test that a failure within the allowed fraction is counted and dropped."""
    fail_samples(monkeypatch, {4})
    stats = cmrr_statistics(dcmfb, MismatchSpec(samples=20))
    assert stats.valid
    assert stats.n_failed == 1
    assert stats.samples == 19
    assert stats.mean_db == 40.0
    assert stats.std_db == 0.0


def test_too_many_failures_flag_run_invalid(dcmfb, monkeypatch):
    """Test that failures above the allowed fraction mark the run invalid."""
    fail_samples(monkeypatch, {0, 11})
    stats = cmrr_statistics(dcmfb, MismatchSpec(samples=20))
    assert not stats.valid
    assert stats.n_failed == 2
    assert stats.samples == 18


def test_all_samples_failing_raises(dcmfb, monkeypatch):
    """Test that a run with no converged sample raises ConvergenceError."""
    fail_samples(monkeypatch, range(20))
    with pytest.raises(ConvergenceError, match="All 20"):
        cmrr_statistics(dcmfb, MismatchSpec(samples=20))


@pytest.mark.slow
def test_statistics_settle_with_sample_count(scmfb):
    """Test that doubling the sample count moves the mean by less than three standard errors."""
    small = cmrr_statistics(scmfb, MismatchSpec(samples=16, seed=5))
    large = cmrr_statistics(scmfb, MismatchSpec(samples=32, seed=5))
    assert small.valid and large.valid
    assert small.std_db > 0.0
    assert abs(large.mean_db - small.mean_db) < 3.0 * small.std_db / math.sqrt(small.samples)


@pytest.mark.slow
def test_dual_cmfb_wins_under_mismatch():
    """Test the CMRR ordering of both schemes across lengths."""
    spec = MismatchSpec(samples=20, seed=3)
    single = cmrr_monte_carlo(TopologyKind.DIFF_SCMFB, [0.15, 1.0], spec)
    dual = cmrr_monte_carlo(TopologyKind.DIFF_DCMFB, [0.15, 1.0], spec)
    assert [s.length_um for s in dual] == [0.15, 1.0]
    assert all(s.valid for s in (*single, *dual))
    assert dual[1].mean_db - single[1].mean_db >= 30.0
    assert dual[1].mean_db > dual[0].mean_db
