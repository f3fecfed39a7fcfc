import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from pnrd.analytics import joint_count_distribution, poisson_mean_count
from pnrd.povm import DetectorModel, apply_detector, expectation_moment
from pnrd.special import DomainError
from pnrd.states import (
    SourceKind,
    correlated_source,
    from_amplitudes,
    make_source,
    poisson_cutoff,
    poisson_distribution,
)


def test_poisson_examples():
    vac = poisson_distribution(0.0)
    assert vac.probs[0] == 1.0 and vac.probs[1:].sum() == 0.0
    assert poisson_distribution(1.0).probs[0] == pytest.approx(math.exp(-1), rel=1e-15)
    with pytest.raises(DomainError):
        poisson_distribution(-0.1)


@given(mean=st.floats(0.0, 100.0))
def test_poisson_mean_and_tail(mean):
    dist = poisson_distribution(mean)
    assert dist.mean() == pytest.approx(mean, abs=1e-10)
    assert abs(dist.probs.sum() - 1.0) < 1e-12
    assert dist.cutoff >= poisson_cutoff(mean)


def test_cutoff_includes_detector_saturation():
    assert poisson_distribution(2.0, max_count=50).cutoff >= 50 + 30


def test_twb_marginal_is_poisson():
    src = make_source("twb", 3.5)
    assert_allclose(src.marginal().probs, poisson_distribution(3.5).probs, atol=1e-12)
    joint = src.joint()
    assert np.count_nonzero(joint - np.diag(np.diag(joint))) == 0


def test_tmc_joint_factorizes():
    src = make_source(SourceKind.TMC, 1.5)
    p = poisson_distribution(1.5).probs
    assert_allclose(src.joint(), np.outer(p, p), atol=1e-15)


def test_twb_second_cross_moment():
    nbar = 2.5
    joint = make_source("twb", nbar).joint()
    n = np.arange(joint.shape[0])
    assert n @ joint @ n == pytest.approx(nbar + nbar**2, rel=1e-12)


@pytest.mark.parametrize("eta1, eta2, N1, N2", [(0.5, 0.5, 3, 3), (0.9, 0.3, 2, 5)])
def test_tmc_counts_factorize(eta1, eta2, N1, N2):
    d1, d2 = DetectorModel(eta1, N1), DetectorModel(eta2, N2)
    src = make_source("tmc", 4.0)
    joint = joint_count_distribution(src, d1, d2)
    m1 = apply_detector(d1, src.weights).probs
    m2 = apply_detector(d2, src.weights).probs
    assert_allclose(joint, np.outer(m1, m2), atol=1e-12)


def test_amplitude_phases_are_discarded():
    b = np.array([0.6, 0.8j])
    dist = from_amplitudes(b)
    assert_allclose(dist.probs, [0.36, 0.64])
    assert correlated_source(dist).kind is SourceKind.CUSTOM


def test_custom_weights_must_normalize():
    with pytest.raises(DomainError):
        correlated_source([0.5, 0.4])


@pytest.mark.parametrize("nbar", [0.1, 5.0, 50.0])
def test_cutoff_adequacy(nbar):
    det = DetectorModel(0.7, 5)
    base = poisson_distribution(nbar, 5)
    wider = poisson_distribution(nbar, 5, cutoff=math.ceil(base.cutoff * 1.25))
    for p in (1, 2):
        assert abs(expectation_moment(p, det, base) - expectation_moment(p, det, wider)) < 1e-10
    assert abs(expectation_moment(1, det, base) - poisson_mean_count(det, nbar)) < 1e-10
