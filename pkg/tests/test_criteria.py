import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from tailgp.criteria import (
    AcquisitionConfig,
    discrepancy_score,
    excluded_mask,
    expected_improvement,
    select_next,
)
from tailgp.errors import InvalidArgumentError, SelectionError


def ei_by_quadrature(m, v, y_f, alpha):
    """Integrate the contour improvement max(0, alpha^2 v - (y - y_f)^2) against N(m, v)."""
    s = np.sqrt(v)
    eps = alpha * s
    val, _ = integrate.quad(lambda y: (eps**2 - (y - y_f) ** 2) * stats.norm.pdf(y, m, s),
                            y_f - eps, y_f + eps, epsabs=1e-14, epsrel=1e-10, limit=200)
    return val


def test_ei_zero_variance():
    assert expected_improvement(1.0, 0.0, 0.0) == 0.0


def test_ei_hand_value():
    val = expected_improvement(0.0, 1.0, 0.0, 1.96)
    # frozen from quadrature; the four-decimal hand figure 2.92865 is 1e-5 relative off
    assert val == pytest.approx(2.9286204640807636, rel=1e-12)
    assert val == pytest.approx(2.92865, rel=2e-5)
    closed = 3.8416 * 0.95 + (2 * 1.96 * stats.norm.pdf(1.96) - 0.95)
    assert val == pytest.approx(closed, abs=1e-3)
    assert val == pytest.approx(ei_by_quadrature(0.0, 1.0, 0.0, 1.96), rel=1e-8)


def test_ei_far_from_contour():
    assert expected_improvement(10.0, 1.0, 0.0, 1.96) < 1e-15


def test_ei_matches_quadrature_on_random_tuples():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m, y_f = rng.normal(0, 3, 2)
        v = np.exp(rng.uniform(-4, 3))
        alpha = rng.uniform(0.5, 3.0)
        # keep the improvement region from being numerically empty
        if abs(m - y_f) / np.sqrt(v) > alpha + 6:
            continue
        ref = ei_by_quadrature(m, v, y_f, alpha)
        assert expected_improvement(m, v, y_f, alpha) == pytest.approx(ref, rel=1e-6, abs=1e-14)


@given(st.floats(-50, 50), st.floats(0, 100), st.floats(-50, 50), st.floats(0.01, 5))
def test_ei_nonnegative(m, v, y_f, alpha):
    assert expected_improvement(m, v, y_f, alpha) >= 0.0


def test_discrepancy_examples():
    assert discrepancy_score(3.0, 2.0, 3.0) == 0.0
    assert discrepancy_score(2.0, 4.0, 0.0) == 1.0
    assert discrepancy_score(1.0, 0.0, 0.0) == np.inf
    assert discrepancy_score(1.0, 1e-16, 0.0) == np.inf


def test_discrepancy_epsilon_form():
    assert discrepancy_score(2.0, 4.0, 0.0, epsilon=1.0) == pytest.approx(5 / 4 + 1)


def test_acquisition_config_validation():
    with pytest.raises(InvalidArgumentError):
        AcquisitionConfig(kind="pi")
    with pytest.raises(InvalidArgumentError):
        AcquisitionConfig(alpha=0.0)
    with pytest.raises(InvalidArgumentError):
        AcquisitionConfig(epsilon=-1.0)


# ---------------------------------------------------------------- selection


def test_select_single_candidate():
    for kind in ("ei", "discrepancy"):
        out = select_next([0.3], [1.0], AcquisitionConfig(kind=kind))
        assert out.index == 0


def test_discrepancy_prefers_larger_variance():
    out = select_next([1.0, 1.0], [1.0, 4.0], AcquisitionConfig(kind="discrepancy"))
    assert out.index == 1
    assert out.score == pytest.approx(0.5)


def test_ties_go_to_lowest_index():
    out = select_next([1.0, 1.0, 1.0], [2.0, 2.0, 2.0], AcquisitionConfig())
    assert out.index == 0
    out = select_next([1.0, 1.0], [0.0, 0.0], AcquisitionConfig(), excluded=[True, False])
    assert out.index == 1


def test_training_points_never_selected():
    cand = np.array([[0.1, 0.1], [0.5, 0.5], [0.9, 0.2]])
    mask = excluded_mask(cand, np.array([[0.5, 0.5]]))
    assert mask.tolist() == [False, True, False]
    # the excluded candidate would otherwise win outright
    out = select_next([3.0, 0.0, 2.0], [1.0, 1.0, 1.0], AcquisitionConfig(), excluded=mask)
    assert out.index == 2


def test_empty_admissible_set():
    with pytest.raises(SelectionError):
        select_next([0.0, 1.0], [1.0, 1.0], AcquisitionConfig(), excluded=[True, True])


def test_discrepancy_selection_scale_invariance_and_equivalences():
    rng = np.random.default_rng(1)
    cfg = AcquisitionConfig(kind="discrepancy", target=0.3)
    for _ in range(50):
        m = rng.normal(0, 1, 40)
        v = np.exp(rng.normal(0, 1, 40))
        base = select_next(m, v, cfg).index
        assert select_next(m, v * rng.uniform(0.01, 100), cfg).index == base
        score = discrepancy_score(m, v, 0.3)
        # expected squared discrepancy (m - y_f)^2 / v + 1 and Phi(-score) agree
        assert np.argmin((m - 0.3) ** 2 / v + 1) == base
        assert np.argmax(stats.norm.cdf(-score)) == base


def test_ei_selection_is_argmax():
    rng = np.random.default_rng(2)
    m = rng.normal(0, 1, 30)
    v = np.exp(rng.normal(0, 1, 30))
    cfg = AcquisitionConfig(kind="ei", target=0.0)
    out = select_next(m, v, cfg)
    assert out.index == int(np.argmax(expected_improvement(m, v, 0.0)))
