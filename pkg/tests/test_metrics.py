import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from squint_track.channel import PathParams, SystemConfig
from squint_track.metrics import METRIC_NAMES, channel_mse, match_paths, mse_metrics

CFG = SystemConfig(m_bs=16, l_blocks=4, p_pilots=2)
TRUTH = [PathParams(1 + 1j, 0.3, 400.0), PathParams(-0.5j, -0.7, -1200.0), PathParams(0.9, 0.9, 50.0)]


def test_perfect_estimate():
    assert mse_metrics(TRUTH, TRUTH, CFG) == dict.fromkeys(METRIC_NAMES, 0.0)


def test_zero_and_doubled_channels():
    zero = [PathParams(0, p.theta, p.f_d) for p in TRUTH]
    double = [PathParams(2 * p.alpha, p.theta, p.f_d) for p in TRUTH]
    assert mse_metrics(TRUTH, zero, CFG)["mse_h"] == pytest.approx(1.0)
    assert channel_mse(TRUTH, double, CFG) == pytest.approx(1.0)


def test_misses_count_one():
    m = mse_metrics(TRUTH, TRUTH[:1], CFG)
    for name in METRIC_NAMES:
        assert m[name] == pytest.approx(2 / 3)


def test_spurious_estimates_ignored():
    extra = TRUTH + [PathParams(5.0, -0.1, 1500.0)]
    assert mse_metrics(TRUTH, extra, CFG) == dict.fromkeys(METRIC_NAMES, 0.0)


def test_matching_uses_wrapped_doppler():
    period = CFG.doppler_period
    truth = [PathParams(1, 0.2, period / 2 - 5)]
    est = [PathParams(1, 0.25, -period / 2 + 5), PathParams(1, 0.2, 0.0)]
    assert match_paths(truth, est, CFG) == [0]


def test_parameter_errors():
    est = [PathParams(p.alpha * 1.1, p.theta * 0.9, p.f_d * 1.2) for p in TRUTH]
    m = mse_metrics(TRUTH, est, CFG)
    assert m["mse_alpha"] == pytest.approx(0.01)
    assert m["mse_theta"] == pytest.approx(0.01)
    assert m["mse_fd"] == pytest.approx(0.04)


def test_empty_truth():
    with pytest.raises(ValueError):
        mse_metrics([], TRUTH, CFG)


@given(st.permutations(range(4)), st.integers(0, 2 ** 32 - 1))
def test_permutation_invariance(perm, seed):
    rng = np.random.default_rng(seed)
    est = [PathParams(p.alpha + 0.1 * rng.normal(), p.theta + 0.01 * rng.normal(), p.f_d + 20 * rng.normal())
           for p in TRUTH]
    est.append(PathParams(0.3, rng.uniform(-1, 1), rng.uniform(-1000, 1000)))
    shuffled = [est[i] for i in perm]
    a, b = mse_metrics(TRUTH, est, CFG), mse_metrics(TRUTH, shuffled, CFG)
    for name in METRIC_NAMES:
        assert a[name] == pytest.approx(b[name], rel=1e-12, abs=1e-15)


def test_gate_rejects_distant_estimates():
    truth = [PathParams(1, 0.2, 100.0)]
    far = [PathParams(1, 0.2 + 3 * CFG.angle_cell, 100.0)]
    assert match_paths(truth, far, CFG) == [None]
    assert match_paths(truth, far, CFG, gate=None) == [0]
    assert mse_metrics(truth, far, CFG)["mse_theta"] == 1.0
    near = [PathParams(1, 0.2, 100.0 + 0.5 * CFG.doppler_cell)]
    assert match_paths(truth, near, CFG) == [0]
