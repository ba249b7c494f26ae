import math

import numpy as np
import pytest

from rowloc.metrics import accumulated_error_distribution, compute_metrics


def test_symmetric_pair():
    m = compute_metrics([1.0, -1.0])
    assert m.mae == 1.0
    assert m.sd == 0.0
    assert m.p95 == 1.0
    assert m.n == 2


def test_single_outlier_mean():
    assert compute_metrics([0, 0, 0, 10]).mae == 2.5


def test_half_normal_mean_monte_carlo():
    rng = np.random.default_rng(12)
    e = rng.normal(0.0, 0.1, 1000)
    expected = 0.1 * math.sqrt(2.0 / math.pi)
    assert compute_metrics(e).mae == pytest.approx(expected, rel=0.1)


def test_empty_errors_rejected():
    with pytest.raises(ValueError):
        compute_metrics([])
    with pytest.raises(ValueError):
        accumulated_error_distribution([], [0.1])


def test_metrics_agree_with_direct_recomputation():
    rng = np.random.default_rng(13)
    for _ in range(1000):
        e = rng.normal(size=rng.integers(1, 40))
        m = compute_metrics(e)
        a = sorted(abs(v) for v in e)
        mae = sum(a) / len(a)
        sd = math.sqrt(sum((v - mae) ** 2 for v in a) / len(a))
        # linear interpolation between order statistics at rank 0.95*(n-1)
        pos = 0.95 * (len(a) - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, len(a) - 1)
        p95 = a[lo] + (pos - lo) * (a[hi] - a[lo])
        assert abs(m.mae - mae) < 1e-12
        assert abs(m.sd - sd) < 1e-12
        assert abs(m.p95 - p95) < 1e-12


def test_accumulated_distribution_all_zero():
    np.testing.assert_array_equal(
        accumulated_error_distribution([0.0, 0.0], [0.0, 0.5, 1.0]), [1.0, 1.0, 1.0]
    )


def test_accumulated_distribution_half():
    curve = accumulated_error_distribution([0.1, 0.3], [0.2])
    assert curve[0] == 0.5


def test_accumulated_distribution_monotone_and_reaches_one():
    rng = np.random.default_rng(14)
    for _ in range(20):
        e = rng.normal(size=50)
        t = np.sort(rng.uniform(0, 3, 30))
        curve = accumulated_error_distribution(e, t)
        assert np.all(np.diff(curve) >= 0)
        full = accumulated_error_distribution(e, [np.max(np.abs(e))])
        assert full[0] == 1.0
