import numpy as np
import pandas as pd
import pytest

from predcal.core import (
    Alternative,
    CalibrationSettings,
    ClusteredBinomial,
    ClusteredCounts,
    MixedModelData,
    RandomStream,
    ValidationError,
)


def test_binomial_totals():
    d = ClusteredBinomial([1, 2, 3], [4, 5, 6])
    assert d.N == 21 and d.H == 3
    assert d.sizes.tolist() == [5, 7, 9]
    assert ClusteredBinomial.from_sizes([1, 2], [5, 5]).failures.tolist() == [4, 3]


@pytest.mark.parametrize(
    "succ, fail",
    [([1], [2]), ([1, -1], [2, 2]), ([1, 2], [2]), ([0, 0], [0, 3]), ([1.5, 2], [1, 1])],
)
def test_binomial_rejects_bad_input(succ, fail):
    with pytest.raises(ValidationError):
        ClusteredBinomial(succ, fail)


def test_counts_need_two_clusters():
    with pytest.raises(ValidationError):
        ClusteredCounts([3])
    with pytest.raises(ValidationError):
        ClusteredCounts([3, -1])


def test_mixed_data_from_frame_and_missing():
    f = pd.DataFrame({"y": [1.0, 2.0, 3.0], "a": [1, 1, 2]})
    d = MixedModelData.from_frame(f, "y")
    assert d.factors["a"] == ("1", "1", "2")
    with pytest.raises(ValidationError):
        MixedModelData([1.0, np.nan], {"a": ("1", "2")})
    with pytest.raises(ValidationError):
        MixedModelData([1.0, 2.0], {"a": ("1",)})


def test_settings_defaults_and_validation():
    s = CalibrationSettings()
    assert (s.alpha, s.nboot, s.delta_min, s.delta_max) == (0.05, 10000, 0.01, 10.0)
    assert (s.tolerance, s.max_bisection_steps, s.alternative) == (0.003, 30, Alternative.BOTH)
    assert s.level == pytest.approx(0.95)
    for bad in [dict(alpha=0), dict(alpha=1.2), dict(nboot=0), dict(delta_min=2, delta_max=1),
                dict(tolerance=0), dict(max_bisection_steps=0), dict(alternative="left"),
                dict(seed=-1), dict(threads=0)]:
        with pytest.raises(ValidationError):
            CalibrationSettings(**bad)


def test_alternative_parse():
    assert Alternative.parse("UPPER") is Alternative.UPPER
    assert Alternative.parse(Alternative.LOWER) is Alternative.LOWER


def test_stream_reproducible_and_distinct():
    s = RandomStream(42)
    a = s.derive(3).generator().random(5)
    b = RandomStream(42).derive(3).generator().random(5)
    c = s.derive(4).generator().random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert s.derive(1).derive(2).path == (1, 2)
    assert s.derive(1).child_seed() != s.derive(2).child_seed()
    with pytest.raises(ValidationError):
        s.derive(-1)
