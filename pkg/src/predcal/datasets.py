"""Small reference data sets used by the tests and demos."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .core import ClusteredBinomial, ClusteredCounts, MixedModelData
from .design import DesignMatrices, save_futmat

_C2_DAT1_Y = [
    105.27359, 101.40640, 94.01300, 97.82988, 94.30743, 92.52234, 102.17317,
    99.74908, 100.64042, 95.49433, 92.30937, 99.88281, 103.82970, 99.95517,
    107.13102, 107.42282, 105.25822, 108.82881, 107.30048, 107.13083,
    106.73200, 106.44846, 104.60098, 103.86882, 107.01238, 106.06968,
    107.53004,
]

_C2_DAT3_Y = [97.47232, 95.44895, 100.18817, 99.36843, 99.08363, 101.11561, 97.05361, 97.81136]

_C2_DAT4_Y = [102.8583, 101.1324, 104.9425, 101.2299, 104.6727, 105.3402]

C2_FORMULA = "y_ijk~(1|a)+(1|b)+(1|a:b)"
C2_FUTVEC = (1, 2, 4, 5, 10, 11, 13, 14)


def qb_dat1() -> pd.DataFrame:
    succ = [0, 9, 13, 1, 4, 5, 13, 7, 7, 6]
    return pd.DataFrame({"succ": succ, "fail": [50 - s for s in succ]})


def qb_dat2() -> pd.DataFrame:
    return pd.DataFrame({"succ": [0, 6, 8], "fail": [40, 44, 52]})


def bb_dat2() -> pd.DataFrame:
    return pd.DataFrame({"succ": [11, 1, 3], "fail": [29, 49, 57]})


def qp_dat1() -> pd.DataFrame:
    return pd.DataFrame({"y": [46, 62, 30, 59, 74, 53, 32, 27, 59, 47]})


def qp_dat2() -> pd.DataFrame:
    return pd.DataFrame({"y": [44, 74, 36]})


def c2_dat1() -> pd.DataFrame:
    a = np.tile(np.repeat([1, 2, 3], 3), 3)
    b = np.repeat([1, 2, 3], 9)
    return pd.DataFrame({"y_ijk": _C2_DAT1_Y, "a": a, "b": b})


def c2_dat3() -> pd.DataFrame:
    return pd.DataFrame(
        {"y_ijk": _C2_DAT3_Y, "a": [1, 1, 2, 2, 1, 1, 2, 2], "b": [1, 1, 1, 1, 2, 2, 2, 2]}
    )


def c2_dat4() -> pd.DataFrame:
    return pd.DataFrame({"y_ijk": _C2_DAT4_Y, "a": [1, 1, 2, 2, 2, 2], "b": [1] * 6})


def c2_dat4_futmat() -> DesignMatrices:
    """The hand-written future design for ``c2_dat4`` (terms a:b, b, a)."""
    two = np.array([[1, 0], [1, 0], [0, 1], [0, 1], [0, 1], [0, 1]])
    return DesignMatrices(("a:b", "b", "a"), (two, np.ones((6, 1)), two))


def as_binomial(frame: pd.DataFrame) -> ClusteredBinomial:
    return ClusteredBinomial(frame.iloc[:, 0].to_numpy(), frame.iloc[:, 1].to_numpy())


def as_counts(frame: pd.DataFrame) -> ClusteredCounts:
    return ClusteredCounts(frame.iloc[:, 0].to_numpy())


def as_mixed(frame: pd.DataFrame, response: str = "y_ijk") -> MixedModelData:
    return MixedModelData.from_frame(frame, response)


def write_fixtures(directory) -> dict:
    """Write every data set as CSV (plus ``fml.json``) into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = {}
    for name, fn in [
        ("qb_dat1", qb_dat1), ("qb_dat2", qb_dat2), ("bb_dat2", bb_dat2),
        ("qp_dat1", qp_dat1), ("qp_dat2", qp_dat2),
        ("c2_dat1", c2_dat1), ("c2_dat3", c2_dat3), ("c2_dat4", c2_dat4),
    ]:
        path = directory / f"{name}.csv"
        fn().to_csv(path, index=False)
        out[name] = path
    out["fml"] = directory / "fml.json"
    save_futmat(c2_dat4_futmat(), out["fml"])
    return out
