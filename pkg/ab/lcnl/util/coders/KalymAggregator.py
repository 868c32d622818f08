import numpy as np
from overrides import override
from pandas import DataFrame

from ab.lcnl.util.coders.CoderBase import CoderBase
from ab.lcnl.util.errors import DataIOError

WAVES = (2011, 2012)


class KalymAggregator(CoderBase):
    """
    Community bride price: mean payment (sheep-equivalents) over unique marriages recorded in the
    2011 and 2012 waves. Communities without records get NaN and kalym_missing = 1.
    """
    required_columns = ("community_id", "wave", "couple_id", "payment")

    def __init__(self, communities=None, waves=WAVES):
        self.communities = None if communities is None else [str(c) for c in communities]
        self.waves = tuple(waves)

    @override
    def code(self, frame: DataFrame) -> DataFrame:
        records = frame.loc[frame["wave"].astype(int).isin(self.waves),
                            ["community_id", "wave", "couple_id", "payment"]].copy()
        records["community_id"] = records["community_id"].astype(str)
        records["payment"] = records["payment"].astype(float)
        negative = records["payment"] < 0
        if negative.any():
            row = records.loc[negative].iloc[0]
            raise DataIOError(f"negative kalym payment {row['payment']} for couple '{row['couple_id']}'",
                              column="payment")
        # the same couple reported in both waves counts once
        records = records.sort_values(["wave"], kind="stable").drop_duplicates("couple_id", keep="first")
        means = records.groupby("community_id", sort=True)["payment"].mean()
        communities = self.communities if self.communities is not None else list(means.index)
        kalym = np.array([means.get(c, np.nan) for c in communities], dtype=float)
        return DataFrame({"community_id": communities, "kalym": kalym,
                          "kalym_missing": np.isnan(kalym).astype(int)})
