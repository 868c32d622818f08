import numpy as np
from overrides import override
from pandas import DataFrame

from ab.lcnl.util.coders.CoderBase import CoderBase
from ab.lcnl.util.errors import CodingError

# "Values and Gender Attitudes": strongly agree = response 3 or 4
VALUES_ITEMS = [
    "val_husband_decides",      # Important decisions should be made by the husband rather than the wife.
    "val_woman_home",           # A man's job is to earn money; a woman's job is to look after the home and family.
    "val_mother_fulfilled",     # A woman is really fulfilled only when she becomes a mother.
    "val_husband_career",       # A husband's career should be more important to the wife than her own.
    "val_boy_education",        # A university education is more important for a boy than for a girl.
    "val_no_work_religion",     # Woman should not work outside her home due to religious considerations.
    "val_housewife_fulfilling", # Being a housewife is just as fulfilling as working for pay.
    "val_working_mother_warm",  # A working woman can establish just as warm and secure relationship with her children.
    "val_dual_income",          # Both the husband and the wife should contribute to the household income.
]
# "Marriage Practices": the most important or quite important = response 1 or 2
SPOUSE_ITEMS = ["sp_respectful", "sp_obedient", "sp_confident", "sp_intelligent", "sp_respected"]
# "Trust" statements, agree = 3 or 4
TRUST_ITEMS = ["tr_trust_people", "tr_cannot_rely", "tr_cautious"]
# "Trust" in groups, trust = 3 or 4
TRUST_GROUP_ITEMS = ["tg_family", "tg_neighbors", "tg_strangers", "tg_other_ethnic"]

AGREE_ITEMS = VALUES_ITEMS + TRUST_ITEMS + TRUST_GROUP_ITEMS
IMPORTANCE_ITEMS = SPOUSE_ITEMS
RESPONSE_RANGE = (1, 2, 3, 4)

CLASS_PREDICTORS = VALUES_ITEMS + SPOUSE_ITEMS + TRUST_ITEMS + TRUST_GROUP_ITEMS + ["kyrgyz_kazakh", "village"]

PATRIARCHAL = VALUES_ITEMS[:7] + SPOUSE_ITEMS[:3]
EGALITARIAN = VALUES_ITEMS[7:] + SPOUSE_ITEMS[3:]

ETHNIC_GROUPS = ("kyrgyz", "kazakh")


class ClassPredictorCoder(CoderBase):
    """
    Codes Likert and importance responses into the class-membership indicators, in table order,
    followed by the Kyrgyz-or-Kazakh and village-residence indicators.
    """
    required_columns = tuple(AGREE_ITEMS + IMPORTANCE_ITEMS + ["ethnicity", "settlement"])

    def __init__(self, agree_threshold=3, importance_threshold=2):
        self.agree_threshold = agree_threshold
        self.importance_threshold = importance_threshold

    @override
    def code(self, frame: DataFrame) -> DataFrame:
        coded = DataFrame(index=frame.index)
        for column in CLASS_PREDICTORS[:-2]:
            responses = self._responses(frame, column)
            if column in IMPORTANCE_ITEMS:
                coded[column] = (responses <= self.importance_threshold).astype(float)
            else:
                coded[column] = (responses >= self.agree_threshold).astype(float)
        ethnicity = frame["ethnicity"].astype(str).str.strip().str.casefold()
        coded["kyrgyz_kazakh"] = ethnicity.isin(ETHNIC_GROUPS).astype(float)
        settlement = frame["settlement"].astype(str).str.strip().str.casefold()
        coded["village"] = (settlement == "village").astype(float)
        return coded

    @staticmethod
    def _responses(frame, column):
        values = frame[column].to_numpy(dtype=float)
        bad = ~np.isin(values, RESPONSE_RANGE)
        if bad.any():
            raise CodingError(column, frame[column].to_numpy()[bad][0], list(RESPONSE_RANGE))
        return values
