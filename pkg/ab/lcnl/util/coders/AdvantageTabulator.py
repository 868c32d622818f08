import numpy as np
from overrides import override
from pandas import DataFrame

from ab.lcnl.util.coders.CoderBase import CoderBase
from ab.lcnl.util.coders.ClassPredictorCoder import RESPONSE_RANGE
from ab.lcnl.util.errors import CodingError, DataIOError

ADVANTAGE_QUESTIONS = {
    "adv_q1": "Reduces wedding expenses",
    "adv_q2": "Reduces kalym",
    "adv_q3": "It is a way to avoid delayed marriage or prolonged search for spouse",
    "adv_q4": "It is a way to avoid lengthy negotiations between couple's parents",
    "adv_q5": "It is carrying on social custom",
    "adv_q6": "It is a way to avoid disapproval of a marriage by couples' parents",
}

DEFAULT_KIDNAPPER_FILTER = {
    "marriage_type": ["bride_capture", "mock_kidnapping"],
    "attempted_kidnapping": [1],
}


class AdvantageTabulator(CoderBase):
    """
    Share of self-admitted kidnappers rating each "possible advantage" of bride capture as
    the most important or quite important (response 1 or 2).
    A respondent is a kidnapper if any filter column holds one of its listed values.
    """

    def __init__(self, kidnapper_filter=None, questions=None, threshold=2):
        self.kidnapper_filter = dict(kidnapper_filter or DEFAULT_KIDNAPPER_FILTER)
        self.questions = dict(questions or ADVANTAGE_QUESTIONS)
        self.threshold = threshold
        self.required_columns = tuple(self.questions)

    def kidnappers(self, frame: DataFrame):
        mask = np.zeros(len(frame), dtype=bool)
        used = [c for c in self.kidnapper_filter if c in frame.columns]
        if not used:
            raise DataIOError(f"none of the kidnapper filter columns {list(self.kidnapper_filter)} is present")
        for column in used:
            allowed = {str(v) for v in self.kidnapper_filter[column]}
            mask |= frame[column].map(lambda v: _as_text(v) in allowed).to_numpy(dtype=bool)
        return mask

    @override
    def code(self, frame: DataFrame) -> DataFrame:
        subset = frame.loc[self.kidnappers(frame)]
        rows = []
        for label, (column, statement) in enumerate(self.questions.items(), start=1):
            responses = subset[column].dropna().to_numpy(dtype=float)
            bad = ~np.isin(responses, RESPONSE_RANGE)
            if bad.any():
                raise CodingError(column, responses[bad][0], list(RESPONSE_RANGE))
            count = int((responses <= self.threshold).sum())
            n = int(responses.size)
            rows.append({"question": f"Q{label}", "column": column, "statement": statement,
                         "respondents": n, "affirmative": count,
                         "percent": 100.0 * count / n if n else float("nan")})
        return DataFrame(rows, columns=["question", "column", "statement", "respondents", "affirmative", "percent"])


def _as_text(value) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value).strip()
