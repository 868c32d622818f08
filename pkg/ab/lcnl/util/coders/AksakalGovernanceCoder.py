import re

from overrides import override
from pandas import DataFrame

from ab.lcnl.util.coders.CoderBase import CoderBase

AKSAKAL_ANSWER = "Community leaders, eg. aksakals make a decision, and other community members accept it"


def _normalize(text) -> str:
    return re.sub(r"\s+", "", str(text)).casefold()


class AksakalGovernanceCoder(CoderBase):
    """
    A community is aksakal-governed iff its respondent answered "How is the decision normally made
    at this kind of meeting?" with the community-leaders answer. Whitespace and case are ignored.
    """
    required_columns = ("community_id", "decision_answer")

    def __init__(self, answer=AKSAKAL_ANSWER):
        self.answer = _normalize(answer)

    @override
    def code(self, frame: DataFrame) -> DataFrame:
        answers = frame["decision_answer"].map(_normalize)
        coded = DataFrame({"community_id": frame["community_id"].astype(str).to_numpy(),
                           "aksakal": (answers == self.answer).astype(float).to_numpy()})
        return coded.drop_duplicates("community_id", keep="first").reset_index(drop=True)
