from pandas import DataFrame

from ab.lcnl.util.errors import DataIOError


class CoderBase:
    """
    Turns raw survey rows into model-ready columns.
    Subclasses implement code(); callers get a new frame, the input is never mutated.
    """
    required_columns = ()

    def code(self, frame: DataFrame) -> DataFrame:
        """
            Implement this method such that it returns a new pandas dataframe holding the coded columns.
            Implementations must not modify the input frame.
        """
        pass

    def __call__(self, frame: DataFrame) -> DataFrame:
        self.check_columns(frame)
        return self.code(frame)

    def check_columns(self, frame: DataFrame):
        missing = [c for c in self.required_columns if c not in frame.columns]
        if missing:
            raise DataIOError(f"{type(self).__name__} requires columns {missing}")
