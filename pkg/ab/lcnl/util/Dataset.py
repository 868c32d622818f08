from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ab.lcnl.util.errors import DataIOError, MissingCovariateError


@dataclass(frozen=True)
class Observation:
    individual_id: str
    community_id: str
    choice: str
    covariates: dict
    class_predictors: dict

    def covariate(self, name) -> float:
        value = self.covariates.get(name)
        if value is None or not np.isfinite(value):
            raise MissingCovariateError(name, self.individual_id)
        return float(value)

    def predictor_vector(self, names) -> np.ndarray:
        out = np.empty(len(names))
        for j, name in enumerate(names):
            value = self.class_predictors.get(name)
            if value is None or not np.isfinite(value):
                raise MissingCovariateError(name, self.individual_id)
            out[j] = value
        return out


@dataclass
class Dataset:
    """
    One row per individual: observed choice, utility covariates and class-membership predictors.
    `provenance` records how many rows were read and why rows were dropped.
    """
    individual_ids: np.ndarray
    community_ids: np.ndarray
    choices: np.ndarray
    covariates: pd.DataFrame
    class_predictors: pd.DataFrame
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.individual_ids = np.asarray(self.individual_ids).astype(str)
        self.community_ids = np.asarray(self.community_ids).astype(str)
        self.choices = np.asarray(self.choices).astype(str)
        self.covariates = self.covariates.reset_index(drop=True).astype(float)
        self.class_predictors = self.class_predictors.reset_index(drop=True).astype(float)
        n = len(self.individual_ids)
        for name, size in (("community_ids", len(self.community_ids)), ("choices", len(self.choices)),
                           ("covariates", len(self.covariates)), ("class_predictors", len(self.class_predictors))):
            if size != n:
                raise DataIOError(f"dataset field '{name}' has {size} rows, expected {n}")
        if n and (self.individual_ids == "").any():
            raise DataIOError("empty individual id")
        unique, counts = np.unique(self.individual_ids, return_counts=True)
        if (counts > 1).any():
            raise DataIOError(f"duplicate individual id '{unique[counts > 1][0]}'")

    def __len__(self):
        return len(self.individual_ids)

    @property
    def n_observations(self) -> int:
        return len(self)

    def design_matrix(self, names) -> np.ndarray:
        return self._matrix(self.covariates, names)

    def predictor_matrix(self, names) -> np.ndarray:
        """
        Class-membership design with a leading intercept column.
        """
        z = self._matrix(self.class_predictors, names)
        return np.hstack([np.ones((len(self), 1)), z])

    def choice_indices(self, tree) -> np.ndarray:
        return np.array([tree.alternative_index(alt, iid) for alt, iid in zip(self.choices, self.individual_ids)],
                        dtype=int)

    def _matrix(self, frame, names) -> np.ndarray:
        missing = [name for name in names if name not in frame.columns]
        if missing:
            raise MissingCovariateError(missing[0], self.individual_ids[0] if len(self) else None)
        x = frame[list(names)].to_numpy(dtype=float)
        bad = ~np.isfinite(x)
        if bad.any():
            row, col = np.argwhere(bad)[0]
            raise MissingCovariateError(names[col], self.individual_ids[row])
        return x

    def observation(self, i) -> Observation:
        return Observation(self.individual_ids[i], self.community_ids[i], self.choices[i],
                           self.covariates.iloc[i].to_dict(), self.class_predictors.iloc[i].to_dict())

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.individual_ids[rows], self.community_ids[rows], self.choices[rows],
                       self.covariates.iloc[rows], self.class_predictors.iloc[rows], dict(self.provenance))

    def equals(self, other: "Dataset") -> bool:
        return (np.array_equal(self.individual_ids, other.individual_ids)
                and np.array_equal(self.community_ids, other.community_ids)
                and np.array_equal(self.choices, other.choices)
                and self.covariates.equals(other.covariates)
                and self.class_predictors.equals(other.class_predictors))
