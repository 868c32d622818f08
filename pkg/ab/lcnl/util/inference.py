from dataclasses import dataclass

import numpy as np
import pandas as pd

from ab.lcnl.util import likelihood, numdiff
from ab.lcnl.util.Dataset import Dataset
from ab.lcnl.util.ParameterSet import ParameterSet
from ab.lcnl.util.errors import DimensionError, NumericalError, SingularHessianError

RIDGE_START = 1e-8
RIDGE_CAP = 1e-2
EIGEN_FLOOR = 1e-8


@dataclass
class CovarianceReport:
    covariance: np.ndarray
    names: list
    ridge: float = 0.0
    min_eigenvalue: float = None
    mode: str = "opg"  # opg | literal_eq15
    hessian: np.ndarray = None
    meat: np.ndarray = None

    @property
    def hessian_ridge_added(self) -> float:
        return self.ridge

    @property
    def standard_errors(self) -> pd.Series:
        return standard_errors(self)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.covariance, index=self.names, columns=self.names)

    def diagnostics(self) -> dict:
        return {"covariance_mode": self.mode, "hessian_ridge_added": self.ridge,
                "min_eigenvalue_neg_hessian": self.min_eigenvalue}


def regularized_inverse(information, ridge_cap=RIDGE_CAP, verbose=False):
    """
    Inverse of -H. When its smallest eigenvalue is below 1e-8 a ridge eps*I is added, eps doubling
    from 1e-8 up to ridge_cap. Returns (inverse, ridge, min eigenvalue of -H).
    """
    information = np.asarray(information, dtype=float)
    if information.size == 0:
        return np.zeros((0, 0)), 0.0, None
    information = (information + information.T) / 2.0
    eigenvalues = np.linalg.eigvalsh(information)
    min_eig = float(eigenvalues[0])
    ridge = 0.0
    if min_eig < EIGEN_FLOOR:
        ridge = RIDGE_START
        while min_eig + ridge < EIGEN_FLOOR and ridge * 2.0 <= ridge_cap:
            ridge *= 2.0
        if min_eig + ridge < EIGEN_FLOOR:
            condition = float(np.abs(eigenvalues).max() / max(abs(min_eig), np.finfo(float).tiny))
            raise SingularHessianError(min_eig, condition, ridge_cap)
        if verbose:
            print(f"[WARN] -H has min eigenvalue {min_eig:.3g}; added ridge {ridge:.3g}")
    inverse = np.linalg.inv(information + ridge * np.eye(len(information)))
    return (inverse + inverse.T) / 2.0, ridge, min_eig


def sandwich_from_parts(hessian, meat, names=None, ridge_cap=RIDGE_CAP, mode="opg", verbose=False):
    """
    [-H]^-1 B [-H]^-1 for a log-likelihood Hessian H and middle term B, symmetrized.
    """
    hessian = np.atleast_2d(np.asarray(hessian, dtype=float))
    meat = np.atleast_2d(np.asarray(meat, dtype=float))
    if hessian.shape != meat.shape or hessian.shape[0] != hessian.shape[1]:
        raise DimensionError("sandwich middle term", hessian.shape, meat.shape)
    names = list(names) if names is not None else [f"p{i}" for i in range(len(hessian))]
    bread, ridge, min_eig = regularized_inverse(-hessian, ridge_cap, verbose)
    covariance = bread @ meat @ bread
    covariance = (covariance + covariance.T) / 2.0
    return CovarianceReport(covariance=covariance, names=names, ridge=ridge, min_eigenvalue=min_eig,
                            mode=mode, hessian=hessian, meat=meat)


def outer_product_of_scores(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    return scores.T @ scores


def summed_gradient_outer(scores) -> np.ndarray:
    g = np.asarray(scores, dtype=float).sum(axis=0)
    return np.outer(g, g)


def sandwich_covariance(data: Dataset, params_hat: ParameterSet, literal_eq15=False, ridge_cap=RIDGE_CAP,
                        policy: numdiff.StepPolicy = numdiff.DEFAULT_POLICY, workers=1,
                        verbose=False) -> CovarianceReport:
    """
    Robust covariance at the estimate. The middle term is the sum of per-observation score outer
    products; literal_eq15 switches it to the outer product of the summed gradient.
    """
    hessian = likelihood.hessian(data, params_hat, policy, workers, verbose)
    scores = likelihood.scores(data, params_hat, policy, workers)
    meat = summed_gradient_outer(scores) if literal_eq15 else outer_product_of_scores(scores)
    return sandwich_from_parts(hessian, meat, params_hat.free_names, ridge_cap,
                               "literal_eq15" if literal_eq15 else "opg", verbose)


def standard_errors(cov: CovarianceReport) -> pd.Series:
    diagonal = np.diag(np.asarray(cov.covariance, dtype=float))
    for name, value in zip(cov.names, diagonal):
        if value < 0:
            raise NumericalError(f"Negative variance {value:.6g} for coefficient '{name}'", coordinate=name)
    return pd.Series(np.sqrt(diagonal), index=list(cov.names), name="se")
