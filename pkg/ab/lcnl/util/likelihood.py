import math
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ab.lcnl.util import numdiff
from ab.lcnl.util.Dataset import Dataset
from ab.lcnl.util.ParameterSet import ParameterSet
from ab.lcnl.util.choice_model import ChoiceModel
from ab.lcnl.util.errors import DataIOError

BIC_CONVENTION = "k*ln(N) - 2*LL"


@dataclass
class LikelihoodReport:
    log_likelihood: float
    per_observation: np.ndarray
    n_observations: int
    n_free: int
    bic: float
    bic_convention: str = BIC_CONVENTION

    def to_dict(self) -> dict:
        return {"log_likelihood": self.log_likelihood, "n_observations": self.n_observations,
                "n_free": self.n_free, "bic": self.bic, "bic_convention": self.bic_convention}


def pairwise_sum(values) -> float:
    """
    Fixed-order pairwise reduction: adjacent pairs are added level by level, an odd tail is
    padded with 0.0. The result depends only on the sequence, never on how it was computed.
    """
    level = np.asarray(values, dtype=float).ravel()
    if level.size == 0:
        return 0.0
    while level.size > 1:
        if level.size % 2:
            level = np.append(level, 0.0)
        level = level[0::2] + level[1::2]
    return float(level[0])


def bic_value(log_likelihood, n_free, n_observations) -> float:
    if n_observations <= 0:
        raise DataIOError("BIC needs at least one observation")
    return n_free * math.log(n_observations) - 2.0 * log_likelihood


def bic(report: LikelihoodReport) -> float:
    return bic_value(report.log_likelihood, report.n_free, report.n_observations)


class _BlockCache:
    """
    Two-slot memo keyed by the bytes of a parameter block. Annealing moves one coordinate at a
    time, so most blocks are unchanged between consecutive evaluations.
    """

    def __init__(self, size=2):
        self.size = size
        self.store = OrderedDict()

    def get(self, key, compute):
        hit = self.store.get(key)
        if hit is not None:
            self.store.move_to_end(key)
            return hit
        value = compute()
        self.store[key] = value
        if len(self.store) > self.size:
            self.store.popitem(last=False)
        return value


class _ChunkEvaluator:
    """
    Per-observation log P(chosen) for one contiguous slice of the data.
    """

    def __init__(self, model: ChoiceModel, layout, x, z1, y):
        self.model = model
        self.layout = layout
        self.x = x
        self.z1 = z1
        self.y = y
        self.rows = np.arange(len(y))
        self.alt_cache = {key: _BlockCache() for key in layout.alt_slices}
        self.nest_cache = {key: _BlockCache() for key in layout.nest_slices}
        self.class_cache = {c: _BlockCache() for c in range(layout.n_classes)}
        self.membership_cache = _BlockCache()

    def _lambdas(self, values):
        lambdas = np.ones(self.model.n_nests)
        for k, idx in self.layout.dissimilarity_index.items():
            lambdas[k] = values[idx]
        return lambdas

    def _class_chosen(self, values, c, lambdas):
        n = len(self.y)
        v = np.empty((n, self.model.n_alternatives))
        for m in range(self.model.n_alternatives):
            block = values[self.layout.alt_slices[(c, m)]]
            v[:, m] = self.alt_cache[(c, m)].get(
                block.tobytes(), lambda: self.model.linear_index(self.x, self.model.alt_columns[m], block))
        w = np.zeros((n, self.model.n_nests))
        for (cls, k), sl in self.layout.nest_slices.items():
            if cls == c:
                block = values[sl]
                w[:, k] = self.nest_cache[(c, k)].get(
                    block.tobytes(), lambda: self.model.linear_index(self.x, self.model.nest_columns[k], block))
        log_prob = self.model.nested_log_probabilities(v, w, lambdas)["log_prob"]
        return log_prob[self.rows, self.y]

    def __call__(self, values) -> np.ndarray:
        lambdas = self._lambdas(values)
        chosen = []
        for c in range(self.layout.n_classes):
            key = values[self.layout.class_slices[c]].tobytes() + lambdas.tobytes()
            chosen.append(self.class_cache[c].get(key, lambda: self._class_chosen(values, c, lambdas)))
        theta_rows = [values[self.layout.membership_slices[c]] for c in range(self.layout.n_classes)]
        theta = np.vstack(theta_rows)
        log_h = self.membership_cache.get(theta.tobytes(), lambda: self.model.log_membership(self.z1, theta))
        joint = log_h + np.column_stack(chosen)
        # a probability cannot exceed 1; rounding in the class mixture may push log P a hair above 0
        return np.minimum(logsumexp(joint, axis=1), 0.0)


class LikelihoodObjective:
    """
    FIML log-likelihood as a function of the full packed parameter vector.
    Observations are evaluated in individual-id order and reduced by pairwise_sum, so the value does not
    depend on row order. With workers > 1 that ordered sequence is split into contiguous chunks on a
    thread pool and concatenated back, which gives the serial value bit for bit.
    """

    def __init__(self, data: Dataset, params: ParameterSet, workers=1):
        if len(data) == 0:
            raise DataIOError("no observations to evaluate")
        self.params = params
        self.layout = params.layout
        self.model = ChoiceModel(params.tree)
        self.n_observations = len(data)
        self.free_mask = params.free_mask
        self.evaluations = 0
        self.order = np.argsort(data.individual_ids, kind="stable")
        self.inverse = np.empty_like(self.order)
        self.inverse[self.order] = np.arange(len(self.order))
        x = data.design_matrix(self.model.covariates)[self.order]
        z1 = data.predictor_matrix(self.layout.class_predictors)[self.order]
        y = data.choice_indices(params.tree)[self.order]
        self.workers = max(1, min(int(workers or 1), self.n_observations))
        bounds = np.linspace(0, self.n_observations, self.workers + 1).astype(int)
        self.chunks = [_ChunkEvaluator(self.model, self.layout, x[a:b], z1[a:b], y[a:b])
                       for a, b in zip(bounds[:-1], bounds[1:])]
        self._pool = ThreadPoolExecutor(max_workers=self.workers) if self.workers > 1 else None

    def ordered(self, values) -> np.ndarray:
        """
        Per-observation log P(chosen) in individual-id order.
        """
        values = self.layout.check_vector(values)
        self.evaluations += 1
        if self._pool is None:
            return self.chunks[0](values)
        return np.concatenate(list(self._pool.map(lambda chunk: chunk(values), self.chunks)))

    def per_observation(self, values) -> np.ndarray:
        return self.ordered(values)[self.inverse]

    def __call__(self, values) -> float:
        return pairwise_sum(self.ordered(values))

    def free(self, values) -> float:
        """
        Objective over the free coordinates only; fixed coordinates stay at the template's values.
        """
        full = self.params.values.copy()
        full[self.free_mask] = values
        return self(full)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def log_likelihood(data: Dataset, params: ParameterSet, workers=1) -> LikelihoodReport:
    with LikelihoodObjective(data, params, workers) as objective:
        ordered = objective.ordered(params.values)
        per_obs = ordered[objective.inverse]
    ll = pairwise_sum(ordered)
    return LikelihoodReport(log_likelihood=ll, per_observation=per_obs, n_observations=len(data),
                            n_free=params.n_free, bic=bic_value(ll, params.n_free, len(data)))


def gradient(data: Dataset, params: ParameterSet, policy: numdiff.StepPolicy = numdiff.DEFAULT_POLICY,
             workers=1) -> np.ndarray:
    """
    Central-difference gradient of the log-likelihood, full packed length; fixed coordinates are 0.
    """
    with LikelihoodObjective(data, params, workers) as objective:
        return numdiff.gradient(objective, params.values, params.free_mask, policy, params.layout.names)


def hessian(data: Dataset, params: ParameterSet, policy: numdiff.StepPolicy = numdiff.DEFAULT_POLICY,
            workers=1, verbose=False) -> np.ndarray:
    """
    Symmetric Hessian of the log-likelihood over the free parameters, in packing order.
    """
    with LikelihoodObjective(data, params, workers) as objective:
        return numdiff.hessian(objective, params.values, params.free_mask, policy, params.layout.names,
                               verbose=verbose)


def scores(data: Dataset, params: ParameterSet, policy: numdiff.StepPolicy = numdiff.DEFAULT_POLICY,
           workers=1) -> np.ndarray:
    """
    Per-observation score matrix (N, k_free): derivative of each log P(chosen) in every free coordinate.
    """
    with LikelihoodObjective(data, params, workers) as objective:
        return numdiff.jacobian(objective.per_observation, params.values, params.free_mask, policy,
                                params.layout.names)


def gradient_drift(data: Dataset, params: ParameterSet, policy: numdiff.StepPolicy = numdiff.DEFAULT_POLICY,
                   workers=1) -> float:
    with LikelihoodObjective(data, params, workers) as objective:
        return numdiff.richardson_drift(objective, params.values, params.free_mask, policy, params.layout.names)
