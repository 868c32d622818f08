from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from ab.lcnl.util.ChoiceTree import ChoiceTree
from ab.lcnl.util.Dataset import Observation
from ab.lcnl.util.ParameterSet import ParameterSet
from ab.lcnl.util.errors import DimensionError, ModelSpecError


class ChoiceModel:
    """
    Vectorised latent-class nested logit over a design matrix whose columns follow tree.covariates.
    Every softmax and log-sum-exp is max-shifted; log probabilities are formed directly in log space.
    """

    def __init__(self, tree: ChoiceTree):
        self.tree = tree
        self.covariates = tree.covariates
        position = {name: j for j, name in enumerate(self.covariates)}
        self.alt_columns = [np.array([position[c] for c in alt.covariates], dtype=int) for alt in tree.alternatives]
        self.nest_columns = [np.array([position[c] for c in nest.covariates], dtype=int) for nest in tree.nests]
        self.nest_members = []
        alt_nest = []
        for k, nest in enumerate(tree.nests):
            start = len(alt_nest)
            alt_nest.extend([k] * len(nest.alternatives))
            self.nest_members.append(np.arange(start, len(alt_nest)))
        self.alt_nest = np.array(alt_nest, dtype=int)
        self.n_alternatives = len(alt_nest)
        self.n_nests = len(tree.nests)

    def check_params(self, params: ParameterSet):
        if params.tree is not self.tree and params.tree != self.tree:
            raise ModelSpecError("Parameter set was built for a different choice tree")

    @staticmethod
    def linear_index(x, columns, block) -> np.ndarray:
        # column-by-column accumulation keeps each row's result independent of the row count
        index = np.full(x.shape[0], float(block[0]))
        for j, col in enumerate(columns):
            index = index + x[:, col] * block[j + 1]
        return index

    def alternative_utilities(self, x, params: ParameterSet, c) -> np.ndarray:
        values = params.values
        v = np.empty((x.shape[0], self.n_alternatives))
        for m in range(self.n_alternatives):
            v[:, m] = self.linear_index(x, self.alt_columns[m], values[params.layout.alt_slices[(c, m)]])
        return v

    def nest_utilities(self, x, params: ParameterSet, c) -> np.ndarray:
        """
        Degenerate nests share their only alternative's utility, so their own nest utility is 0.
        """
        values = params.values
        w = np.zeros((x.shape[0], self.n_nests))
        for (cls, k), sl in params.layout.nest_slices.items():
            if cls == c:
                w[:, k] = self.linear_index(x, self.nest_columns[k], values[sl])
        return w

    def dissimilarities(self, params: ParameterSet) -> np.ndarray:
        return np.array([params.dissimilarity(k) for k in range(self.n_nests)])

    def nested_log_probabilities(self, v, w, lambdas) -> dict:
        """
        Within-nest, nest and joint log probabilities for one class.
        P(n) is proportional to exp(W_n + lambda_n * Gamma_n); Gamma_n = V_m exactly for degenerate nests.
        """
        n = v.shape[0]
        log_within = np.zeros_like(v)
        inclusive = np.empty((n, self.n_nests))
        exponent = np.empty((n, self.n_nests))
        for k, members in enumerate(self.nest_members):
            if members.size == 1:
                inclusive[:, k] = v[:, members[0]]
                exponent[:, k] = inclusive[:, k]
                continue
            scaled = v[:, members] / lambdas[k]
            gamma = logsumexp(scaled, axis=1)
            log_within[:, members] = scaled - gamma[:, None]
            inclusive[:, k] = gamma
            exponent[:, k] = w[:, k] + lambdas[k] * gamma
        log_nest = exponent - logsumexp(exponent, axis=1, keepdims=True)
        return {"log_within": log_within, "inclusive": inclusive, "log_nest": log_nest,
                "log_prob": log_within + log_nest[:, self.alt_nest]}

    def class_log_probabilities(self, x, params: ParameterSet, c) -> np.ndarray:
        parts = self.nested_log_probabilities(self.alternative_utilities(x, params, c),
                                              self.nest_utilities(x, params, c),
                                              self.dissimilarities(params))
        return parts["log_prob"]

    @staticmethod
    def log_membership(z1, theta) -> np.ndarray:
        """
        log H(c) for every row of z1 (intercept column first); theta has one row per class.
        """
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        index = np.zeros((z1.shape[0], theta.shape[0]))
        for j in range(z1.shape[1]):
            index = index + z1[:, j:j + 1] * theta[:, j]
        return index - logsumexp(index, axis=1, keepdims=True)

    def log_probabilities(self, x, z1, params: ParameterSet):
        """
        Returns (log H, per-class log P(m|c) stacked as (C, N, M), mixture log P(m)).
        """
        self.check_params(params)
        log_h = self.log_membership(z1, params.membership_matrix())
        log_pc = np.stack([self.class_log_probabilities(x, params, c) for c in range(params.n_classes)])
        mixture = logsumexp(log_h.T[:, :, None] + log_pc, axis=0)
        return log_h, log_pc, mixture

    def probabilities(self, x, z1, params: ParameterSet, membership=None) -> np.ndarray:
        """
        Mixture probabilities (N, M). `membership` overrides H with a fixed (N, C) or (C,) weight matrix.
        """
        log_h, log_pc, mixture = self.log_probabilities(x, z1, params)
        if membership is None:
            p = np.exp(mixture)
        else:
            weights = np.broadcast_to(np.asarray(membership, dtype=float), log_h.shape)
            p = np.einsum("nc,cnm->nm", weights, np.exp(log_pc))
        return p / p.sum(axis=1, keepdims=True)


@dataclass
class ProbabilityBundle:
    alternatives: list
    nests: list
    membership: np.ndarray      # (C,)   H(c)
    inclusive: np.ndarray       # (C, K) Gamma
    nest: np.ndarray            # (C, K) P(n|c)
    within: np.ndarray          # (C, M) P(m|n,c)
    by_class: np.ndarray        # (C, M) P(m|c)
    mixture: np.ndarray         # (M,)   P(m)

    def probability(self, alt_id) -> float:
        return float(self.mixture[self.alternatives.index(alt_id)])


def class_membership(z, theta) -> np.ndarray:
    """
    H(c) = exp(z theta_c) / sum_c' exp(z theta_c'); theta columns are intercept then predictors.
    z may include the leading 1 or omit it.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    if z.size == theta.shape[1] - 1:
        z = np.concatenate([[1.0], z])
    elif z.size != theta.shape[1]:
        raise DimensionError("z", theta.shape[1] - 1, z.size)
    if not np.all(np.isfinite(theta)):
        raise DimensionError("theta", "finite entries", "non-finite values")
    return softmax(theta @ z)


def alternative_utility(obs: Observation, alt, c, params: ParameterSet) -> float:
    alt_id = getattr(alt, "id", alt)
    alternative = params.tree.alternative(alt_id)
    if alternative.outside_option:
        return 0.0
    intercept, coefs = params.alternative_coefficients(c, alt_id)
    return float(intercept + sum(b * obs.covariate(name) for name, b in coefs.items()))


def inclusive_value(obs: Observation, nest, c, params: ParameterSet) -> float:
    nest = params.tree.nest(getattr(nest, "id", nest))
    k = params.tree.nests.index(nest)
    members = nest.alternatives
    v = np.array([alternative_utility(obs, alt, c, params) for alt in members])
    if v.size == 1:
        return float(v[0])
    return float(logsumexp(v / params.dissimilarity(k)))


def _observation_matrices(obs: Observation, params: ParameterSet):
    tree = params.tree
    x = np.array([[obs.covariate(name) for name in tree.covariates]]).reshape(1, -1)
    z1 = np.concatenate([[1.0], obs.predictor_vector(params.layout.class_predictors)])[None, :]
    return x, z1


def choice_probabilities(obs: Observation, params: ParameterSet, tree: ChoiceTree = None) -> ProbabilityBundle:
    tree = tree or params.tree
    model = ChoiceModel(tree)
    model.check_params(params)
    x, z1 = _observation_matrices(obs, params)
    log_h = model.log_membership(z1, params.membership_matrix())[0]
    lambdas = model.dissimilarities(params)
    inclusive, nest, within, by_class = [], [], [], []
    for c in range(params.n_classes):
        parts = model.nested_log_probabilities(model.alternative_utilities(x, params, c),
                                               model.nest_utilities(x, params, c), lambdas)
        inclusive.append(parts["inclusive"][0])
        nest.append(np.exp(parts["log_nest"][0]))
        within.append(np.exp(parts["log_within"][0]))
        by_class.append(np.exp(parts["log_prob"][0]))
    membership = np.exp(log_h)
    by_class = np.array(by_class)
    return ProbabilityBundle(alternatives=tree.alternative_ids, nests=[n.id for n in tree.nests],
                             membership=membership, inclusive=np.array(inclusive), nest=np.array(nest),
                             within=np.array(within), by_class=by_class, mixture=membership @ by_class)
