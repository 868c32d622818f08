from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ab.lcnl.util.ChoiceTree import ChoiceTree
from ab.lcnl.util.Dataset import Dataset
from ab.lcnl.util.ParameterSet import ParameterSet
from ab.lcnl.util.choice_model import ChoiceModel
from ab.lcnl.util.errors import EffectsError

BASE_ROW = "base_probability"
RELATIVE_STEP = 1e-5


@dataclass
class EffectsTable:
    """
    Averaged marginal effects: one row per covariate, one column per alternative, plus the
    averaged base probabilities. Per-class tables are keyed by 0-based class index.
    """
    effects: pd.DataFrame
    base: pd.Series
    kinds: dict
    by_class: dict = field(default_factory=dict)
    class_base: dict = field(default_factory=dict)
    class_shares: np.ndarray = None
    class_weighting: str = "uniform"

    @property
    def variables(self) -> list:
        return list(self.effects.index)

    @property
    def alternatives(self) -> list:
        return list(self.effects.columns)

    def with_base(self, c=None) -> pd.DataFrame:
        effects, base = (self.effects, self.base) if c is None else (self.by_class[c], self.class_base[c])
        return pd.concat([effects, base.to_frame().T.rename(index={base.name: BASE_ROW})])

    def row_sums(self) -> pd.Series:
        return self.effects.sum(axis=1)

    def mixture_from_classes(self) -> pd.DataFrame:
        """
        Class-share-weighted sum of the class tables; equals the mixture table under membership weighting.
        """
        return sum(self.class_shares[c] * self.by_class[c] for c in sorted(self.by_class))

    def to_frame(self) -> pd.DataFrame:
        """
        Long form: scope (mixture / class1 ...), variable, alternative, value.
        """
        blocks = [("mixture", self.with_base())]
        blocks += [(f"class{c + 1}", self.with_base(c)) for c in sorted(self.by_class)]
        rows = []
        for scope, table in blocks:
            for variable, row in table.iterrows():
                for alt, value in row.items():
                    rows.append({"scope": scope, "variable": variable, "alternative": alt, "value": float(value)})
        return pd.DataFrame(rows, columns=["scope", "variable", "alternative", "value"])


def _is_binary(values) -> bool:
    return values.size > 0 and bool(np.all((values == 0.0) | (values == 1.0)))


class _Evaluator:
    def __init__(self, data: Dataset, params: ParameterSet, tree: ChoiceTree = None):
        self.tree = tree or params.tree
        self.model = ChoiceModel(self.tree)
        self.model.check_params(params)
        self.params = params
        self.data = data
        self.x = data.design_matrix(self.model.covariates)
        self.z1 = data.predictor_matrix(params.layout.class_predictors)

    def probabilities(self, x):
        """
        (H (N, C), per-class P (C, N, M), mixture P (N, M)); each distribution renormalised.
        """
        log_h, log_pc, mixture = self.model.log_probabilities(x, self.z1, self.params)
        h = np.exp(log_h)
        pc = np.exp(log_pc)
        pc /= pc.sum(axis=2, keepdims=True)
        p = np.exp(mixture)
        p /= p.sum(axis=1, keepdims=True)
        return h / h.sum(axis=1, keepdims=True), pc, p

    def column(self, variable):
        if variable not in self.data.covariates.columns and variable not in self.model.covariates:
            raise EffectsError(f"Unknown variable '{variable}': not a covariate of the dataset or the model")
        if variable not in self.model.covariates:
            return None
        return self.model.covariates.index(variable)

    def kind(self, variable, binary_mode) -> str:
        j = self.column(variable)
        values = self.data.covariates[variable].to_numpy(dtype=float) if j is None else self.x[:, j]
        if _is_binary(values) and binary_mode == "discrete":
            return "binary"
        return "continuous"

    def per_observation(self, variable, binary_mode="discrete", relative_step=RELATIVE_STEP):
        """
        Per-observation effect on the mixture (N, M) and on every class (C, N, M).
        The covariate is moved in every utility and nest design vector that contains it.
        """
        j = self.column(variable)
        n, m = self.x.shape[0], self.model.n_alternatives
        c = self.params.n_classes
        if j is None:
            return np.zeros((n, m)), np.zeros((c, n, m))
        if self.kind(variable, binary_mode) == "binary":
            up, down = self.x.copy(), self.x.copy()
            up[:, j], down[:, j] = 1.0, 0.0
            width = np.ones(n)
        else:
            h = relative_step * np.maximum(1.0, np.abs(self.x[:, j]))
            up, down = self.x.copy(), self.x.copy()
            up[:, j] += h
            down[:, j] -= h
            width = 2.0 * h
        _, pc_up, p_up = self.probabilities(up)
        _, pc_down, p_down = self.probabilities(down)
        return (p_up - p_down) / width[:, None], (pc_up - pc_down) / width[None, :, None]


def _class_average(values, h, c, class_weighting):
    if class_weighting == "membership":
        weights = h[:, c]
        return weights @ values / weights.sum()
    return values.mean(axis=0)


def _check_weighting(class_weighting, binary_mode):
    if class_weighting not in ("uniform", "membership"):
        raise EffectsError(f"Unknown class weighting '{class_weighting}' (expected uniform or membership)")
    if binary_mode not in ("discrete", "derivative"):
        raise EffectsError(f"Unknown binary mode '{binary_mode}' (expected discrete or derivative)")


def marginal_effects(data: Dataset, params: ParameterSet, tree: ChoiceTree = None, variables=None,
                     binary_mode="discrete", per_class=True, class_weighting="uniform",
                     relative_step=RELATIVE_STEP) -> EffectsTable:
    """
    Average over observations of dP(m)/dx (continuous) or P(m|x=1) - P(m|x=0) (binary, discrete mode).
    Variables default to every utility covariate of the tree. Class tables force H to the class
    indicator; with class_weighting="membership" observations are weighted by H(c) instead of 1/N.
    """
    _check_weighting(class_weighting, binary_mode)
    if len(data) == 0:
        raise EffectsError("no observations to average over")
    evaluator = _Evaluator(data, params, tree)
    variables = list(variables) if variables is not None else list(evaluator.model.covariates)
    alternatives = evaluator.tree.alternative_ids
    h, pc, p = evaluator.probabilities(evaluator.x)
    n_classes = params.n_classes

    rows, class_rows, kinds = [], {c: [] for c in range(n_classes)}, {}
    for variable in variables:
        kinds[variable] = evaluator.kind(variable, binary_mode)
        mixture, by_class = evaluator.per_observation(variable, binary_mode, relative_step)
        rows.append(mixture.mean(axis=0))
        if per_class:
            for c in range(n_classes):
                class_rows[c].append(_class_average(by_class[c], h, c, class_weighting))

    def frame(values):
        return pd.DataFrame(np.array(values).reshape(len(variables), len(alternatives)),
                            index=variables, columns=alternatives)

    table = EffectsTable(effects=frame(rows), base=pd.Series(p.mean(axis=0), index=alternatives, name=BASE_ROW),
                         kinds=kinds, class_shares=h.mean(axis=0), class_weighting=class_weighting)
    if per_class:
        for c in range(n_classes):
            table.by_class[c] = frame(class_rows[c])
            table.class_base[c] = pd.Series(_class_average(pc[c], h, c, class_weighting),
                                            index=alternatives, name=BASE_ROW)
    return table


def class_conditional_effects(data: Dataset, params: ParameterSet, tree: ChoiceTree = None, variable=None,
                              c=0, binary_mode="discrete", class_weighting="uniform",
                              relative_step=RELATIVE_STEP) -> pd.Series:
    """
    Effect row of one variable with H fixed to the indicator of class c (0-based).
    """
    _check_weighting(class_weighting, binary_mode)
    if not 0 <= int(c) < params.n_classes:
        raise EffectsError(f"Class index {c} out of range for a {params.n_classes}-class model")
    if len(data) == 0:
        raise EffectsError("no observations to average over")
    evaluator = _Evaluator(data, params, tree)
    h, _, _ = evaluator.probabilities(evaluator.x)
    _, by_class = evaluator.per_observation(variable, binary_mode, relative_step)
    return pd.Series(_class_average(by_class[c], h, c, class_weighting), index=evaluator.tree.alternative_ids,
                     name=variable)


def relative_effect(effect, base) -> float:
    if not base > 0:
        raise EffectsError(f"Base probability must be > 0, got {base}")
    return float(effect) / float(base)
