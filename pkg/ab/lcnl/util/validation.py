from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from ab.lcnl.util import likelihood
from ab.lcnl.util.ChoiceTree import ChoiceTree
from ab.lcnl.util.Dataset import Dataset, Observation
from ab.lcnl.util.ParameterSet import ParameterLayout, ParameterSet, fixed
from ab.lcnl.util.choice_model import alternative_utility, choice_probabilities
from ab.lcnl.util.effects import marginal_effects
from ab.lcnl.util.errors import LcnlError


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}" + (f": {self.detail}" if self.detail else "")


def _random_values(params: ParameterSet, rng, scale=2.0) -> ParameterSet:
    lower, upper = params.bounds(bound=3.0 * scale)
    draws = rng.normal(0.0, scale, params.layout.size)
    values = np.where(params.free_mask, np.clip(draws, lower, upper), params.values)
    return params.with_values(values)


def _random_observation(tree: ChoiceTree, predictors, rng, i) -> Observation:
    covariates = {name: float(rng.normal(0.0, 2.0)) for name in tree.covariates}
    z = {name: float(rng.integers(2)) for name in predictors}
    choice = tree.alternative_ids[int(rng.integers(len(tree.alternative_ids)))]
    return Observation(f"draw{i}", "c0", choice, covariates, z)


def check_probability_laws(params: ParameterSet, draws=200, seed=0, tol=1e-12) -> CheckResult:
    rng = np.random.Generator(np.random.PCG64(seed))
    worst = 0.0
    for i in range(draws):
        p = _random_values(params, rng)
        obs = _random_observation(p.tree, p.layout.class_predictors, rng, i)
        bundle = choice_probabilities(obs, p)
        gaps = [abs(bundle.mixture.sum() - 1.0), abs(bundle.membership.sum() - 1.0)]
        gaps += list(np.abs(bundle.nest.sum(axis=1) - 1.0))
        gaps += list(np.abs(bundle.by_class.sum(axis=1) - 1.0))
        for k, nest in enumerate(p.tree.nests):
            members = [p.tree.alternative_index(a.id) for a in nest.alternatives]
            gaps += list(np.abs(bundle.within[:, members].sum(axis=1) - 1.0))
        worst = max(worst, max(gaps))
    return CheckResult("probability simplex sums", worst <= tol, f"max deviation {worst:.3g} over {draws} draws")


def flat_mnl(obs: Observation, params: ParameterSet, c=0) -> np.ndarray:
    """
    Plain multinomial logit over the leaves of the tree, from the alternative utilities alone.
    """
    v = np.array([alternative_utility(obs, alt, c, params) for alt in params.tree.alternatives])
    e = np.exp(v - v.max())
    return e / e.sum()


def check_mnl_collapse(tree: ChoiceTree, draws=100, seed=0, tol=1e-10) -> CheckResult:
    layout = ParameterLayout(tree, 1, [])
    tags = layout.default_tags()
    tags = [fixed(0.0) if e.block == "nest" else t for t, e in zip(tags, layout.entries)]
    base = ParameterSet(layout, tags=tags)
    rng = np.random.Generator(np.random.PCG64(seed))
    worst = 0.0
    for i in range(draws):
        p = _random_values(base, rng)
        obs = _random_observation(tree, [], rng, i)
        worst = max(worst, float(np.max(np.abs(choice_probabilities(obs, p).mixture - flat_mnl(obs, p)))))
    return CheckResult("collapse to flat MNL", worst <= tol, f"max deviation {worst:.3g} over {draws} draws")


def check_effects_zero_sum(data: Dataset, params: ParameterSet, tol=1e-10) -> CheckResult:
    table = marginal_effects(data, params)
    sums = [table.row_sums().abs().max()]
    sums += [frame.sum(axis=1).abs().max() for frame in table.by_class.values()]
    base = abs(float(table.base.sum()) - 1.0)
    worst = float(max(sums))
    return CheckResult("zero-sum marginal effects", worst <= tol and base <= tol,
                       f"max row sum {worst:.3g}, base deviation {base:.3g}")


def check_gradient_halving(data: Dataset, params: ParameterSet, tol=1e-5, workers=1) -> CheckResult:
    drift = likelihood.gradient_drift(data, params, workers=workers)
    return CheckResult("gradient step-halving", drift < tol, f"relative drift {drift:.3g}")


def run_checks(data: Dataset, params: ParameterSet, draws=200, seed=0, workers=1, verbose=True) -> list:
    """
    Runs the invariant suite and prints one [PASS]/[FAIL] line per check.
    A dataset without observations fails explicitly instead of skipping the data checks.
    """
    checks = [lambda: check_probability_laws(params, draws, seed),
              lambda: check_mnl_collapse(params.tree, min(draws, 100), seed)]
    if data is None or len(data) == 0:
        checks.append(lambda: CheckResult("dataset", False, "no observations"))
    else:
        checks.append(lambda: check_effects_zero_sum(data, params))
        checks.append(lambda: check_gradient_halving(data, params, workers=workers))
    results = []
    for check in tqdm(checks, desc="Validation", disable=not verbose):
        try:
            result = check()
        except LcnlError as e:
            result = CheckResult(type(e).__name__, False, str(e))
        results.append(result)
        if verbose:
            print(result.line())
    return results
