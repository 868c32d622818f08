import numpy as np
import pandas as pd
import pytest

from ab.lcnl.util.ChoiceTree import Alternative, ChoiceTree, Nest, build_canonical_tree
from ab.lcnl.util.Dataset import Dataset
from ab.lcnl.util.ParameterSet import ParameterLayout, ParameterSet
from ab.lcnl.util.Simulator import SimulationSpec, default_truth, simulate_dataset

SMALL_PREDICTORS = ["val_husband_decides", "val_dual_income", "village"]


def set_values(params: ParameterSet, **named) -> ParameterSet:
    """
    Copy of params with entries replaced by name; keyword keys use '__' for '.'.
    """
    values = params.values.copy()
    for key, value in named.items():
        values[params.layout.index(key.replace("__", "."))] = value
    return params.with_values(values)


def make_dataset(tree: ChoiceTree, n, seed=0, predictors=(), choices=None, binary=()) -> Dataset:
    rng = np.random.default_rng(seed)
    covariates = pd.DataFrame({name: (rng.random(n) < 0.5).astype(float) if name in binary else rng.normal(0, 1, n)
                               for name in tree.covariates}, columns=tree.covariates)
    z = pd.DataFrame({name: (rng.random(n) < 0.5).astype(float) for name in predictors},
                     columns=list(predictors), index=range(n))
    if choices is None:
        ids = tree.alternative_ids
        choices = [ids[i] for i in rng.integers(len(ids), size=n)]
    return Dataset([f"r{i:05d}" for i in range(n)], [f"c{i % 7}" for i in range(n)], choices, covariates, z)


@pytest.fixture
def canonical_tree():
    return build_canonical_tree()


@pytest.fixture
def flat_tree():
    return ChoiceTree((
        Nest("a", (Alternative("a", ("x1", "x2")),)),
        Nest("b", (Alternative("b", ("x1",)),)),
        Nest("out", (Alternative("out", (), outside_option=True),)),
    ))


@pytest.fixture
def binary_tree():
    return ChoiceTree((
        Nest("yes", (Alternative("yes", ("x",)),)),
        Nest("no", (Alternative("no", (), outside_option=True),)),
    ))


@pytest.fixture(scope="module")
def simulated_canonical():
    """
    (data, truth): 2-class canonical model with three class predictors, N=300.
    """
    layout = ParameterLayout(build_canonical_tree(), 2, SMALL_PREDICTORS)
    truth = default_truth(layout, seed=3)
    data = simulate_dataset(SimulationSpec(truth, n_individuals=300, n_communities=20, seed=7))
    return data, truth
