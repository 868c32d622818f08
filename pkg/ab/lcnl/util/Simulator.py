from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import ndtri

from ab.lcnl.util.Dataset import Dataset
from ab.lcnl.util.ParameterSet import ParameterLayout, ParameterSet
from ab.lcnl.util.choice_model import ChoiceModel
from ab.lcnl.util.errors import ConfigError

COMMUNITY_LEVEL = ("aksakal", "police", "kalym")

# dummies are Bernoulli(p); income and kalym are positive (lognormal on the survey's scale)
DEFAULT_COVARIATES = {
    "aksakal": {"kind": "community_share"},
    "police": {"kind": "bernoulli", "p": 0.4},
    "kalym": {"kind": "lognormal", "mean": 3.0, "sigma": 0.4},
    "income": {"kind": "lognormal", "mean": 0.0, "sigma": 0.5},
    "second_home": {"kind": "bernoulli", "p": 0.15},
    "vehicle": {"kind": "bernoulli", "p": 0.4},
    "loan": {"kind": "bernoulli", "p": 0.3},
    "event_host": {"kind": "bernoulli", "p": 0.35},
    "employed": {"kind": "bernoulli", "p": 0.6},
}

SAMPLERS = ("probability", "gumbel")


@dataclass
class SimulationSpec:
    params: ParameterSet
    n_individuals: int = 5000
    n_communities: int = 111
    aksakal_share: float = 23 / 111
    covariates: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_COVARIATES.items()})
    predictor_p: dict = field(default_factory=dict)  # per class predictor, default 0.5
    seed: int = 0
    sampler: str = "probability"

    def validate(self):
        if int(self.n_individuals) <= 0:
            raise ConfigError(f"simulation.n_individuals must be > 0, got {self.n_individuals}")
        if int(self.n_communities) <= 0:
            raise ConfigError(f"simulation.n_communities must be > 0, got {self.n_communities}")
        if not 0.0 <= self.aksakal_share <= 1.0:
            raise ConfigError(f"simulation.aksakal_share must lie in [0, 1], got {self.aksakal_share}")
        for name, dist in self.covariates.items():
            if dist.get("kind") == "bernoulli" and not 0.0 <= dist.get("p", 0.5) <= 1.0:
                raise ConfigError(f"simulation covariate '{name}' has p={dist['p']} outside [0, 1]")
            if dist.get("kind") not in ("bernoulli", "lognormal", "normal", "community_share"):
                raise ConfigError(f"simulation covariate '{name}' has unknown kind {dist.get('kind')!r}")
        for name, p in self.predictor_p.items():
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"simulation predictor '{name}' has p={p} outside [0, 1]")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"simulation.sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        if self.sampler == "gumbel" and not all(n.degenerate for n in self.params.tree.nests):
            raise ConfigError("the gumbel sampler matches the model only when every nest is degenerate")
        return self

    @classmethod
    def from_dict(cls, section: dict, params: ParameterSet, seed=None) -> "SimulationSpec":
        section = dict(section or {})
        section.pop("truth", None)
        section.pop("truth_seed", None)
        covariates = {k: dict(v) for k, v in DEFAULT_COVARIATES.items()}
        for name, dist in (section.pop("covariates", None) or {}).items():
            covariates[name] = dict(dist)
        known = {"n_individuals", "n_communities", "aksakal_share", "predictor_p", "seed", "sampler"}
        unknown = set(section) - known
        if unknown:
            raise ConfigError(f"Unknown simulation settings: {sorted(unknown)}")
        if seed is not None:
            section["seed"] = seed
        return cls(params=params, covariates=covariates, **section).validate()


def _draw(rng, dist, size, name):
    kind = dist.get("kind")
    if kind == "bernoulli":
        return (rng.random(size) < dist.get("p", 0.5)).astype(float)
    if kind == "lognormal":
        return rng.lognormal(dist.get("mean", 0.0), dist.get("sigma", 1.0), size)
    if kind == "normal":
        return rng.normal(dist.get("mean", 0.0), dist.get("sigma", 1.0), size)
    raise ConfigError(f"covariate '{name}' cannot be drawn with kind {kind!r}")


def _from_uniform(u, dist, name):
    """
    Inverse-CDF draw of one covariate from a column of uniforms.
    """
    kind = dist.get("kind", "normal")
    if kind == "bernoulli":
        return (u < dist.get("p", 0.5)).astype(float)
    if kind in ("lognormal", "normal"):
        z = dist.get("mean", 0.0) + dist.get("sigma", 1.0) * ndtri(u)
        return np.exp(z) if kind == "lognormal" else z
    raise ConfigError(f"covariate '{name}' cannot be drawn with kind {kind!r}")


def individual_uniforms(seed, n, slots) -> np.ndarray:
    """
    (n, slots) uniforms in (0, 1). Row i is read from its own block of Philox counters, slots rounded
    up to a multiple of 4 words per row, so an individual's draws depend only on the seed and its index.
    """
    width = -(-slots // 4) * 4  # a Philox counter yields four 64-bit words
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed).spawn(2)[1]))
    u = rng.random((n, width))[:, :slots]
    return np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)


def simulate_dataset(spec: SimulationSpec, verbose=False) -> Dataset:
    """
    Draws communities, then individuals; each individual's latent class comes from H(c|z) and the
    choice from that class's model probabilities (or from Gumbel-max utilities for flat trees).
    The same seed always yields the same dataset, and individual i's row does not depend on n.
    """
    spec.validate()
    params = spec.params
    tree = params.tree
    model = ChoiceModel(tree)
    n, n_comm = int(spec.n_individuals), int(spec.n_communities)

    # community level, from its own stream
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(spec.seed).spawn(2)[0]))
    community_values = {}
    flagged = int(round(spec.aksakal_share * n_comm))
    aksakal = np.zeros(n_comm)
    aksakal[rng.permutation(n_comm)[:flagged]] = 1.0
    community_values["aksakal"] = aksakal
    for name in COMMUNITY_LEVEL[1:]:
        community_values[name] = _draw(rng, spec.covariates[name], n_comm, name)

    # individual level: one uniform per slot
    names = list(dict.fromkeys(list(spec.covariates) + list(model.covariates)))
    own = [name for name in names if name not in community_values]
    predictors = params.layout.class_predictors
    u = individual_uniforms(spec.seed, n, 3 + len(predictors) + len(own) + model.n_alternatives)
    u_community, u_class, u_choice = u[:, 0], u[:, 1], u[:, 2]
    u_predictors = u[:, 3:3 + len(predictors)]
    u_covariates = u[:, 3 + len(predictors):3 + len(predictors) + len(own)]
    u_shocks = u[:, 3 + len(predictors) + len(own):]

    community = np.minimum((u_community * n_comm).astype(int), n_comm - 1)
    covariates = {}
    for name in names:
        if name in community_values:
            covariates[name] = community_values[name][community]
            continue
        dist = spec.covariates.get(name)
        if dist is None or dist.get("kind") == "community_share":
            dist = {"kind": "normal"}
        covariates[name] = _from_uniform(u_covariates[:, own.index(name)], dist, name)
    covariates = pd.DataFrame(covariates, columns=names, index=range(n))

    z = pd.DataFrame({name: (u_predictors[:, j] < spec.predictor_p.get(name, 0.5)).astype(float)
                      for j, name in enumerate(predictors)}, columns=predictors, index=range(n))
    z1 = np.hstack([np.ones((n, 1)), z.to_numpy(dtype=float).reshape(n, len(predictors))])
    x = covariates[model.covariates].to_numpy(dtype=float)

    log_h, log_pc, _ = model.log_probabilities(x, z1, params)
    h = np.exp(log_h)
    latent = np.minimum((np.cumsum(h, axis=1) < u_class[:, None]).sum(axis=1), params.n_classes - 1)
    if spec.sampler == "gumbel":
        v = np.stack([model.alternative_utilities(x, params, c) for c in range(params.n_classes)])
        shocks = -np.log(-np.log(u_shocks))
        chosen = np.argmax(v[latent, np.arange(n)] + shocks, axis=1)
    else:
        p = np.exp(log_pc[latent, np.arange(n)])
        cdf = np.cumsum(p / p.sum(axis=1, keepdims=True), axis=1)
        chosen = np.minimum((cdf < u_choice[:, None]).sum(axis=1), model.n_alternatives - 1)

    alt_ids = np.array(tree.alternative_ids)
    width = len(str(n))
    ids = np.array([f"i{i:0{width}d}" for i in range(n)])
    communities = np.array([f"c{c:03d}" for c in community])
    provenance = {"source": "simulation", "seed": spec.seed, "sampler": spec.sampler, "rows_read": n,
                  "class_counts": np.bincount(latent, minlength=params.n_classes).tolist()}
    if verbose:
        shares = np.bincount(chosen, minlength=len(alt_ids)) / n
        print(f"[INFO] simulated {n} individuals in {n_comm} communities; shares "
              + ", ".join(f"{a}={s:.3f}" for a, s in zip(alt_ids, shares)))
    return Dataset(ids, communities, alt_ids[chosen], covariates, z, provenance)


def default_truth(layout: ParameterLayout, seed=0, scale=0.5, tags=None) -> ParameterSet:
    """
    Random generating parameters that satisfy their constraint tags: free entries ~ N(0, scale),
    sign-restricted entries take |N(0, scale)| with the required sign, free dissimilarities ~ U(0.5, 1).
    """
    tags = list(tags) if tags is not None else layout.default_tags()
    rng = np.random.Generator(np.random.Philox(seed))
    draws = rng.normal(0.0, scale, layout.size)
    values = np.empty(layout.size)
    for i, (tag, entry) in enumerate(zip(tags, layout.entries)):
        if tag.fixed:
            values[i] = tag.value
        elif entry.block == "dissimilarity":
            values[i] = 0.5 + 0.5 * rng.random()
        elif tag.kind == "nonneg":
            values[i] = abs(draws[i])
        elif tag.kind == "nonpos":
            values[i] = -abs(draws[i])
        else:
            values[i] = draws[i]
    return ParameterSet(layout, values, tags).check_tags()
