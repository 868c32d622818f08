import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import pandas as pd
from scipy.optimize import minimize

from ab.lcnl.util.errors import ConfigError, ModelSpecError, NumericalError

CONVERGED = "converged"
EVAL_BUDGET = "eval_budget"
STALLED = "stalled"

# Corana step control: grow/shrink outside the [0.4, 0.6] acceptance band with gain c = 2
_STEP_GAIN = 2.0
_BAND = (0.4, 0.6)


@dataclass
class AnnealConfig:
    initial_temperature: float = None  # None: set from a pilot so that ~80% of worsening moves pass
    cooling: float = 0.85
    cycles: int = None  # N_T, None: max(100, 5 * n_free)
    step_cycles: int = 20  # N_S
    tolerance: float = 1e-8
    tolerance_window: int = 4
    require_chain_at_best: bool = True  # end-of-stage chain values must also sit within tolerance of the best
    max_evaluations: int = 2_000_000
    seed: int = 0
    bound: float = 50.0
    initial_step: float = 1.0
    adapt_steps: bool = True
    max_stages: int = 500
    pilot_proposals: int = 100
    pilot_acceptance: float = 0.8
    polish: bool = False
    polish_evaluations: int = 20_000
    verbose: bool = False

    def validate(self):
        if self.initial_temperature is not None and not self.initial_temperature > 0:
            raise ConfigError(f"anneal.initial_temperature must be > 0, got {self.initial_temperature}")
        if not 0.0 < self.cooling < 1.0:
            raise ConfigError(f"anneal.cooling must lie in (0, 1), got {self.cooling}")
        for name in ("step_cycles", "tolerance_window", "max_evaluations", "max_stages", "pilot_proposals"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"anneal.{name} must be >= 1, got {getattr(self, name)}")
        if self.cycles is not None and int(self.cycles) < 1:
            raise ConfigError(f"anneal.cycles must be >= 1, got {self.cycles}")
        for name in ("tolerance", "bound", "initial_step"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"anneal.{name} must be > 0, got {getattr(self, name)}")
        if not 0.0 < self.pilot_acceptance < 1.0:
            raise ConfigError(f"anneal.pilot_acceptance must lie in (0, 1), got {self.pilot_acceptance}")
        return self

    def cycles_for(self, n_free) -> int:
        return int(self.cycles) if self.cycles is not None else max(100, 5 * n_free)

    @classmethod
    def from_dict(cls, section: dict) -> "AnnealConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(section or {}) - known
        if unknown:
            raise ConfigError(f"Unknown anneal settings: {sorted(unknown)}")
        return cls(**(section or {})).validate()

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AnnealTrace:
    records: list = field(default_factory=list)
    status: str = None
    evaluations: int = 0
    rejected_nonfinite: int = 0
    initial_temperature: float = None
    best_value: float = None

    COLUMNS = ("stage", "T", "bestLL", "acceptRate", "evals", "stepNorm", "nonFinite", "currentLL")

    def add(self, **record):
        self.records.append(record)

    @property
    def best_values(self) -> list:
        return [r["bestLL"] for r in self.records]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records, columns=list(self.COLUMNS))

    def write_tsv(self, path):
        self.to_frame().to_csv(path, sep="\t", index=False, float_format="%.17g")

    def summary(self) -> dict:
        return {"status": self.status, "evaluations": self.evaluations, "stages": len(self.records),
                "rejected_nonfinite": self.rejected_nonfinite, "initial_temperature": self.initial_temperature,
                "best_value": self.best_value}


def bounds_from_tags(tags, bound=50.0):
    pairs = [tag.bounds(bound) for tag in tags]
    return np.array([p[0] for p in pairs], dtype=float), np.array([p[1] for p in pairs], dtype=float)


class Annealer:
    """
    Corana-style simulated annealing for maximisation within a box.
    One stage runs N_T step adjustments, each after N_S sweeps over all coordinates; after every
    stage the temperature is cooled by r_T and the chain restarts from the best point seen.
    """

    def __init__(self, objective, lower, upper, config: AnnealConfig = None):
        self.objective = objective
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape or np.any(self.lower > self.upper):
            raise ModelSpecError("Annealing bounds are inconsistent")
        self.config = (config or AnnealConfig()).validate()
        self.rng = np.random.Generator(np.random.PCG64(self.config.seed))
        self.evaluations = 0
        self.rejected_nonfinite = 0

    def _evaluate(self, x) -> float:
        self.evaluations += 1
        value = float(self.objective(x))
        if not math.isfinite(value):
            self.rejected_nonfinite += 1
            return None
        return value

    def _propose(self, x, i, step):
        candidate = x.copy()
        candidate[i] = min(max(x[i] + self.rng.uniform(-1.0, 1.0) * step[i], self.lower[i]), self.upper[i])
        return candidate

    def _pilot_temperature(self, x, f, step) -> float:
        worse = []
        for _ in range(self.config.pilot_proposals):
            i = int(self.rng.integers(len(x)))
            value = self._evaluate(self._propose(x, i, step))
            if value is not None and value < f:
                worse.append(f - value)
        if not worse:
            return 1.0
        return float(np.mean(worse)) / -math.log(self.config.pilot_acceptance)

    def _adjust(self, step, accepted, width):
        ratio = accepted / self.config.step_cycles
        low, high = _BAND
        grow = ratio > high
        shrink = ratio < low
        step = np.where(grow, step * (1.0 + _STEP_GAIN * (ratio - high) / low), step)
        step = np.where(shrink, step / (1.0 + _STEP_GAIN * (low - ratio) / low), step)
        return np.minimum(step, width)

    def _out_of_budget(self) -> bool:
        return self.evaluations >= self.config.max_evaluations

    def run(self, start):
        cfg = self.config
        x = np.asarray(start, dtype=float).copy()
        if x.shape != self.lower.shape:
            raise ModelSpecError(f"Start vector has shape {x.shape}, bounds have {self.lower.shape}")
        if np.any(x < self.lower) or np.any(x > self.upper):
            raise ModelSpecError("Start vector lies outside the annealing bounds")
        trace = AnnealTrace()
        f = self._evaluate(x)
        if f is None:
            raise NumericalError("Objective is not finite at the starting point")
        n = len(x)
        width = self.upper - self.lower
        step = np.minimum(np.full(n, cfg.initial_step), width)
        best_x, best_f = x.copy(), f
        if n == 0:
            trace.status, trace.evaluations, trace.best_value = CONVERGED, self.evaluations, f
            return best_x, trace

        T = cfg.initial_temperature
        if T is None:
            T = self._pilot_temperature(x, f, step)
        trace.initial_temperature = T
        n_cycles = cfg.cycles_for(n)
        status = None
        stage = 0
        while status is None:
            proposed = accepted_total = 0
            for _ in range(n_cycles):
                accepted = np.zeros(n)
                for _ in range(cfg.step_cycles):
                    for i in range(n):
                        if self._out_of_budget():
                            status = EVAL_BUDGET
                            break
                        candidate = self._propose(x, i, step)
                        value = self._evaluate(candidate)
                        proposed += 1
                        if value is None:
                            continue
                        delta = value - f
                        if delta >= 0.0 or self.rng.random() < math.exp(delta / T):
                            x, f = candidate, value
                            accepted[i] += 1
                            accepted_total += 1
                            if f > best_f:
                                best_x, best_f = x.copy(), f
                    if status:
                        break
                if status:
                    break
                if cfg.adapt_steps:
                    step = self._adjust(step, accepted, width)

            stage += 1
            trace.add(stage=stage, T=T, bestLL=best_f, acceptRate=accepted_total / max(proposed, 1),
                      evals=self.evaluations, stepNorm=float(np.linalg.norm(step)),
                      nonFinite=self.rejected_nonfinite, currentLL=f)
            if cfg.verbose:
                print(f"[INFO] stage {stage}: T={T:.4g} best={best_f:.10g} "
                      f"accept={accepted_total / max(proposed, 1):.3f} evals={self.evaluations}")
            if status:
                break
            history = trace.best_values
            window = trace.records[-cfg.tolerance_window:]
            if len(history) > cfg.tolerance_window and all(
                    abs(history[-1] - history[-1 - j]) < cfg.tolerance for j in range(1, cfg.tolerance_window + 1)) \
                    and (not cfg.require_chain_at_best
                         or all(best_f - r["currentLL"] < cfg.tolerance for r in window)):
                status = CONVERGED
            elif stage >= cfg.max_stages:
                status = STALLED
            T *= cfg.cooling
            x, f = best_x.copy(), best_f

        trace.status = status
        trace.evaluations = self.evaluations
        trace.rejected_nonfinite = self.rejected_nonfinite
        trace.best_value = best_f
        if cfg.verbose and status != CONVERGED:
            print(f"[WARN] annealing stopped without converging: {status}")
        return best_x, trace


def anneal(objective, start, config: AnnealConfig = None, lower=None, upper=None, tags=None):
    """
    Maximise objective from start. Bounds come from (lower, upper) or from constraint tags.
    Returns (best point, AnnealTrace); polishes the point when config.polish is set.
    """
    config = config or AnnealConfig()
    if lower is None or upper is None:
        if tags is None:
            n = len(np.atleast_1d(start))
            tags_lower, tags_upper = np.full(n, -config.bound), np.full(n, config.bound)
        else:
            tags_lower, tags_upper = bounds_from_tags(tags, config.bound)
        lower = tags_lower if lower is None else lower
        upper = tags_upper if upper is None else upper
    annealer = Annealer(objective, lower, upper, config)
    best, trace = annealer.run(start)
    if config.polish:
        best = polish(objective, best, config, lower, upper)
        trace.best_value = max(trace.best_value, float(objective(best)))
    return best, trace


def polish(objective, start, config: AnnealConfig = None, lower=None, upper=None):
    """
    Bounded Nelder-Mead from start. The input point is returned unless the simplex found a strictly better one.
    """
    config = config or AnnealConfig()
    start = np.asarray(start, dtype=float)
    lower = np.full(start.shape, -config.bound) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(start.shape, config.bound) if upper is None else np.asarray(upper, dtype=float)
    if start.size == 0:
        return start.copy()

    def loss(x):
        value = float(objective(np.clip(x, lower, upper)))
        return -value if math.isfinite(value) else np.inf

    result = minimize(loss, start, method="Nelder-Mead", bounds=list(zip(lower, upper)),
                      options={"xatol": 1e-12, "fatol": 1e-14, "maxfev": config.polish_evaluations,
                               "adaptive": start.size > 2})
    candidate = np.clip(result.x, lower, upper)
    if loss(candidate) < loss(start):
        return candidate
    return start.copy()


def anneal_parameters(objective, params, config: AnnealConfig = None):
    """
    Anneal a LikelihoodObjective over the free coordinates of a ParameterSet.
    Returns (ParameterSet at the best point, AnnealTrace).
    """
    config = config or AnnealConfig()
    mask = params.free_mask
    lower, upper = params.bounds(config.bound)
    best, trace = anneal(objective.free, params.free_values(), config, lower[mask], upper[mask])
    return params.with_free(best).check_tags(), trace
