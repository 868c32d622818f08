# conf/config.py

import copy
import json
import os

from dotenv import load_dotenv

from ab.lcnl.util.Annealer import AnnealConfig
from ab.lcnl.util.ChoiceTree import tree_from_dict
from ab.lcnl.util.ParameterSet import ConstraintTag, ParameterLayout
from ab.lcnl.util.coders.ClassPredictorCoder import CLASS_PREDICTORS
from ab.lcnl.util.errors import ConfigError, LcnlError

# Base directories
BASE_DIR = os.path.dirname(os.path.abspath(__file__))

DEFAULT_CONFIG_PATH = os.path.join(BASE_DIR, "config.json")
SCHEMA_PATH = os.path.join(BASE_DIR, "schema.json")
DEFAULT_OUTPUT_DIR = "lcnl_output"

load_dotenv()
ENV_OUTPUT_DIR = os.getenv("LCNL_OUTPUT_DIR")
ENV_THREADS = os.getenv("LCNL_THREADS")

SECTIONS = ("model", "anneal", "inference", "effects", "data", "tabulate", "validate")
TOP_LEVEL = ("output_dir", "seed", "threads") + SECTIONS


def deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict) and key != "constraints":
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def default_config() -> dict:
    with open(DEFAULT_CONFIG_PATH, encoding="utf-8") as f:
        return json.load(f)


class RunConfig:
    """
    Run configuration: the user's JSON file deep-merged over conf/config.json.
    Relative paths inside the file resolve against the file's directory.
    """

    def __init__(self, raw: dict, path=None):
        self.raw = raw
        self.path = path
        self.base_dir = os.path.dirname(os.path.abspath(path)) if path else os.getcwd()

    def __getitem__(self, section):
        return self.raw[section]

    @property
    def model(self) -> dict:
        return self.raw["model"]

    @property
    def data(self) -> dict:
        return self.raw["data"]

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed") or 0)

    @property
    def output_dir(self) -> str:
        out = self.raw.get("output_dir") or ENV_OUTPUT_DIR or DEFAULT_OUTPUT_DIR
        return self.resolve(out)

    @property
    def threads(self) -> int:
        threads = self.raw.get("threads") or ENV_THREADS or os.cpu_count() or 1
        return max(1, int(threads))

    def resolve(self, path):
        if path is None:
            return None
        return path if os.path.isabs(path) else os.path.normpath(os.path.join(self.base_dir, path))

    def tree(self):
        return tree_from_dict(self.model.get("tree", "canonical"))

    def class_predictors(self) -> list:
        predictors = self.model.get("class_predictors", "survey")
        return list(CLASS_PREDICTORS) if predictors == "survey" else list(predictors)

    def layout(self) -> ParameterLayout:
        return ParameterLayout(self.tree(), int(self.model["n_classes"]), self.class_predictors(),
                               free_dissimilarity=self.model.get("dissimilarity", "fixed") == "free")

    def tags(self, layout: ParameterLayout = None) -> list:
        layout = layout or self.layout()
        overrides = {name: ConstraintTag.parse(tag) for name, tag in (self.model.get("constraints") or {}).items()}
        return layout.default_tags(sign_restrictions=bool(self.model.get("sign_restrictions", True)),
                                   normalize_membership=bool(self.model.get("normalize_membership", True)),
                                   overrides=overrides)

    def anneal_config(self) -> AnnealConfig:
        section = dict(self.raw["anneal"])
        if section.get("seed") is None:
            section["seed"] = self.seed
        return AnnealConfig.from_dict(section)

    def data_source(self) -> str:
        has_file = bool(self.data.get("path"))
        has_sim = self.data.get("simulation") is not None
        if has_file and has_sim:
            raise ConfigError("data: give either 'path' or 'simulation', not both")
        if not has_file and not has_sim:
            raise ConfigError("data: one data source ('path' or 'simulation') is required")
        return "file" if has_file else "simulation"

    def validate(self, needs_data=True) -> "RunConfig":
        unknown = set(self.raw) - set(TOP_LEVEL)
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
        try:
            n_classes = int(self.model.get("n_classes", 0))
        except (TypeError, ValueError):
            raise ConfigError(f"model.n_classes must be an integer, got {self.model.get('n_classes')!r}") from None
        if n_classes < 1:
            raise ConfigError(f"model.n_classes must be >= 1, got {n_classes}")
        if self.model.get("dissimilarity", "fixed") not in ("fixed", "free"):
            raise ConfigError(f"model.dissimilarity must be 'fixed' or 'free', got {self.model.get('dissimilarity')!r}")
        try:
            layout = self.layout()
            self.tags(layout)
        except ConfigError:
            raise
        except (LcnlError, KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"model section does not resolve: {e}") from e
        self.anneal_config()
        inference = self.raw["inference"]
        if not float(inference.get("ridge_cap", 1e-2)) > 0:
            raise ConfigError("inference.ridge_cap must be > 0")
        effects = self.raw["effects"]
        if effects.get("binary_mode") not in ("discrete", "derivative"):
            raise ConfigError(f"effects.binary_mode must be 'discrete' or 'derivative', got {effects.get('binary_mode')!r}")
        if effects.get("class_weighting") not in ("uniform", "membership"):
            raise ConfigError(f"effects.class_weighting must be 'uniform' or 'membership', "
                              f"got {effects.get('class_weighting')!r}")
        if needs_data:
            self.data_source()
        if self.raw.get("threads") is not None and int(self.raw["threads"]) < 1:
            raise ConfigError(f"threads must be >= 1, got {self.raw['threads']}")
        return self

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=False)


def load_config(path=None, overrides=None) -> RunConfig:
    """
    Reads the user config (if any), merges it over the defaults and applies command-line overrides.
    """
    user = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"Config file not found: {path}")
        try:
            with open(path, encoding="utf-8") as f:
                user = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
        if not isinstance(user, dict):
            raise ConfigError(f"Config file {path} must hold a JSON object")
    raw = deep_merge(default_config(), user)
    raw = deep_merge(raw, {k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(raw, path)
