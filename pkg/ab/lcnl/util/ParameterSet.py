from dataclasses import dataclass

import numpy as np
import pandas as pd

from ab.lcnl.util.ChoiceTree import ChoiceTree
from ab.lcnl.util.coders.ClassPredictorCoder import EGALITARIAN, PATRIARCHAL
from ab.lcnl.util.errors import DimensionError, ModelSpecError

INTERCEPT = "intercept"
DISSIMILARITY_RANGE = (0.05, 1.0)


@dataclass(frozen=True)
class ConstraintTag:
    kind: str = "free"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("free", "nonneg", "nonpos", "fixed"):
            raise ModelSpecError(f"Unknown constraint tag '{self.kind}'")

    @classmethod
    def parse(cls, text: str) -> "ConstraintTag":
        text = str(text).strip()
        if text.startswith("fixed"):
            inner = text[len("fixed"):].strip("() ")
            return cls("fixed", float(inner) if inner else 0.0)
        return cls(text)

    @property
    def fixed(self) -> bool:
        return self.kind == "fixed"

    def bounds(self, bound: float):
        if self.kind == "fixed":
            return self.value, self.value
        if self.kind == "nonneg":
            return 0.0, bound
        if self.kind == "nonpos":
            return -bound, 0.0
        return -bound, bound

    def satisfied(self, x: float) -> bool:
        if self.kind == "fixed":
            return x == self.value
        if self.kind == "nonneg":
            return x >= 0.0
        if self.kind == "nonpos":
            return x <= 0.0
        return True

    def __str__(self):
        return f"fixed({self.value!r})" if self.kind == "fixed" else self.kind


FREE = ConstraintTag("free")
NONNEG = ConstraintTag("nonneg")
NONPOS = ConstraintTag("nonpos")


def fixed(value=0.0) -> ConstraintTag:
    return ConstraintTag("fixed", float(value))


@dataclass(frozen=True)
class ParameterEntry:
    name: str
    block: str  # nest | alternative | membership | dissimilarity
    owner: str
    cls: int
    column: str


class ParameterLayout:
    """
    Canonical packing of every model coefficient into one flat vector:
    per class the non-degenerate nests then the alternatives (tree order), then the
    class-membership rows, then the per-nest dissimilarity scalars.
    """

    def __init__(self, tree: ChoiceTree, n_classes: int, class_predictors, free_dissimilarity=False):
        if n_classes < 1:
            raise ModelSpecError(f"Class count must be >= 1, got {n_classes}")
        self.tree = tree
        self.n_classes = int(n_classes)
        self.class_predictors = list(class_predictors)
        self.membership_columns = [INTERCEPT] + self.class_predictors
        self.free_dissimilarity = free_dissimilarity
        self.entries = []
        self.nest_slices = {}
        self.alt_slices = {}
        self.class_slices = {}
        self.membership_slices = {}
        self.dissimilarity_index = {}

        for c in range(self.n_classes):
            start = len(self.entries)
            for k, nest in enumerate(tree.nests):
                if nest.degenerate:
                    continue
                self.nest_slices[(c, k)] = self._add("nest", nest.id, c, [INTERCEPT] + list(nest.covariates))
            for m, alt in enumerate(tree.alternatives):
                self.alt_slices[(c, m)] = self._add("alternative", alt.id, c, [INTERCEPT] + list(alt.covariates))
            self.class_slices[c] = slice(start, len(self.entries))
        for c in range(self.n_classes):
            self.membership_slices[c] = self._add("membership", "class", c, self.membership_columns)
        for k, nest in enumerate(tree.nests):
            if not nest.degenerate:
                self.dissimilarity_index[k] = self._add("dissimilarity", nest.id, -1, ["lambda"]).start
        self.size = len(self.entries)
        self.names = [e.name for e in self.entries]
        outside = tree.outside_option
        self.outside_indices = [i for i, e in enumerate(self.entries)
                                if e.block == "alternative" and outside is not None and e.owner == outside.id]
        self._by_name = {name: i for i, name in enumerate(self.names)}

    def _add(self, block, owner, cls, columns) -> slice:
        start = len(self.entries)
        for col in columns:
            self.entries.append(ParameterEntry(_entry_name(block, owner, cls, col), block, owner, cls, col))
        return slice(start, len(self.entries))

    def index(self, name) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise ModelSpecError(f"Unknown parameter '{name}'") from None

    def default_tags(self, sign_restrictions=True, normalize_membership=True, overrides=None) -> list:
        tags = [FREE] * self.size
        for i in self.outside_indices:
            tags[i] = fixed(0.0)
        for i, e in enumerate(self.entries):
            if e.block == "dissimilarity":
                tags[i] = NONNEG if self.free_dissimilarity else fixed(1.0)
            elif e.block == "membership":
                # a single class has H = 1 whatever its row holds
                if self.n_classes == 1 or (normalize_membership and e.cls == self.n_classes - 1):
                    tags[i] = fixed(0.0)
                elif sign_restrictions and e.cls in (0, 1) and self.n_classes > 1:
                    traditional = e.cls == 0
                    if e.column in PATRIARCHAL:
                        tags[i] = NONNEG if traditional else NONPOS
                    elif e.column in EGALITARIAN:
                        tags[i] = NONPOS if traditional else NONNEG
        for name, tag in (overrides or {}).items():
            if self.index(name) in self.outside_indices:
                raise ModelSpecError(f"Parameter '{name}' belongs to the outside option, whose utility is fixed at 0")
            tags[self.index(name)] = tag if isinstance(tag, ConstraintTag) else ConstraintTag.parse(tag)
        return tags

    def pack(self, nested: dict) -> np.ndarray:
        values = np.zeros(self.size)
        for i, e in enumerate(self.entries):
            if e.block == "nest":
                values[i] = nested["classes"][e.cls]["nests"][e.owner][e.column]
            elif e.block == "alternative":
                values[i] = nested["classes"][e.cls]["alternatives"][e.owner][e.column]
            elif e.block == "membership":
                values[i] = nested["membership"][e.cls][e.column]
            else:
                values[i] = nested["dissimilarity"][e.owner]
        return values

    def unpack(self, values) -> dict:
        values = self.check_vector(values)
        nested = {"classes": [{"nests": {}, "alternatives": {}} for _ in range(self.n_classes)],
                  "membership": [{} for _ in range(self.n_classes)],
                  "dissimilarity": {}}
        for v, e in zip(values, self.entries):
            if e.block == "nest":
                nested["classes"][e.cls]["nests"].setdefault(e.owner, {})[e.column] = float(v)
            elif e.block == "alternative":
                nested["classes"][e.cls]["alternatives"].setdefault(e.owner, {})[e.column] = float(v)
            elif e.block == "membership":
                nested["membership"][e.cls][e.column] = float(v)
            else:
                nested["dissimilarity"][e.owner] = float(v)
        return nested

    def check_vector(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.size,):
            raise DimensionError("parameter vector", self.size, values.shape)
        return values


def _entry_name(block, owner, cls, column) -> str:
    if block == "nest":
        return f"class{cls + 1}.nest:{owner}.{column}"
    if block == "alternative":
        return f"class{cls + 1}.{owner}.{column}"
    if block == "membership":
        return f"membership.class{cls + 1}.{column}"
    return f"dissimilarity.{owner}"


class ParameterSet:
    """
    Flat parameter vector with its packing map (the layout) and per-entry constraint tags.
    Instances are treated as immutable; the with_* methods return new sets.
    """

    def __init__(self, layout: ParameterLayout, values=None, tags=None):
        self.layout = layout
        self.tags = list(tags) if tags is not None else layout.default_tags()
        if len(self.tags) != layout.size:
            raise DimensionError("constraint tags", layout.size, len(self.tags))
        if values is None:
            # free dissimilarities start at the nested-logit upper bound of 1
            values = np.array([t.value if t.fixed else (1.0 if e.block == "dissimilarity" else 0.0)
                               for t, e in zip(self.tags, layout.entries)])
        self.values = layout.check_vector(values).copy()
        self.values.setflags(write=False)
        for i in layout.outside_indices:
            if self.tags[i] != fixed(0.0) or self.values[i] != 0.0:
                raise ModelSpecError(f"Outside-option parameter '{layout.names[i]}' must stay fixed at 0, "
                                     f"got {self.values[i]!r} tagged {self.tags[i]}")

    @property
    def tree(self) -> ChoiceTree:
        return self.layout.tree

    @property
    def n_classes(self) -> int:
        return self.layout.n_classes

    @property
    def free_mask(self) -> np.ndarray:
        return np.array([not t.fixed for t in self.tags])

    @property
    def n_free(self) -> int:
        return int(self.free_mask.sum())

    @property
    def free_names(self) -> list:
        return [n for n, free in zip(self.layout.names, self.free_mask) if free]

    def free_values(self) -> np.ndarray:
        return self.values[self.free_mask]

    def with_values(self, values) -> "ParameterSet":
        return ParameterSet(self.layout, values, self.tags)

    def with_free(self, free_values) -> "ParameterSet":
        mask = self.free_mask
        free_values = np.asarray(free_values, dtype=float)
        if free_values.shape != (mask.sum(),):
            raise DimensionError("free parameter vector", int(mask.sum()), free_values.shape)
        values = self.values.copy()
        values[mask] = free_values
        return ParameterSet(self.layout, values, self.tags)

    def with_tags(self, tags) -> "ParameterSet":
        return ParameterSet(self.layout, self.values, tags)

    def bounds(self, bound=50.0):
        lower, upper = np.empty(self.layout.size), np.empty(self.layout.size)
        for i, (tag, e) in enumerate(zip(self.tags, self.layout.entries)):
            lower[i], upper[i] = tag.bounds(bound)
            if e.block == "dissimilarity" and not tag.fixed:
                lower[i], upper[i] = DISSIMILARITY_RANGE
        return lower, upper

    def check_tags(self):
        for name, tag, v in zip(self.layout.names, self.tags, self.values):
            if not np.isfinite(v):
                raise ModelSpecError(f"Parameter '{name}' is not finite ({v})")
            if not tag.satisfied(v):
                raise ModelSpecError(f"Parameter '{name}' = {v!r} violates its constraint {tag}")
        return self

    def alternative_coefficients(self, c, alt_id):
        m = self.tree.alternative_index(alt_id)
        block = self.values[self.layout.alt_slices[(c, m)]]
        return block[0], dict(zip(self.tree.alternatives[m].covariates, block[1:]))

    def membership_matrix(self) -> np.ndarray:
        return np.vstack([self.values[self.layout.membership_slices[c]] for c in range(self.n_classes)])

    def dissimilarity(self, k) -> float:
        idx = self.layout.dissimilarity_index.get(k)
        return 1.0 if idx is None else float(self.values[idx])

    def to_frame(self) -> pd.DataFrame:
        rows = [{"name": e.name, "class": e.cls + 1 if e.cls >= 0 else 0, "block": e.block,
                 "owner": e.owner, "column": e.column, "value": float(v), "tag": str(t)}
                for e, v, t in zip(self.layout.entries, self.values, self.tags)]
        return pd.DataFrame(rows, columns=["name", "class", "block", "owner", "column", "value", "tag"])

    @classmethod
    def from_frame(cls, layout: ParameterLayout, frame: pd.DataFrame) -> "ParameterSet":
        missing = set(layout.names) - set(frame["name"])
        if missing:
            raise ModelSpecError(f"Parameter table lacks entries: {sorted(missing)[:5]}")
        by_name = frame.set_index("name")
        values = np.array([float(by_name.at[n, "value"]) for n in layout.names])
        if "tag" in by_name.columns:
            tags = [ConstraintTag.parse(by_name.at[n, "tag"]) for n in layout.names]
        else:
            tags = layout.default_tags()
        return cls(layout, values, tags).check_tags()

    def __eq__(self, other):
        return (isinstance(other, ParameterSet) and self.layout.names == other.layout.names
                and np.array_equal(self.values, other.values) and self.tags == other.tags)
