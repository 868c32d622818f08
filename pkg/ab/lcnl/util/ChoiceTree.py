from dataclasses import dataclass, field

from ab.lcnl.util.errors import ModelSpecError, UnknownAlternativeError

CANONICAL_COVARIATES = ["aksakal", "police", "kalym", "income", "second_home",
                        "vehicle", "loan", "event_host", "employed"]


@dataclass(frozen=True)
class Alternative:
    id: str
    covariates: tuple = ()
    outside_option: bool = False


@dataclass(frozen=True)
class Nest:
    id: str
    alternatives: tuple
    covariates: tuple = ()

    @property
    def degenerate(self) -> bool:
        return len(self.alternatives) == 1


@dataclass(frozen=True)
class ChoiceTree:
    """
    Two-level choice structure: ordered nests, each holding an ordered list of alternatives.
    Degenerate (single-member) nests carry no covariates of their own.
    """
    nests: tuple
    _alt_index: dict = field(init=False, repr=False, compare=False)
    _nest_of: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nests", tuple(self.nests))
        self.validate()
        alt_index, nest_of = {}, {}
        for k, nest in enumerate(self.nests):
            for alt in nest.alternatives:
                alt_index[alt.id] = len(alt_index)
                nest_of[alt.id] = k
        object.__setattr__(self, "_alt_index", alt_index)
        object.__setattr__(self, "_nest_of", nest_of)

    def validate(self):
        if not self.nests:
            raise ModelSpecError("Choice tree has no nests")
        nest_ids, alt_ids = set(), set()
        outside = []
        for nest in self.nests:
            if nest.id in nest_ids:
                raise ModelSpecError(f"Duplicate nest id '{nest.id}'")
            nest_ids.add(nest.id)
            if len(nest.alternatives) == 0:
                raise ModelSpecError(f"Nest '{nest.id}' has no alternatives")
            if nest.degenerate and nest.covariates:
                raise ModelSpecError(f"Degenerate nest '{nest.id}' cannot carry its own covariates")
            for alt in nest.alternatives:
                if alt.id in alt_ids:
                    raise ModelSpecError(f"Duplicate alternative id '{alt.id}'")
                alt_ids.add(alt.id)
                if len(set(alt.covariates)) != len(alt.covariates):
                    raise ModelSpecError(f"Alternative '{alt.id}' lists a covariate twice")
                if alt.outside_option:
                    outside.append(alt)
                    if not nest.degenerate:
                        raise ModelSpecError(f"Outside option '{alt.id}' must sit in a degenerate nest")
                    if alt.covariates:
                        raise ModelSpecError(f"Outside option '{alt.id}' must have an empty covariate list")
        if len(outside) > 1:
            raise ModelSpecError(f"At most one outside option allowed, got {[a.id for a in outside]}")

    @property
    def alternatives(self) -> list:
        return [alt for nest in self.nests for alt in nest.alternatives]

    @property
    def alternative_ids(self) -> list:
        return [alt.id for alt in self.alternatives]

    @property
    def outside_option(self):
        for alt in self.alternatives:
            if alt.outside_option:
                return alt
        return None

    @property
    def covariates(self) -> list:
        """
        Union of every covariate named by a nest or an alternative, in order of first appearance.
        """
        names = []
        for nest in self.nests:
            for name in list(nest.covariates) + [c for alt in nest.alternatives for c in alt.covariates]:
                if name not in names:
                    names.append(name)
        return names

    def alternative_index(self, alt_id, individual_id=None) -> int:
        try:
            return self._alt_index[alt_id]
        except KeyError:
            raise UnknownAlternativeError(alt_id, individual_id) from None

    def alternative(self, alt_id) -> Alternative:
        return self.alternatives[self.alternative_index(alt_id)]

    def nest_index_of(self, alt_id) -> int:
        self.alternative_index(alt_id)
        return self._nest_of[alt_id]

    def nest(self, nest_id) -> Nest:
        for nest in self.nests:
            if nest.id == nest_id:
                return nest
        raise ModelSpecError(f"Unknown nest '{nest_id}'")

    def to_dict(self) -> dict:
        return {"nests": [
            {"id": n.id,
             "covariates": list(n.covariates),
             "alternatives": [{"id": a.id, "covariates": list(a.covariates),
                               "outside_option": a.outside_option} for a in n.alternatives]}
            for n in self.nests]}


def tree_from_dict(spec) -> ChoiceTree:
    if spec == "canonical":
        return build_canonical_tree()
    if not isinstance(spec, dict) or "nests" not in spec:
        raise ModelSpecError("Tree definition must be 'canonical' or a mapping with a 'nests' list")
    nests = []
    for n in spec["nests"]:
        alts = tuple(Alternative(a["id"], tuple(a.get("covariates", [])), bool(a.get("outside_option", False)))
                     for a in n.get("alternatives", []))
        nests.append(Nest(n["id"], alts, tuple(n.get("covariates", []))))
    return ChoiceTree(tuple(nests))


def build_canonical_tree() -> ChoiceTree:
    """
    Four nests: the choice-marriage nest {love_marriage, mock_kidnapping}, arranged marriage,
    bride capture and the forgo outside option.
    """
    capture = list(CANONICAL_COVARIATES)
    without_police = [c for c in capture if c != "police"]
    without_both = [c for c in without_police if c != "aksakal"]
    return ChoiceTree((
        Nest("choice",
             (Alternative("love_marriage", tuple(without_both)),
              Alternative("mock_kidnapping", tuple(without_police))),
             tuple(without_police)),
        Nest("arranged", (Alternative("arranged_marriage", tuple(without_both)),)),
        Nest("capture", (Alternative("bride_capture", tuple(capture)),)),
        Nest("forgo", (Alternative("forgo", (), outside_option=True),)),
    ))
