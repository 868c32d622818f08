import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ab.lcnl.util.ChoiceTree import Alternative, ChoiceTree, Nest, tree_from_dict
from ab.lcnl.util.Dataset import Observation
from ab.lcnl.util.ParameterSet import NONNEG, NONPOS, ConstraintTag, ParameterLayout, ParameterSet, fixed
from ab.lcnl.util.choice_model import ChoiceModel, alternative_utility, choice_probabilities, class_membership, \
    inclusive_value
from ab.lcnl.util.coders.ClassPredictorCoder import CLASS_PREDICTORS
from ab.lcnl.util.errors import DimensionError, MissingCovariateError, ModelSpecError, UnknownAlternativeError
from ab.lcnl.util.validation import check_mnl_collapse, check_probability_laws
from conftest import set_values


def observation(tree, value=0.3, choice=None, predictors=None):
    return Observation("i1", "c1", choice or tree.alternative_ids[0],
                       {name: value for name in tree.covariates}, dict(predictors or {}))


def independent_mnl(obs, params, c=0):
    """
    Plain softmax over leaf utilities read straight from the unpacked coefficients.
    """
    coefs = params.layout.unpack(params.values)["classes"][c]["alternatives"]
    v = np.array([coefs[alt.id]["intercept"] + sum(coefs[alt.id][n] * obs.covariates[n] for n in alt.covariates)
                  for alt in params.tree.alternatives])
    e = np.exp(v - v.max())
    return e / e.sum()


class TestChoiceTree:
    def test_canonical_shape(self, canonical_tree):
        assert len(canonical_tree.nests) == 4
        assert len(canonical_tree.alternatives) == 5
        assert canonical_tree.outside_option.id == "forgo"

    def test_canonical_covariate_counts(self, canonical_tree):
        assert len(canonical_tree.alternative("bride_capture").covariates) == 9
        assert len(canonical_tree.alternative("love_marriage").covariates) == 7

    def test_duplicate_alternative_rejected(self):
        with pytest.raises(ModelSpecError):
            ChoiceTree((Nest("a", (Alternative("x"),)), Nest("b", (Alternative("x"),))))

    def test_outside_option_needs_degenerate_nest(self):
        with pytest.raises(ModelSpecError):
            ChoiceTree((Nest("a", (Alternative("x"), Alternative("o", outside_option=True))),))

    def test_degenerate_nest_without_covariates(self):
        with pytest.raises(ModelSpecError):
            ChoiceTree((Nest("a", (Alternative("x"),), ("kalym",)),))

    def test_dict_round_trip(self, canonical_tree):
        assert tree_from_dict(canonical_tree.to_dict()) == canonical_tree

    def test_unknown_alternative(self, canonical_tree):
        with pytest.raises(UnknownAlternativeError):
            canonical_tree.alternative_index("elopement", "i9")


class TestParameterLayout:
    def test_free_count_of_canonical_model(self, canonical_tree):
        layout = ParameterLayout(canonical_tree, 2, CLASS_PREDICTORS)
        assert ParameterSet(layout).n_free == 112

    def test_packing_order_and_names(self, canonical_tree):
        layout = ParameterLayout(canonical_tree, 2, ["village"], free_dissimilarity=True)
        assert layout.names[0] == "class1.nest:choice.intercept"
        assert layout.names[9] == "class1.love_marriage.intercept"
        assert layout.names.index("membership.class1.intercept") > layout.names.index("class2.forgo.intercept")
        assert layout.names[-1] == "dissimilarity.choice"

    def test_pack_inverts_unpack(self, canonical_tree):
        layout = ParameterLayout(canonical_tree, 2, ["village"])
        values = np.random.default_rng(0).normal(size=layout.size)
        np.testing.assert_array_equal(layout.pack(layout.unpack(values)), values)

    def test_wrong_length_is_named(self, canonical_tree):
        params = ParameterSet(ParameterLayout(canonical_tree, 1, []))
        with pytest.raises(DimensionError, match="free parameter vector"):
            params.with_free(np.zeros(params.n_free + 1))

    def test_sign_restrictions(self, canonical_tree):
        layout = ParameterLayout(canonical_tree, 2, CLASS_PREDICTORS)
        tags = dict(zip(layout.names, layout.default_tags(normalize_membership=False)))
        assert tags["membership.class1.val_husband_decides"] == NONNEG
        assert tags["membership.class2.val_husband_decides"] == NONPOS
        assert tags["membership.class1.val_dual_income"] == NONPOS
        assert tags["membership.class1.tr_cautious"].kind == "free"
        normalized = dict(zip(layout.names, layout.default_tags()))
        assert normalized["membership.class2.val_husband_decides"] == fixed(0.0)

    def test_single_class_membership_is_fixed(self, canonical_tree):
        params = ParameterSet(ParameterLayout(canonical_tree, 1, ["village"]))
        assert not any(n.startswith("membership") for n in params.free_names)

    def test_outside_option_fixed_at_zero(self, canonical_tree):
        params = ParameterSet(ParameterLayout(canonical_tree, 2, []))
        assert "class1.forgo.intercept" not in params.free_names

    def test_outside_option_cannot_be_freed(self, canonical_tree):
        layout = ParameterLayout(canonical_tree, 1, [])
        with pytest.raises(ModelSpecError, match="class1.forgo.intercept"):
            layout.default_tags(overrides={"class1.forgo.intercept": "free"})
        tags = layout.default_tags()
        tags[layout.index("class1.forgo.intercept")] = ConstraintTag("free")
        with pytest.raises(ModelSpecError, match="outside"):
            ParameterSet(layout, tags=tags)
        with pytest.raises(ModelSpecError, match="outside"):
            set_values(ParameterSet(layout), class1__forgo__intercept=2.0)

    def test_outside_option_agrees_across_paths(self, canonical_tree):
        params = set_values(ParameterSet(ParameterLayout(canonical_tree, 1, [])), class1__bride_capture__intercept=1.0)
        obs = observation(canonical_tree)
        x = np.array([[obs.covariates[n] for n in canonical_tree.covariates]])
        vectorised = ChoiceModel(canonical_tree).alternative_utilities(x, params, 0)
        m = canonical_tree.alternative_index("forgo")
        assert vectorised[0, m] == alternative_utility(obs, "forgo", 0, params) == 0.0
        p = np.exp(ChoiceModel(canonical_tree).log_probabilities(x, np.ones((1, 1)), params)[2])[0]
        assert_allclose(p, choice_probabilities(obs, params).mixture, atol=1e-15)

    def test_tag_parsing(self):
        assert ConstraintTag.parse("fixed(0.5)") == fixed(0.5)
        assert ConstraintTag.parse("nonneg") == NONNEG
        with pytest.raises(ModelSpecError):
            ConstraintTag.parse("positive")

    def test_violated_tag(self, canonical_tree):
        layout = ParameterLayout(canonical_tree, 2, CLASS_PREDICTORS)
        params = set_values(ParameterSet(layout), membership__class1__val_husband_decides=-1.0)
        with pytest.raises(ModelSpecError, match="val_husband_decides"):
            params.check_tags()

    def test_frame_round_trip(self, simulated_canonical):
        _, truth = simulated_canonical
        assert ParameterSet.from_frame(truth.layout, truth.to_frame()) == truth


class TestClassMembership:
    def test_symmetric_zero(self):
        assert_allclose(class_membership([1.0], np.zeros((2, 2))), [0.5, 0.5], atol=1e-15)

    def test_closed_form(self):
        assert_allclose(class_membership([1.0], [[math.log(3.0)], [0.0]]), [0.75, 0.25], atol=1e-15)

    def test_matches_extended_precision(self):
        getcontext().prec = 50
        rng = np.random.default_rng(42)
        z = rng.integers(0, 2, size=5).astype(float)
        theta = rng.normal(0.0, 2.0, size=(3, 6))
        z1 = [Decimal(1)] + [Decimal(v) for v in z]
        index = [sum(Decimal(t) * zj for t, zj in zip(row, z1)) for row in theta]
        exps = [v.exp() for v in index]
        oracle = [float(e / sum(exps)) for e in exps]
        assert_allclose(class_membership(z, theta), oracle, rtol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError, match="z"):
            class_membership([1.0, 0.0, 1.0, 1.0], np.zeros((2, 2)))


class TestAlternativeUtility:
    def test_outside_option_is_zero(self, canonical_tree):
        params = ParameterSet(ParameterLayout(canonical_tree, 1, []))
        assert alternative_utility(observation(canonical_tree, 5.0), "forgo", 0, params) == 0.0

    def test_intercept_only(self, canonical_tree):
        params = set_values(ParameterSet(ParameterLayout(canonical_tree, 1, [])), class1__love_marriage__intercept=1.5)
        assert alternative_utility(observation(canonical_tree, 2.0), "love_marriage", 0, params) == 1.5

    def test_dot_product(self):
        tree = ChoiceTree((Nest("a", (Alternative("a", ("u", "w")),)),
                           Nest("o", (Alternative("o", (), outside_option=True),))))
        params = set_values(ParameterSet(ParameterLayout(tree, 1, [])), class1__a__u=2.0, class1__a__w=-1.0)
        obs = Observation("i1", "c1", "a", {"u": 3.0, "w": 4.0}, {})
        assert alternative_utility(obs, "a", 0, params) == pytest.approx(2.0)

    def test_missing_covariate_names_variable_and_individual(self, canonical_tree):
        params = ParameterSet(ParameterLayout(canonical_tree, 1, []))
        obs = observation(canonical_tree)
        del obs.covariates["kalym"]
        with pytest.raises(MissingCovariateError) as info:
            alternative_utility(obs, "bride_capture", 0, params)
        assert info.value.variable == "kalym" and info.value.individual_id == "i1"


class TestInclusiveValue:
    def test_degenerate_nest_equals_utility(self, flat_tree):
        params = set_values(ParameterSet(ParameterLayout(flat_tree, 1, [])), class1__a__intercept=-0.7,
                            class1__a__x1=0.0, class1__a__x2=0.0)
        assert inclusive_value(observation(flat_tree), "a", 0, params) == -0.7

    def test_two_equal_members(self, canonical_tree):
        params = ParameterSet(ParameterLayout(canonical_tree, 1, []))
        assert inclusive_value(observation(canonical_tree), "choice", 0, params) == pytest.approx(math.log(2.0))

    def test_large_utilities_stay_finite(self, canonical_tree):
        params = set_values(ParameterSet(ParameterLayout(canonical_tree, 1, [])),
                            class1__love_marriage__intercept=710.0, class1__mock_kidnapping__intercept=709.0)
        value = inclusive_value(observation(canonical_tree, 0.0), "choice", 0, params)
        assert math.isfinite(value)
        assert value == pytest.approx(710.0 + math.log1p(math.exp(-1.0)), rel=1e-15)

    def test_unknown_nest(self, canonical_tree):
        params = ParameterSet(ParameterLayout(canonical_tree, 1, []))
        with pytest.raises(ModelSpecError, match="elopement"):
            inclusive_value(observation(canonical_tree), "elopement", 0, params)


class TestChoiceProbabilities:
    def test_all_zero_parameters(self, canonical_tree):
        params = ParameterSet(ParameterLayout(canonical_tree, 2, []))
        bundle = choice_probabilities(observation(canonical_tree), params)
        assert_allclose(bundle.membership, [0.5, 0.5], atol=1e-15)
        assert_allclose(bundle.nest, [[0.4, 0.2, 0.2, 0.2]] * 2, atol=1e-15)
        assert_allclose(bundle.inclusive[0], [math.log(2.0), 0.0, 0.0, 0.0], atol=1e-15)
        assert_allclose(bundle.mixture, np.full(5, 0.2), atol=1e-15)

    def test_flat_tree_is_multinomial_logit(self, flat_tree):
        rng = np.random.default_rng(5)
        params = ParameterSet(ParameterLayout(flat_tree, 1, []))
        params = params.with_free(rng.normal(size=params.n_free))
        obs = Observation("i1", "c1", "a", {"x1": 0.4, "x2": -1.3}, {})
        assert_allclose(choice_probabilities(obs, params).mixture, independent_mnl(obs, params), atol=1e-15)

    def test_zero_nest_coefficients_collapse_to_mnl(self, canonical_tree):
        layout = ParameterLayout(canonical_tree, 1, [])
        tags = [fixed(0.0) if e.block == "nest" else t for t, e in zip(layout.default_tags(), layout.entries)]
        base = ParameterSet(layout, tags=tags)
        rng = np.random.default_rng(11)
        for _ in range(100):
            params = base.with_free(rng.normal(0.0, 2.0, base.n_free))
            obs = Observation("i1", "c1", "forgo", {n: rng.normal(0.0, 2.0) for n in canonical_tree.covariates}, {})
            assert_allclose(choice_probabilities(obs, params).mixture, independent_mnl(obs, params), atol=1e-10)
        assert check_mnl_collapse(canonical_tree).passed

    def test_dissimilarity_scales_within_nest(self, canonical_tree):
        layout = ParameterLayout(canonical_tree, 1, [], free_dissimilarity=True)
        params = set_values(ParameterSet(layout), dissimilarity__choice=0.5, class1__love_marriage__intercept=1.0)
        bundle = choice_probabilities(observation(canonical_tree, 0.0), params)
        assert bundle.within[0][0] == pytest.approx(math.exp(2.0) / (math.exp(2.0) + 1.0), rel=1e-14)
        assert bundle.inclusive[0][0] == pytest.approx(math.log(math.exp(2.0) + 1.0), rel=1e-14)

    def test_probability_laws_on_random_draws(self, canonical_tree):
        params = ParameterSet(ParameterLayout(canonical_tree, 2, CLASS_PREDICTORS))
        result = check_probability_laws(params, draws=1000, seed=1)
        assert result.passed, result.detail

    def test_extreme_utilities(self, canonical_tree):
        params = set_values(ParameterSet(ParameterLayout(canonical_tree, 1, [])),
                            **{"class1.bride_capture.intercept": 1000.0, "class1.nest:choice.intercept": -1000.0})
        bundle = choice_probabilities(observation(canonical_tree, 0.0), params)
        assert np.all(np.isfinite(bundle.mixture))
        assert bundle.probability("bride_capture") == pytest.approx(1.0)

    def test_vectorised_matches_scalar(self, simulated_canonical):
        data, truth = simulated_canonical
        model = ChoiceModel(truth.tree)
        p = model.probabilities(data.design_matrix(model.covariates),
                                data.predictor_matrix(truth.layout.class_predictors), truth)
        for i in range(10):
            assert_allclose(p[i], choice_probabilities(data.observation(i), truth).mixture, atol=1e-12)

    def test_rejects_foreign_tree(self, canonical_tree, flat_tree):
        params = ParameterSet(ParameterLayout(canonical_tree, 1, []))
        with pytest.raises(ModelSpecError):
            ChoiceModel(flat_tree).check_params(params)
