import numpy as np
import pandas as pd
import pytest

from ab.lcnl.util.ParameterSet import ParameterLayout, ParameterSet
from ab.lcnl.util.Simulator import SimulationSpec, default_truth, individual_uniforms, simulate_dataset
from ab.lcnl.util.choice_model import ChoiceModel
from ab.lcnl.util.coders.AdvantageTabulator import AdvantageTabulator
from ab.lcnl.util.coders.AksakalGovernanceCoder import AKSAKAL_ANSWER
from ab.lcnl.util.coders.ClassPredictorCoder import AGREE_ITEMS, CLASS_PREDICTORS, IMPORTANCE_ITEMS
from ab.lcnl.util.data_loader import aggregate_kalym, code_aksakal_governance, code_class_predictors, \
    load_dataset, read_table, read_written_dataset, tabulate_advantages, write_dataset
from ab.lcnl.util.errors import CodingError, ConfigError, DataIOError
from conftest import SMALL_PREDICTORS, set_values

COVARIATES = ["aksakal", "police", "kalym", "income", "second_home", "vehicle", "loan", "event_host", "employed"]
CHOICES = ["love_marriage", "mock_kidnapping", "arranged_marriage", "bride_capture", "forgo"]


def raw_frame(n, seed=0, merged=()) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    frame = pd.DataFrame({
        "individual_id": [f"p{i:03d}" for i in range(n)],
        "community_id": [f"c{i % 3}" for i in range(n)],
        "choice": [CHOICES[i % len(CHOICES)] for i in range(n)],
        "age": rng.integers(18, 60, n),
        "reliable": np.ones(n, dtype=int),
    })
    for name in COVARIATES:
        if name in merged:
            continue
        frame[name] = rng.lognormal(0.0, 0.5, n) if name in ("kalym", "income") else rng.integers(0, 2, n)
    for name in AGREE_ITEMS + IMPORTANCE_ITEMS:
        frame[name] = rng.integers(1, 5, n)
    frame["ethnicity"] = rng.choice(["Kyrgyz", "Kazakh", "Uzbek", "Russian"], n)
    frame["settlement"] = rng.choice(["village", "town", "city"], n)
    return frame


def item_row(**answers) -> pd.DataFrame:
    row = {name: 1 for name in AGREE_ITEMS + IMPORTANCE_ITEMS}
    row.update({"ethnicity": "Russian", "settlement": "city"})
    row.update(answers)
    return pd.DataFrame([row])


class TestClassPredictorCoder:
    def test_agreement_and_importance_thresholds(self):
        coded = code_class_predictors(item_row(val_husband_decides=3, val_woman_home=2,
                                               sp_respectful=2, sp_obedient=3))
        assert list(coded.columns) == CLASS_PREDICTORS
        assert coded.at[0, "val_husband_decides"] == 1.0
        assert coded.at[0, "val_woman_home"] == 0.0
        assert coded.at[0, "sp_respectful"] == 1.0
        assert coded.at[0, "sp_obedient"] == 0.0

    def test_ethnicity_and_settlement(self):
        coded = code_class_predictors(pd.concat([item_row(ethnicity=" Kyrgyz ", settlement="Village"),
                                                 item_row(ethnicity="kazakh"),
                                                 item_row(ethnicity="Uzbek", settlement="town")],
                                                ignore_index=True))
        assert list(coded["kyrgyz_kazakh"]) == [1.0, 1.0, 0.0]
        assert list(coded["village"]) == [1.0, 0.0, 0.0]

    def test_out_of_range_response(self):
        with pytest.raises(CodingError, match="tg_strangers") as info:
            code_class_predictors(item_row(tg_strangers=5))
        assert info.value.value == 5

    def test_input_not_modified(self):
        frame = item_row(val_dual_income=4)
        before = frame.copy()
        code_class_predictors(frame)
        pd.testing.assert_frame_equal(frame, before)

    def test_missing_column(self):
        with pytest.raises(DataIOError, match="settlement"):
            code_class_predictors(item_row().drop(columns=["settlement"]))


class TestAksakalGovernanceCoder:
    def test_exact_and_variant_answers(self):
        frame = pd.DataFrame({"community_id": ["a", "b", "c"],
                              "decision_answer": [AKSAKAL_ANSWER,
                                                  "  community LEADERS, eg.  aksakals make a decision, and other "
                                                  "community members accept it ",
                                                  "Everybody votes"]})
        assert list(code_aksakal_governance(frame)["aksakal"]) == [1.0, 1.0, 0.0]

    def test_share_of_governed_communities(self):
        answers = [AKSAKAL_ANSWER if i < 23 else "The head of the village decides" for i in range(111)]
        frame = pd.DataFrame({"community_id": [f"k{i}" for i in range(111)], "decision_answer": answers})
        coded = code_aksakal_governance(frame)
        assert len(coded) == 111
        assert coded["aksakal"].sum() == 23


class TestKalymAggregator:
    def test_mean_over_unique_marriages(self):
        frame = pd.DataFrame({
            "community_id": ["c1", "c1", "c2", "c2", "c2", "c1"],
            "wave": [2011, 2012, 2011, 2012, 2012, 2010],
            "couple_id": ["a", "b", "d", "d", "e", "f"],
            "payment": [10.0, 20.0, 30.0, 30.0, 60.0, 500.0],
        })
        coded = aggregate_kalym(frame, ["c1", "c2", "c3"]).set_index("community_id")
        assert coded.at["c1", "kalym"] == 15.0
        assert coded.at["c2", "kalym"] == 45.0
        assert np.isnan(coded.at["c3", "kalym"])
        assert list(coded["kalym_missing"]) == [0, 0, 1]

    def test_negative_payment(self):
        frame = pd.DataFrame({"community_id": ["c1"], "wave": [2011], "couple_id": ["a"], "payment": [-1.0]})
        with pytest.raises(DataIOError, match="negative"):
            aggregate_kalym(frame)


def advantage_frame(n_kidnappers, affirmative: dict, n_others=100) -> pd.DataFrame:
    rows = {"marriage_type": ["bride_capture"] * n_kidnappers + ["love_marriage"] * n_others,
            "attempted_kidnapping": [0] * (n_kidnappers + n_others)}
    for q in range(1, 7):
        count = affirmative.get(f"adv_q{q}", 0)
        rows[f"adv_q{q}"] = [1] * count + [4] * (n_kidnappers - count) + [1] * n_others
    return pd.DataFrame(rows)


class TestAdvantageTabulator:
    def test_percentages(self):
        table = tabulate_advantages(advantage_frame(984, {"adv_q1": 540, "adv_q3": 598}))
        table = table.set_index("question")
        assert list(table.index) == ["Q1", "Q2", "Q3", "Q4", "Q5", "Q6"]
        assert (table["respondents"] == 984).all()
        assert table.at["Q1", "affirmative"] == 540
        assert table.at["Q1", "percent"] == pytest.approx(54.878, abs=1e-3)
        assert table.at["Q3", "percent"] == pytest.approx(60.772, abs=1e-3)
        assert table.at["Q2", "percent"] == 0.0

    def test_attempted_kidnappers_are_included(self):
        frame = advantage_frame(2, {"adv_q1": 2}, n_others=0)
        extra = pd.DataFrame({"marriage_type": ["arranged_marriage"], "attempted_kidnapping": [1],
                              **{f"adv_q{q}": [4] for q in range(1, 7)}})
        table = tabulate_advantages(pd.concat([frame, extra], ignore_index=True)).set_index("question")
        assert table.at["Q1", "respondents"] == 3
        assert table.at["Q1", "affirmative"] == 2

    def test_custom_filter(self):
        tabulator = AdvantageTabulator({"marriage_type": ["love_marriage"]})
        table = tabulator(advantage_frame(5, {}, n_others=4)).set_index("question")
        assert table.at["Q1", "respondents"] == 4
        assert table.at["Q1", "percent"] == 100.0

    def test_out_of_range_response(self):
        frame = advantage_frame(3, {})
        frame.loc[0, "adv_q4"] = 7
        with pytest.raises(CodingError, match="adv_q4"):
            tabulate_advantages(frame)

    def test_no_filter_columns(self):
        with pytest.raises(DataIOError, match="kidnapper filter"):
            tabulate_advantages(advantage_frame(3, {}).drop(columns=["marriage_type", "attempted_kidnapping"]))


class TestReadTable:
    def test_malformed_cell_reports_line(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a,b\n1,2.5\n2,0.5\nx,3\n", encoding="utf-8")
        with pytest.raises(DataIOError) as info:
            read_table(path, {"a": "int", "b": "float"})
        assert info.value.line == 4
        assert info.value.column == "a"

    def test_fractional_integer(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a\n1\n2.5\n", encoding="utf-8")
        with pytest.raises(DataIOError) as info:
            read_table(path, {"a": "int"})
        assert info.value.line == 3

    def test_unknown_column(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a,c\n1,2\n", encoding="utf-8")
        with pytest.raises(DataIOError, match="unknown column 'c'"):
            read_table(path, {"a": "int"})
        assert list(read_table(path, {"a": "int"}, allow_extra=True).columns) == ["a", "c"]

    def test_missing_required_column(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a\n1\n", encoding="utf-8")
        with pytest.raises(DataIOError, match="'b'"):
            read_table(path, {"a": "int", "b": "float"}, required=["a", "b"])

    def test_empty_cells_become_missing(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a,s\n,\n3,x\n", encoding="utf-8")
        frame = read_table(path, {"a": "float", "s": "str"})
        assert np.isnan(frame.at[0, "a"])
        assert pd.isna(frame.at[0, "s"])
        assert frame.at[1, "s"] == "x"

    def test_full_precision_floats_read_exactly(self, tmp_path):
        values = np.random.default_rng(17).lognormal(0.0, 1.5, 2000)
        path = tmp_path / "t.csv"
        pd.DataFrame({"v": values}).to_csv(path, index=False, float_format="%.17g")
        assert np.array_equal(read_table(path, {"v": "float"})["v"].to_numpy(), values)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_table(tmp_path / "absent.csv", {})


class TestLoadDataset:
    def test_filters_are_counted(self, tmp_path):
        frame = raw_frame(30)
        frame.loc[0, "age"] = 17
        frame.loc[1, "reliable"] = 0
        frame["income"] = frame["income"].astype(object)
        frame.loc[2, "income"] = ""
        path = tmp_path / "survey.csv"
        frame.to_csv(path, index=False)
        data = load_dataset(path)
        assert len(data) == 27
        assert data.provenance["rows_read"] == 30
        assert data.provenance["dropped"] == {"age": 1, "reliability": 1, "missing": 1}
        assert "p000" not in data.individual_ids
        assert list(data.class_predictors.columns) == CLASS_PREDICTORS
        assert list(data.covariates.columns) == COVARIATES

    def test_missing_age_counts_as_missing(self, tmp_path):
        frame = raw_frame(20)
        frame["age"] = frame["age"].astype(object)
        frame.loc[4, "age"] = ""
        frame["reliable"] = frame["reliable"].astype(object)
        frame.loc[6, "reliable"] = ""
        path = tmp_path / "survey.csv"
        frame.to_csv(path, index=False)
        data = load_dataset(path)
        assert data.provenance["dropped"] == {"age": 0, "reliability": 0, "missing": 2}
        assert {"p004", "p006"}.isdisjoint(data.individual_ids)

    def test_file_is_not_modified(self, tmp_path):
        path = tmp_path / "survey.csv"
        raw_frame(12).to_csv(path, index=False)
        before = path.read_bytes()
        load_dataset(path)
        assert path.read_bytes() == before

    def test_written_dataset_reads_back_equal(self, tmp_path):
        path = tmp_path / "survey.csv"
        raw_frame(25, seed=4).to_csv(path, index=False)
        data = load_dataset(path)
        out = tmp_path / "coded.csv"
        write_dataset(data, out)
        assert read_written_dataset(out, data).equals(data)

    def test_duplicate_id(self, tmp_path):
        frame = raw_frame(5)
        frame.loc[3, "individual_id"] = frame.loc[1, "individual_id"]
        path = tmp_path / "survey.csv"
        frame.to_csv(path, index=False)
        with pytest.raises(DataIOError, match="duplicate") as info:
            load_dataset(path)
        assert info.value.line == 5

    def test_unknown_column_is_rejected(self, tmp_path):
        path = tmp_path / "survey.csv"
        raw_frame(5).assign(shoe_size=40).to_csv(path, index=False)
        with pytest.raises(DataIOError, match="shoe_size"):
            load_dataset(path)

    def test_standardized_income(self, tmp_path):
        path = tmp_path / "survey.csv"
        raw_frame(40, seed=2).to_csv(path, index=False)
        income = load_dataset(path, standardize_income=True).covariates["income"]
        assert income.mean() == pytest.approx(0.0, abs=1e-12)
        assert income.std(ddof=0) == pytest.approx(1.0)

    def test_community_and_marriage_files(self, tmp_path):
        survey, communities, marriages = tmp_path / "survey.csv", tmp_path / "comm.csv", tmp_path / "marr.csv"
        frame = raw_frame(30, merged=("aksakal", "kalym"))
        frame.to_csv(survey, index=False)
        pd.DataFrame({"community_id": ["c0", "c1", "c2"],
                      "decision_answer": [AKSAKAL_ANSWER, "Everybody votes", AKSAKAL_ANSWER]}).to_csv(
            communities, index=False)
        pd.DataFrame({"community_id": ["c0", "c0", "c1"], "wave": [2011, 2012, 2012],
                      "couple_id": ["x", "y", "z"], "payment": [12.0, 18.0, 40.0]}).to_csv(marriages, index=False)
        data = load_dataset(survey, community_path=communities, marriage_path=marriages)
        assert data.provenance["dropped"]["kalym_missing"] == 10
        assert set(data.community_ids) == {"c0", "c1"}
        by_community = pd.DataFrame({"community": data.community_ids, "aksakal": data.covariates["aksakal"],
                                     "kalym": data.covariates["kalym"]}).groupby("community").first()
        assert by_community.at["c0", "aksakal"] == 1.0
        assert by_community.at["c1", "aksakal"] == 0.0
        assert by_community.at["c0", "kalym"] == 15.0
        assert by_community.at["c1", "kalym"] == 40.0


class TestSimulator:
    def test_same_seed_same_dataset(self, canonical_tree):
        truth = default_truth(ParameterLayout(canonical_tree, 2, ["village"]), seed=1)
        first = simulate_dataset(SimulationSpec(truth, n_individuals=200, n_communities=10, seed=5))
        second = simulate_dataset(SimulationSpec(truth, n_individuals=200, n_communities=10, seed=5))
        other = simulate_dataset(SimulationSpec(truth, n_individuals=200, n_communities=10, seed=6))
        assert first.equals(second)
        assert not first.equals(other)

    def test_dominant_capture_intercept(self, canonical_tree):
        params = set_values(ParameterSet(ParameterLayout(canonical_tree, 2, [])),
                            class1__bride_capture__intercept=20.0, class2__bride_capture__intercept=20.0)
        data = simulate_dataset(SimulationSpec(params, n_individuals=2000, n_communities=20, seed=3))
        assert np.mean(data.choices == "bride_capture") >= 0.99

    def test_all_zero_parameters_give_equal_shares(self, canonical_tree):
        params = ParameterSet(ParameterLayout(canonical_tree, 2, []))
        data = simulate_dataset(SimulationSpec(params, n_individuals=100_000, n_communities=111, seed=4))
        for alt in canonical_tree.alternative_ids:
            assert np.mean(data.choices == alt) == pytest.approx(0.2, abs=0.02)

    def test_model_without_class_predictors(self, flat_tree):
        truth = default_truth(ParameterLayout(flat_tree, 1, []), seed=4)
        data = simulate_dataset(SimulationSpec(truth, n_individuals=120, n_communities=6, seed=2))
        assert len(data) == 120
        assert data.class_predictors.shape == (120, 0)
        assert data.predictor_matrix([]).shape == (120, 1)
        assert set(data.choices) <= {"a", "b", "out"}

    def test_rows_do_not_depend_on_sample_size(self, canonical_tree):
        truth = default_truth(ParameterLayout(canonical_tree, 2, ["village"]), seed=1)
        short = simulate_dataset(SimulationSpec(truth, n_individuals=50, n_communities=10, seed=5))
        long = simulate_dataset(SimulationSpec(truth, n_individuals=80, n_communities=10, seed=5))
        assert np.array_equal(long.choices[:50], short.choices)
        assert np.array_equal(long.community_ids[:50], short.community_ids)
        pd.testing.assert_frame_equal(long.covariates.iloc[:50], short.covariates)
        pd.testing.assert_frame_equal(long.class_predictors.iloc[:50], short.class_predictors)

    def test_individual_uniforms(self):
        u = individual_uniforms(3, 10, 7)
        assert u.shape == (10, 7)
        assert np.all((u > 0.0) & (u < 1.0))
        assert np.array_equal(individual_uniforms(3, 4, 7), u[:4])
        assert not np.array_equal(individual_uniforms(4, 4, 7), u[:4])

    def test_choice_frequencies_match_model_probabilities(self, canonical_tree):
        truth = default_truth(ParameterLayout(canonical_tree, 2, SMALL_PREDICTORS), seed=3)
        n = 100_000
        data = simulate_dataset(SimulationSpec(truth, n_individuals=n, n_communities=111, seed=12))
        model = ChoiceModel(canonical_tree)
        p = model.probabilities(data.design_matrix(model.covariates), data.predictor_matrix(SMALL_PREDICTORS),
                                truth).mean(axis=0)
        for m, alt in enumerate(canonical_tree.alternative_ids):
            assert abs(np.mean(data.choices == alt) - p[m]) < 3.0 * np.sqrt(p[m] * (1.0 - p[m]) / n), alt

    def test_community_level_covariates_are_constant(self, canonical_tree):
        truth = default_truth(ParameterLayout(canonical_tree, 1, []), seed=2)
        data = simulate_dataset(SimulationSpec(truth, n_individuals=3000, n_communities=111, seed=8))
        frame = data.covariates.assign(community=data.community_ids)
        per_community = frame.groupby("community")[["aksakal", "police", "kalym"]].nunique()
        assert (per_community == 1).all().all()
        assert frame.groupby("community")["aksakal"].first().sum() == 23
        assert data.provenance["source"] == "simulation"

    def test_gumbel_sampler_needs_flat_tree(self, canonical_tree, flat_tree):
        nested = ParameterSet(ParameterLayout(canonical_tree, 1, []))
        with pytest.raises(ConfigError, match="gumbel"):
            simulate_dataset(SimulationSpec(nested, n_individuals=10, sampler="gumbel"))
        flat = default_truth(ParameterLayout(flat_tree, 1, []), seed=3)
        first = simulate_dataset(SimulationSpec(flat, n_individuals=50, n_communities=5, seed=1, sampler="gumbel"))
        assert first.equals(simulate_dataset(SimulationSpec(flat, n_individuals=50, n_communities=5, seed=1,
                                                            sampler="gumbel")))
        assert set(first.choices) <= {"a", "b", "out"}

    def test_default_truth_respects_tags(self, canonical_tree):
        layout = ParameterLayout(canonical_tree, 2, CLASS_PREDICTORS, free_dissimilarity=True)
        truth = default_truth(layout, seed=11)
        truth.check_tags()
        for k in layout.dissimilarity_index.values():
            assert 0.5 <= truth.values[k] <= 1.0

    def test_from_dict(self, canonical_tree):
        params = ParameterSet(ParameterLayout(canonical_tree, 1, []))
        spec = SimulationSpec.from_dict({"n_individuals": 40, "truth": "ignored.csv",
                                         "covariates": {"police": {"kind": "bernoulli", "p": 1.0}}}, params, seed=9)
        assert spec.seed == 9
        assert spec.covariates["police"]["p"] == 1.0
        assert np.all(simulate_dataset(spec).covariates["police"] == 1.0)
        with pytest.raises(ConfigError, match="n_people"):
            SimulationSpec.from_dict({"n_people": 10}, params)

    @pytest.mark.parametrize("section", [{"n_individuals": 0}, {"aksakal_share": 1.5}, {"sampler": "inverse"},
                                         {"predictor_p": {"village": 2.0}}])
    def test_invalid_settings(self, canonical_tree, section):
        with pytest.raises(ConfigError):
            SimulationSpec.from_dict(section, ParameterSet(ParameterLayout(canonical_tree, 1, [])))
