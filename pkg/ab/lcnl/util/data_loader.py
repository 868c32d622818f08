# data_loader.py

import json
import os

import numpy as np
import pandas as pd

from ab.lcnl.conf.config import SCHEMA_PATH
from ab.lcnl.util.Dataset import Dataset
from ab.lcnl.util.coders.AdvantageTabulator import AdvantageTabulator
from ab.lcnl.util.coders.AksakalGovernanceCoder import AksakalGovernanceCoder
from ab.lcnl.util.coders.ClassPredictorCoder import AGREE_ITEMS, CLASS_PREDICTORS, IMPORTANCE_ITEMS, \
    ClassPredictorCoder
from ab.lcnl.util.coders.KalymAggregator import KalymAggregator
from ab.lcnl.util.errors import DataIOError

RAW_PREDICTOR_COLUMNS = AGREE_ITEMS + IMPORTANCE_ITEMS + ["ethnicity", "settlement"]


def load_schema(schema=None) -> dict:
    """
    Returns the schema mapping; `schema` may be a mapping, a JSON path or None for the shipped schema.
    """
    if isinstance(schema, dict):
        return schema
    path = schema or SCHEMA_PATH
    if not os.path.exists(path):
        raise FileNotFoundError(f"Schema file not found: {path}")
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def coded_schema(covariates, predictors) -> dict:
    """
    Schema for files produced by write_dataset: ids, choice, covariates and already coded predictors.
    """
    columns = {"individual_id": "str", "community_id": "str", "choice": "str"}
    columns.update({name: "float" for name in covariates})
    columns.update({name: "float" for name in predictors})
    return {"layout": "coded", "id_column": "individual_id", "community_column": "community_id",
            "choice_column": "choice", "age_column": None, "reliability_column": None,
            "covariates": list(covariates), "class_predictors": list(predictors),
            "allow_extra_columns": False, "columns": columns}


def _class_predictors(schema) -> list:
    predictors = schema.get("class_predictors", "survey")
    return list(CLASS_PREDICTORS) if predictors == "survey" else list(predictors)


def _parse(raw: pd.DataFrame, column, kind) -> pd.Series:
    text = raw[column]
    if kind == "str":
        return text.where(text.str.strip() != "", np.nan)
    stripped = text.str.strip()
    values = pd.to_numeric(stripped, errors="coerce")
    malformed = values.isna() & text.notna() & (stripped != "")
    if kind == "int":
        malformed |= values.notna() & (values != values.round())
    if malformed.any():
        row = int(np.flatnonzero(malformed.to_numpy())[0])
        raise DataIOError(f"cannot read {text.iloc[row]!r} as {kind}", line=row + 2, column=column)
    values = values.astype(float)
    # pandas' fast parser can be 1 ulp off; float() restores what %.17g wrote
    parsed = values.notna()
    values[parsed] = stripped[parsed].map(float)
    return values


def read_table(path, column_types: dict, required=(), allow_extra=False) -> pd.DataFrame:
    """
    Reads a UTF-8 comma-separated file with a header row, every cell as text, then types each
    documented column. Empty cells become NaN; a cell that does not parse is an error with its line number.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Data file not found: {path}")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=[""], encoding="utf-8")
    except pd.errors.ParserError as e:
        raise DataIOError(f"malformed CSV {path}: {e}") from e
    unknown = [c for c in raw.columns if c not in column_types]
    if unknown and not allow_extra:
        raise DataIOError(f"unknown column '{unknown[0]}' in {path}", column=unknown[0])
    missing = [c for c in required if c not in raw.columns]
    if missing:
        raise DataIOError(f"required column '{missing[0]}' missing from {path}", column=missing[0])
    return pd.DataFrame({c: _parse(raw, c, column_types[c]) if c in column_types else raw[c] for c in raw.columns},
                        index=raw.index)


def load_dataset(path, schema=None, community_path=None, marriage_path=None, standardize_income=False,
                 verbose=False) -> Dataset:
    """
    Reads one row per individual and applies the sample filters in order: age, reliability flag,
    complete cases, then communities without a kalym average. Drop counts go to provenance.
    The file itself is never modified.
    """
    schema = load_schema(schema)
    raw_layout = schema.get("layout", "raw") == "raw"
    id_col, comm_col, choice_col = schema["id_column"], schema["community_column"], schema["choice_column"]
    age_col, reliable_col = schema.get("age_column"), schema.get("reliability_column")
    covariates = list(schema["covariates"])
    predictors = _class_predictors(schema)

    merged = []
    if community_path is not None:
        merged.append("aksakal")
    if marriage_path is not None:
        merged.append("kalym")
    predictor_source = RAW_PREDICTOR_COLUMNS if raw_layout else predictors
    required = [id_col, comm_col, choice_col] + [c for c in (age_col, reliable_col) if c]
    required += [c for c in covariates if c not in merged] + list(predictor_source)
    column_types = dict(schema["columns"])
    frame = read_table(path, column_types, required, schema.get("allow_extra_columns", False))
    provenance = {"path": os.path.abspath(path), "rows_read": len(frame), "dropped": {}}

    if frame[id_col].isna().any():
        row = int(np.flatnonzero(frame[id_col].isna().to_numpy())[0])
        raise DataIOError("empty individual id", line=row + 2, column=id_col)
    duplicated = frame[id_col].duplicated()
    if duplicated.any():
        row = int(np.flatnonzero(duplicated.to_numpy())[0])
        raise DataIOError(f"duplicate individual id '{frame[id_col].iloc[row]}'", line=row + 2, column=id_col)

    if community_path is not None:
        frame = _merge(frame, comm_col, code_aksakal_governance(_read_side(community_path, schema, "community_file")))
    if marriage_path is not None:
        marriages = _read_side(marriage_path, schema, "marriage_file")
        frame = _merge(frame, comm_col, aggregate_kalym(marriages, sorted(frame[comm_col].dropna().unique())))

    def drop(name, keep):
        provenance["dropped"][name] = int((~keep).sum())
        return frame.loc[keep]

    # an empty age or reliability cell is a missing value, counted with the complete-case filter
    if age_col:
        min_age = schema.get("min_age", 18)
        frame = drop("age", ~(frame[age_col] < min_age).to_numpy())
    if reliable_col:
        frame = drop("reliability", (frame[reliable_col].isna() | (frame[reliable_col] == 1)).to_numpy())
    screened = [c for c in (age_col, reliable_col) if c]
    completeness = frame[[choice_col, comm_col] + screened + covariates + list(predictor_source)].notna()
    if "kalym_missing" in frame.columns:
        # communities without a kalym record are counted under their own filter
        no_price = frame["kalym_missing"].to_numpy() == 1
        has_price = frame["kalym"].notna().to_numpy()
        complete = completeness.drop(columns=["kalym"], errors="ignore").all(axis=1).to_numpy()
        frame = drop("missing", complete & (has_price | no_price))
        frame = drop("kalym_missing", frame["kalym_missing"].to_numpy() != 1)
    else:
        frame = drop("missing", completeness.all(axis=1).to_numpy())
    provenance["rows_kept"] = len(frame)

    if raw_layout:
        z = code_class_predictors(frame)[predictors]
    else:
        z = frame[predictors]
    x = frame[covariates].copy()
    if standardize_income and "income" in x.columns and len(x):
        std = float(x["income"].std(ddof=0))
        if std > 0:
            x["income"] = (x["income"] - x["income"].mean()) / std
        provenance["income_standardized"] = True
    if verbose:
        print(f"[INFO] read {provenance['rows_read']} rows from {path}, kept {provenance['rows_kept']}; "
              f"dropped {provenance['dropped']}")
    return Dataset(frame[id_col].to_numpy(), frame[comm_col].to_numpy(), frame[choice_col].to_numpy(),
                   x, z, provenance)


def _read_side(path, schema, key) -> pd.DataFrame:
    columns = schema.get(key, {}).get("columns", {})
    return read_table(path, columns, tuple(columns), allow_extra=True)


def _merge(frame, comm_col, side: pd.DataFrame) -> pd.DataFrame:
    side = side.rename(columns={"community_id": comm_col})
    side[comm_col] = side[comm_col].astype(str)
    frame = frame.drop(columns=[c for c in side.columns if c != comm_col and c in frame.columns])
    return frame.merge(side, on=comm_col, how="left", validate="many_to_one").set_axis(frame.index)


def write_dataset(dataset: Dataset, path):
    """
    Writes the coded form (ids, choice, covariates, class predictors) so that
    load_dataset(path, coded_schema(...)) returns an equal Dataset.
    """
    frame = pd.concat([pd.DataFrame({"individual_id": dataset.individual_ids,
                                     "community_id": dataset.community_ids,
                                     "choice": dataset.choices}),
                       dataset.covariates, dataset.class_predictors], axis=1)
    frame.to_csv(path, index=False, float_format="%.17g", encoding="utf-8")


def read_written_dataset(path, dataset_like: Dataset = None, covariates=None, predictors=None) -> Dataset:
    covariates = list(dataset_like.covariates.columns) if dataset_like is not None else list(covariates)
    predictors = list(dataset_like.class_predictors.columns) if dataset_like is not None else list(predictors)
    return load_dataset(path, coded_schema(covariates, predictors))


def code_class_predictors(frame: pd.DataFrame) -> pd.DataFrame:
    return ClassPredictorCoder()(frame)


def code_aksakal_governance(frame: pd.DataFrame) -> pd.DataFrame:
    return AksakalGovernanceCoder()(frame)


def aggregate_kalym(frame: pd.DataFrame, communities=None) -> pd.DataFrame:
    return KalymAggregator(communities)(frame)


def tabulate_advantages(frame: pd.DataFrame, kidnapper_filter=None) -> pd.DataFrame:
    return AdvantageTabulator(kidnapper_filter)(frame)
