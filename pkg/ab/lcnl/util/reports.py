import numpy as np
import pandas as pd

from ab.lcnl.util.ParameterSet import INTERCEPT, ParameterSet
from ab.lcnl.util.effects import EffectsTable

FLOAT_FORMAT = "%.17g"


def _se_for(names, se):
    if se is None:
        return np.full(len(names), np.nan)
    return np.array([float(se.get(n, np.nan)) for n in names])


def parameter_table(params: ParameterSet, se: pd.Series = None) -> pd.DataFrame:
    """
    Long utility-coefficient table: one row per nest/alternative coefficient with estimate and SE.
    Fixed coefficients carry no SE.
    """
    frame = params.to_frame()
    frame = frame.loc[frame["block"].isin(["nest", "alternative", "dissimilarity"])].copy()
    frame["equation"] = np.where(frame["block"] == "nest", "nest:" + frame["owner"], frame["owner"])
    frame = frame.rename(columns={"column": "covariate", "value": "estimate"})
    frame["se"] = _se_for(list(frame["name"]), se)
    return frame[["name", "class", "equation", "covariate", "estimate", "se", "tag"]].reset_index(drop=True)


def membership_table(params: ParameterSet, se: pd.Series = None) -> pd.DataFrame:
    frame = params.to_frame()
    frame = frame.loc[frame["block"] == "membership"].copy()
    frame = frame.rename(columns={"column": "predictor", "value": "estimate"})
    frame["se"] = _se_for(list(frame["name"]), se)
    return frame[["name", "class", "predictor", "estimate", "se", "tag"]].reset_index(drop=True)


def _cell(estimate, se, tag) -> str:
    text = f"{estimate:.4f}"
    if np.isfinite(se):
        return f"{text} ({se:.4f})"
    if str(tag).startswith("fixed"):
        return f"{text} [fixed]"
    return text


def _wide(frame: pd.DataFrame, row_key, column_keys, row_order) -> pd.DataFrame:
    frame = frame.assign(cell=[_cell(e, s, t) for e, s, t in zip(frame["estimate"], frame["se"], frame["tag"])])
    columns = list(dict.fromkeys(tuple(k) for k in frame[column_keys].itertuples(index=False)))
    wide = pd.DataFrame("", index=row_order, columns=pd.MultiIndex.from_tuples(columns, names=column_keys))
    for _, row in frame.iterrows():
        wide.loc[row[row_key], tuple(row[k] for k in column_keys)] = row["cell"]
    return wide


def format_parameter_table(table: pd.DataFrame, n_observations=None, log_likelihood=None, bic=None) -> str:
    """
    Wide aligned text: rows are covariates (intercept first), columns are equation x class,
    standard errors in parentheses, and a footer with Observations, log-likelihood and BIC.
    """
    utilities = table.loc[~table["covariate"].eq("lambda")]
    rows = [INTERCEPT] + [c for c in dict.fromkeys(utilities["covariate"]) if c != INTERCEPT]
    wide = _wide(utilities.assign(klass=utilities["class"].map(lambda c: f"class{c}")),
                 "covariate", ["equation", "klass"], rows)
    lines = [wide.to_string()]
    lambdas = table.loc[table["covariate"].eq("lambda")]
    if len(lambdas):
        lines.append("")
        lines.append("Dissimilarity: " + ", ".join(f"{eq}={v:.4f}" for eq, v in zip(lambdas["equation"],
                                                                                lambdas["estimate"])))
    lines.append("")
    if n_observations is not None:
        lines.append(f"Observations: {n_observations}")
    if log_likelihood is not None:
        lines.append(f"Log-likelihood: {log_likelihood:.4f}")
    if bic is not None:
        lines.append(f"BIC (k*ln(N) - 2*LL): {bic:.2f}")
    lines.append("Standard errors in parentheses.")
    return "\n".join(lines) + "\n"


def format_membership_table(table: pd.DataFrame) -> str:
    rows = list(dict.fromkeys(table["predictor"]))
    wide = _wide(table.assign(klass=table["class"].map(lambda c: f"class{c}")), "predictor", ["klass"], rows)
    wide.columns = wide.columns.get_level_values(0)
    return wide.to_string() + "\n"


def effects_frame(table: EffectsTable) -> pd.DataFrame:
    return table.to_frame()


def format_effects(table: EffectsTable, digits=4) -> str:
    """
    Aligned text: mixture table, then one table per class; each ends with the base-probability row.
    """
    blocks = [("All classes", table.with_base())]
    blocks += [(f"Class {c + 1}", table.with_base(c)) for c in sorted(table.by_class)]
    lines = []
    for title, frame in blocks:
        lines.append(title)
        lines.append(frame.to_string(float_format=lambda v: f"{v:.{digits}f}"))
        lines.append("")
    if table.by_class:
        shares = ", ".join(f"class{c + 1}={s:.4f}" for c, s in enumerate(table.class_shares))
        lines.append(f"Class shares (mean H): {shares}; class weighting: {table.class_weighting}")
    return "\n".join(lines) + "\n"


def format_tabulation(table: pd.DataFrame) -> str:
    view = table[["question", "statement", "respondents", "affirmative", "percent"]]
    return view.to_string(index=False, float_format=lambda v: f"{v:.3f}") + "\n"


def write_frame(frame: pd.DataFrame, path):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8")


def write_text(text, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
