import argparse
import json
import os
import sys

import pandas as pd

from ab.lcnl.conf.config import RunConfig, load_config
from ab.lcnl.util import reports
from ab.lcnl.util.Annealer import CONVERGED, anneal_parameters
from ab.lcnl.util.ParameterSet import ParameterSet
from ab.lcnl.util.Simulator import SimulationSpec, default_truth, simulate_dataset
from ab.lcnl.util.data_loader import aggregate_kalym, code_aksakal_governance, load_dataset, load_schema, \
    read_table, tabulate_advantages, write_dataset
from ab.lcnl.util.effects import marginal_effects
from ab.lcnl.util.errors import LcnlError, SingularHessianError
from ab.lcnl.util.inference import sandwich_covariance
from ab.lcnl.util.likelihood import LikelihoodObjective, log_likelihood
from ab.lcnl.util.numdiff import StepPolicy
from ab.lcnl.util.validation import CheckResult, run_checks

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2

COMMANDS = ("estimate", "effects", "simulate", "tabulate", "validate")


def _output_dir(cfg: RunConfig) -> str:
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def read_params(cfg: RunConfig, path) -> ParameterSet:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Parameter file not found: {path}")
    frame = pd.read_csv(path, dtype={"name": str, "tag": str})
    return ParameterSet.from_frame(cfg.layout(), frame)


def write_params(params: ParameterSet, path):
    reports.write_frame(params.to_frame(), path)


def truth_params(cfg: RunConfig) -> ParameterSet:
    simulation = cfg.data.get("simulation") or {}
    if simulation.get("truth"):
        return read_params(cfg, cfg.resolve(simulation["truth"]))
    layout = cfg.layout()
    seed = simulation.get("truth_seed")
    return default_truth(layout, seed=cfg.seed if seed is None else seed, tags=cfg.tags(layout))


def build_dataset(cfg: RunConfig, verbose=True):
    """
    Returns (dataset, generating parameters or None) for the configured data source.
    """
    if cfg.data_source() == "file":
        data = load_dataset(cfg.resolve(cfg.data["path"]), cfg.resolve(cfg.data.get("schema")),
                            cfg.resolve(cfg.data.get("community_path")), cfg.resolve(cfg.data.get("marriage_path")),
                            bool(cfg.data.get("standardize_income", False)), verbose=verbose)
        return data, None
    truth = truth_params(cfg)
    spec = SimulationSpec.from_dict(cfg.data["simulation"], truth, seed=cfg.data["simulation"].get("seed", cfg.seed))
    return simulate_dataset(spec, verbose=verbose), truth


def _write_metadata(out, metadata: dict):
    with open(os.path.join(out, "metadata.json"), "w", encoding="utf-8") as f:
        json.dump(metadata, f, indent=2, default=str)


def cmd_estimate(cfg: RunConfig) -> int:
    out = _output_dir(cfg)
    data, truth = build_dataset(cfg)
    layout = cfg.layout()
    start = ParameterSet(layout, tags=cfg.tags(layout))
    anneal_cfg = cfg.anneal_config()
    print(f"[INFO] estimating {start.n_free} free parameters on {len(data)} observations "
          f"({cfg.threads} threads, seed {anneal_cfg.seed})")
    with LikelihoodObjective(data, start, workers=cfg.threads) as objective:
        params_hat, trace = anneal_parameters(objective, start, anneal_cfg)
    report = log_likelihood(data, params_hat, workers=cfg.threads)
    print(f"[INFO] annealing {trace.status} after {trace.evaluations} evaluations; LL = {report.log_likelihood:.6f}")

    se, covariance_info = None, {"covariance_mode": None}
    inference = cfg["inference"]
    if inference.get("enabled", True):
        policy = StepPolicy(float(inference.get("gradient_step", 1e-6)), float(inference.get("hessian_step", 1e-4)))
        try:
            cov = sandwich_covariance(data, params_hat, bool(inference.get("literal_eq15", False)),
                                      float(inference.get("ridge_cap", 1e-2)), policy, cfg.threads, verbose=True)
            se = cov.standard_errors
            covariance_info = cov.diagnostics()
            reports.write_frame(cov.to_frame().reset_index().rename(columns={"index": "name"}),
                                os.path.join(out, "covariance.csv"))
        except SingularHessianError as e:
            print(f"[WARN] {e}; standard errors are not reported")
            covariance_info = {"covariance_mode": None, "error": str(e), "min_eigenvalue": e.min_eigenvalue,
                               "condition_number": e.condition_number}

    table = reports.parameter_table(params_hat, se)
    membership = reports.membership_table(params_hat, se)
    reports.write_frame(table, os.path.join(out, "parameters.csv"))
    reports.write_text(reports.format_parameter_table(table, report.n_observations, report.log_likelihood,
                                                      report.bic), os.path.join(out, "parameters.txt"))
    reports.write_frame(membership, os.path.join(out, "membership.csv"))
    reports.write_text(reports.format_membership_table(membership), os.path.join(out, "membership.txt"))
    write_params(params_hat, os.path.join(out, "params_hat.csv"))
    trace.write_tsv(os.path.join(out, "anneal_trace.tsv"))

    metadata = {"command": "estimate", "seed": cfg.seed, **report.to_dict(), "anneal": trace.summary(),
                "covariance": covariance_info, "data": data.provenance}
    if truth is not None:
        metadata["log_likelihood_truth"] = log_likelihood(data, truth, workers=cfg.threads).log_likelihood
    _write_metadata(out, metadata)
    print(f"[INFO] results written to {out}")
    return EXIT_OK if trace.status == CONVERGED else EXIT_NOT_CONVERGED


def cmd_effects(cfg: RunConfig) -> int:
    out = _output_dir(cfg)
    section = cfg["effects"]
    path = cfg.resolve(section.get("params")) if section.get("params") else os.path.join(out, "params_hat.csv")
    params = read_params(cfg, path)
    data, _ = build_dataset(cfg)
    table = marginal_effects(data, params, variables=section.get("variables"),
                             binary_mode=section.get("binary_mode", "discrete"),
                             class_weighting=section.get("class_weighting", "membership"))
    reports.write_frame(reports.effects_frame(table), os.path.join(out, "effects.csv"))
    reports.write_text(reports.format_effects(table), os.path.join(out, "effects.txt"))
    print(f"[INFO] marginal effects for {len(table.variables)} variables written to {out}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.data_source() != "simulation":
        raise LcnlError("simulate needs a data.simulation block")
    out = _output_dir(cfg)
    data, truth = build_dataset(cfg)
    write_dataset(data, os.path.join(out, "dataset.csv"))
    write_params(truth, os.path.join(out, "truth.csv"))
    print(f"[INFO] simulated dataset and generating parameters written to {out}")
    return EXIT_OK


def cmd_tabulate(cfg: RunConfig) -> int:
    out = _output_dir(cfg)
    section = cfg["tabulate"]
    schema = load_schema(cfg.resolve(cfg.data.get("schema")))
    wrote = False
    if section.get("path"):
        frame = read_table(cfg.resolve(section["path"]), schema["columns"], allow_extra=True)
        table = tabulate_advantages(frame, section.get("kidnapper_filter"))
        reports.write_frame(table, os.path.join(out, "advantages.csv"))
        reports.write_text(reports.format_tabulation(table), os.path.join(out, "advantages.txt"))
        wrote = True
    if cfg.data.get("community_path"):
        columns = schema["community_file"]["columns"]
        flags = code_aksakal_governance(read_table(cfg.resolve(cfg.data["community_path"]), columns, tuple(columns),
                                                   allow_extra=True))
        reports.write_frame(flags, os.path.join(out, "aksakal.csv"))
        print(f"[INFO] {int(flags['aksakal'].sum())} of {len(flags)} communities are aksakal-governed")
        wrote = True
    if cfg.data.get("marriage_path"):
        columns = schema["marriage_file"]["columns"]
        prices = aggregate_kalym(read_table(cfg.resolve(cfg.data["marriage_path"]), columns, tuple(columns),
                                            allow_extra=True))
        reports.write_frame(prices, os.path.join(out, "kalym.csv"))
        wrote = True
    if not wrote:
        raise LcnlError("tabulate needs tabulate.path, data.community_path or data.marriage_path")
    print(f"[INFO] tabulations written to {out}")
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    layout = cfg.layout()
    section = cfg["validate"]
    try:
        if section.get("params"):
            params = read_params(cfg, cfg.resolve(section["params"]))
        else:
            params = default_truth(layout, seed=cfg.seed, tags=cfg.tags(layout))
    except (LcnlError, ValueError, KeyError, FileNotFoundError) as e:
        print(CheckResult("parameter file", False, str(e)).line())
        return EXIT_CONFIG
    data, _ = build_dataset(cfg, verbose=False)
    results = run_checks(data, params, int(section.get("draws", 200)), cfg.seed, workers=cfg.threads)
    failed = [r for r in results if not r.passed]
    print(f"[INFO] {len(results) - len(failed)} of {len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_CONFIG


HANDLERS = {"estimate": cmd_estimate, "effects": cmd_effects, "simulate": cmd_simulate,
            "tabulate": cmd_tabulate, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m ab.lcnl.cli",
                                     description="Latent-class nested logit estimation engine.")
    parser.add_argument("command", choices=COMMANDS, nargs="?", help="Pipeline step to run.")
    parser.add_argument("config", nargs="?", help="Path to the JSON run configuration.")
    parser.add_argument("--seed", type=int, default=None, help="Overrides the configured seed.")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads for likelihood evaluation.")
    parser.add_argument("--out", default=None, help="Output directory (overrides output_dir).")
    parser.add_argument("--print-config", action="store_true",
                        help="Print the merged configuration with all defaults and exit.")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = {"seed": args.seed, "threads": args.threads}
        if args.out is not None:
            overrides["output_dir"] = os.path.abspath(args.out)
        cfg = load_config(args.config, overrides)
        if args.print_config:
            print(cfg.to_json())
            return EXIT_OK
        if args.command is None or args.config is None:
            parser.print_usage(sys.stderr)
            print("[ERROR] a command and a config path are required", file=sys.stderr)
            return EXIT_CONFIG
        cfg.validate(needs_data=args.command not in ("tabulate",))
        return HANDLERS[args.command](cfg)
    except (LcnlError, FileNotFoundError) as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
