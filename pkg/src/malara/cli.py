"""Command-line entry point: extract, train, classify, obfuscate, evaluate.

Every subcommand validates its inputs before doing any work, writes its
outputs atomically and exits non-zero with a one-line message on error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .aroa import AroaConfig, classify_aroa_batch
from .attack import METAME_OPCODES, ObfuscationProfile, metame_profile, obfuscate
from .evaluation import fixed_source, run_study, synthetic_source, write_group_csv, write_report
from .features import (
    DEFAULT_WINDOW,
    FeatureSchema,
    FeatureTable,
    binarize,
    extract_table,
    list_inputs,
    read_feature_csv,
    write_feature_csv,
)
from .features.table import atomic_write_text
from .model import (
    FN_AVERSE,
    ZERO_ONE,
    ModelFileError,
    UtilityMatrix,
    classify_eq1,
    expected_utilities,
    fit,
    load_model,
    save_model,
)
from .synthetic import Dataset, SyntheticSpec, default_scenario

log = logging.getLogger("malara")

UTILITY_PRESETS = {"zero-one": ZERO_ONE, "fn-averse": FN_AVERSE}


class CLIError(Exception):
    pass


# --- argument helpers ----------------------------------------------------------------

def _existing_file(value: str) -> Path:
    path = Path(value)
    if not path.is_file():
        raise argparse.ArgumentTypeError(f"no such file: {value}")
    return path


def _existing_path(value: str) -> Path:
    path = Path(value)
    if not path.exists():
        raise argparse.ArgumentTypeError(f"no such file or directory: {value}")
    return path


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def _non_negative_float(value: str) -> float:
    x = float(value)
    if not x >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return x


def _positive_float(value: str) -> float:
    x = float(value)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return x


def _add_utility(p):
    p.add_argument("--utility", default="zero-one",
                   help="utility JSON {predicted: {actual: u}} or preset zero-one | fn-averse")


def _add_aroa_flags(p):
    g = p.add_argument_group("AROA configuration (flags override --aroa-config)")
    g.add_argument("--aroa-config", type=_existing_file, default=None,
                   help="JSON {L, var, max_attacks, max_origins, targeted, seed} (default: built-in values)")
    g.add_argument("--L", type=_positive_int, default=None,
                   help="Monte Carlo draws per origin (default: config value, else 700)")
    g.add_argument("--var", type=_positive_float, default=None,
                   help="attacker belief variance (default: config value, else 0.25)")
    g.add_argument("--max-attacks", type=_positive_int, default=None,
                   help="attack sample cap per origin (default: config value, else 20)")
    g.add_argument("--max-origins", type=_positive_int, default=None,
                   help="origin sample cap (default: config value, else 300)")
    g.add_argument("--targeted", default=None,
                   help="comma-separated attackable features, 'all-static' or 'metame' "
                        "(default: config value, else metame when the schema has those opcodes, "
                        "else all-static)")


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Shows defaults, except for required flags and unset overrides."""

    def _get_help_string(self, action):
        if action.required or action.default is None or action.default is False:
            return action.help
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    parser = argparse.ArgumentParser(prog="malara", formatter_class=fmt,
                                     description="Adversary-aware malware classification on binary features.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging (default: off)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", formatter_class=fmt, help="binaries -> feature CSV")
    p.add_argument("--input", type=_existing_path, required=True, help="binary file or directory")
    p.add_argument("--out", type=Path, required=True, help="output CSV")
    p.add_argument("--window", type=_positive_int, default=DEFAULT_WINDOW, help="entropy window in bytes")
    p.add_argument("--schema", type=_existing_file, default=None,
                   help="schema JSON; when given the CSV holds binarized schema columns (default: raw values)")

    p = sub.add_parser("train", formatter_class=fmt, help="labelled binary CSV -> model JSON")
    p.add_argument("--features", type=_existing_file, required=True, help="feature CSV with M/B labels")
    p.add_argument("--alpha", type=_non_negative_float, default=1.0, help="smoothing pseudo-count")
    p.add_argument("--model", type=Path, required=True, help="output model JSON")

    p = sub.add_parser("classify", formatter_class=fmt, help="label feature rows")
    p.add_argument("--model", type=_existing_file, required=True, help="model JSON")
    p.add_argument("--features", type=_existing_file, required=True, help="binary feature CSV")
    p.add_argument("--mode", choices=("nb", "aroa"), default="nb", help="classifier")
    _add_utility(p)
    _add_aroa_flags(p)
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", type=Path, required=True, help="predictions CSV")

    p = sub.add_parser("obfuscate", formatter_class=fmt, help="simulate obfuscation of malware rows")
    p.add_argument("--features", type=_existing_file, required=True, help="binary feature CSV")
    p.add_argument("--profile", default="metame", help="profile JSON or preset name 'metame'")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", type=Path, required=True, help="output CSV")

    p = sub.add_parser("evaluate", formatter_class=fmt, help="grouped NB / AROA study")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--train", type=_existing_file, default=None,
                     help="training CSV, requires --test (default: synthetic data)")
    src.add_argument("--synthetic", type=_existing_file, default=None,
                     help="synthetic spec JSON (default: built-in scenario)")
    p.add_argument("--test", type=_existing_file, default=None, help="test CSV, required with --train (default: none)")
    _add_utility(p)
    p.add_argument("--profile", default="metame", help="profile JSON, preset 'metame' or 'none'")
    p.add_argument("--mode", choices=("nb", "aroa", "both"), default="both", help="classifiers to score")
    p.add_argument("--groups", type=_positive_int, default=10, help="experiment groups")
    p.add_argument("--per-group", type=_positive_int, default=100, help="experiments per group")
    p.add_argument("--alpha", type=_non_negative_float, default=1.0, help="smoothing pseudo-count")
    _add_aroa_flags(p)
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--report", type=Path, default=Path("report.json"), help="output report JSON")
    p.add_argument("--group-csv", type=Path, default=None,
                   help="also write per-group metrics CSV (default: none)")
    return parser


# --- loaders -------------------------------------------------------------------------

def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CLIError(f"{path}: malformed JSON ({exc})") from None


def load_utility(value: str) -> UtilityMatrix:
    if value in UTILITY_PRESETS:
        return UTILITY_PRESETS[value]
    if not Path(value).is_file():
        raise CLIError(f"utility: no such file or preset: {value}")
    return UtilityMatrix.from_dict(_load_json(value))


def load_profile(value: str, names, dynamic=()) -> ObfuscationProfile | None:
    if value == "none":
        return None
    if value == "metame":
        return metame_profile(names, dynamic=dynamic)
    if not Path(value).is_file():
        raise CLIError(f"profile: no such file or preset: {value}")
    return ObfuscationProfile.from_dict(_load_json(value), names, dynamic)


def aroa_config(args, names, utility: UtilityMatrix, dynamic=()) -> AroaConfig:
    obj = _load_json(args.aroa_config) if args.aroa_config else {}
    for key, flag in (("L", args.L), ("var", args.var), ("max_attacks", args.max_attacks),
                      ("max_origins", args.max_origins)):
        if flag is not None:
            obj[key] = flag
    if args.targeted is not None:
        obj["targeted"] = args.targeted if args.targeted in ("all-static", "metame") else \
            [t.strip() for t in args.targeted.split(",") if t.strip()]
    obj.setdefault("targeted", "metame" if set(METAME_OPCODES) & set(names) else "all-static")
    obj["seed"] = args.seed
    return AroaConfig.from_dict(obj, names, dynamic, utility)


def _binary_matrix(table: FeatureTable) -> np.ndarray:
    vals = table.values
    if np.isnan(vals).any() or not np.isin(vals, (0, 1)).all():
        raise CLIError("features must be binary 0/1 cells; binarize with `extract --schema`")
    return vals.astype(np.uint8)


# --- subcommands ---------------------------------------------------------------------

def cmd_extract(args) -> int:
    paths = list_inputs(args.input)
    if not paths:
        raise CLIError(f"{args.input}: no input files")
    try:
        table = extract_table(paths, args.window)
    except OSError as exc:
        raise CLIError(f"cannot read {exc.filename}: {exc.strerror}") from None
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    if args.schema:
        schema = FeatureSchema.from_dict(_load_json(args.schema))
        table = FeatureTable(list(schema.names), table.labels, binarize(table, schema).astype(float), table.ids)
    write_feature_csv(args.out, table)
    print(f"extracted {len(table)} rows x {len(table.names)} features -> {args.out}")
    return 0


def cmd_train(args) -> int:
    table = read_feature_csv(args.features)
    if "?" in table.labels:
        raise CLIError(f"{args.features}: unlabelled rows ('?') cannot be used for training")
    X = _binary_matrix(table)
    model = fit(X, table.labels, args.alpha, table.names)
    save_model(model, args.model)
    n_m = table.labels.count("M")
    print(f"trained on {n_m} M / {len(table) - n_m} B rows, {model.n} features -> {args.model}")
    return 0


def _check_columns(table: FeatureTable, names) -> None:
    if tuple(table.names) != tuple(names):
        raise CLIError(f"schema mismatch: CSV has {len(table.names)} columns, model expects "
                       f"{len(names)} ({', '.join(names[:5])}{', ...' if len(names) > 5 else ''})")


def cmd_classify(args) -> int:
    model = load_model(args.model)
    table = read_feature_csv(args.features)
    _check_columns(table, model.feature_names)
    X = _binary_matrix(table)
    utility = load_utility(args.utility)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if args.mode == "nb":
        labels = classify_eq1(model, X, utility) if len(X) else []
        eu_m, eu_b = expected_utilities(model, X, utility) if len(X) else ([], [])
        writer.writerow(["row", "label", "eu_m", "eu_b"])
        for i, (lab, a, b) in enumerate(zip(labels, eu_m, eu_b)):
            writer.writerow([i, lab, repr(float(a)), repr(float(b))])
    else:
        cfg = aroa_config(args, model.feature_names, utility)
        print("aroa config: " + json.dumps(cfg.to_dict(model.feature_names)), file=sys.stderr)
        start = time.perf_counter()
        decisions = classify_aroa_batch(model, X, cfg)
        elapsed = time.perf_counter() - start
        writer.writerow(["row", "label", "eu_m", "eu_b", "n_origins"])
        for i, d in enumerate(decisions):
            writer.writerow([i, d.label, repr(d.eu_m), repr(d.eu_b), d.n_origins])
        per_row = elapsed / max(len(decisions), 1)
        print(f"aroa runtime: {elapsed:.2f} s total, {per_row * 1000:.1f} ms per row", file=sys.stderr)
    atomic_write_text(args.out, buf.getvalue())
    print(f"classified {len(table)} rows ({args.mode}) -> {args.out}")
    return 0


def cmd_obfuscate(args) -> int:
    table = read_feature_csv(args.features)
    profile = load_profile(args.profile, table.names)
    X = _binary_matrix(table)
    if profile is not None:
        m = np.array([lab == "M" for lab in table.labels], dtype=bool)
        X[m] = obfuscate(X[m], profile, np.random.default_rng(args.seed))
    write_feature_csv(args.out, FeatureTable(table.names, table.labels, X.astype(float), table.ids))
    print(f"obfuscated {sum(lab == 'M' for lab in table.labels)} malware rows -> {args.out}")
    return 0


def _summary_table(reports) -> str:
    fmt = lambda v: "-" if v is None else f"{v:.4f}"
    lines = [f"{'classifier':<10} {'DA':>8} {'FPR':>8} {'FNR':>8} {'utility':>8}"]
    for name, r in reports.items():
        lines.append(f"{name:<10} {fmt(r.da):>8} {fmt(r.fpr):>8} {fmt(r.fnr):>8} {fmt(r.mean_utility):>8}")
    return "\n".join(lines)


def cmd_evaluate(args) -> int:
    if (args.train is None) != (args.test is None):
        raise CLIError("--train and --test must be given together")
    utility = load_utility(args.utility)
    if args.train is not None:
        train = Dataset.from_table(read_feature_csv(args.train))
        test = Dataset.from_table(read_feature_csv(args.test))
        if test.feature_names != train.feature_names:
            raise CLIError("schema mismatch between --train and --test")
        source, names, dynamic = fixed_source(train, test), train.feature_names, ()
        data_config = {"train": str(args.train), "test": str(args.test)}
    else:
        spec = SyntheticSpec.load(args.synthetic) if args.synthetic else default_scenario()
        source, names, dynamic = synthetic_source(spec), spec.feature_names, spec.dynamic
        data_config = {"synthetic": spec.to_dict()}
    profile = load_profile(args.profile, names, dynamic)
    modes = {"nb": ("clean", "nb"), "aroa": ("clean", "aroa"), "both": ("clean", "nb", "aroa")}[args.mode]
    cfg = aroa_config(args, names, utility, dynamic) if "aroa" in modes else None
    config = {
        **data_config,
        "utility": utility.to_dict(),
        "profile": None if profile is None else profile.to_dict(),
        "mode": args.mode,
        "groups": args.groups,
        "per_group": args.per_group,
        "alpha": args.alpha,
        "seed": args.seed,
        "aroa": None if cfg is None else cfg.to_dict(names),
    }
    reports = run_study(source, profile=profile, utility=utility, aroa_cfg=cfg, modes=modes,
                        groups=args.groups, per_group=args.per_group, alpha=args.alpha, seed=args.seed)
    write_report(args.report, reports, config)
    if args.group_csv is not None:
        write_group_csv(args.group_csv, reports)
    print(_summary_table(reports))
    print(f"report -> {args.report}")
    return 0


COMMANDS = {"extract": cmd_extract, "train": cmd_train, "classify": cmd_classify,
            "obfuscate": cmd_obfuscate, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CLIError, ModelFileError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"malara {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
