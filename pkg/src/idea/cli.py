"""Command line front end.

Subcommands:

* generate  — synthetic datasets (Legendre profiles, benchmark
              manifolds, or a surrogate flow matrix) to CSV
* train     — fit the gated autoencoder, write checkpoints at the
              estimated dimension and its neighbours, a report JSON
              and a loss-history CSV
* estimate  — alias of train
* baselines — classical estimators on a dataset, comparison CSV
* analyze   — latent/moment correlation and truncation-loss curves
              for a trained checkpoint on a flow matrix
* report    — merge estimate reports (and optional baseline CSVs)
              into one summary table

Every command accepts --seed (falling back to the IDEA_SEED
environment variable, then 0) and writes a run manifest JSON listing
each output file with its sha256; re-running the same seeded command
reproduces the hashes bit for bit. Train hyperparameters may also come
from a `key = value` config file; explicit flags win over the file,
the file wins over defaults.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from idea import __version__
from idea.baselines import ESTIMATORS, EstimatorError, compare_estimators
from idea.datasets import (LegendreSpec, ManifoldSpec, MANIFOLDS,
                           gen_legendre_profiles, gen_manifold, read_matrix_csv,
                           rescale_unit, standardize, write_matrix_csv, write_sidecar)
from idea.engine import ContractError
from idea.flow import (FlowDataset, gen_surrogate_flow, latent_moment_report,
                       load_flow_matrix, truncation_loss, write_correlation_csv)
from idea.model import IdeaModel
from idea.trainer import (EstimateReport, TrainConfig, TrainingAbort,
                          run_training, write_loss_history_csv)

MANIFEST_FORMAT = "idea-run-manifest"
MANIFEST_SCHEMA_VERSION = 1


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(path, command, argv, seed, outputs, config=None, started=None):
    payload = {
        "format": MANIFEST_FORMAT,
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "seed": seed,
        "config": config,
        "outputs": [{"path": str(p), "sha256": _sha256(p)} for p in outputs],
        "started_utc": started,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _default_seed():
    env = os.environ.get("IDEA_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ContractError(f"IDEA_SEED must be an integer, got {env!r}")


def _parse_degrees(text):
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip() != "")
    except ValueError:
        raise ContractError(f"expected comma-separated integers, got {text!r}")


# ------------------------------------------------------------- generate

def cmd_generate(args, argv):
    started = datetime.now(timezone.utc).isoformat()
    seed = args.seed if args.seed is not None else _default_seed()
    chosen = [name for name, val in
              (("--legendre", args.legendre), ("--manifold", args.manifold),
               ("--flow-surrogate", args.flow_surrogate)) if val]
    if len(chosen) != 1:
        raise ContractError(
            f"choose exactly one of --legendre/--manifold/--flow-surrogate, got {chosen}")
    if args.standardize and args.rescale_unit:
        raise ContractError("--standardize and --rescale-unit are mutually exclusive")
    transform = standardize if args.standardize else (
        rescale_unit if args.rescale_unit else None)

    outputs = [args.output]
    sidecar = {"seed": seed, "n": args.n}
    if args.legendre:
        spec = LegendreSpec(S=_parse_degrees(args.legendre), n=args.n,
                            n_zeta=args.n_zeta, seed=seed)
        matrix, coeffs = gen_legendre_profiles(spec)
        if transform is not None:
            matrix = transform(matrix)
        write_matrix_csv(args.output, matrix)
        if args.coeffs:
            write_matrix_csv(args.coeffs, coeffs)
            outputs.append(args.coeffs)
        sidecar.update(kind="legendre", S=list(spec.S), n_zeta=spec.n_zeta,
                       true_d=len(spec.S))
    elif args.manifold:
        spec = ManifoldSpec(name=args.manifold, n=args.n, seed=seed)
        matrix = gen_manifold(spec)
        if transform is not None:
            matrix = transform(matrix)
        write_matrix_csv(args.output, matrix)
        sidecar.update(kind="manifold", name=spec.name, true_d=spec.true_d, p=spec.p)
    else:
        if transform is not None:
            flag = "--standardize" if args.standardize else "--rescale-unit"
            raise ContractError(
                f"{flag} does not apply to --flow-surrogate: "
                "the h column must stay in physical units")
        flow = gen_surrogate_flow(_parse_degrees(args.flow_surrogate), args.n,
                                  n_zeta=args.n_zeta, seed=seed)
        write_matrix_csv(args.output, flow.matrix)
        sidecar.update(kind="flow-surrogate", S=list(_parse_degrees(args.flow_surrogate)),
                       n_zeta=args.n_zeta, true_d=len(_parse_degrees(args.flow_surrogate)) + 1)
    if args.standardize:
        sidecar["standardize"] = True
    if args.rescale_unit:
        sidecar["rescale_unit"] = True

    if args.sidecar:
        write_sidecar(args.sidecar, sidecar)
        outputs.append(args.sidecar)
    manifest = args.manifest or (args.output + ".manifest.json")
    _write_manifest(manifest, "generate", argv, seed, outputs, started=started)
    print(f"wrote {args.output} ({sidecar.get('kind')}, n={args.n}, seed={seed})")
    return 0


# ---------------------------------------------------------------- train

CONFIG_FIELDS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _read_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ContractError(f"{path}:{lineno}: expected 'key = value', got {text!r}")
            key, _, raw = text.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in CONFIG_FIELDS:
                raise ContractError(f"{path}:{lineno}: unknown option {key!r}")
            values[key] = raw
    return values


def _coerce(key, raw):
    kind = CONFIG_FIELDS[key]
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    if kind in (bool, "bool"):
        if isinstance(raw, bool):
            return raw
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ContractError(f"cannot parse boolean {raw!r} for {key}")
    return raw


def _build_config(args) -> TrainConfig:
    file_values = _read_config_file(args.config) if args.config else {}
    merged = {}
    for key in CONFIG_FIELDS:
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            merged[key] = cli_val
        elif key in file_values:
            merged[key] = _coerce(key, file_values[key])
    if "seed" not in merged:
        merged["seed"] = _default_seed()
    if "l_init" not in merged:
        raise ContractError("l_init is required (flag --l-init or config file)")
    return TrainConfig(**merged).validate()


def cmd_train(args, argv):
    started = datetime.now(timezone.utc).isoformat()
    config = _build_config(args)

    data = read_matrix_csv(args.data)
    h_column = None
    if config.swe:
        if args.n_zeta is not None and data.shape[1] != args.n_zeta + 1:
            raise ContractError(
                f"{args.data}: swe mode with --n-zeta {args.n_zeta} expects "
                f"{args.n_zeta + 1} columns, got {data.shape[1]}")
        h_column = data[:, 0]

    progress = None
    if args.verbose:
        def progress(epoch, row):
            if epoch == 1 or epoch % args.log_every == 0:
                print(f"epoch {epoch}: l_eff={row['l_eff']} "
                      f"total={row['total']:.4e} test={row['test_loss']:.4e}",
                      file=sys.stderr)

    try:
        best, report = run_training(data, config, h_column=h_column, progress=progress)
    except TrainingAbort as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        if exc.diagnostics:
            print(json.dumps(exc.diagnostics, indent=2), file=sys.stderr)
        return 1

    prefix = args.output
    outputs = []
    report_path = f"{prefix}_report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json(include_wall_time=args.record_timing))
    outputs.append(report_path)

    history_path = f"{prefix}_history.csv"
    write_loss_history_csv(report, history_path)
    outputs.append(history_path)

    for k in (report.d_tilde - 1, report.d_tilde, report.d_tilde + 1):
        if k in best:
            ck_path = f"{prefix}_ckpt_d{k}.json"
            best[k].model.save(ck_path)
            outputs.append(ck_path)

    manifest = args.manifest or f"{prefix}_manifest.json"
    _write_manifest(manifest, "train", argv, config.seed, outputs,
                    config=dataclasses.asdict(config), started=started)
    print(report.summary())
    return 0


# ------------------------------------------------------------ baselines

def cmd_baselines(args, argv):
    started = datetime.now(timezone.utc).isoformat()
    seed = args.seed if args.seed is not None else _default_seed()
    names = [tok.strip() for tok in args.estimators.split(",") if tok.strip()]
    if not names:
        raise EstimatorError("no estimators selected")
    data = read_matrix_csv(args.data)
    results = compare_estimators(data, estimators=names, true_d=args.true_d)

    lines = ["estimator,estimate"]
    for name in names:
        lines.append(f"{name},{format(float(results[name]), '.17g')}")
    if args.true_d is not None:
        lines.append(f"true_d,{args.true_d}")
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        fh.write("\r\n".join(lines) + "\r\n")

    manifest = args.manifest or (args.output + ".manifest.json")
    _write_manifest(manifest, "baselines", argv, seed, [args.output], started=started)
    for name in names:
        print(f"{name}: {results[name]:.4g}")
    return 0


# -------------------------------------------------------------- analyze

def cmd_analyze(args, argv):
    started = datetime.now(timezone.utc).isoformat()
    seed = args.seed if args.seed is not None else _default_seed()
    model = IdeaModel.load(args.checkpoint)
    flow = load_flow_matrix(args.data, args.n_zeta, n_x=args.n_x, n_t=args.n_t,
                            t0=args.t0)
    if model.p != args.n_zeta + 1:
        raise ContractError(
            f"checkpoint expects inputs of width {model.p}, flow matrix rows "
            f"have {args.n_zeta + 1} entries")

    labels, matrix = latent_moment_report(model, flow, args.k_max)
    corr_path = f"{args.output}_correlations.csv"
    write_correlation_csv(corr_path, labels, matrix)

    trunc_path = f"{args.output}_truncation.csv"
    lines = ["K,relative_loss"]
    for k in range(args.k_max + 1):
        lines.append(f"{k},{format(truncation_loss(flow.profiles, k), '.17g')}")
    with open(trunc_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\r\n".join(lines) + "\r\n")

    manifest = args.manifest or f"{args.output}_manifest.json"
    _write_manifest(manifest, "analyze", argv, seed, [corr_path, trunc_path],
                    started=started)

    d = model.effective_dim()
    print(f"active latent coordinates: {d}")
    for i in range(d):
        row = matrix[i]
        best_j = int(np.argmax(np.abs(row[d:])))
        print(f"  {labels[i]}: strongest partner {labels[d + best_j]} "
              f"(corr {row[d + best_j]:+.3f})")
    return 0


# --------------------------------------------------------------- report

def cmd_report(args, argv):
    started = datetime.now(timezone.utc).isoformat()
    seed = args.seed if args.seed is not None else _default_seed()
    rows = []
    for path in args.reports:
        with open(path, encoding="utf-8") as fh:
            rep = EstimateReport.from_json(fh.read())
        rows.append({
            "source": path,
            "d_tilde": rep.d_tilde,
            "loss_below": rep.losses.get(rep.d_tilde - 1),
            "loss_at": rep.losses.get(rep.d_tilde),
            "loss_above": rep.losses.get(rep.d_tilde + 1),
            "epochs": rep.config.epochs,
            "seed": rep.config.seed,
        })

    baseline_rows = []
    if args.baselines:
        for path in args.baselines:
            with open(path, encoding="utf-8") as fh:
                for line in fh.read().splitlines()[1:]:
                    name, _, value = line.partition(",")
                    if name:
                        baseline_rows.append({"source": path, "estimator": name,
                                              "estimate": value})

    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return format(v, ".17g")
        return str(v)

    cols = ["source", "d_tilde", "loss_below", "loss_at", "loss_above", "epochs", "seed"]
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(fmt(row[c]) for c in cols))
    for row in baseline_rows:
        lines.append(f"{row['source']},baseline:{row['estimator']}={row['estimate']},,,,,")
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        fh.write("\r\n".join(lines) + "\r\n")

    manifest = args.manifest or (args.output + ".manifest.json")
    _write_manifest(manifest, "report", argv, seed, [args.output], started=started)

    width = max(len(r["source"]) for r in rows) if rows else 6
    print(f"{'source':<{width}}  d~  loss(d~-1)   loss(d~)     loss(d~+1)")
    for r in rows:
        print(f"{r['source']:<{width}}  {r['d_tilde']:<3d} "
              f"{fmt_sci(r['loss_below'])} {fmt_sci(r['loss_at'])} {fmt_sci(r['loss_above'])}")
    for r in baseline_rows:
        print(f"{r['source']}: {r['estimator']} = {r['estimate']}")
    return 0


def fmt_sci(v):
    return f"{v:<12.4e}" if v is not None else " " * 12


# ----------------------------------------------------------------- main

def build_parser():
    parser = argparse.ArgumentParser(
        prog="idea",
        description="Intrinsic dimension estimation with a gated autoencoder")
    parser.add_argument("--version", action="version", version=f"idea {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset CSV")
    gen.add_argument("--legendre", metavar="DEGREES",
                     help="comma-separated degree set S, e.g. 3,5,6,7")
    gen.add_argument("--manifold", choices=sorted(MANIFOLDS),
                     help="benchmark manifold name")
    gen.add_argument("--flow-surrogate", metavar="DEGREES",
                     help="Legendre profiles plus an independent h column")
    gen.add_argument("--n", type=int, required=True, help="number of samples")
    gen.add_argument("--n-zeta", type=int, default=100, help="grid size (default 100)")
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--standardize", action="store_true",
                     help="z-score each column before writing (not for flow data)")
    gen.add_argument("--rescale-unit", action="store_true",
                     help="min-max each column to [0,1] before writing (not for flow data)")
    gen.add_argument("-o", "--output", required=True, help="output CSV path")
    gen.add_argument("--coeffs", help="also write Legendre coefficients CSV here")
    gen.add_argument("--sidecar", help="write spec JSON here")
    gen.add_argument("--manifest", help="manifest path (default <output>.manifest.json)")
    gen.set_defaults(func=cmd_generate)

    for name in ("train", "estimate"):
        tr = sub.add_parser(name, help="train and estimate intrinsic dimension")
        tr.add_argument("data", help="input data CSV")
        tr.add_argument("-o", "--output", required=True,
                        help="output prefix for report/history/checkpoints")
        tr.add_argument("--config", help="key = value config file")
        tr.add_argument("--l-init", dest="l_init", type=int, default=None,
                        help="initial bottleneck width (required here or in config)")
        tr.add_argument("--epochs", type=int, default=None)
        tr.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        tr.add_argument("--lr", type=float, default=None)
        tr.add_argument("--lr-co1", dest="lr_co1", type=float, default=None)
        tr.add_argument("--lambda-rec", dest="lambda_rec", type=float, default=None)
        tr.add_argument("--lambda-reg", dest="lambda_reg", type=float, default=None)
        tr.add_argument("--lambda-orth", dest="lambda_orth", type=float, default=None)
        tr.add_argument("--alpha", type=float, default=None)
        tr.add_argument("--scheduler-step", dest="scheduler_step", type=int, default=None)
        tr.add_argument("--scheduler-gamma", dest="scheduler_gamma", type=float,
                        default=None)
        tr.add_argument("--test-fraction", dest="test_fraction", type=float, default=None)
        tr.add_argument("--seed", type=int, default=None)
        tr.add_argument("--swe", dest="swe", action="store_const", const=True,
                        default=None, help="flow mode: column 0 is h, matched by L0")
        tr.add_argument("--n-zeta", type=int, default=None,
                        help="validate column count in swe mode")
        tr.add_argument("--record-timing", action="store_true",
                        help="include wall time in the report JSON "
                             "(off by default to keep outputs hash-reproducible)")
        tr.add_argument("--verbose", action="store_true")
        tr.add_argument("--log-every", type=int, default=50)
        tr.add_argument("--manifest", help="manifest path (default <prefix>_manifest.json)")
        tr.set_defaults(func=cmd_train)

    bl = sub.add_parser("baselines", help="classical estimators on a dataset")
    bl.add_argument("data", help="input data CSV")
    bl.add_argument("--estimators", default="twonn,mle,lpca",
                    help=f"comma-separated subset of {sorted(ESTIMATORS)}")
    bl.add_argument("--true-d", dest="true_d", type=int, default=None)
    bl.add_argument("--seed", type=int, default=None)
    bl.add_argument("-o", "--output", required=True, help="comparison CSV path")
    bl.add_argument("--manifest")
    bl.set_defaults(func=cmd_baselines)

    an = sub.add_parser("analyze", help="latent/moment correlations for a checkpoint")
    an.add_argument("--checkpoint", required=True)
    an.add_argument("--data", required=True, help="flow matrix CSV (h + profiles)")
    an.add_argument("--n-zeta", dest="n_zeta", type=int, required=True)
    an.add_argument("--k-max", dest="k_max", type=int, default=6)
    an.add_argument("--n-x", dest="n_x", type=int, default=None)
    an.add_argument("--n-t", dest="n_t", type=int, default=None)
    an.add_argument("--t0", type=float, default=None)
    an.add_argument("--seed", type=int, default=None)
    an.add_argument("-o", "--output", required=True, help="output prefix")
    an.add_argument("--manifest")
    an.set_defaults(func=cmd_analyze)

    rp = sub.add_parser("report", help="summarize estimate reports")
    rp.add_argument("reports", nargs="+", help="report JSON paths")
    rp.add_argument("--baselines", nargs="*", help="baseline comparison CSVs")
    rp.add_argument("--seed", type=int, default=None)
    rp.add_argument("-o", "--output", required=True, help="summary CSV path")
    rp.add_argument("--manifest")
    rp.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except (ContractError, EstimatorError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
