"""Command-line interface.

Four subcommands bind the pipeline into reproducible runs: ``extract``
(manifest -> feature cache CSV), ``train`` (feature CSV -> model JSON),
``predict`` (model + images or features -> verdict lines), and ``eval``
(manifest -> reports, tables and figures).

Option values resolve as: command-line flags override the optional config
file (TOML or JSON, ``--config``), which overrides built-in defaults. The
resolved configuration is echoed into every output artifact. Exit codes:
0 success, 2 input or contract error, 3 training infeasible, 4 fingerprint
mismatch, 1 internal error.
"""

import functools
import hashlib
import json
import os
import sys
from pathlib import Path

import click

from ._version import __version__
from .benford import AlphaOneError, LengthMismatchError, ZeroValueError
from .evaluate import (
    CACHE_DIR_ENV,
    EmptyStratumError,
    MissingCacheError,
    TooFewGroupsError,
    evaluate_logo,
    evaluate_split,
    extract_manifest_features,
    jpeg_scenario,
    load_manifest,
    sweep,
    write_marginals_csv,
    write_sweep_csv,
)
from .features import FeatureConfig, extract_features, read_feature_csv, write_feature_csv
from .forest import (
    ForestHyperparams,
    FingerprintMismatchError,
    LabeledSample,
    SingleClassError,
    load_model,
    predict_matrix,
    save_model,
    train_forest,
)
from .imageio import DecodeError, EncodeError, TooSmallError, load_image, to_luma
from . import report as figures

_CONTRACT_ERRORS = (
    ValueError,
    FileNotFoundError,
    DecodeError,
    EncodeError,
    TooSmallError,
    ZeroValueError,
    LengthMismatchError,
    AlphaOneError,
    TooFewGroupsError,
    EmptyStratumError,
    MissingCacheError,
)


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SingleClassError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
        except FingerprintMismatchError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(4)
        except _CONTRACT_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except click.ClickException:
            raise
        except Exception as exc:
            click.echo(f"internal error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _load_config_file(path):
    if path is None:
        return {}
    text = Path(path).read_bytes()
    if str(path).endswith(".json"):
        return json.loads(text)
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text.decode())


def _resolve(ctx, file_cfg: dict, names):
    """flags > config file > defaults, using click's parameter sources."""
    resolved = {}
    for name in names:
        src = ctx.get_parameter_source(name)
        if src is not None and src.name == "COMMANDLINE":
            resolved[name] = ctx.params[name]
        elif name in file_cfg:
            resolved[name] = file_cfg[name]
        else:
            resolved[name] = ctx.params[name]
    return resolved


def _parse_ints(text):
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v != "")


def _feature_config(resolved) -> FeatureConfig:
    return FeatureConfig(
        bases=_parse_ints(resolved["bases"]),
        freqs=_parse_ints(resolved["freqs"]),
        qfs=_parse_ints(resolved["qfs"]),
        alpha=float(resolved["alpha"]),
    )


def _run_config(command, resolved, extra=None) -> dict:
    rc = {"command": command, "tool_version": __version__}
    rc.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in resolved.items()})
    if extra:
        rc.update(extra)
    return rc


_feature_options = [
    click.option("--bases", default="10,20,40,60", show_default=True,
                 help="Comma-separated first-digit bases."),
    click.option("--freqs", default="1,2,3,4,5,6,7,8,9", show_default=True,
                 help="Comma-separated zig-zag AC frequencies."),
    click.option("--qfs", default="80,85,90,95,100", show_default=True,
                 help="Comma-separated JPEG quality factors."),
    click.option("--alpha", default=2.0, show_default=True,
                 help="Divergence order (must not be 1)."),
]


def _with(options):
    def deco(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn

    return deco


@click.group()
@click.version_option(version=__version__)
def main():
    """Benford-law GAN-image detector."""


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--config", "config_file", type=click.Path(exists=True), default=None,
              help="TOML or JSON file with defaults for the other options.")
@_with(_feature_options)
@click.option("--jobs", default=os.cpu_count(), show_default="cpu count",
              help="Parallel extraction workers.")
@click.option("--out", required=True, type=click.Path(), help="Feature cache CSV to write.")
@click.option("--strict", is_flag=True, help="Abort on the first failed image.")
@click.pass_context
@_exit_codes
def extract(ctx, manifest, config_file, bases, freqs, qfs, alpha, jobs, out, strict):
    """Extract feature vectors for every image in a manifest."""
    file_cfg = _load_config_file(config_file)
    resolved = _resolve(ctx, file_cfg, ["bases", "freqs", "qfs", "alpha", "jobs", "strict"])
    cfg = _feature_config(resolved)
    data = load_manifest(manifest)
    if not data.entries:
        click.echo("error: empty manifest", err=True)
        sys.exit(2)
    click.echo(f"extracting {len(data.entries)} images ({cfg.dimensionality} features)", err=True)

    def progress(done, total):
        if done % 25 == 0 or done == total:
            click.echo(f"extracted {done}/{total}", err=True)

    table, failures = extract_manifest_features(
        data, cfg, jobs=int(resolved["jobs"]), strict=resolved["strict"], progress=progress
    )
    run_config = _run_config("extract", resolved, {"manifest": str(manifest), "out": str(out)})
    write_feature_csv(out, list(table.rows()), cfg, run_config=run_config)
    click.echo(f"wrote {len(table.paths)} rows to {out}", err=True)
    for f in failures:
        click.echo(f"failed: {f}", err=True)
    if failures:
        sys.exit(2)


@main.command()
@click.option("--features", "features_csv", required=True, type=click.Path(exists=True))
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--trees", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Model JSON to write.")
@click.pass_context
@_exit_codes
def train(ctx, features_csv, config_file, trees, seed, out):
    """Train a Random Forest on a feature cache CSV."""
    file_cfg = _load_config_file(config_file)
    resolved = _resolve(ctx, file_cfg, ["trees", "seed"])
    meta, paths, labels, groups, matrix = read_feature_csv(features_csv)
    hp = ForestHyperparams(tree_count=int(resolved["trees"]))
    samples = [
        LabeledSample(features=matrix[i], label=int(labels[i]), group=groups[i],
                      sample_id=paths[i])
        for i in range(len(paths))
    ]
    model = train_forest(
        samples,
        hp,
        seed=int(resolved["seed"]),
        config_fingerprint=meta["fingerprint"],
        feature_config=meta["config"],
    )
    run_config = _run_config("train", resolved, {"features": str(features_csv), "out": str(out)})
    save_model(model, out, run_config=run_config)
    oob = "n/a" if model.oob_accuracy is None else f"{model.oob_accuracy:.4f}"
    click.echo(f"out-of-bag accuracy: {oob}")
    click.echo(f"wrote model to {out}", err=True)


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--features", "features_csv", type=click.Path(exists=True), default=None,
              help="Precomputed feature cache instead of raw images.")
@click.argument("images", nargs=-1, type=click.Path(exists=True))
@_exit_codes
def predict(model_path, features_csv, images):
    """Classify images (or cached features): one `path,label,score` line each."""
    model = load_model(model_path)
    if features_csv is None and not images:
        click.echo("error: provide image paths or --features", err=True)
        sys.exit(2)
    if features_csv is not None:
        meta, paths, _, _, matrix = read_feature_csv(features_csv)
        if meta["fingerprint"] != model.config_fingerprint:
            raise FingerprintMismatchError(
                f"features fingerprint {meta['fingerprint']!r} != "
                f"model fingerprint {model.config_fingerprint!r}"
            )
        rows = list(zip(paths, matrix))
    else:
        if model.feature_config is None:
            click.echo("error: model stores no feature configuration", err=True)
            sys.exit(2)
        cfg = FeatureConfig.from_dict(model.feature_config)
        rows = []
        for path in images:
            fv = extract_features(to_luma(load_image(path)), cfg)
            rows.append((path, fv.values))
    for path, values in rows:
        labels, scores = predict_matrix(model, values[None, :])
        click.echo(f"{path},{int(labels[0])},{scores[0]:g}")


@main.command(name="eval")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--mode", type=click.Choice(["logo", "split", "sweep", "jpeg"]), default="logo",
              show_default=True)
@click.option("--scenario", type=click.Choice([
    "train_clean_test_compressed", "train_compressed", "per_qf", "per_qf_per_group"]),
    default="train_clean_test_compressed", show_default=True,
    help="JPEG robustness scenario (mode=jpeg).")
@_with(_feature_options)
@click.option("--trees", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=os.cpu_count(), show_default="cpu count")
@click.option("--train-fraction", default=0.7, show_default=True,
              help="Train fraction for mode=split and scenario=per_qf_per_group.")
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.pass_context
@_exit_codes
def eval_cmd(ctx, manifest, config_file, mode, scenario, bases, freqs, qfs, alpha, trees,
             seed, jobs, train_fraction, out):
    """Run an evaluation protocol and write reports, tables and figures."""
    file_cfg = _load_config_file(config_file)
    resolved = _resolve(ctx, file_cfg, [
        "mode", "scenario", "bases", "freqs", "qfs", "alpha", "trees", "seed", "jobs",
        "train_fraction",
    ])
    cfg = _feature_config(resolved)
    hp = ForestHyperparams(tree_count=int(resolved["trees"]))
    seed = int(resolved["seed"])
    jobs = int(resolved["jobs"])
    mode = resolved["mode"]
    data = load_manifest(manifest)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    run_config = _run_config("eval", resolved, {"manifest": str(manifest), "out": str(out)})
    cache_path = _feature_cache_path(manifest, cfg)

    if mode == "sweep":
        result = sweep(data, hp, seed=seed, jobs=jobs, alpha=cfg.alpha,
                       cache_path=_feature_cache_path(manifest, FeatureConfig(alpha=cfg.alpha)))
        write_sweep_csv(outdir / "sweep.csv", result, run_config)
        write_marginals_csv(outdir / "sweep_marginals.csv", result, run_config)
        figures.save_sweep_dimensionality(
            result, outdir / "sweep_dimensionality.png", run_config=run_config
        )
        figures.save_sweep_marginals(result, outdir / "sweep_marginals.png",
                                     run_config=run_config)
        _write_report(result.best_report, outdir, "best", run_config)
        click.echo(
            f"best setup: bases={result.best_config.bases} freqs={result.best_config.freqs} "
            f"qfs={result.best_config.qfs} dim={result.best_config.dimensionality} "
            f"avg_accuracy={result.best_report.average:.4f}"
        )
        return

    if mode == "logo":
        reports = [evaluate_logo(data, cfg, hp, seed=seed, jobs=jobs, cache_path=cache_path)]
    elif mode == "split":
        reports = [evaluate_split(data, cfg, hp, seed=seed, jobs=jobs, cache_path=cache_path,
                                  train_fraction=float(resolved["train_fraction"]))]
    else:
        reports = jpeg_scenario(
            data, resolved["scenario"], cfg, hp, seed=seed, jobs=jobs,
            train_fraction=float(resolved["train_fraction"]),
        )
    for rep in reports:
        _write_report(rep, outdir, rep.scenario.replace(":", "_"), run_config)
        click.echo(rep.to_text(), nl=False)


def _write_report(rep, outdir, name, run_config):
    (outdir / f"{name}.json").write_text(rep.to_json(run_config) + "\n")
    (outdir / f"{name}.txt").write_text(rep.to_text())
    figures.save_group_accuracy(rep, outdir / f"{name}.png", run_config=run_config)


def _feature_cache_path(manifest, cfg):
    """Feature cache under $BENFORD_CACHE_DIR, keyed by manifest and config."""
    root = os.environ.get(CACHE_DIR_ENV)
    if not root:
        return None
    Path(root).mkdir(parents=True, exist_ok=True)
    key = hashlib.sha256(str(Path(manifest).resolve()).encode()).hexdigest()[:8]
    return str(Path(root) / f"features_{Path(manifest).stem}_{key}_{cfg.fingerprint}.csv")


if __name__ == "__main__":
    main()
