"""Experiment harness: dataset manifests, leave-one-group-out
cross-validation, stratified splits, the full parameter sweep, and the
JPEG-recompression scenarios.

All randomness (fold forests, quality-factor draws, split shuffles) derives
from one experiment seed through the fixed stream domains in
:mod:`benfordgan.streams`, so reruns with the same inputs and seed emit
byte-identical reports.
"""

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from ._version import __version__
from .features import (
    FeatureConfig,
    enumerate_configs,
    extract_features,
    feature_positions,
    read_feature_csv,
    write_feature_csv,
)
from .forest import ForestHyperparams, LabeledSample, predict_matrix, train_forest
from .imageio import encoder_metadata, load_image, recompress_jpeg, to_luma
from .streams import DOMAIN_FOLD, DOMAIN_QF_DRAW, DOMAIN_SPLIT, derive_seed, stream

CACHE_DIR_ENV = "BENFORD_CACHE_DIR"


class TooFewGroupsError(ValueError):
    """Leave-one-group-out needs at least two groups."""


class EmptyStratumError(ValueError):
    """A stratified split left one side with no samples."""


class MissingCacheError(FileNotFoundError):
    """Cache-only mode requested but no usable cache present."""


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    group: str


@dataclass
class DatasetManifest:
    """Labeled, group-tagged image files."""

    entries: List[ManifestEntry]
    root: str = "."

    def groups(self):
        """Group names in first-appearance order."""
        seen = []
        for e in self.entries:
            if e.group not in seen:
                seen.append(e.group)
        return seen

    def subset(self, indices) -> "DatasetManifest":
        return DatasetManifest(entries=[self.entries[i] for i in indices], root=self.root)


def load_manifest(path, require_both_labels: bool = True) -> DatasetManifest:
    """Read a `path,label,group` CSV; relative paths resolve against the
    manifest's directory and must exist."""
    path = Path(path)
    root = path.parent
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["path", "label", "group"]:
            raise ValueError(f"{path}: expected header 'path,label,group', got {header}")
        for row in reader:
            if not row:
                continue
            p, label, group = row[0], int(row[1]), row[2]
            if label not in (0, 1):
                raise ValueError(f"{path}: label must be 0 or 1, got {label}")
            resolved = p if os.path.isabs(p) else str(root / p)
            if not os.path.exists(resolved):
                raise FileNotFoundError(f"{path}: listed image missing: {resolved}")
            entries.append(ManifestEntry(path=resolved, label=label, group=group))
    manifest = DatasetManifest(entries=entries, root=str(root))
    if require_both_labels:
        for g in manifest.groups():
            labels = {e.label for e in manifest.entries if e.group == g}
            if labels != {0, 1}:
                raise ValueError(f"{path}: group {g!r} does not contain both labels")
    return manifest


# ---------------------------------------------------------------------------
# Feature extraction over a manifest

@dataclass
class FeatureTable:
    """Extracted features for a manifest, rows in manifest order."""

    paths: List[str]
    labels: np.ndarray
    groups: List[str]
    matrix: np.ndarray
    config: FeatureConfig

    @property
    def fingerprint(self) -> str:
        return self.config.fingerprint

    def rows(self):
        return zip(self.paths, self.labels.tolist(), self.groups, self.matrix)


def _extract_one(args):
    path, cfg = args
    try:
        img = to_luma(load_image(path))
        return extract_features(img, cfg).values, None
    except Exception as exc:  # collected per image in non-strict mode
        return None, exc


def extract_manifest_features(
    manifest: DatasetManifest,
    cfg: FeatureConfig,
    jobs: int = 1,
    cache_path=None,
    cache_only: bool = False,
    strict: bool = True,
    run_config: Optional[dict] = None,
    progress=None,
):
    """Extract (or load cached) features for every manifest entry.

    Returns (FeatureTable, failures). A cache file is reused only when its
    fingerprint and image paths match the manifest exactly; otherwise it is
    recomputed and rewritten. ``cache_only`` forbids recomputation.
    ``progress`` is called as progress(done, total) after each image.
    """
    want_paths = [e.path for e in manifest.entries]
    if cache_path and os.path.exists(cache_path):
        meta, paths, labels, groups, matrix = read_feature_csv(cache_path)
        if meta["fingerprint"] == cfg.fingerprint and paths == want_paths:
            table = FeatureTable(
                paths=paths, labels=labels, groups=groups, matrix=matrix, config=cfg
            )
            return table, []
    if cache_only:
        raise MissingCacheError(f"no usable cache at {cache_path}")

    args = [(e.path, cfg) for e in manifest.entries]
    results = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for res in pool.map(_extract_one, args, chunksize=4):
                results.append(res)
                if progress:
                    progress(len(results), len(args))
    else:
        for a in args:
            results.append(_extract_one(a))
            if progress:
                progress(len(results), len(args))

    failures = []
    keep, values = [], []
    for i, (vals, exc) in enumerate(results):
        if exc is not None:
            if strict:
                raise exc
            path = manifest.entries[i].path
            text = str(exc)
            failures.append(text if text.startswith(str(path)) else f"{path}: {text}")
        else:
            keep.append(i)
            values.append(vals)
    kept = [manifest.entries[i] for i in keep]
    matrix = (
        np.vstack(values) if values else np.empty((0, cfg.dimensionality), dtype=np.float64)
    )
    table = FeatureTable(
        paths=[e.path for e in kept],
        labels=np.asarray([e.label for e in kept], dtype=np.int64),
        groups=[e.group for e in kept],
        matrix=matrix,
        config=cfg,
    )
    if cache_path:
        write_feature_csv(cache_path, list(table.rows()), cfg, run_config=run_config)
    return table, failures


# ---------------------------------------------------------------------------
# Folds and splits

def logo_folds(manifest: DatasetManifest):
    """One (train, test) index pair per group; fold g tests on group g."""
    groups = manifest.groups()
    if len(groups) < 2:
        raise TooFewGroupsError(f"need at least 2 groups, have {len(groups)}")
    folds = []
    for g in groups:
        test = [i for i, e in enumerate(manifest.entries) if e.group == g]
        train = [i for i, e in enumerate(manifest.entries) if e.group != g]
        folds.append((train, test))
    return folds


def random_split(manifest: DatasetManifest, train_fraction: float, seed: int):
    """Deterministic split stratified by (group, label).

    Each stratum contributes floor(fraction * size) samples to the train
    side. Raises EmptyStratumError when either side ends up empty.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction {train_fraction} outside (0, 1)")
    rng = stream(seed, DOMAIN_SPLIT, 0)
    strata = {}
    for i, e in enumerate(manifest.entries):
        strata.setdefault((e.group, e.label), []).append(i)
    train_idx, test_idx = [], []
    for key in sorted(strata):
        idx = np.asarray(strata[key])
        perm = rng.permutation(len(idx))
        k = int(np.floor(train_fraction * len(idx)))
        train_idx.extend(idx[perm[:k]].tolist())
        test_idx.extend(idx[perm[k:]].tolist())
    if not train_idx or not test_idx:
        raise EmptyStratumError("split left train or test empty")
    return manifest.subset(sorted(train_idx)), manifest.subset(sorted(test_idx))


# ---------------------------------------------------------------------------
# Reports

@dataclass(frozen=True)
class GroupResult:
    group: str
    accuracy: float
    n_test: int
    n_correct: int


@dataclass
class EvalReport:
    scenario: str
    per_group: List[GroupResult]
    average: float
    config: dict
    hyperparams: dict
    seed: int
    metadata: dict = field(default_factory=dict)

    def to_dict(self, run_config: Optional[dict] = None) -> dict:
        return {
            "schema_version": 1,
            "tool_version": __version__,
            "scenario": self.scenario,
            "config": self.config,
            "hyperparams": self.hyperparams,
            "seed": self.seed,
            "per_group": [
                {
                    "group": r.group,
                    "accuracy": r.accuracy,
                    "n_test": r.n_test,
                    "n_correct": r.n_correct,
                }
                for r in self.per_group
            ],
            "average_accuracy": self.average,
            "metadata": self.metadata,
            "run_config": run_config,
        }

    def to_json(self, run_config: Optional[dict] = None) -> str:
        return json.dumps(self.to_dict(run_config), sort_keys=True)

    def to_text(self) -> str:
        width = max([len("Dataset")] + [len(r.group) for r in self.per_group]) + 2
        lines = [f"scenario: {self.scenario}", f"{'Dataset':<{width}}{'Accuracy':>10}{'Samples':>10}"]
        for r in self.per_group:
            lines.append(f"{r.group:<{width}}{r.accuracy:>10.4f}{r.n_test:>10}")
        total = sum(r.n_test for r in self.per_group)
        lines.append(f"{'avg':<{width}}{self.average:>10.4f}{total:>10}")
        return "\n".join(lines) + "\n"


def _fold_accuracy(train_X, train_y, train_ids, test_X, test_y, cfg, hyperparams, fold_seed):
    samples = [
        LabeledSample(features=x, label=int(l), sample_id=s)
        for x, l, s in zip(train_X, train_y, train_ids)
    ]
    model = train_forest(
        samples, hyperparams, seed=fold_seed, config_fingerprint=cfg.fingerprint
    )
    labels, _ = predict_matrix(model, test_X)
    return int((labels == test_y).sum())


def _evaluate_folds(table: FeatureTable, folds, fold_groups, cfg, hyperparams, seed, scenario,
                    test_table: Optional[FeatureTable] = None, metadata: Optional[dict] = None):
    """Train/test each fold; test features may come from a parallel table
    (same row order) to support the train-clean/test-compressed scenario."""
    test_src = test_table if test_table is not None else table
    per_group = []
    for fold_index, (train, test) in enumerate(folds):
        correct = _fold_accuracy(
            table.matrix[train],
            table.labels[train],
            [table.paths[i] for i in train],
            test_src.matrix[test],
            test_src.labels[test],
            cfg,
            hyperparams,
            derive_seed(seed, DOMAIN_FOLD, fold_index),
        )
        per_group.append(
            GroupResult(
                group=fold_groups[fold_index],
                accuracy=correct / len(test),
                n_test=len(test),
                n_correct=correct,
            )
        )
    average = float(np.mean([r.accuracy for r in per_group]))
    return EvalReport(
        scenario=scenario,
        per_group=per_group,
        average=average,
        config=cfg.to_dict() | {"fingerprint": cfg.fingerprint},
        hyperparams=hyperparams.to_dict(),
        seed=seed,
        metadata=metadata or {},
    )


def evaluate_logo(
    manifest: DatasetManifest,
    cfg: FeatureConfig,
    hyperparams: ForestHyperparams = ForestHyperparams(),
    seed: int = 0,
    jobs: int = 1,
    cache_path=None,
    cache_only: bool = False,
    features: Optional[FeatureTable] = None,
) -> EvalReport:
    """Leave-one-group-out evaluation: per-group and average accuracy."""
    if features is None:
        features, _ = extract_manifest_features(
            manifest, cfg, jobs=jobs, cache_path=cache_path, cache_only=cache_only
        )
    folds = logo_folds(manifest)
    return _evaluate_folds(
        features, folds, manifest.groups(), cfg, hyperparams, seed, scenario="logo"
    )


def _evaluate_split_groups(table, manifest, cfg, hyperparams, seed, train_fraction,
                           scenario, metadata=None):
    """One model per group, trained and tested inside that group on a
    stratified split. Splits reuse the same derived seed per group index so
    the same corpus splits identically across scenarios."""
    pos = {e.path: j for j, e in enumerate(manifest.entries)}
    per_group = []
    for gi, g in enumerate(manifest.groups()):
        idx = [i for i, e in enumerate(manifest.entries) if e.group == g]
        sub = manifest.subset(idx)
        train_m, test_m = random_split(
            sub, train_fraction, seed=derive_seed(seed, DOMAIN_SPLIT, gi + 1)
        )
        train_rows = [pos[e.path] for e in train_m.entries]
        test_rows = [pos[e.path] for e in test_m.entries]
        correct = _fold_accuracy(
            table.matrix[train_rows],
            table.labels[train_rows],
            [table.paths[i] for i in train_rows],
            table.matrix[test_rows],
            table.labels[test_rows],
            cfg,
            hyperparams,
            derive_seed(seed, DOMAIN_FOLD, gi),
        )
        per_group.append(
            GroupResult(
                group=g,
                accuracy=correct / len(test_rows),
                n_test=len(test_rows),
                n_correct=correct,
            )
        )
    return EvalReport(
        scenario=scenario,
        per_group=per_group,
        average=float(np.mean([r.accuracy for r in per_group])),
        config=cfg.to_dict() | {"fingerprint": cfg.fingerprint},
        hyperparams=hyperparams.to_dict(),
        seed=seed,
        metadata=metadata or {},
    )


def evaluate_split(
    manifest: DatasetManifest,
    cfg: FeatureConfig,
    hyperparams: ForestHyperparams = ForestHyperparams(),
    seed: int = 0,
    train_fraction: float = 0.7,
    jobs: int = 1,
    cache_path=None,
    features: Optional[FeatureTable] = None,
) -> EvalReport:
    """Per-group random-split evaluation (one model per group)."""
    if features is None:
        features, _ = extract_manifest_features(manifest, cfg, jobs=jobs, cache_path=cache_path)
    return _evaluate_split_groups(
        features, manifest, cfg, hyperparams, seed, train_fraction, scenario="split"
    )


# ---------------------------------------------------------------------------
# Parameter sweep

@dataclass
class SweepResult:
    best_config: FeatureConfig
    best_report: EvalReport
    reports: List[EvalReport]
    configs: List[FeatureConfig]

    def table_rows(self):
        """(config_id, bases, freqs, qfs, dim, avg_accuracy) per setup."""
        rows = []
        for i, (cfg, rep) in enumerate(zip(self.configs, self.reports)):
            rows.append(
                (
                    i,
                    "|".join(map(str, cfg.bases)),
                    "|".join(map(str, cfg.freqs)),
                    "|".join(map(str, cfg.qfs)),
                    cfg.dimensionality,
                    rep.average,
                )
            )
        return rows

    def marginal_rows(self):
        """Fixed-parameter marginals: (panel, dim, avg_accuracy, n_setups).

        'Single' panels keep setups where the named set has one element and
        average accuracy over that element's possible values; 'all' panels
        keep setups using the full set.
        """
        from .features import ALLOWED_BASES, ALLOWED_FREQS, ALLOWED_QFS

        panels = []

        def single(name, fixed, others):
            buckets = {}
            for cfg, rep in zip(self.configs, self.reports):
                if len(fixed(cfg)) != 1:
                    continue
                buckets.setdefault((others(cfg), cfg.dimensionality), []).append(rep.average)
            for (_, dim), accs in sorted(buckets.items(), key=lambda kv: kv[0][1]):
                panels.append((f"{name}_single", dim, float(np.mean(accs)), len(accs)))

        def full(name, fixed, limit):
            for cfg, rep in zip(self.configs, self.reports):
                if len(fixed(cfg)) == len(limit):
                    panels.append((f"{name}_all", cfg.dimensionality, rep.average, 1))

        single("qfs", lambda c: c.qfs, lambda c: (c.bases, c.freqs))
        full("qfs", lambda c: c.qfs, ALLOWED_QFS)
        single("bases", lambda c: c.bases, lambda c: (c.freqs, c.qfs))
        full("bases", lambda c: c.bases, ALLOWED_BASES)
        single("freqs", lambda c: c.freqs, lambda c: (c.bases, c.qfs))
        full("freqs", lambda c: c.freqs, ALLOWED_FREQS)
        return panels


def sweep(
    manifest: DatasetManifest,
    hyperparams: ForestHyperparams = ForestHyperparams(),
    seed: int = 0,
    jobs: int = 1,
    cache_path=None,
    alpha: float = 2.0,
) -> SweepResult:
    """Evaluate all 675 setups with one extraction pass.

    Features are extracted once at the maximal configuration and sliced per
    setup; each (qf, n, b) triple's divergences are independent of the
    surrounding setup so the slices equal dedicated extractions bit for bit.
    The best setup maximizes average accuracy, ties broken by smaller
    dimensionality then enumeration order.
    """
    full_cfg = FeatureConfig(alpha=alpha)
    table, _ = extract_manifest_features(manifest, full_cfg, jobs=jobs, cache_path=cache_path)
    folds = logo_folds(manifest)
    fold_groups = manifest.groups()
    configs = enumerate_configs(alpha)
    reports = []
    for cfg in configs:
        cols = feature_positions(cfg, full_cfg)
        sub = FeatureTable(
            paths=table.paths,
            labels=table.labels,
            groups=table.groups,
            matrix=np.ascontiguousarray(table.matrix[:, cols]),
            config=cfg,
        )
        reports.append(
            _evaluate_folds(sub, folds, fold_groups, cfg, hyperparams, seed, scenario="logo")
        )
    best_i = 0
    for i in range(1, len(configs)):
        better = reports[i].average > reports[best_i].average
        tie = reports[i].average == reports[best_i].average
        if better or (tie and configs[i].dimensionality < configs[best_i].dimensionality):
            best_i = i
    return SweepResult(
        best_config=configs[best_i],
        best_report=reports[best_i],
        reports=reports,
        configs=configs,
    )


def write_sweep_csv(path, result: SweepResult, run_config: Optional[dict] = None):
    meta = {"tool_version": __version__, "run_config": run_config}
    with open(path, "w", newline="") as fh:
        fh.write("# benfordgan sweep v1 " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write("config_id,bases,freqs,qfs,dim,avg_accuracy\n")
        for row in result.table_rows():
            fh.write(f"{row[0]},{row[1]},{row[2]},{row[3]},{row[4]},{row[5]:.17g}\n")
    return path


def write_marginals_csv(path, result: SweepResult, run_config: Optional[dict] = None):
    meta = {"tool_version": __version__, "run_config": run_config}
    with open(path, "w", newline="") as fh:
        fh.write("# benfordgan sweep-marginals v1 " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write("panel,dim,avg_accuracy,n_setups\n")
        for panel, dim, acc, n in result.marginal_rows():
            fh.write(f"{panel},{dim},{acc:.17g},{n}\n")
    return path


# ---------------------------------------------------------------------------
# JPEG robustness scenarios

JPEG_SCENARIOS = (
    "train_clean_test_compressed",
    "train_compressed",
    "per_qf",
    "per_qf_per_group",
)

RANDOM_QF_RANGE = tuple(range(85, 101))
FIXED_QFS = (100, 95, 90)


def recompressed_path(path, qf, manifest_root=None, cache_dir=None):
    """img.png -> img.q{qf}.jpg, beside the original or under cache_dir."""
    p = Path(path)
    name = f"{p.stem}.q{qf}.jpg"
    if cache_dir is None:
        cache_dir = os.environ.get(CACHE_DIR_ENV) or None
    if cache_dir is None:
        return str(p.with_name(name))
    rel = None
    if manifest_root is not None:
        try:
            rel = p.parent.relative_to(manifest_root)
        except ValueError:
            rel = None
    if rel is None:
        # originals outside the manifest root: key by their directory so
        # same-named files from different places cannot collide
        import hashlib

        rel = Path(hashlib.sha256(str(p.parent).encode()).hexdigest()[:12])
    target = Path(cache_dir) / rel
    target.mkdir(parents=True, exist_ok=True)
    return str(target / name)


def _materialize(manifest: DatasetManifest, qf_by_index, cache_dir, subsampling):
    entries = []
    for i, e in enumerate(manifest.entries):
        qf = qf_by_index[i]
        dst = recompressed_path(e.path, qf, manifest_root=manifest.root, cache_dir=cache_dir)
        if not os.path.exists(dst):
            recompress_jpeg(e.path, qf, dst, subsampling=subsampling)
        entries.append(ManifestEntry(path=dst, label=e.label, group=e.group))
    return DatasetManifest(entries=entries, root=manifest.root)


def jpeg_scenario(
    manifest: DatasetManifest,
    scenario: str,
    cfg: FeatureConfig,
    hyperparams: ForestHyperparams = ForestHyperparams(),
    seed: int = 0,
    qf_policy: Optional[Sequence[int]] = None,
    jobs: int = 1,
    cache_dir=None,
    subsampling: str = "4:2:0",
    train_fraction: float = 0.7,
) -> List[EvalReport]:
    """Run one JPEG-robustness scenario and return its reports.

    train_clean_test_compressed: LOGO-train on clean features, test each
      left-out group after recompression at per-image random quality factors
      drawn from qf_policy (default 85..100).
    train_compressed: recompress everything with the same draws, then LOGO.
    per_qf: one LOGO report per fixed quality factor (default 100, 95, 90).
    per_qf_per_group: per quality factor, train and test within each group
      alone on a stratified 70/30 split; one report per quality factor.
    """
    if scenario not in JPEG_SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}, expected one of {JPEG_SCENARIOS}")
    meta = encoder_metadata(subsampling)
    folds = logo_folds(manifest) if scenario != "per_qf_per_group" else None
    groups = manifest.groups()

    if scenario in ("train_clean_test_compressed", "train_compressed"):
        policy = tuple(qf_policy) if qf_policy else RANDOM_QF_RANGE
        rng = stream(seed, DOMAIN_QF_DRAW, 0)
        draws = [policy[j] for j in rng.integers(0, len(policy), size=len(manifest.entries))]
        compressed = _materialize(manifest, draws, cache_dir, subsampling)
        comp_table, _ = extract_manifest_features(compressed, cfg, jobs=jobs)
        meta = meta | {"qf_policy": list(policy)}
        if scenario == "train_compressed":
            report = _evaluate_folds(
                comp_table, folds, groups, cfg, hyperparams, seed,
                scenario="jpeg:train_compressed", metadata=meta,
            )
            return [report]
        clean_table, _ = extract_manifest_features(manifest, cfg, jobs=jobs)
        report = _evaluate_folds(
            clean_table, folds, groups, cfg, hyperparams, seed,
            scenario="jpeg:train_clean_test_compressed",
            test_table=comp_table, metadata=meta,
        )
        return [report]

    policy = tuple(qf_policy) if qf_policy else FIXED_QFS
    reports = []
    for qf in policy:
        compressed = _materialize(
            manifest, [qf] * len(manifest.entries), cache_dir, subsampling
        )
        table, _ = extract_manifest_features(compressed, cfg, jobs=jobs)
        qf_meta = meta | {"qf": qf}
        if scenario == "per_qf":
            reports.append(
                _evaluate_folds(
                    table, folds, groups, cfg, hyperparams, seed,
                    scenario=f"jpeg:per_qf:{qf}", metadata=qf_meta,
                )
            )
            continue
        reports.append(
            _evaluate_split_groups(
                table, compressed, cfg, hyperparams, seed, train_fraction,
                scenario=f"jpeg:per_qf_per_group:{qf}", metadata=qf_meta,
            )
        )
    return reports
