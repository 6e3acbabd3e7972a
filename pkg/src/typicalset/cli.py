"""Command-line experiment driver.

Subcommands: gen-base, train, table1, reject, bounds-check, run-study,
export. Defaults reproduce the reference study (dim 100, 20 components,
5 ensemble members, coverage 0.95, n 1). A JSON file supplied via
--config overrides the defaults and explicit flags override both. All
CSVs are comma-delimited with a mandatory header row and newline line
endings. Exit codes: 0 success, 2 partial ensemble, 1 hard failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bounds import theorem1_beta_bound, theorem2_conditions, theorem3_condition, theorem3_threshold, validate_lemma0_mc
from .density import (
    MixtureModel,
    estimate_entropy,
    log_density_batch,
    random_base_distribution,
    sample,
    save_model,
    load_model,
    _component_log_joint,
)
from .ensemble import Ensemble, intersection_matrix, rejection_sample_multi_typical, train_ensemble
from .rng import derive_seed, make_rng
from .training import InitConfig, TrainConfig, fit_mle
from .typicality import TypicalityConfig, calibrate_epsilon

__all__ = ["ExperimentConfig", "main", "entry"]

MANIFEST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs for the end-to-end study; defaults match the reference run."""

    dim: int = 100
    m: int = 20
    k: int = 5
    radius: float = 3.0
    log_var_low: float = 1.0
    log_var_high: float = 3.0
    train_n: int = 10_000
    test_n: int = 2_000
    samples_per_cell: int = 1_000
    per_model_count: int = 1_000
    target_coverage: float = 0.95
    n: int = 1
    seed: int = 0
    output_dir: str = "study_out"
    method: str = "gradient"
    epochs: int = 200
    learning_rate: float = 0.05
    entropy_samples: int = 100_000
    calibration_sequences: int = 20_000
    num_projections: int = 3
    projection_samples: int = 1_000
    sigma_convention: str = "variance"
    cross_mode_samples: int = 512

    def __post_init__(self):
        positive = (
            "dim",
            "m",
            "k",
            "train_n",
            "test_n",
            "samples_per_cell",
            "per_model_count",
            "n",
            "epochs",
            "entropy_samples",
            "calibration_sequences",
            "projection_samples",
            "cross_mode_samples",
        )
        for name in positive:
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.num_projections < 0:
            raise ValueError("num_projections must be nonnegative")
        if not 0.0 < self.target_coverage < 1.0:
            raise ValueError("target_coverage must lie in (0, 1)")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.sigma_convention not in ("variance", "stddev"):
            raise ValueError("sigma_convention must be 'variance' or 'stddev'")

    def init_config(self) -> InitConfig:
        return InitConfig(
            radius=self.radius,
            log_var_low=self.log_var_low,
            log_var_high=self.log_var_high,
            convention=self.sigma_convention,
        )

    def train_config(self, seed: int) -> TrainConfig:
        # drawing train_n + test_n points and splitting at this fraction
        # yields exactly train_n training and test_n held-out samples
        return TrainConfig(
            method=self.method,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            seed=seed,
            test_fraction=self.test_n / (self.train_n + self.test_n),
        )


class _Parser(argparse.ArgumentParser):
    # usage mistakes are hard failures, not the partial-ensemble code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    for field in dataclasses.fields(ExperimentConfig):
        flag = "--" + field.name.replace("_", "-")
        if field.type in ("int", int):
            parser.add_argument(flag, type=int, default=None)
        elif field.type in ("float", float):
            parser.add_argument(flag, type=float, default=None)
        else:
            parser.add_argument(flag, type=str, default=None)


def _config_from_args(args) -> ExperimentConfig:
    doc = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValueError("config file must hold a JSON object")
        if "log_var_range" in doc:
            lo, hi = doc.pop("log_var_range")
            doc.setdefault("log_var_low", lo)
            doc.setdefault("log_var_high", hi)
        unknown = set(doc) - set(_FIELD_TYPES)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
    values = {}
    for name in _FIELD_TYPES:
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            values[name] = flag_value
        elif name in doc:
            values[name] = doc[name]
    return ExperimentConfig(**values)


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _base_summary(model: MixtureModel, cfg: ExperimentConfig) -> dict:
    """Min inter-mean distance and the largest Monte-Carlo cross-component
    responsibility (log scale); both null for a single component."""
    if model.num_components < 2:
        return {
            "num_components": model.num_components,
            "min_inter_mean_distance": None,
            "max_cross_mode_log_probability": None,
            "cross_mode_samples": cfg.cross_mode_samples,
        }
    means = model.means
    diffs = means[:, None, :] - means[None, :, :]
    dist = np.sqrt((diffs * diffs).sum(axis=2))
    m = model.num_components
    min_dist = float(dist[~np.eye(m, dtype=bool)].min())

    rng = make_rng(derive_seed(cfg.seed, "cross-mode"))
    s = cfg.cross_mode_samples
    sigmas = np.exp(0.5 * model.log_vars)
    worst = -math.inf
    for i in range(m):
        x = means[i] + rng.standard_normal((s, model.dim)) * sigmas[i]
        lj = _component_log_joint(model, x)
        mx = lj.max(axis=1, keepdims=True)
        log_norm = mx + np.log(np.exp(lj - mx).sum(axis=1, keepdims=True))
        resp = np.exp(lj - log_norm)
        resp[:, i] = 0.0
        cross = resp.mean(axis=0).max()
        if cross > 0:
            worst = max(worst, math.log(cross))
        else:
            worst = max(worst, math.log(1e-300))
    return {
        "num_components": m,
        "min_inter_mean_distance": min_dist,
        "max_cross_mode_log_probability": worst,
        "cross_mode_samples": s,
    }


def _gen_base(cfg: ExperimentConfig, out: Path) -> tuple[MixtureModel, int]:
    base_seed = derive_seed(cfg.seed, "base")
    model = random_base_distribution(
        cfg.dim,
        cfg.m,
        cfg.radius,
        cfg.log_var_low,
        cfg.log_var_high,
        base_seed,
        convention=cfg.sigma_convention,
    )
    save_model(model, out / "base_model.json")
    _write_json(out / "base_summary.json", _base_summary(model, cfg))
    return model, base_seed


def cmd_gen_base(cfg: ExperimentConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _gen_base(cfg, out)
    return 0


def cmd_train(cfg: ExperimentConfig, base_path: str | None, out_path: str | None, curve_path: str | None) -> int:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = load_model(base_path or out_dir / "base_model.json")
    data = sample(base, cfg.train_n + cfg.test_n, derive_seed(cfg.seed, "data-train"))
    model, curve = fit_mle(data, cfg.m, cfg.init_config(), cfg.train_config(derive_seed(cfg.seed, "train")))
    save_model(model, out_path or out_dir / "model.json")
    curve.to_csv(curve_path or out_dir / "curve.csv")
    return 0


def _calibrated_ensemble(models: list[MixtureModel], cfg: ExperimentConfig, seed: int) -> Ensemble:
    """Entropy and epsilon for pre-trained models, on derived streams."""
    entropies = []
    configs = []
    for k, model in enumerate(models):
        h = estimate_entropy(model, cfg.entropy_samples, derive_seed(seed, "entropy", k))
        eps = calibrate_epsilon(
            model,
            h.value,
            cfg.n,
            cfg.target_coverage,
            cfg.calibration_sequences,
            derive_seed(seed, "calibrate", k),
        )
        entropies.append(h)
        configs.append(TypicalityConfig(epsilon=eps, n=cfg.n, entropy=h.value))
    return Ensemble(models=tuple(models), entropies=tuple(entropies), configs=tuple(configs))


def _gt_calibration(base: MixtureModel, cfg: ExperimentConfig, seed: int):
    h = estimate_entropy(base, cfg.entropy_samples, derive_seed(seed, "gt-entropy"))
    eps = calibrate_epsilon(
        base,
        h.value,
        cfg.n,
        cfg.target_coverage,
        cfg.calibration_sequences,
        derive_seed(seed, "gt-calibrate"),
    )
    return h, TypicalityConfig(epsilon=eps, n=cfg.n, entropy=h.value)


def cmd_table1(cfg: ExperimentConfig, base_path: str | None, model_paths: list[str], out_path: str | None) -> int:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = load_model(base_path or out_dir / "base_model.json")
    models = [load_model(p) for p in model_paths]
    ensemble = _calibrated_ensemble(models, cfg, derive_seed(cfg.seed, "calib"))
    gt_entropy, gt_config = _gt_calibration(base, cfg, derive_seed(cfg.seed, "calib"))
    matrix = intersection_matrix(
        base,
        ensemble,
        cfg.samples_per_cell,
        derive_seed(cfg.seed, "table1"),
        gt_entropy=gt_entropy,
        gt_config=gt_config,
    )
    target = Path(out_path) if out_path else out_dir / "table1.csv"
    matrix.to_csv(target)
    _write_json(
        target.with_suffix(".meta.json"),
        {
            "samples_per_cell": matrix.samples_per_cell,
            "n": cfg.n,
            "target_coverage": cfg.target_coverage,
            "calibration_sequences": cfg.calibration_sequences,
            "entropy_samples": cfg.entropy_samples,
            "seed": cfg.seed,
        },
    )
    return 0


def cmd_reject(cfg: ExperimentConfig, base_path: str | None, model_paths: list[str], out_path: str | None) -> int:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = load_model(base_path or out_dir / "base_model.json")
    models = [load_model(p) for p in model_paths]
    ensemble = _calibrated_ensemble(models, cfg, derive_seed(cfg.seed, "calib"))
    gt_entropy, gt_config = _gt_calibration(base, cfg, derive_seed(cfg.seed, "calib"))
    _, report = rejection_sample_multi_typical(
        ensemble,
        cfg.per_model_count,
        derive_seed(cfg.seed, "reject"),
        ground_truth=base,
        gt_entropy=gt_entropy,
        gt_config=gt_config,
    )
    _write_json(Path(out_path) if out_path else out_dir / "rejection.json", report.to_dict())
    return 0


def _orthonormal_basis(dim: int, seed: int) -> np.ndarray:
    """Random 2-D orthonormal basis as a (dim, 2) matrix."""
    rng = make_rng(seed)
    a = rng.standard_normal((dim, 2))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


def cmd_run_study(cfg: ExperimentConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs: list[dict] = []

    base, base_seed = _gen_base(cfg, out)
    outputs.append({"kind": "base_model", "path": "base_model.json", "seed": base_seed})
    outputs.append({"kind": "base_summary", "path": "base_summary.json", "seed": base_seed})

    data_seed = derive_seed(cfg.seed, "data-train")
    data = sample(base, cfg.train_n + cfg.test_n, data_seed)

    ens_seed = derive_seed(cfg.seed, "ensemble")
    ensemble = train_ensemble(
        data,
        cfg.k,
        cfg.m,
        cfg.init_config(),
        cfg.train_config(0),
        ens_seed,
        n=cfg.n,
        target_coverage=cfg.target_coverage,
        calibration_sequences=cfg.calibration_sequences,
        entropy_samples=cfg.entropy_samples,
    )
    labels = [f"model_{k + 1}" for k in range(ensemble.size)]
    for k, (label, model, curve) in enumerate(zip(labels, ensemble.models, ensemble.curves)):
        save_model(model, out / f"{label}.json")
        outputs.append({"kind": "trained_model", "path": f"{label}.json", "model": label})
        curve.to_csv(out / f"curve_{label}.csv")
        outputs.append({"kind": "learning_curve", "path": f"curve_{label}.csv", "model": label})

    gt_entropy, gt_config = _gt_calibration(base, cfg, derive_seed(cfg.seed, "calib"))
    calibration = [
        {
            "label": "ground_truth",
            "entropy": gt_entropy.value,
            "entropy_std_error": gt_entropy.std_error,
            "entropy_num_samples": gt_entropy.num_samples,
            "epsilon": gt_config.epsilon,
            "n": gt_config.n,
            "target_coverage": cfg.target_coverage,
        }
    ]
    for label, h, c in zip(labels, ensemble.entropies, ensemble.configs):
        calibration.append(
            {
                "label": label,
                "entropy": h.value,
                "entropy_std_error": h.std_error,
                "entropy_num_samples": h.num_samples,
                "epsilon": c.epsilon,
                "n": c.n,
                "target_coverage": cfg.target_coverage,
            }
        )
    _write_json(out / "calibration.json", calibration)
    outputs.append({"kind": "calibration", "path": "calibration.json"})

    table_seed = derive_seed(cfg.seed, "table1")
    matrix = intersection_matrix(
        base,
        ensemble,
        cfg.samples_per_cell,
        table_seed,
        gt_entropy=gt_entropy,
        gt_config=gt_config,
    )
    matrix.to_csv(out / "table1.csv")
    outputs.append({"kind": "intersection_matrix", "path": "table1.csv", "seed": table_seed})
    _write_json(
        out / "table1.meta.json",
        {
            "samples_per_cell": matrix.samples_per_cell,
            "n": cfg.n,
            "target_coverage": cfg.target_coverage,
            "calibration_sequences": cfg.calibration_sequences,
            "entropy_samples": cfg.entropy_samples,
            "seed": cfg.seed,
        },
    )
    outputs.append({"kind": "intersection_matrix_meta", "path": "table1.meta.json"})

    reject_seed = derive_seed(cfg.seed, "reject")
    _, report = rejection_sample_multi_typical(
        ensemble,
        cfg.per_model_count,
        reject_seed,
        ground_truth=base,
        gt_entropy=gt_entropy,
        gt_config=gt_config,
    )
    _write_json(out / "rejection.json", report.to_dict())
    outputs.append({"kind": "rejection_report", "path": "rejection.json", "seed": reject_seed})

    # negative log-likelihood under the ground truth of each source's samples
    sources = [("ground_truth", base)] + list(zip(labels, ensemble.models))
    for j, (label, model) in enumerate(sources):
        nll_seed = derive_seed(cfg.seed, "nll", j)
        batch = sample(model, cfg.samples_per_cell, nll_seed)
        nll = -log_density_batch(base, batch.data)
        _write_csv(
            out / f"nll_{label}.csv",
            ["sample_id", "nll"],
            ([i, repr(float(v))] for i, v in enumerate(nll)),
        )
        outputs.append({"kind": "nll_values", "path": f"nll_{label}.csv", "source": label, "seed": nll_seed})

    weight_rows = []
    for label, model in sources:
        for c, w in enumerate(model.weights):
            weight_rows.append([label, c, repr(float(w))])
    _write_csv(out / "mode_weights.csv", ["model", "component", "weight"], weight_rows)
    outputs.append({"kind": "mode_weights", "path": "mode_weights.csv"})

    if cfg.num_projections > 0 and cfg.dim >= 2:
        bases = []
        for p in range(cfg.num_projections):
            proj_seed = derive_seed(cfg.seed, "projection", p)
            bases.append({"projection": p, "seed": proj_seed, "basis": _orthonormal_basis(cfg.dim, proj_seed).tolist()})
        _write_json(out / "projections.meta.json", bases)
        outputs.append({"kind": "projections_meta", "path": "projections.meta.json"})
        for j, (label, model) in enumerate(sources):
            sample_seed = derive_seed(cfg.seed, "proj-data", j)
            batch = sample(model, cfg.projection_samples, sample_seed)
            for p in range(cfg.num_projections):
                basis = np.asarray(bases[p]["basis"])
                xy = batch.data @ basis
                _write_csv(
                    out / f"proj_{label}_{p}.csv",
                    ["x", "y"],
                    ([repr(float(a)), repr(float(b))] for a, b in xy),
                )
                outputs.append(
                    {
                        "kind": "projection",
                        "path": f"proj_{label}_{p}.csv",
                        "source": label,
                        "projection": p,
                        "seed": sample_seed,
                    }
                )

    manifest = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "master_seed": cfg.seed,
        "config": dataclasses.asdict(cfg),
        "partial": ensemble.is_partial,
        "failures": [dataclasses.asdict(f) for f in ensemble.failures],
        "outputs": outputs,
    }
    _write_json(out / "manifest.json", manifest)
    return 2 if ensemble.is_partial else 0


def cmd_export(cfg: ExperimentConfig, model_path: str, count: int, out_dir_arg: str | None) -> int:
    out = Path(out_dir_arg) if out_dir_arg else Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = load_model(model_path)
    batch = sample(model, count, derive_seed(cfg.seed, "export"))
    header = [f"x{i}" for i in range(model.dim)]
    _write_csv(out / "samples.csv", header, ([repr(float(v)) for v in row] for row in batch.data))
    _write_csv(
        out / "weights.csv",
        ["component", "weight"],
        ([c, repr(float(w))] for c, w in enumerate(model.weights)),
    )
    if cfg.num_projections > 0 and model.dim >= 2:
        bases = []
        for p in range(cfg.num_projections):
            proj_seed = derive_seed(cfg.seed, "projection", p)
            basis = _orthonormal_basis(model.dim, proj_seed)
            bases.append({"projection": p, "seed": proj_seed, "basis": basis.tolist()})
            xy = batch.data @ basis
            _write_csv(
                out / f"proj_{p}.csv",
                ["x", "y"],
                ([repr(float(a)), repr(float(b))] for a, b in xy),
            )
        _write_json(out / "projections.meta.json", bases)
    return 0


def _bounds_doc(args, seed: int) -> dict:
    doc: dict = {}
    if args.bounds_config:
        with open(args.bounds_config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)

    def section(name: str, defaults: dict, flag_prefix: str) -> dict:
        merged = dict(defaults)
        merged.update(doc.get(name, {}))
        for key in defaults:
            flag = getattr(args, f"{flag_prefix}_{key}", None)
            if flag is not None:
                merged[key] = flag
        return merged

    t1 = section("theorem1", {"n": 20, "epsilon": 0.05, "kl_alt_p": 12.5, "h_alt": 0.0, "h_p": 0.0}, "t1")
    t2 = section("theorem2", {"n": 1, "epsilon": 0.01, "k": 2, "d_k": [1.0]}, "t2")
    t3 = section("theorem3", {"n": 1, "epsilon": 0.01, "r": 0.5, "kl_ab": 1.0, "h_a": 0.0, "h_b": 0.0}, "t3")
    l0 = section(
        "lemma0",
        {
            "mean_a": 0.0,
            "log_var_a": 0.0,
            "mean_b": 5.0,
            "log_var_b": 0.0,
            "n": 20,
            "epsilon": 0.05,
            "trials": 10_000,
        },
        "l0",
    )

    import warnings as _warnings

    with _warnings.catch_warnings(record=True) as caught:
        _warnings.simplefilter("always")
        bound = theorem1_beta_bound(int(t1["n"]), t1["epsilon"], t1["kl_alt_p"], t1["h_alt"], t1["h_p"])
        t2_res = theorem2_conditions(int(t2["n"]), t2["epsilon"], int(t2["k"]), t2["d_k"])
        t3_thr = theorem3_threshold(int(t3["n"]), t3["epsilon"], t3["r"], t3["h_a"], t3["h_b"])
        t3_ok = theorem3_condition(int(t3["n"]), t3["epsilon"], t3["r"], t3["kl_ab"], t3["h_a"], t3["h_b"])
    warnings_seen = sorted({str(w.message) for w in caught})

    qa = MixtureModel.from_parameters([[l0["mean_a"]]], [[l0["log_var_a"]]])
    qb = MixtureModel.from_parameters([[l0["mean_b"]]], [[l0["log_var_b"]]])
    l0_res = validate_lemma0_mc(qa, qb, int(l0["n"]), l0["epsilon"], int(l0["trials"]), derive_seed(seed, "lemma0"))
    l0_stderr = math.sqrt(l0_res.estimated_prob * (1.0 - l0_res.estimated_prob) / int(l0["trials"]))

    def _nan_to_none(v: float):
        return None if isinstance(v, float) and math.isnan(v) else v

    return {
        "theorem1": {"inputs": t1, "bound": bound, "vacuous": bound >= 1.0},
        "theorem2": {
            "inputs": t2,
            "condition1": t2_res.condition1,
            "condition2": t2_res.condition2,
            "d_threshold": _nan_to_none(t2_res.d_threshold),
        },
        "theorem3": {
            "inputs": t3,
            "threshold": _nan_to_none(t3_thr),
            "condition": t3_ok,
        },
        "lemma0": {
            "inputs": l0,
            "estimated_prob": l0_res.estimated_prob,
            "std_error": l0_stderr,
            "bound": l0_res.bound,
            "holds": l0_res.holds,
        },
        "warnings": warnings_seen,
        "seed": seed,
    }


def cmd_bounds_check(cfg: ExperimentConfig, args) -> int:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = _bounds_doc(args, cfg.seed)
    _write_json(Path(args.out) if args.out else out_dir / "bounds_report.json", report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="typicalset", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen-base", parents=[], help="draw and persist a ground-truth mixture")
    _add_config_flags(p_gen)

    p_train = sub.add_parser("train", help="fit one mixture to samples from a base model")
    _add_config_flags(p_train)
    p_train.add_argument("--base", type=str, default=None, help="base model JSON (default: <output-dir>/base_model.json)")
    p_train.add_argument("--out", type=str, default=None, help="trained model JSON path")
    p_train.add_argument("--curve", type=str, default=None, help="learning-curve CSV path")

    p_table = sub.add_parser("table1", help="typical-set intersection cross-table")
    _add_config_flags(p_table)
    p_table.add_argument("--base", type=str, default=None)
    p_table.add_argument("--models", type=str, nargs="+", required=True, help="trained model JSON paths")
    p_table.add_argument("--out", type=str, default=None)

    p_reject = sub.add_parser("reject", help="rejection-sample the multi-typical set")
    _add_config_flags(p_reject)
    p_reject.add_argument("--base", type=str, default=None)
    p_reject.add_argument("--models", type=str, nargs="+", required=True)
    p_reject.add_argument("--out", type=str, default=None)

    p_bounds = sub.add_parser("bounds-check", help="evaluate bounds and feasibility conditions")
    _add_config_flags(p_bounds)
    p_bounds.add_argument("--bounds-config", type=str, default=None, help="JSON with theorem1/theorem2/theorem3/lemma0 sections")
    p_bounds.add_argument("--out", type=str, default=None)
    for key in ("n", "epsilon", "kl-alt-p", "h-alt", "h-p"):
        p_bounds.add_argument(f"--t1-{key}", type=float, default=None, dest=f"t1_{key.replace('-', '_')}")
    for key in ("n", "epsilon", "k"):
        p_bounds.add_argument(f"--t2-{key}", type=float, default=None, dest=f"t2_{key.replace('-', '_')}")
    p_bounds.add_argument("--t2-d-k", type=float, nargs="+", default=None, dest="t2_d_k")
    for key in ("n", "epsilon", "r", "kl-ab", "h-a", "h-b"):
        p_bounds.add_argument(f"--t3-{key}", type=float, default=None, dest=f"t3_{key.replace('-', '_')}")
    for key in ("mean-a", "log-var-a", "mean-b", "log-var-b", "n", "epsilon", "trials"):
        p_bounds.add_argument(f"--l0-{key}", type=float, default=None, dest=f"l0_{key.replace('-', '_')}")

    p_study = sub.add_parser("run-study", help="full study: base, ensemble, cross-table, rejection, exports")
    _add_config_flags(p_study)

    p_export = sub.add_parser("export", help="export samples, weights, and projections from a model")
    _add_config_flags(p_export)
    p_export.add_argument("--model", type=str, required=True)
    p_export.add_argument("--count", type=int, default=1000)
    p_export.add_argument("--out-dir", type=str, default=None, dest="export_out_dir")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "gen-base":
            return cmd_gen_base(cfg)
        if args.command == "train":
            return cmd_train(cfg, args.base, args.out, args.curve)
        if args.command == "table1":
            return cmd_table1(cfg, args.base, args.models, args.out)
        if args.command == "reject":
            return cmd_reject(cfg, args.base, args.models, args.out)
        if args.command == "bounds-check":
            return cmd_bounds_check(cfg, args)
        if args.command == "run-study":
            return cmd_run_study(cfg)
        if args.command == "export":
            return cmd_export(cfg, args.model, args.count, args.export_out_dir)
        parser.error(f"unknown command {args.command!r}")
        return 1
    except SystemExit:
        raise
    except Exception as exc:  # noqa: BLE001 - CLI boundary maps everything to the failure code
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
