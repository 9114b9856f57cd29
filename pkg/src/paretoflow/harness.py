"""Experiment orchestration: data, training, optimization, ablation and exports.

A run directory holds everything one configuration produced::

    config.json  dataset.csv  dataset.json  checkpoints/
    result.json  candidates.csv  diagnostics.jsonl  report/

Ablations share the dataset and checkpoints per seed and put each variant's
results in its own subdirectory.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .benchmarks import OfflineDataset, generate_offline_dataset, load_dataset, make_problem, save_dataset
from .config import RunConfig, load_config, save_config
from .flow import FlowModel, load_flow, reconstruction_curve, save_flow, train_flow
from .moo import hypervolume, pairwise_diversity, percentile_hv, reference_point, select_top
from .nn import load_checkpoint, save_checkpoint
from .sampler import VARIANTS, GuidedSampler, PredictorSet, train_predictors

CLIP_POLICY = "decoded designs clipped to the normalized box [0, 1] before denormalizing and evaluating"
HV_TOLERANCE = 1e-9


class RunError(RuntimeError):
    """A run directory is missing files or fails verification."""


def _fmt(v) -> str:
    return repr(float(v))


def _dataset_path(run_dir: Path) -> Path:
    return run_dir / "dataset.csv"


def _hv_kwargs(config: RunConfig) -> dict:
    ev = config.evaluation
    return {"method": ev.hv_method, "nsamples": ev.mc_samples, "seed": config.seed}


# -- gen-data ------------------------------------------------------------------


def cmd_gen_data(config: RunConfig, run_dir=None) -> Path:
    run_dir = Path(run_dir or config.output_dir)
    spec = make_problem(config.problem)
    ds = generate_offline_dataset(spec, config.dataset.n, config.dataset.seed, config.dataset.sampler)
    save_config(config, run_dir / "config.json")
    path, _ = save_dataset(ds, _dataset_path(run_dir))
    return path


# -- train ----------------------------------------------------------------------


def _load_run_dataset(config: RunConfig, run_dir: Path) -> OfflineDataset:
    path = _dataset_path(run_dir)
    if not path.exists():
        raise RunError(f"no dataset at {path}; run gen-data first")
    spec = make_problem(config.problem)
    return load_dataset(path, expect_d=spec.d, expect_m=spec.m)


def cmd_train(config: RunConfig, run_dir=None) -> dict:
    """Train m predictors and the flow; returns the loss histories."""
    run_dir = Path(run_dir or config.output_dir)
    ds = _load_run_dataset(config, run_dir)
    x, y = ds.normalized_designs(), ds.normalized_labels()
    ckpt = run_dir / "checkpoints"
    timings = {}

    start = time.perf_counter()
    preds, histories = train_predictors(x, y, config.predictor, config.seed)
    timings["predictors"] = time.perf_counter() - start
    pred_cfg = config.to_dict()["predictor"]
    for k, (net, hist) in enumerate(zip(preds.nets, histories)):
        header = {"kind": "predictor", "objective": k, "train_config": pred_cfg, "seed": config.seed, "history": hist}
        save_checkpoint(ckpt / f"predictor_{k}.npz", net, header)

    start = time.perf_counter()
    flow, flow_hist = train_flow(x, config.flow, config.seed)
    timings["flow"] = time.perf_counter() - start
    save_flow(ckpt / "flow.npz", flow, config.flow, config.seed, flow_hist)
    save_config(config, run_dir / "config.json")
    return {
        "predictor_loss": histories,
        "flow_train_loss": flow_hist.train_loss,
        "flow_val_loss": flow_hist.val_loss,
        "timings": timings,
    }


def load_models(run_dir, d: int, m: int) -> tuple[PredictorSet, FlowModel]:
    """Load checkpoints and check they fit a problem with ``d`` inputs and ``m`` objectives."""
    ckpt = Path(run_dir) / "checkpoints"
    if not (ckpt / "flow.npz").exists():
        raise RunError(f"no checkpoints in {ckpt}; run train first")
    nets = []
    for k in range(m):
        path = ckpt / f"predictor_{k}.npz"
        if not path.exists():
            raise RunError(f"missing predictor checkpoint {path}")
        net, meta = load_checkpoint(path)
        if meta.get("kind") != "predictor" or net.in_dim != d or net.out_dim != 1:
            raise RunError(f"{path} does not fit a problem with d={d}")
        nets.append(net)
    if (ckpt / f"predictor_{m}.npz").exists():
        raise RunError(f"{ckpt} holds more than m={m} predictors")
    flow, _ = load_flow(ckpt / "flow.npz")
    if flow.data_dim != d:
        raise RunError(f"flow checkpoint has d={flow.data_dim}, problem has d={d}")
    return PredictorSet(nets), flow


# -- optimize ---------------------------------------------------------------------


def offline_best(labels, k: int, ref, **hv_kwargs) -> float:
    """HV of the ``k`` best offline points under non-dominated ranking."""
    labels = np.asarray(labels)
    k = min(k, len(labels))
    return hypervolume(labels[select_top(labels, k)], ref, **hv_kwargs)


def cmd_optimize(config: RunConfig, run_dir=None, train_dir=None) -> dict:
    """Sample, evaluate the candidates with the true oracle and write the result files."""
    run_dir = Path(run_dir or config.output_dir)
    train_dir = Path(train_dir or run_dir)
    spec = make_problem(config.problem)
    ds = _load_run_dataset(config, train_dir)
    preds, flow = load_models(train_dir, spec.d, spec.m)

    start = time.perf_counter()
    sampler = GuidedSampler(flow, preds, config.sampler_config())
    res = sampler.run(ds.normalized_designs(), ds.labels)
    sample_time = time.perf_counter() - start

    designs = ds.x_stats.denormalize(np.clip(res.candidates, 0.0, 1.0))
    designs = np.clip(designs, spec.lower, spec.upper)
    objectives = spec.evaluate(designs)
    ref = reference_point(ds.labels, config.evaluation.ref_scale)
    hv_kw = _hv_kwargs(config)
    hv = {f"{p:g}": percentile_hv(objectives, ref, p, **hv_kw) for p in config.evaluation.percentiles}

    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, run_dir / "config.json")
    _write_candidates(run_dir / "candidates.csv", designs, objectives)
    with open(run_dir / "diagnostics.jsonl", "w") as fh:
        for rec in res.diagnostics:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    diag = res.diagnostics
    summary = {
        "steps": len(diag),
        "mean_filter_pass_rate": float(np.mean([r["filter_pass_rate"] for r in diag])),
        "mean_neighbor_win_fraction": float(np.mean([r["neighbor_win_fraction"] for r in diag])),
        "archive_updates": int(sum(r["archive_updates"] for r in diag)),
        "sampled_slots": None if res.archive is None else int((~res.archive.from_offline).sum()),
    }
    result = {
        "config_hash": config.config_hash(),
        "problem": spec.name,
        "variant": config.variant,
        "seed": config.seed,
        "n_candidates": len(designs),
        "reference_point": ref.tolist(),
        "hv": hv,
        "hv_method": config.evaluation.hv_method,
        "offline_best_hv": offline_best(ds.labels, len(designs), ref, **hv_kw),
        "diversity": pairwise_diversity(objectives),
        "clip_policy": CLIP_POLICY,
        "train_dir": str(train_dir.resolve()),
        "diagnostics": summary,
        "timings": {"sampling_s": sample_time},
    }
    (run_dir / "result.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    return result


def _write_candidates(path: Path, designs: np.ndarray, objectives: np.ndarray) -> None:
    header = [f"x{i}" for i in range(designs.shape[1])] + [f"f{j}" for j in range(objectives.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, f in zip(designs, objectives):
            w.writerow([_fmt(v) for v in x] + [_fmt(v) for v in f])


def read_candidates(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    d = sum(h.startswith("x") for h in header)
    data = np.array(rows[1:], dtype=np.float64).reshape(-1, len(header))
    return data[:, :d], data[:, d:]


def load_result(run_dir) -> dict:
    """Read ``result.json`` and re-verify it against the stored config and rows.

    Raises :class:`RunError` when the config hash differs or any stored HV
    cannot be recomputed within ``1e-9``.
    """
    run_dir = Path(run_dir)
    try:
        result = json.loads((run_dir / "result.json").read_text())
        config = load_config(run_dir / "config.json")
        _, objectives = read_candidates(run_dir / "candidates.csv")
    except (OSError, ValueError, KeyError) as exc:
        raise RunError(f"{run_dir}: unreadable run directory ({exc})") from exc
    if result.get("config_hash") != config.config_hash():
        raise RunError(f"{run_dir}: config hash {config.config_hash()} does not match result {result.get('config_hash')}")
    if len(objectives) != result["n_candidates"]:
        raise RunError(f"{run_dir}: {len(objectives)} candidate rows, result says {result['n_candidates']}")
    ref = np.asarray(result["reference_point"])
    for p, stored in result["hv"].items():
        again = percentile_hv(objectives, ref, float(p), **_hv_kwargs(config))
        if abs(again - stored) > HV_TOLERANCE:
            raise RunError(f"{run_dir}: HV{p} recomputes to {again!r}, stored {stored!r}")
    if abs(pairwise_diversity(objectives) - result["diversity"]) > HV_TOLERANCE:
        raise RunError(f"{run_dir}: diversity does not recompute")
    return result


# -- ablate -----------------------------------------------------------------------


def _stats(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


def ablation_table(results: dict[str, list[dict]], percentiles=("100", "50")) -> list[dict]:
    """One row per variant with mean/std of each HV percentile and of diversity."""
    rows = []
    for variant in VARIANTS:
        runs = results.get(variant, [])
        if not runs:
            continue
        row = {"variant": variant, "baseline": variant == "full", "runs": len(runs)}
        for p in percentiles:
            row[f"hv{p}_mean"], row[f"hv{p}_std"] = _stats([r["hv"][p] for r in runs])
        row["diversity_mean"], row["diversity_std"] = _stats([r["diversity"] for r in runs])
        rows.append(row)
    return rows


def cmd_ablate(config: RunConfig, seeds: list[int], run_dir=None, variants=VARIANTS) -> list[dict]:
    """Train once per seed, run every variant, and write the comparison table."""
    if not seeds:
        raise ValueError("ablate needs at least one seed")
    root = Path(run_dir or config.output_dir)
    results: dict[str, list[dict]] = {v: [] for v in variants}
    for seed in seeds:
        seed_cfg = replace(config, seed=seed, variant="full")
        seed_dir = root / f"seed_{seed}"
        cmd_gen_data(seed_cfg, seed_dir)
        cmd_train(seed_cfg, seed_dir)
        for variant in variants:
            results[variant].append(cmd_optimize(replace(seed_cfg, variant=variant), seed_dir / variant, seed_dir))
    percentiles = tuple(f"{p:g}" for p in config.evaluation.percentiles)
    rows = ablation_table(results, percentiles)
    write_table(rows, root, percentiles)
    return rows


def write_table(rows: list[dict], root: Path, percentiles=("100", "50")) -> None:
    root.mkdir(parents=True, exist_ok=True)
    (root / "ablation.json").write_text(json.dumps(rows, indent=2) + "\n")
    with open(root / "ablation.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    head = ["Variant"] + [f"HV{p}" for p in percentiles] + ["Diversity"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in rows:
        name = r["variant"] + (" (baseline)" if r["baseline"] else "")
        cells = [f"{r[f'hv{p}_mean']:.4f} ± {r[f'hv{p}_std']:.4f}" for p in percentiles]
        cells.append(f"{r['diversity_mean']:.4f} ± {r['diversity_std']:.4f}")
        lines.append("| " + " | ".join([name] + cells) + " |")
    (root / "ablation.md").write_text("\n".join(lines) + "\n")


# -- report ----------------------------------------------------------------------------


def _report_one(run_dir: Path) -> list[Path]:
    result = load_result(run_dir)
    config = load_config(run_dir / "config.json")
    out = run_dir / "report"
    out.mkdir(exist_ok=True)
    _, objectives = read_candidates(run_dir / "candidates.csv")

    front = out / "front.csv"
    with open(front, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{j}" for j in range(objectives.shape[1])])
        w.writerows([[_fmt(v) for v in row] for row in objectives])

    curve = out / "hv_curve.csv"
    records = [json.loads(line) for line in (run_dir / "diagnostics.jsonl").read_text().splitlines() if line]
    cols = ["step", "t", "archive_hv", "mean_weighted_score", "filter_pass_rate", "neighbor_win_fraction", "archive_updates"]
    with open(curve, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for rec in records:
            w.writerow([rec.get(c, "") for c in cols])

    recon = out / "recon.csv"
    train_dir = Path(result["train_dir"])
    spec = make_problem(config.problem)
    ds = load_dataset(_dataset_path(train_dir), spec.d, spec.m)
    flow, _ = load_flow(train_dir / "checkpoints" / "flow.npz")
    ts = np.round(np.linspace(0.05, 1.0, 20), 10)
    with open(recon, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "reconstruction_error"])
        for t, err in reconstruction_curve(flow, ds.normalized_designs(), ts, seed=config.seed):
            w.writerow([_fmt(t), _fmt(err)])
    return [front, curve, recon]


def cmd_report(run_dirs) -> dict[str, dict]:
    """Export plot-ready CSVs per run; a broken directory is reported and skipped."""
    status = {}
    for run_dir in run_dirs:
        try:
            files = _report_one(Path(run_dir))
            status[str(run_dir)] = {"ok": True, "files": [str(f) for f in files]}
        except (RunError, OSError, ValueError, KeyError) as exc:
            status[str(run_dir)] = {"ok": False, "error": str(exc)}
    return status
