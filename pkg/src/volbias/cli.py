"""Command-line sweeps writing CSV/JSON artifacts for offline plotting.

Every subcommand is a pure function of its JSON config file and the --seed
flag: rerunning with the same inputs reproduces the output files byte for
byte. Numeric fields are written with 15 significant digits and files are
written atomically (temp file, then rename).

Subcommands:
  risk-curve   expected CE and SD losses over a prediction grid
  bias-curve   SD-optimal predictions, probability errors, volume biases
  train-toy    logistic-classifier training sweep with bias summaries
  calibrate    least-squares volume correction fit/apply on a CSV
  bootstrap    paired bootstrap significance test
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from math import ceil
from pathlib import Path

import numpy as np

from .minimize import bias_curve, find_switch_point, risk_curve
from .regions import ScenarioSpec, expand_scenario
from .stats import apply_calibration, bootstrap_paired, fit_calibration, volume_specific_profile
from .trainer import TrainingDivergedError, generate_dataset, train

__all__ = ["main"]


def _fmt(x) -> str:
    """Render a CSV cell: numbers at 15 significant digits, text verbatim."""
    if isinstance(x, (str, np.str_)):
        return str(x)
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.15g}"


def _round15(x: float) -> float:
    return float(f"{float(x):.15g}")


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_csv(path: Path, header: list[str], rows: list[list]):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) if v is not None else "" for v in row) for row in rows)
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_json(path: Path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_config(path: str) -> tuple[dict, Path]:
    cfg_path = Path(path)
    try:
        cfg = json.loads(cfg_path.read_text())
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise CliError(f"config file {path} must contain a JSON object")
    return cfg, cfg_path.parent


class CliError(Exception):
    pass


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise CliError(f"config is missing required key {key!r}")
    return cfg[key]


def _sorted_floats(cfg, key) -> list[float]:
    values = [float(v) for v in _require(cfg, key)]
    if not values:
        raise CliError(f"config key {key!r} must be a nonempty list")
    return sorted(values)


def _cell_seed(parts: tuple[int, ...], n: int = 1) -> list[int]:
    state = np.random.SeedSequence(parts).generate_state(n, dtype=np.uint64)
    return [int(s) for s in state]


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------


def cmd_risk_curve(cfg: dict, seed: int, out_dir: Path, cfg_dir: Path) -> None:
    k_list = sorted(int(k) for k in _require(cfg, "k_list"))
    mu_list = _sorted_floats(cfg, "mu_list")
    p_grid = _sorted_floats(cfg, "p_beta_grid")
    n_points = int(cfg.get("p_tilde_grid_size", 101))
    if n_points < 2:
        raise CliError("p_tilde_grid_size must be >= 2")
    s_alpha = float(cfg.get("s_alpha", 100.0))
    s_gamma = float(cfg.get("s_gamma", 1.0))

    rows = []
    for k in k_list:
        for mu in mu_list:
            for p in p_grid:
                spec = ScenarioSpec(s_alpha=s_alpha, s_gamma=s_gamma, mu=mu, k_regions=k, p_beta=p)
                sd = risk_curve(spec, "sd", n_points)
                ce = risk_curve(spec, "ce", n_points)
                for q, v_sd, v_ce in zip(sd.p_tilde, sd.expected_loss, ce.expected_loss):
                    rows.append([k, mu, p, q, v_sd, v_ce])
    path = out_dir / cfg.get("output_path", "risk_curve.csv")
    _write_csv(path, ["k", "mu", "p_beta", "p_tilde", "expected_sd", "expected_ce"], rows)


def cmd_bias_curve(cfg: dict, seed: int, out_dir: Path, cfg_dir: Path) -> None:
    k_list = sorted(int(k) for k in _require(cfg, "k_list"))
    mu_list = _sorted_floats(cfg, "mu_list")
    p_grid = _sorted_floats(cfg, "p_beta_grid")
    s_alpha = float(cfg.get("s_alpha", 100.0))
    s_gamma = float(cfg.get("s_gamma", 1.0))
    grid = int(cfg.get("grid", 101))
    refine_tol = float(cfg.get("refine_tol", 1e-6))
    switch_tol = float(cfg.get("switch_tol", 1e-6))

    rows = []
    for k in k_list:
        for mu in mu_list:
            switch = find_switch_point(k, mu, tol=switch_tol, s_alpha=s_alpha, s_gamma=s_gamma)
            points = bias_curve(k, mu, p_grid, s_alpha=s_alpha, s_gamma=s_gamma, grid=grid, refine_tol=refine_tol)
            for pt in points:
                rows.append([k, mu, pt.p_beta, pt.p_tilde_opt, pt.prob_error, pt.volume_bias, switch.p_star])
    path = out_dir / cfg.get("output_path", "bias_curve.csv")
    _write_csv(
        path,
        ["k", "mu", "p_beta", "p_tilde_opt", "prob_error", "volume_bias", "switch_point"],
        rows,
    )


def _auto_resolution(spec: ScenarioSpec) -> int:
    volumes = [r.volume for r in expand_scenario(spec).regions if r.volume > 0]
    return max(16, ceil(1.0 / min(volumes)))


def _scenario_id(spec: ScenarioSpec) -> str:
    return (
        f"sa{spec.s_alpha:g}-sg{spec.s_gamma:g}-K{spec.k_regions}"
        f"-mu{spec.mu:g}-pb{spec.p_beta:g}"
    )


def cmd_train_toy(cfg: dict, seed: int, out_dir: Path, cfg_dir: Path) -> None:
    scenarios = [ScenarioSpec.from_dict(obj) for obj in _require(cfg, "scenarios")]
    losses = [str(l) for l in cfg.get("losses", ["ce", "sd"])]
    n_seeds = int(cfg.get("n_seeds", 1))
    n_images = int(cfg.get("n_images", 1000))
    max_epochs = int(cfg.get("max_epochs", 4000))
    patience = int(cfg.get("patience", 200))
    lr_by_loss = {"ce": cfg.get("lr_ce"), "sd": cfg.get("lr_sd")}
    if not scenarios or not losses or n_seeds < 1:
        raise CliError("train-toy needs scenarios, losses and n_seeds >= 1")

    report_lines = []
    summary_rows = []
    for si, spec in enumerate(scenarios):
        model = expand_scenario(spec)
        ppuv = int(cfg.get("pixels_per_unit_volume") or _auto_resolution(spec))
        for li, loss_kind in enumerate(losses):
            cell_biases_soft = []
            cell_biases_hard = []
            for rep in range(n_seeds):
                data_seed, split_seed = _cell_seed((seed, si, li, rep), 2)
                record = {
                    "scenario": json.loads(spec.to_json()),
                    "loss_kind": loss_kind,
                    "replicate": rep,
                }
                try:
                    dataset = generate_dataset(model, n_images, ppuv, data_seed)
                    report = train(
                        dataset,
                        loss_kind,
                        lr=lr_by_loss.get(loss_kind),
                        max_epochs=max_epochs,
                        patience=patience,
                        seed=split_seed,
                    )
                except (TrainingDivergedError, ValueError) as exc:
                    record["error"] = str(exc)
                else:
                    record.update(json.loads(report.to_json()))
                    record["final_loss"] = _round15(record["final_loss"])
                    record["per_region_pred"] = [_round15(p) for p in record["per_region_pred"]]
                    record["bias_soft"] = _round15(record["bias_soft"])
                    record["bias_hard"] = _round15(record["bias_hard"])
                    cell_biases_soft.append(report.bias_soft)
                    cell_biases_hard.append(report.bias_hard)
                report_lines.append(json.dumps(record, sort_keys=True))
            if len(cell_biases_soft) >= 2:
                boot = bootstrap_paired(
                    np.array(cell_biases_soft),
                    np.zeros(len(cell_biases_soft)),
                    n_resamples=int(cfg.get("n_resamples", 10000)),
                    seed=_cell_seed((seed, si, li, 0xB007), 1)[0],
                )
                p_boot = min(boot.p_greater, boot.p_smaller)
            else:
                p_boot = None
            summary_rows.append(
                [
                    _scenario_id(spec),
                    loss_kind,
                    float(np.mean(cell_biases_soft)) if cell_biases_soft else None,
                    float(np.mean(cell_biases_hard)) if cell_biases_hard else None,
                    p_boot,
                ]
            )

    reports_path = out_dir / cfg.get("reports_path", "train_reports.jsonl")
    _atomic_write(reports_path, "\n".join(report_lines) + "\n")
    summary_path = out_dir / cfg.get("summary_path", "train_summary.csv")
    _write_csv(summary_path, ["scenario", "loss", "bias_soft", "bias_hard", "p_boot"], summary_rows)


def _read_csv_columns(path: Path, required: list[str]) -> dict[str, list[str]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames or []
            missing = [c for c in required if c not in fields]
            if missing:
                raise CliError(f"{path} is missing columns: {missing}")
            rows = list(reader)
    except FileNotFoundError:
        raise CliError(f"input CSV not found: {path}")
    return {c: [row[c] for row in rows] for c in fields}


def cmd_calibrate(cfg: dict, seed: int, out_dir: Path, cfg_dir: Path) -> None:
    input_csv = Path(_require(cfg, "input_csv"))
    if not input_csv.is_absolute():
        input_csv = cfg_dir / input_csv
    cols = _read_csv_columns(input_csv, ["true_volume", "pred_volume", "split"])
    true = np.array([float(v) for v in cols["true_volume"]])
    pred = np.array([float(v) for v in cols["pred_volume"]])
    split = np.array(cols["split"])

    train_mask = split == "train"
    val_mask = split == "val"
    if np.count_nonzero(train_mask) < 3:
        raise CliError("need at least 3 rows with split=train to fit the calibration")
    fit = fit_calibration(pred[train_mask], true[train_mask])
    corrected = apply_calibration(fit, pred)

    fit_obj = json.loads(fit.to_json())
    fit_obj = {k: (_round15(v) if isinstance(v, float) else v) for k, v in fit_obj.items()}
    _write_json(out_dir / cfg.get("fit_path", "calibration_fit.json"), fit_obj)

    rows = [[t, p, s, c] for t, p, s, c in zip(true, pred, split, corrected)]
    _write_csv(
        out_dir / cfg.get("corrected_path", "calibrated.csv"),
        ["true_volume", "pred_volume", "split", "corrected_volume"],
        rows,
    )

    if np.count_nonzero(val_mask) >= 10:
        before = volume_specific_profile(pred[val_mask], true[val_mask])
        after = volume_specific_profile(corrected[val_mask], true[val_mask])
        for name, profile in (("before", before), ("after", after)):
            _write_csv(
                out_dir / cfg.get(f"profile_{name}_path", f"decile_profile_{name}.csv"),
                ["decile", "mean_true_volume", "mean_pred_volume"],
                [[i, t, p] for i, (t, p) in enumerate(profile.decile_means)],
            )


def cmd_bootstrap(cfg: dict, seed: int, out_dir: Path, cfg_dir: Path) -> None:
    if "input_csv" in cfg:
        input_csv = Path(cfg["input_csv"])
        if not input_csv.is_absolute():
            input_csv = cfg_dir / input_csv
        cols = _read_csv_columns(input_csv, ["a", "b"])
        a = np.array([float(v) for v in cols["a"]])
        b = np.array([float(v) for v in cols["b"]])
    else:
        a = np.array([float(v) for v in _require(cfg, "a")])
        b = np.array([float(v) for v in _require(cfg, "b")])
    result = bootstrap_paired(a, b, n_resamples=int(cfg.get("n_resamples", 10000)), seed=seed)
    obj = json.loads(result.to_json())
    obj = {k: (_round15(v) if isinstance(v, float) else v) for k, v in obj.items()}
    _write_json(out_dir / cfg.get("output_path", "bootstrap.json"), obj)


_COMMANDS = {
    "risk-curve": cmd_risk_curve,
    "bias-curve": cmd_bias_curve,
    "train-toy": cmd_train_toy,
    "calibrate": cmd_calibrate,
    "bootstrap": cmd_bootstrap,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="volbias",
        description="Volume-bias analysis sweeps for segmentation losses under label uncertainty.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON config for this command")
        p.add_argument("--seed", type=int, default=0, help="base seed for all randomness")
        p.add_argument("--out", default=".", help="directory for output files")

    args = parser.parse_args(argv)
    try:
        if args.seed < 0:
            raise CliError("--seed must be a nonnegative integer")
        cfg, cfg_dir = _load_config(args.config)
        out_dir = Path(args.out)
        _COMMANDS[args.command](cfg, args.seed, out_dir, cfg_dir)
    except (CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
