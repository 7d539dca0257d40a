"""Command-line entry point wiring the pipeline end to end."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .calibration import CalibrationMap, fit_isotonic, pooled_pairs
from .data import (
    CostModel,
    SyntheticTaskConfig,
    generate_synthetic,
    load_cost_model,
    load_dataset,
    load_space,
    make_cost_model,
    save_cost_model,
    save_dataset,
    save_space,
)
from .errors import CoopError, FlagError
from .manifest import verify_artifact, write_manifest
from .model import ConceptToLabelModel, TrainConfig, train_cy
from .policies import GreedyOrder, PolicyConfig, greedy_fit
from .report import render_report, write_curves_csv
from .rollout import evaluate_curve
from .tuning import tune_coop

POLICY_CHOICES = ["coop", "greedy", "random", "skyline", "cpu-only", "cis-only"]


def _fail(err: Exception) -> None:
    click.echo(
        json.dumps({"code": getattr(err, "code", "error"), "message": str(err)}),
        err=True,
    )
    sys.exit(1)


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as e:
        raise FlagError(f"bad grid {text!r}: {e}") from e


def _load_inputs(strict: bool, **paths) -> None:
    if strict:
        for p in paths.values():
            verify_artifact(p)


def _resolve_cost_model(spec: str, space, data_dir: Path) -> CostModel:
    if spec == "unit":
        return make_cost_model("unit", space)
    if spec.startswith("random:"):
        return make_cost_model("random", space, seed=int(spec.split(":", 1)[1]))
    if spec.startswith("systematic:"):
        return make_cost_model(
            "systematic", space, cost_file=spec.split(":", 1)[1]
        )
    if spec.startswith("file:"):
        return load_cost_model(spec.split(":", 1)[1], space)
    raise FlagError(
        f"bad cost model {spec!r}; expected unit, random:SEED, "
        "systematic:FILE or file:PATH"
    )


@click.group()
def main():
    """Cost-aware interactive concept intervention toolkit."""


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--concepts", "m", default=12, show_default=True)
@click.option("--classes", default=6, show_default=True)
@click.option("--flip-rate", default=0.2, show_default=True)
@click.option("--sharpness", default=1.0, show_default=True)
@click.option("--noise", default=1.0, show_default=True)
@click.option("--tau", default=2.0, show_default=True)
@click.option("--train-size", default=4000, show_default=True)
@click.option("--val-size", default=1000, show_default=True)
@click.option("--test-size", default=2000, show_default=True)
@click.option("--seed", default=7, show_default=True)
def gen(out_dir, m, classes, flip_rate, sharpness, noise, tau,
        train_size, val_size, test_size, seed):
    """Generate a synthetic concept task and write its three splits."""
    try:
        config = SyntheticTaskConfig(
            m=m,
            label_count=classes,
            prototype_flip_rate=flip_rate,
            probe_sharpness=sharpness,
            probe_noise=noise,
            miscalibration_exponent=tau,
            n_train=train_size,
            n_val=val_size,
            n_test=test_size,
            seed=seed,
        )
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        train, val, test = generate_synthetic(config)
        save_space(train.space, out / "space.json")
        outputs = {"space.json": out / "space.json"}
        for ds in (train, val, test):
            p = out / f"{ds.split}.jsonl"
            save_dataset(ds, p)
            outputs[p.name] = p
        write_manifest(
            "gen", config.__dict__ | {"arities": list(config.arities)},
            inputs={}, outputs=outputs, seeds={"data": seed},
        )
    except CoopError as e:
        _fail(e)


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--arch", default="linear", type=click.Choice(["linear", "mlp"]))
@click.option("--hidden-width", default=64, show_default=True)
@click.option("--epochs", default=100, show_default=True)
@click.option("--learning-rate", default=0.5, show_default=True)
@click.option("--batch-size", default=64, show_default=True)
@click.option("--weight-decay", default=1e-4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--include-val", is_flag=True, help="train on train+val pooled")
@click.option("--strict", is_flag=True)
def train(data_dir, out_path, arch, hidden_width, epochs, learning_rate,
          batch_size, weight_decay, seed, include_val, strict):
    """Train the concept-to-label model on one-hot true concepts."""
    try:
        d = Path(data_dir)
        _load_inputs(strict, space=d / "space.json", train=d / "train.jsonl")
        space = load_space(d / "space.json")
        dataset = load_dataset(d / "train.jsonl", space, "train")
        if include_val:
            val = load_dataset(d / "val.jsonl", space, "val")
            from .data import Dataset

            dataset = Dataset(space, dataset.instances + val.instances, "train")
        config = TrainConfig(
            learning_rate=learning_rate,
            epochs=epochs,
            batch_size=batch_size,
            weight_decay=weight_decay,
            seed=seed,
            architecture=arch,
            hidden_width=hidden_width,
        )
        model = train_cy(dataset, config)
        model.save(out_path)
        write_manifest(
            "train", config.__dict__ | {"include_val": include_val},
            inputs={"train.jsonl": d / "train.jsonl"},
            outputs={Path(out_path).name: out_path},
            seeds={"train": seed},
        )
    except CoopError as e:
        _fail(e)


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--include-val", is_flag=True)
@click.option("--strict", is_flag=True)
def calibrate(data_dir, out_path, include_val, strict):
    """Fit the shared isotonic map on pooled training concept probabilities."""
    try:
        d = Path(data_dir)
        _load_inputs(strict, train=d / "train.jsonl")
        space = load_space(d / "space.json")
        pairs = pooled_pairs(load_dataset(d / "train.jsonl", space, "train"))
        if include_val:
            pairs += pooled_pairs(load_dataset(d / "val.jsonl", space, "val"))
        cal = fit_isotonic(pairs)
        cal.save(out_path)
        write_manifest(
            "calibrate", {"include_val": include_val, "n_pairs": len(pairs)},
            inputs={"train.jsonl": d / "train.jsonl"},
            outputs={Path(out_path).name: out_path},
        )
    except CoopError as e:
        _fail(e)


@main.command("fit-greedy")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--calibration", "cal_path", type=click.Path(exists=True))
@click.option("--metric", default="accuracy", type=click.Choice(["accuracy", "auc"]))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--strict", is_flag=True)
def fit_greedy(data_dir, model_path, cal_path, metric, out_path, strict):
    """Fit the static greedy ordering on the validation split."""
    try:
        d = Path(data_dir)
        _load_inputs(strict, val=d / "val.jsonl", model=model_path)
        space = load_space(d / "space.json")
        valset = load_dataset(d / "val.jsonl", space, "val")
        model = ConceptToLabelModel.load(model_path)
        cal = CalibrationMap.load(cal_path) if cal_path else None
        order = greedy_fit(valset, model, metric=metric, calibration=cal)
        order.save(out_path)
        inputs = {"val.jsonl": d / "val.jsonl", "model": model_path}
        if cal_path:
            inputs["calibration"] = cal_path
        write_manifest(
            "fit-greedy", {"metric": metric}, inputs=inputs,
            outputs={Path(out_path).name: out_path},
        )
    except CoopError as e:
        _fail(e)


@main.command("tune-coop")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--calibration", "cal_path", type=click.Path(exists=True))
@click.option("--cost-model", "cost_spec", default="unit", show_default=True)
@click.option("--alpha-grid", default="1", show_default=True)
@click.option("--beta-grid", default="0,0.25,0.5,1,2", show_default=True)
@click.option("--gamma-grid", default="0", show_default=True)
@click.option("--target", default="area", show_default=True,
              help="area, or budget:B for the metric at one budget")
@click.option("--metric", default="accuracy", type=click.Choice(["accuracy", "auc"]))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--strict", is_flag=True)
def tune_coop_cmd(data_dir, model_path, cal_path, cost_spec, alpha_grid,
                  beta_grid, gamma_grid, target, metric, out_path, strict):
    """Grid-search the selection weights on the validation split."""
    try:
        d = Path(data_dir)
        _load_inputs(strict, val=d / "val.jsonl", model=model_path)
        space = load_space(d / "space.json")
        valset = load_dataset(d / "val.jsonl", space, "val")
        model = ConceptToLabelModel.load(model_path)
        cal = CalibrationMap.load(cal_path) if cal_path else None
        cost_model = _resolve_cost_model(cost_spec, space, d)
        if target == "area":
            tgt = ("curve_area", None)
        elif target.startswith("budget:"):
            tgt = ("budget", float(target.split(":", 1)[1]))
        else:
            raise FlagError(f"bad target {target!r}")
        result = tune_coop(
            valset, model, cost_model, cal,
            alpha_grid=_parse_grid(alpha_grid),
            beta_grid=_parse_grid(beta_grid),
            gamma_grid=_parse_grid(gamma_grid),
            target=tgt,
            metric=metric,
            calibration_ref=str(cal_path) if cal_path else None,
        )
        result.config.save(out_path)
        table_path = Path(out_path).with_suffix(".table.json")
        table_path.write_text(
            json.dumps(
                {
                    "target": target,
                    "best_value": result.target_value,
                    "rows": [list(r) for r in result.table],
                },
                indent=2,
            )
            + "\n"
        )
        write_manifest(
            "tune-coop",
            {
                "alpha_grid": alpha_grid, "beta_grid": beta_grid,
                "gamma_grid": gamma_grid, "target": target,
                "metric": metric, "cost_model": cost_spec,
            },
            inputs={"val.jsonl": d / "val.jsonl", "model": model_path},
            outputs={Path(out_path).name: out_path, table_path.name: table_path},
        )
    except CoopError as e:
        _fail(e)


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--split", default="test", type=click.Choice(["train", "val", "test"]))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--calibration", "cal_path", type=click.Path(exists=True))
@click.option("--policy", "policies", multiple=True,
              type=click.Choice(POLICY_CHOICES), default=("coop",))
@click.option("--coop-config", "coop_path", type=click.Path(exists=True))
@click.option("--greedy-order", "greedy_path", type=click.Path(exists=True))
@click.option("--axis", default="steps", type=click.Choice(["steps", "cost"]))
@click.option("--budget-grid", default=None,
              help="comma-separated budgets; defaults to 0..m (steps) or 0..100 (cost)")
@click.option("--cost-model", "cost_spec", default="unit", show_default=True)
@click.option("--metric", default="accuracy", type=click.Choice(["accuracy", "auc"]))
@click.option("--seeds", default=1, show_default=True,
              help="number of rollout seeds for the stochastic policy")
@click.option("--seed-base", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--strict", is_flag=True)
def simulate(data_dir, split, model_path, cal_path, policies, coop_path,
             greedy_path, axis, budget_grid, cost_spec, metric, seeds,
             seed_base, out_path, strict):
    """Evaluate policies over a budget grid and write the curve CSV."""
    try:
        d = Path(data_dir)
        _load_inputs(strict, data=d / f"{split}.jsonl", model=model_path)
        space = load_space(d / "space.json")
        dataset = load_dataset(d / f"{split}.jsonl", space, split)
        model = ConceptToLabelModel.load(model_path)
        cal = CalibrationMap.load(cal_path) if cal_path else None
        cost_model = _resolve_cost_model(cost_spec, space, d)
        if budget_grid is not None:
            grid = _parse_grid(budget_grid)
        elif axis == "steps":
            grid = list(range(space.m + 1))
        else:
            grid = [0.0] + list(np.linspace(5.0, 100.0, 20))
        coop_config = PolicyConfig.load(coop_path) if coop_path else None
        greedy_order = GreedyOrder.load(greedy_path) if greedy_path else None
        needs_coop = {"coop", "cpu-only", "cis-only"} & set(policies)
        if needs_coop and coop_config is None:
            raise FlagError("--coop-config required for coop-family policies")
        if "greedy" in policies and greedy_order is None:
            raise FlagError("--greedy-order required for the greedy policy")
        curves = []
        for name in policies:
            curves.append(
                evaluate_curve(
                    name, dataset, grid, axis, cost_model, model, cal,
                    coop_config=coop_config,
                    greedy_order=greedy_order,
                    seeds=[seed_base + s for s in range(seeds)],
                    metric=metric,
                )
            )
        write_curves_csv(curves, out_path)
        inputs = {f"{split}.jsonl": d / f"{split}.jsonl", "model": model_path}
        if cal_path:
            inputs["calibration"] = cal_path
        if coop_path:
            inputs["coop_config"] = coop_path
        if greedy_path:
            inputs["greedy_order"] = greedy_path
        write_manifest(
            "simulate",
            {
                "split": split, "policies": list(policies), "axis": axis,
                "grid": grid, "cost_model": cost_spec, "metric": metric,
                "seeds": seeds, "seed_base": seed_base,
            },
            inputs=inputs,
            outputs={Path(out_path).name: out_path},
            seeds={"rollout_base": seed_base},
        )
    except CoopError as e:
        _fail(e)


@main.command()
@click.option("--curves", "curves_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--metric", default="accuracy", show_default=True)
@click.option("--strict", is_flag=True)
def report(curves_path, out_dir, metric, strict):
    """Render figures and the area summary from a curve CSV."""
    try:
        _load_inputs(strict, curves=curves_path)
        written = render_report(curves_path, out_dir, metric_name=metric)
        write_manifest(
            "report", {"metric": metric},
            inputs={"curves": curves_path},
            outputs={p.name: p for p in written},
        )
    except CoopError as e:
        _fail(e)


@main.command()
@click.option("--artifacts", "artifact_dir", required=True,
              type=click.Path(exists=True), envvar="COOPCBM_ARTIFACTS")
@click.option("--log-dir", required=True, type=click.Path(),
              envvar="COOPCBM_LOG_DIR")
@click.option("--static-dir", type=click.Path(), envvar="COOPCBM_STATIC_DIR")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(artifact_dir, log_dir, static_dir, host, port):
    """Serve the interactive session API (and the UI when built)."""
    import uvicorn

    from .service import create_app

    try:
        app = create_app(artifact_dir, log_dir, static_dir)
    except CoopError as e:
        _fail(e)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
