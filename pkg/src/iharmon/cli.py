"""Command-line entry points: synth, train, run, eval, serve."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click

from .imgio import read_image, read_mask, write_image
from .inference import BlendRatios, HarmonizeRequest, color_transfer, harmonize
from .model import ModelConfig, load_bundle
from .synthesis import build_dataset
from .training import (
    StageConfig,
    load_state,
    new_state,
    save_state,
    train_stage,
)


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Region-guided image harmonization toolkit."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--src", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--ann", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSON list of {image, masks} entries, paths relative to the file.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--count", default=16, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
def synth(src: str, ann: str, out: str, count: int, seed: int) -> None:
    """Synthesize composite/ground-truth training records."""
    manifest = build_dataset(Path(src), Path(ann), Path(out), count=count, seed=seed)
    click.echo(f"wrote {len(manifest['records'])} records to {out}")


def _load_train_doc(config_path: str) -> tuple[ModelConfig, list[StageConfig]]:
    doc = json.loads(Path(config_path).read_text())
    model = ModelConfig(**doc.get("model", {}))
    stages = [StageConfig.from_dict(s) for s in doc["stages"]]
    stages.sort(key=lambda s: s.stage)
    return model, stages


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON document with 'model' and 'stages' sections.")
@click.option("--stage", "only_stage", type=int, default=None,
              help="Run a single stage instead of the whole curriculum.")
@click.option("--resume", "resume_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Checkpoint to continue from.")
@click.option("--out", "out_path", default="weights.ihw", show_default=True,
              help="Where to write the final weight archive.")
def train(config_path: str, only_stage: int | None, resume_path: str | None,
          out_path: str) -> None:
    """Run stage-wise training from a JSON config."""
    model_cfg, stages = _load_train_doc(config_path)
    if resume_path:
        state = load_state(resume_path)
        click.echo(f"resumed stage {state.stage} at step {state.step}")
    else:
        state = new_state(model_cfg, seed=stages[0].seed if stages else 0)
    if only_stage is not None:
        picked = [s for s in stages if s.stage == only_stage]
        if not picked:
            raise click.ClickException(f"no stage {only_stage} in config")
        stages = picked
        if only_stage > 1 and resume_path is None:
            raise click.ClickException(
                f"stage {only_stage} needs --resume with stage {only_stage - 1} weights"
            )
    for cfg in stages:
        if cfg.stage < state.stage:
            click.echo(f"skipping completed stage {cfg.stage}")
            continue
        click.echo(f"stage {cfg.stage}: {cfg.steps} steps at lr {cfg.learning_rate}")
        state = train_stage(state, cfg)
        if state.history:
            click.echo(f"stage {cfg.stage} final loss {state.history[-1].total:.5f}")
    save_state(state, out_path)
    click.echo(f"saved weights to {out_path}")


@main.command()
@click.option("--composite", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--fg-mask", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--guide-mask", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--weights", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--r1", type=float, default=None, help="Style blend ratio (with --r2).")
@click.option("--r2", type=float, default=None, help="Style blend ratio (with --r1).")
@click.option("--color-weights", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Separate color-encoder archive; defaults to --weights.")
def run(composite: str, fg_mask: str, guide_mask: str | None, weights: str,
        out: str, r1: float | None, r2: float | None, color_weights: str | None) -> None:
    """Harmonize one composite (optionally with style-code blending)."""
    bundle = load_bundle(weights)
    req = HarmonizeRequest(
        composite=read_image(composite),
        fg_mask=read_mask(fg_mask),
        guide_mask=read_mask(guide_mask) if guide_mask else None,
    )
    if (r1 is None) != (r2 is None):
        raise click.ClickException("--r1 and --r2 must be given together")
    if r1 is not None:
        color_bundle = load_bundle(color_weights) if color_weights else bundle
        result = color_transfer(req, BlendRatios(r1=r1, r2=r2), bundle, color_bundle)
    else:
        result = harmonize(req, bundle)
    write_image(out, result.image)
    ref = "default (whole background)" if result.used_default_reference else "guide mask"
    click.echo(f"wrote {out} (reference: {ref})")


@main.command(name="eval")
@click.option("--weights", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", default="report.json", show_default=True)
def eval_cmd(weights: str, data: str, out: str) -> None:
    """Score a model and the direct-composite baseline over a dataset."""
    from .metrics import evaluate, write_report

    bundle = load_bundle(weights)
    baseline = evaluate("direct_composite", data)
    model_row = evaluate(bundle, data, label="harmonized")
    write_report([baseline, model_row], out)
    for row, _ in (baseline, model_row):
        click.echo(f"{row.method:>16}: psnr {row.psnr:.2f} dB  "
                   f"ssim {row.ssim:.4f}  mse {row.mse:.2f}  (n={row.n_images})")
    click.echo(f"report written to {out}")


@main.command()
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--weights", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--color-weights", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--workers", default=2, show_default=True, type=int,
              help="Concurrent inference slots.")
def serve(port: int, host: str, weights: str | None, color_weights: str | None,
          workers: int) -> None:
    """Start the HTTP service."""
    import uvicorn

    from .service import create_app

    app = create_app(weights=weights, color_weights=color_weights, workers=workers)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
