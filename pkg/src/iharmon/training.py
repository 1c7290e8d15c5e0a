"""Stage-wise optimization loop.

Stage 1 trains with the whole background as the reference region, stage 2
switches to the synthesized guide masks, stage 3 is a low-rate finetune on
portrait-style data. Batch order is a pure function of (seed, stage, step),
so a checkpoint needs no mutable RNG state to resume bit-exactly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .imaging import resize, resize_mask_binary
from .losses import LossReport, LossWeights, total_loss
from .model import ModelBundle, ModelConfig
from .synthesis import CompositeSample, list_record_dirs, read_sample
from .weights import WeightArchive

__all__ = [
    "StageConfig",
    "TrainState",
    "TrainingError",
    "TrainDataset",
    "make_batch",
    "train_stage",
    "run_curriculum",
    "new_state",
    "save_state",
    "load_state",
    "batch_indices",
]

log = logging.getLogger(__name__)

STAGE_LEARNING_RATES = {1: 1e-4, 2: 1e-5, 3: 1e-6}
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class StageConfig:
    stage: int
    dataset: str
    steps: int
    lr: float | None = None  # None picks the stage default
    batch_size: int = 48
    resolution: int = 256
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    checkpoint_every: int = 500
    checkpoint_dir: str | None = None
    style_losses: bool = True  # stage 1 may disable consistency/triplets
    log_path: str | None = None

    def __post_init__(self) -> None:
        if self.stage not in (1, 2, 3):
            raise ValueError("stage must be 1, 2 or 3")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.resolution % 16 != 0:
            raise ValueError("resolution must be divisible by 16")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")

    @property
    def learning_rate(self) -> float:
        return self.lr if self.lr is not None else STAGE_LEARNING_RATES[self.stage]

    @classmethod
    def from_dict(cls, raw: dict) -> "StageConfig":
        raw = dict(raw)
        lw = raw.pop("loss_weights", None)
        if lw is not None:
            raw["weights"] = LossWeights(**lw)
        return cls(**raw)


@dataclass
class TrainState:
    bundle: ModelBundle
    optimizer: torch.optim.Adam
    stage: int = 0
    step: int = 0
    seed: int = 0
    running_avg: float | None = None
    lineage: list = field(default_factory=list)
    history: list = field(default_factory=list)  # LossReport per step, current stage


def new_state(config: ModelConfig, seed: int = 0) -> TrainState:
    bundle = ModelBundle.create(config, seed=seed)
    optimizer = torch.optim.Adam(list(bundle.parameters()), lr=1e-4,
                                 betas=ADAM_BETAS, eps=ADAM_EPS)
    return TrainState(bundle=bundle, optimizer=optimizer, seed=seed)


def batch_indices(seed: int, stage: int, step: int, n: int, batch_size: int) -> list[int]:
    """Record indices for one step, derived from (seed, stage, step) alone."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, stage, step]))
    if batch_size <= n:
        return rng.permutation(n)[:batch_size].tolist()
    return rng.integers(0, n, size=batch_size).tolist()


def resize_sample(sample: CompositeSample, resolution: int) -> CompositeSample:
    if sample.composite.shape[0] == resolution and sample.composite.shape[1] == resolution:
        return sample
    return CompositeSample(
        composite=resize(sample.composite, resolution, resolution),
        ground_truth=resize(sample.ground_truth, resolution, resolution),
        fg_mask=resize_mask_binary(sample.fg_mask, resolution, resolution),
        guide_mask=resize_mask_binary(sample.guide_mask, resolution, resolution),
        meta=sample.meta,
    )


class TrainDataset:
    """Record directory listing with cached, resolution-normalized samples."""

    def __init__(self, root: str | Path, resolution: int):
        self.root = Path(root)
        self.resolution = resolution
        self.dirs = list_record_dirs(self.root)
        if not self.dirs:
            raise TrainingError(f"no records found under {self.root}")
        self._cache: dict[int, CompositeSample] = {}

    def __len__(self) -> int:
        return len(self.dirs)

    def __getitem__(self, index: int) -> CompositeSample:
        if index not in self._cache:
            self._cache[index] = resize_sample(read_sample(self.dirs[index]), self.resolution)
        return self._cache[index]


@dataclass
class Batch:
    composite: torch.Tensor  # (B,3,H,W)
    ground_truth: torch.Tensor
    masked_fg: torch.Tensor  # composite with background zeroed
    fg_mask: torch.Tensor  # (B,1,H,W)
    ref_mask: torch.Tensor  # style-encoder region: background in stage 1
    record_ids: list[str]


def _chw(img: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).float()


def make_batch(samples: list[CompositeSample], cfg: StageConfig) -> Batch:
    """Stack samples into training tensors; empty-mask samples are skipped."""
    comps, gts, fgs, refs, ids = [], [], [], [], []
    for sample in samples:
        fg = sample.fg_mask
        ref = (1.0 - fg) if cfg.stage == 1 else sample.guide_mask
        rid = str(sample.meta.get("id", "?"))
        if fg.max() <= 0.5 or ref.max() <= 0.5:
            log.warning("skipping sample %s: empty mask", rid)
            continue
        comps.append(_chw(sample.composite))
        gts.append(_chw(sample.ground_truth))
        fgs.append(torch.from_numpy(fg).float().unsqueeze(0))
        refs.append(torch.from_numpy(ref).float().unsqueeze(0))
        ids.append(rid)
    if not comps:
        raise TrainingError("all samples in batch had empty masks")
    composite = torch.stack(comps)
    fg_mask = torch.stack(fgs)
    return Batch(
        composite=composite,
        ground_truth=torch.stack(gts),
        masked_fg=composite * fg_mask,
        fg_mask=fg_mask,
        ref_mask=torch.stack(refs),
        record_ids=ids,
    )


def _step_losses(state: TrainState, batch: Batch, cfg: StageConfig):
    harmonizer = state.bundle.harmonizer
    encoder = state.bundle.style_encoder
    code_ref = encoder(batch.composite, batch.ref_mask)
    out = harmonizer(batch.masked_fg, batch.fg_mask, code_ref)
    harmonized = out * batch.fg_mask + batch.composite * (1.0 - batch.fg_mask)
    if cfg.style_losses:
        w = cfg.weights
        code_h = encoder(harmonized, batch.fg_mask)
        code_c = encoder(batch.composite, batch.fg_mask)
        code_r = encoder(batch.ground_truth, batch.fg_mask)
    else:
        w = replace(cfg.weights, lam=0.0, beta=0.0)
        code_h = code_c = code_r = code_ref
    return total_loss(harmonized, batch.ground_truth, batch.fg_mask,
                      code_h, code_ref, code_c, code_r, w)


def _append_log(cfg: StageConfig, step: int, report: LossReport) -> None:
    if cfg.log_path is None:
        return
    entry = {"stage": cfg.stage, "step": step, **json.loads(report.to_json())}
    with open(cfg.log_path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def train_stage(state: TrainState, cfg: StageConfig) -> TrainState:
    """Run (or resume) one curriculum stage in place and return the state."""
    if state.stage not in (cfg.stage, cfg.stage - 1):
        raise TrainingError(
            f"stage {cfg.stage} requires weights from stage {cfg.stage - 1}, "
            f"state is at stage {state.stage}"
        )
    dataset = TrainDataset(cfg.dataset, cfg.resolution)
    if state.stage == cfg.stage - 1:  # fresh entry: new moments, step 0
        state.stage = cfg.stage
        state.step = 0
        state.history = []
        state.optimizer = torch.optim.Adam(
            list(state.bundle.parameters()), lr=cfg.learning_rate,
            betas=ADAM_BETAS, eps=ADAM_EPS,
        )
        state.lineage.append({"stage": cfg.stage, "steps": cfg.steps,
                              "dataset": str(cfg.dataset), "seed": cfg.seed})
    for group in state.optimizer.param_groups:
        group["lr"] = cfg.learning_rate
    state.seed = cfg.seed
    state.bundle.train()

    ckpt_dir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
    if ckpt_dir:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    for step in range(state.step, cfg.steps):
        ids = batch_indices(cfg.seed, cfg.stage, step, len(dataset), cfg.batch_size)
        batch = make_batch([dataset[i] for i in ids], cfg)
        state.optimizer.zero_grad(set_to_none=True)
        total, report = _step_losses(state, batch, cfg)
        if not torch.isfinite(total):
            _dump_bad_batch(ckpt_dir, cfg, step, batch)
            raise TrainingError(
                f"non-finite loss at stage {cfg.stage} step {step}, "
                f"batch records {batch.record_ids}"
            )
        total.backward()
        state.optimizer.step()
        state.step = step + 1
        state.history.append(report)
        state.running_avg = (report.total if state.running_avg is None
                             else 0.99 * state.running_avg + 0.01 * report.total)
        _append_log(cfg, step, report)
        if ckpt_dir and state.step % cfg.checkpoint_every == 0:
            save_state(state, ckpt_dir / f"stage{cfg.stage}_step{state.step:06d}.ihw")
    state.bundle.eval()
    return state


def _dump_bad_batch(ckpt_dir: Path | None, cfg: StageConfig, step: int, batch: Batch) -> None:
    payload = {"stage": cfg.stage, "step": step, "record_ids": batch.record_ids}
    target = (ckpt_dir or Path(".")) / f"bad_batch_stage{cfg.stage}_step{step}.json"
    try:
        target.write_text(json.dumps(payload, indent=2))
    except OSError:
        log.warning("could not write diagnostic dump to %s", target)


def run_curriculum(cfgs: list[StageConfig], state: TrainState | None = None) -> WeightArchive:
    """Chain the stages in order; all datasets are checked before training."""
    for cfg in cfgs:
        if not list_record_dirs(Path(cfg.dataset)):
            raise TrainingError(f"stage {cfg.stage} dataset missing or empty: {cfg.dataset}")
    if state is None:
        if not cfgs:
            raise TrainingError("no stages configured")
        first_res = cfgs[0].resolution
        state = new_state(ModelConfig(resolution=first_res), seed=cfgs[0].seed)
    for cfg in cfgs:
        state = train_stage(state, cfg)
    return state.bundle.to_archive(stage=state.stage, step=state.step,
                                   extra_meta={"lineage": state.lineage})


# -- checkpoint serialization ------------------------------------------------

def save_state(state: TrainState, path: str | Path) -> None:
    lr = state.optimizer.param_groups[0]["lr"]
    archive = state.bundle.to_archive(
        stage=state.stage,
        step=state.step,
        extra_meta={
            "kind": "train_state",
            "seed": state.seed,
            "lr": lr,
            "running_avg": state.running_avg,
            "lineage": state.lineage,
        },
    )
    params = list(state.bundle.parameters())
    names = [name for name, _ in state.bundle.named_parameters()]
    for name, param in zip(names, params):
        slot = state.optimizer.state.get(param)
        if not slot:
            continue
        step_val = slot["step"]
        step_arr = np.asarray(
            [float(step_val) if not torch.is_tensor(step_val) else float(step_val.item())],
            dtype=np.float32,
        )
        archive.put(f"optim.{name}.step", step_arr)
        archive.put(f"optim.{name}.exp_avg", slot["exp_avg"].detach().cpu().numpy())
        archive.put(f"optim.{name}.exp_avg_sq", slot["exp_avg_sq"].detach().cpu().numpy())
    archive.save(path)


def load_state(path: str | Path) -> TrainState:
    archive = WeightArchive.load(path)
    config = ModelConfig(**archive.meta["config"])
    bundle = ModelBundle.create(config)
    bundle.load_archive(archive)
    lr = float(archive.meta.get("lr", 1e-4))
    optimizer = torch.optim.Adam(list(bundle.parameters()), lr=lr,
                                 betas=ADAM_BETAS, eps=ADAM_EPS)
    names = [name for name, _ in bundle.named_parameters()]
    sd = optimizer.state_dict()
    for i, name in enumerate(names):
        key = f"optim.{name}.exp_avg"
        if key not in archive.tensors:
            continue
        sd["state"][i] = {
            "step": torch.tensor(float(archive.get(f"optim.{name}.step")[0])),
            "exp_avg": torch.from_numpy(archive.get(key).copy()),
            "exp_avg_sq": torch.from_numpy(archive.get(f"optim.{name}.exp_avg_sq").copy()),
        }
    optimizer.load_state_dict(sd)
    return TrainState(
        bundle=bundle,
        optimizer=optimizer,
        stage=int(archive.meta.get("stage", 0)),
        step=int(archive.meta.get("step", 0)),
        seed=int(archive.meta.get("seed", 0)),
        running_avg=archive.meta.get("running_avg"),
        lineage=list(archive.meta.get("lineage", [])),
    )
