"""Harmonizer and style-encoder networks.

The harmonizer is a 4-down/4-up encoder-decoder over the masked foreground;
its decoder blocks are modulated by a 1xD style code through adaptive
instance normalization. The style encoder summarizes a masked reference
region into that code with partial convolutions and a masked global pool.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .weights import ArchiveError, WeightArchive, config_hash

__all__ = [
    "ModelConfig",
    "PartialConv2d",
    "StyleEncoder",
    "StyleAffineHead",
    "Harmonizer",
    "ModelBundle",
    "adain",
    "partial_conv",
]

DEPTH = 4  # encoder/decoder blocks; bottleneck at input/16
MAX_CHANNELS = 512
INSTANCE_NORM_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    style_dim: int = 256
    base_channels: int = 32
    res_blocks: int = 2
    resolution: int = 256

    def __post_init__(self) -> None:
        if self.resolution % 16 != 0:
            raise ValueError("resolution must be divisible by 16")

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def channel_plan(self) -> list[int]:
        nc = self.base_channels
        return [min(nc * (2**i), MAX_CHANNELS) for i in range(DEPTH + 1)]


def partial_conv(
    features: torch.Tensor,
    mask: torch.Tensor,
    weight: torch.Tensor,
    bias: torch.Tensor | None,
    stride: int = 1,
    padding: int = 0,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Convolution renormalized over valid pixels, with mask propagation.

    Where a window holds no valid pixel the output is zero and the updated
    mask is zero. Under an all-ones mask this equals a zero-padded dense
    convolution (out-of-bounds pixels never count as invalid).
    """
    kh, kw = weight.shape[2], weight.shape[3]
    raw = F.conv2d(features * mask, weight, None, stride=stride, padding=padding)
    ones_kernel = torch.ones(1, 1, kh, kw, dtype=features.dtype, device=features.device)
    in_bounds = F.conv2d(
        torch.ones_like(mask), ones_kernel, None, stride=stride, padding=padding
    )
    mask_sum = F.conv2d(mask, ones_kernel, None, stride=stride, padding=padding)
    valid = mask_sum > 0
    scale = torch.where(valid, in_bounds / mask_sum.clamp(min=1e-8), torch.zeros_like(mask_sum))
    out = raw * scale
    if bias is not None:
        out = out + bias.view(1, -1, 1, 1) * valid
    return out, valid.to(features.dtype)


class PartialConv2d(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, stride: int = 1):
        super().__init__()
        self.stride = stride
        self.padding = kernel // 2
        self.weight = nn.Parameter(torch.empty(out_ch, in_ch, kernel, kernel))
        self.bias = nn.Parameter(torch.zeros(out_ch))
        nn.init.kaiming_uniform_(self.weight, a=0.2)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return partial_conv(x, mask, self.weight, self.bias, self.stride, self.padding)


class StyleEncoder(nn.Module):
    """Partial-conv downsampler ending in a masked global average pool."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        nc = config.base_channels
        plan = [3, min(nc * 2, MAX_CHANNELS), min(nc * 4, MAX_CHANNELS),
                min(nc * 8, MAX_CHANNELS), config.style_dim]
        self.layers = nn.ModuleList(
            PartialConv2d(plan[i], plan[i + 1], kernel=3, stride=2)
            for i in range(len(plan) - 1)
        )
        self.style_dim = config.style_dim

    def forward(self, image: torch.Tensor, region: torch.Tensor) -> torch.Tensor:
        if region.dim() == 3:
            region = region.unsqueeze(1)
        if (region.sum(dim=(1, 2, 3)) <= 0).any():
            raise ValueError("empty reference region")
        x = image * region
        m = region
        for layer in self.layers:
            x, m = layer(x, m)
            x = F.leaky_relu(x, 0.2)
        pooled = (x * m).sum(dim=(2, 3)) / m.sum(dim=(2, 3)).clamp(min=1e-8)
        return pooled


def adain(
    features: torch.Tensor,
    gamma: torch.Tensor,
    beta: torch.Tensor,
    eps: float = INSTANCE_NORM_EPS,
) -> torch.Tensor:
    """Renormalize each channel to style-derived scale/bias.

    gamma/beta are (B, C) or (B, C, 1, 1); statistics are per channel over
    the spatial extent (population std).
    """
    if gamma.dim() == 2:
        gamma = gamma[:, :, None, None]
    if beta.dim() == 2:
        beta = beta[:, :, None, None]
    mu = features.mean(dim=(2, 3), keepdim=True)
    sigma = features.var(dim=(2, 3), keepdim=True, unbiased=False).sqrt()
    return gamma * (features - mu) / (sigma + eps) + beta


class StyleAffineHead(nn.Module):
    """Maps a style code to per-channel (gamma, beta); gamma starts near 1."""

    def __init__(self, style_dim: int, channels: int):
        super().__init__()
        self.linear = nn.Linear(style_dim, channels * 2)
        self.channels = channels

    def forward(self, code: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        out = self.linear(code)
        gamma = 1.0 + out[:, : self.channels]
        beta = out[:, self.channels :]
        return gamma, beta


class EncoderResBlock(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.conv1 = nn.Conv2d(ch, ch, 3, padding=1, bias=False)
        self.norm1 = nn.InstanceNorm2d(ch, eps=INSTANCE_NORM_EPS)
        self.conv2 = nn.Conv2d(ch, ch, 3, padding=1, bias=False)
        self.norm2 = nn.InstanceNorm2d(ch, eps=INSTANCE_NORM_EPS)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = F.leaky_relu(self.norm1(self.conv1(x)), 0.2)
        y = self.norm2(self.conv2(y))
        return F.leaky_relu(x + y, 0.2)


class DecoderResBlock(nn.Module):
    # no plain normalization here: it would wash out the AdaIN statistics
    def __init__(self, ch: int):
        super().__init__()
        self.conv1 = nn.Conv2d(ch, ch, 3, padding=1)
        self.conv2 = nn.Conv2d(ch, ch, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.conv2(F.leaky_relu(self.conv1(x), 0.2))
        return F.leaky_relu(x + y, 0.2)


class EncoderBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, res_blocks: int):
        super().__init__()
        self.down = nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1, bias=False)
        self.norm = nn.InstanceNorm2d(out_ch, eps=INSTANCE_NORM_EPS)
        self.res = nn.Sequential(*[EncoderResBlock(out_ch) for _ in range(res_blocks)])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.res(F.leaky_relu(self.norm(self.down(x)), 0.2))


class DecoderBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, style_dim: int, res_blocks: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1, bias=False)
        self.style = StyleAffineHead(style_dim, out_ch)
        self.res = nn.Sequential(*[DecoderResBlock(out_ch) for _ in range(res_blocks)])

    def forward(self, x: torch.Tensor, code: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = self.conv(x)
        gamma, beta = self.style(code)
        x = F.leaky_relu(adain(x, gamma, beta), 0.2)
        return self.res(x)


class Harmonizer(nn.Module):
    """Encoder-decoder over the masked foreground, style-modulated decoder."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        plan = config.channel_plan()
        self.style_proj = nn.Linear(config.style_dim, 3)
        self.stem = nn.Conv2d(7, plan[0], 3, padding=1)
        self.encoder = nn.ModuleList(
            EncoderBlock(plan[i], plan[i + 1], config.res_blocks) for i in range(DEPTH)
        )
        self.decoder = nn.ModuleList(
            DecoderBlock(plan[DEPTH - i], plan[DEPTH - i - 1], config.style_dim, config.res_blocks)
            for i in range(DEPTH)
        )
        self.out_conv = nn.Conv2d(plan[0], 3, 3, padding=1)

    def _input_tensor(
        self, masked_fg: torch.Tensor, fg_mask: torch.Tensor, code: torch.Tensor
    ) -> torch.Tensor:
        if fg_mask.dim() == 3:
            fg_mask = fg_mask.unsqueeze(1)
        h, w = masked_fg.shape[2], masked_fg.shape[3]
        if h % 16 != 0 or w % 16 != 0:
            raise ValueError(f"resolution {h}x{w} not divisible by 16")
        proj = self.style_proj(code)[:, :, None, None].expand(-1, -1, h, w)
        return torch.cat([masked_fg, fg_mask, proj], dim=1)

    def encode_latent(
        self, masked_fg: torch.Tensor, fg_mask: torch.Tensor, code: torch.Tensor
    ) -> torch.Tensor:
        x = F.leaky_relu(self.stem(self._input_tensor(masked_fg, fg_mask, code)), 0.2)
        for block in self.encoder:
            x = block(x)
        return x

    def forward(
        self, masked_fg: torch.Tensor, fg_mask: torch.Tensor, code: torch.Tensor
    ) -> torch.Tensor:
        x = self.encode_latent(masked_fg, fg_mask, code)
        for block in self.decoder:
            x = block(x, code)
        return torch.sigmoid(self.out_conv(x))


@dataclass
class ModelBundle:
    """Harmonizer + style encoder pair sharing one config."""

    harmonizer: Harmonizer
    style_encoder: StyleEncoder
    config: ModelConfig

    @classmethod
    def create(cls, config: ModelConfig, seed: int = 0) -> "ModelBundle":
        torch.manual_seed(seed)
        return cls(Harmonizer(config), StyleEncoder(config), config)

    def parameters(self):
        yield from self.harmonizer.parameters()
        yield from self.style_encoder.parameters()

    def named_parameters(self):
        for name, p in self.harmonizer.named_parameters():
            yield f"harmonizer.{name}", p
        for name, p in self.style_encoder.named_parameters():
            yield f"style_encoder.{name}", p

    def eval(self) -> "ModelBundle":
        self.harmonizer.eval()
        self.style_encoder.eval()
        return self

    def train(self) -> "ModelBundle":
        self.harmonizer.train()
        self.style_encoder.train()
        return self

    def to_archive(self, stage: int = 0, step: int = 0, extra_meta: dict | None = None) -> WeightArchive:
        archive = WeightArchive(
            meta={
                "config": self.config.to_dict(),
                "config_hash": self.config.hash(),
                "stage": stage,
                "step": step,
                **(extra_meta or {}),
            }
        )
        for name, param in self.named_parameters():
            archive.put(name, param.detach().cpu().numpy())
        return archive

    def load_archive(self, archive: WeightArchive) -> None:
        """Copy archive tensors into this bundle; reject config mismatches."""
        meta_hash = archive.meta.get("config_hash")
        if meta_hash != self.config.hash():
            raise ArchiveError(
                f"archive config hash {meta_hash} != model config hash {self.config.hash()}"
            )
        params = dict(self.named_parameters())
        missing = set(params) - set(archive.tensors)
        extra = {
            n for n in archive.tensors
            if (n.startswith("harmonizer.") or n.startswith("style_encoder.")) and n not in params
        }
        if missing or extra:
            raise ArchiveError(f"parameter set mismatch: missing={sorted(missing)[:3]} extra={sorted(extra)[:3]}")
        with torch.no_grad():
            for name, param in params.items():
                value = torch.from_numpy(archive.get(name))
                if tuple(value.shape) != tuple(param.shape):
                    raise ArchiveError(f"shape mismatch for {name}")
                param.copy_(value)


def save_bundle(bundle: ModelBundle, path, stage: int = 0, step: int = 0,
                extra_meta: dict | None = None) -> None:
    bundle.to_archive(stage=stage, step=step, extra_meta=extra_meta).save(path)


def load_bundle(path) -> ModelBundle:
    archive = WeightArchive.load(path)
    try:
        config = ModelConfig(**archive.meta["config"])
    except (KeyError, TypeError) as exc:
        raise ArchiveError(f"{path}: missing or invalid model config") from exc
    bundle = ModelBundle.create(config)
    bundle.load_archive(archive)
    bundle.eval()
    return bundle
