"""Inpainting generator, spectrally normalized discriminator, checkpoints.

The generator is a skip-connection encoder-decoder: stride-2 convolution
blocks double the channel count on the way down, nearest-upsample blocks
mirror them on the way up with the matching encoder features concatenated
in, and a sigmoid head keeps the single-channel output in (0, 1). Every
discriminator weight is rescaled by its largest singular value, estimated
by power iteration with a persistent left-singular vector.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class GeneratorSpec:
    depth: int = 4
    base_channels: int = 32
    width: int = 64
    height: int = 64

    def __post_init__(self):
        if self.depth < 1 or self.base_channels < 1:
            raise ValueError("depth and base_channels must be >= 1")
        factor = 2 ** self.depth
        if self.width % factor or self.height % factor:
            raise ValueError(
                f"input size {self.width}x{self.height} not divisible by 2^depth={factor}"
            )


@dataclass(frozen=True)
class DiscriminatorSpec:
    depth: int = 4
    base_channels: int = 32
    spectral_norm_iters: int = 1

    def __post_init__(self):
        if self.depth < 1 or self.base_channels < 1:
            raise ValueError("depth and base_channels must be >= 1")
        if self.spectral_norm_iters < 1:
            raise ValueError("spectral_norm_iters must be >= 1")


def spectral_normalize(weight, u, iters: int):
    """Rescale a 2D weight matrix by its power-iteration top singular value.

    Runs ``iters`` rounds of v <- norm(W^T u), u <- norm(W v) and divides by
    sigma = u^T W v. Returns (normalized weight, updated u, degenerate flag);
    a zero matrix cannot be rescaled and comes back unchanged with the flag
    set.
    """
    w = np.asarray(weight, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError(f"expected 2D weight matrix, got shape {w.shape}")
    u = np.asarray(u, dtype=np.float64).copy()
    if iters < 1:
        raise ValueError("iters must be >= 1")
    v = None
    for _ in range(iters):
        v = w.T @ u
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return w.copy(), u, True
        v /= nv
        u = w @ v
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return w.copy(), u, True
        u /= nu
    sigma = float(u @ (w @ v))
    if sigma == 0.0:
        return w.copy(), u, True
    return w / sigma, u, False


def _l2norm(t: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    return t / (t.norm() + eps)


class _SpectralNormMixin:
    """Power-iteration weight rescaling shared by SN layers.

    The u/v estimates persist as buffers and advance one (or
    ``spectral_norm_iters``) steps per training-mode forward; evaluation
    reuses the stored estimates, keeping inference deterministic.
    """

    def _init_sn(self, iters: int):
        self.spectral_norm_iters = iters
        out_dim = self.weight.shape[0]
        in_dim = self.weight[0].numel()
        self.register_buffer("sn_u", torch.ones(out_dim))
        self.register_buffer("sn_v", torch.ones(in_dim))

    def _seed_sn(self, gen: torch.Generator):
        self.sn_u.normal_(0, 1, generator=gen)
        self.sn_u.copy_(_l2norm(self.sn_u))
        self.sn_v.normal_(0, 1, generator=gen)
        self.sn_v.copy_(_l2norm(self.sn_v))

    def normalized_weight(self) -> torch.Tensor:
        w = self.weight.reshape(self.weight.shape[0], -1)
        if self.training:
            with torch.no_grad():
                for _ in range(self.spectral_norm_iters):
                    self.sn_v.copy_(_l2norm(w.t() @ self.sn_u))
                    self.sn_u.copy_(_l2norm(w @ self.sn_v))
        sigma = torch.dot(self.sn_u, torch.mv(w, self.sn_v))
        return self.weight / sigma


class SNConv2d(nn.Module, _SpectralNormMixin):
    def __init__(self, in_ch, out_ch, kernel, stride, padding, iters=1):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.weight = nn.Parameter(torch.empty(out_ch, in_ch, kernel, kernel))
        self.bias = nn.Parameter(torch.zeros(out_ch))
        self._init_sn(iters)

    def forward(self, x):
        return F.conv2d(x, self.normalized_weight(), self.bias,
                        stride=self.stride, padding=self.padding)


class SNLinear(nn.Module, _SpectralNormMixin):
    def __init__(self, in_features, out_features, iters=1):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(out_features, in_features))
        self.bias = nn.Parameter(torch.zeros(out_features))
        self._init_sn(iters)

    def forward(self, x):
        return F.linear(x, self.normalized_weight(), self.bias)


class Generator(nn.Module):
    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        c = spec.base_channels
        downs = []
        in_ch = 1
        for i in range(spec.depth):
            out_ch = c * 2 ** i
            layers = [nn.Conv2d(in_ch, out_ch, 4, stride=2, padding=1)]
            if i > 0:
                layers.append(nn.BatchNorm2d(out_ch))
            layers.append(nn.LeakyReLU(0.2))
            downs.append(nn.Sequential(*layers))
            in_ch = out_ch
        self.downs = nn.ModuleList(downs)
        self.bottleneck = nn.Sequential(
            nn.Conv2d(in_ch, in_ch, 3, padding=1),
            nn.BatchNorm2d(in_ch),
            nn.ReLU(),
        )
        ups = []
        for i in range(spec.depth, 0, -1):
            skip_ch = c * 2 ** (i - 2) if i >= 2 else 0
            out_ch = c * 2 ** (i - 2) if i >= 2 else c
            ups.append(nn.Sequential(
                nn.Conv2d(in_ch + skip_ch, out_ch, 3, padding=1),
                nn.BatchNorm2d(out_ch),
                nn.ReLU(),
            ))
            in_ch = out_ch
        self.ups = nn.ModuleList(ups)
        self.head = nn.Conv2d(c, 1, 3, padding=1)

    def forward(self, x):
        if x.shape[-2:] != (self.spec.height, self.spec.width):
            raise ValueError(
                f"input {tuple(x.shape[-2:])} does not match generator size "
                f"({self.spec.height}, {self.spec.width})"
            )
        feats = []
        h = x
        for down in self.downs:
            h = down(h)
            feats.append(h)
        h = self.bottleneck(h)
        for j, up in enumerate(self.ups):
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            skip_idx = self.spec.depth - 2 - j
            if skip_idx >= 0:
                h = torch.cat([h, feats[skip_idx]], dim=1)
            h = up(h)
        return torch.sigmoid(self.head(h))


class Discriminator(nn.Module):
    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        c = spec.base_channels
        blocks = []
        in_ch = 1
        for i in range(spec.depth):
            out_ch = c * 2 ** i
            blocks.append(SNConv2d(in_ch, out_ch, 4, 2, 1, iters=spec.spectral_norm_iters))
            blocks.append(nn.LeakyReLU(0.2))
            in_ch = out_ch
        self.features = nn.Sequential(*blocks)
        self.classifier = SNLinear(in_ch, 1, iters=spec.spectral_norm_iters)

    def forward(self, x):
        h = self.features(x).mean(dim=(2, 3))
        return torch.sigmoid(self.classifier(h)).squeeze(1)


def _torch_generator_from(rng: np.random.Generator) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(int(rng.integers(0, 2 ** 63 - 1)))
    return gen


def _init_params(module: nn.Module, gen: torch.Generator) -> None:
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            m.weight.data.normal_(0.0, 0.02, generator=gen)
            if m.bias is not None:
                m.bias.data.zero_()
        elif isinstance(m, (SNConv2d, SNLinear)):
            m.weight.data.normal_(0.0, 0.02, generator=gen)
            m.bias.data.zero_()
            m._seed_sn(gen)
        elif isinstance(m, nn.BatchNorm2d):
            m.weight.data.normal_(1.0, 0.02, generator=gen)
            m.bias.data.zero_()


def build_generator(spec: GeneratorSpec, rng: np.random.Generator) -> Generator:
    """Construct a generator with parameters seeded from ``rng``."""
    net = Generator(spec)
    _init_params(net, _torch_generator_from(rng))
    return net


def build_discriminator(spec: DiscriminatorSpec, rng: np.random.Generator) -> Discriminator:
    net = Discriminator(spec)
    _init_params(net, _torch_generator_from(rng))
    return net


def _batch_to_tensor(batch) -> torch.Tensor:
    arr = np.asarray(batch, dtype=np.float32)
    if arr.ndim != 3:
        raise ValueError(f"expected (N, H, W) batch, got shape {arr.shape}")
    return torch.from_numpy(arr).unsqueeze(1)


def generator_forward(generator: Generator, batch) -> np.ndarray:
    """Reconstruct a batch of masked unit-range slices (N, H, W) -> (N, H, W)."""
    generator.eval()
    with torch.no_grad():
        out = generator(_batch_to_tensor(batch))
    return out.squeeze(1).numpy().astype(np.float64)


def discriminator_forward(discriminator: Discriminator, batch) -> np.ndarray:
    """Score a batch of unit-range slices; one probability in (0, 1) each."""
    discriminator.eval()
    with torch.no_grad():
        out = discriminator(_batch_to_tensor(batch))
    return out.numpy().astype(np.float64)


@dataclass
class ModelCheckpoint:
    """Persisted network state for one mask size gamma.

    ``kind`` is "generator" for trained models; the "identity" kind is a
    test hook whose reconstruction is a perfect copy of the query slice.
    """
    kind: str
    gamma: int
    config_digest: str = ""
    g_spec: GeneratorSpec | None = None
    d_spec: DiscriminatorSpec | None = None
    g_state: dict | None = None
    d_state: dict | None = None
    format_version: int = CHECKPOINT_FORMAT_VERSION

    def build_generator(self) -> Generator:
        if self.kind != "generator":
            raise ValueError(f"checkpoint of kind {self.kind!r} holds no generator")
        net = Generator(self.g_spec)
        net.load_state_dict(self.g_state)
        net.eval()
        return net

    def build_discriminator(self) -> Discriminator:
        if self.kind != "generator":
            raise ValueError(f"checkpoint of kind {self.kind!r} holds no discriminator")
        net = Discriminator(self.d_spec)
        net.load_state_dict(self.d_state)
        net.eval()
        return net


def config_digest(config_dict: dict) -> str:
    """Stable digest of a config mapping, recorded inside checkpoints."""
    blob = json.dumps(config_dict, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(ckpt: ModelCheckpoint, path) -> None:
    payload = {
        "format_version": ckpt.format_version,
        "kind": ckpt.kind,
        "gamma": ckpt.gamma,
        "config_digest": ckpt.config_digest,
    }
    if ckpt.kind == "generator":
        payload["g_spec"] = asdict(ckpt.g_spec)
        payload["d_spec"] = asdict(ckpt.d_spec)
        payload["g_state"] = ckpt.g_state
        payload["d_state"] = ckpt.d_state
    torch.save(payload, path)


def save_identity_checkpoint(path, gamma: int) -> None:
    """Test hook: a checkpoint whose reconstructor restores the query exactly."""
    save_checkpoint(ModelCheckpoint(kind="identity", gamma=gamma), path)


def load_checkpoint(path) -> ModelCheckpoint:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ValueError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise ValueError(f"{path}: not a model checkpoint")
    if payload["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(
            f"{path}: checkpoint format version {payload['format_version']} "
            f"not supported (expected {CHECKPOINT_FORMAT_VERSION})"
        )
    kind = payload["kind"]
    ckpt = ModelCheckpoint(
        kind=kind,
        gamma=int(payload["gamma"]),
        config_digest=payload.get("config_digest", ""),
    )
    if kind == "generator":
        ckpt.g_spec = GeneratorSpec(**payload["g_spec"])
        ckpt.d_spec = DiscriminatorSpec(**payload["d_spec"])
        ckpt.g_state = payload["g_state"]
        ckpt.d_state = payload["d_state"]
    elif kind != "identity":
        raise ValueError(f"{path}: unknown checkpoint kind {kind!r}")
    return ckpt
