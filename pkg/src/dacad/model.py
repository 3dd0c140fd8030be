"""TCN representation encoder, classifier head with centre, and domain discriminator."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import ChannelStats, Window, stack_windows

HEADS = ("cec", "plain_bce", "deepsvdd")
CENTRE_SNAP = 0.1
CHECKPOINT_FORMAT = 1


class ModelError(ValueError):
    pass


@dataclass
class ModelConfig:
    input_dims: int
    window_size: int
    channels: list[int] = field(default_factory=lambda: [128, 256, 512])
    kernel_size: int = 3
    dilations: list[int] = field(default_factory=lambda: [1, 2, 4])
    repr_dim: int = 1024
    head_hidden: int = 512
    head_dim: int = 128
    disc_hidden: int = 256
    head: str = "cec"
    grl_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.channels = list(self.channels)
        self.dilations = list(self.dilations)
        if len(self.channels) != len(self.dilations):
            raise ModelError("channels and dilations must have equal length")
        if self.repr_dim < 1 or self.input_dims < 1 or self.window_size < 1:
            raise ModelError("dimensions must be positive")
        if self.head not in HEADS:
            raise ModelError(f"unknown head {self.head!r}; expected one of {HEADS}")

    @property
    def output_dim(self) -> int:
        return 1 if self.head == "plain_bce" else self.head_dim


class GradReverse(torch.autograd.Function):
    """Identity forward; multiplies the incoming gradient by ``-scale`` backward."""

    @staticmethod
    def forward(ctx, x, scale):
        ctx.scale = scale
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output.neg() * ctx.scale, None


def grl(x: torch.Tensor, scale: float = 1.0) -> torch.Tensor:
    return GradReverse.apply(x, scale)


class CausalConv1d(nn.Conv1d):
    def __init__(self, c_in, c_out, kernel_size, dilation):
        super().__init__(c_in, c_out, kernel_size, dilation=dilation)
        self.left_pad = (kernel_size - 1) * dilation

    def forward(self, x):
        return super().forward(F.pad(x, (self.left_pad, 0)))


class TemporalBlock(nn.Module):
    def __init__(self, c_in, c_out, kernel_size, dilation):
        super().__init__()
        self.conv1 = CausalConv1d(c_in, c_out, kernel_size, dilation)
        self.conv2 = CausalConv1d(c_out, c_out, kernel_size, dilation)
        self.skip = nn.Conv1d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x):
        h = F.relu(self.conv1(x))
        h = F.relu(self.conv2(h))
        return F.relu(h + self.skip(x))


class TCNEncoder(nn.Module):
    """Stacked causal dilated blocks; the last timestep is projected to the representation."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        blocks, c_in = [], cfg.input_dims
        for c_out, d in zip(cfg.channels, cfg.dilations):
            blocks.append(TemporalBlock(c_in, c_out, cfg.kernel_size, d))
            c_in = c_out
        self.blocks = nn.Sequential(*blocks)
        self.readout = nn.Linear(c_in, cfg.repr_dim)

    def forward(self, x):
        # x: (B, WS, D) -> conv layout (B, D, WS)
        h = self.blocks(x.transpose(1, 2))
        return self.readout(h[:, :, -1])


class DACAD(nn.Module):
    """Encoder, classifier head and discriminator plus the frozen centre.

    ``norm_stats`` keeps the per-domain standardization statistics the model was
    trained with, so scoring can normalize raw series the same way.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            self.encoder = TCNEncoder(cfg)
            self.head = nn.Sequential(
                nn.Linear(cfg.repr_dim, cfg.head_hidden),
                nn.ReLU(),
                nn.Linear(cfg.head_hidden, cfg.output_dim),
            )
            self.discriminator = nn.Sequential(
                nn.Linear(cfg.repr_dim, cfg.disc_hidden),
                nn.ReLU(),
                nn.Linear(cfg.disc_hidden, 1),
            )
        self.register_buffer("centre", torch.zeros(cfg.output_dim))
        self.norm_stats: dict[str, ChannelStats] = {}

    def _check(self, x: torch.Tensor) -> None:
        expect = (self.cfg.window_size, self.cfg.input_dims)
        if x.dim() != 3 or tuple(x.shape[1:]) != expect:
            raise ModelError(f"expected windows of shape (B, {expect[0]}, {expect[1]}), got {tuple(x.shape)}")

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        self._check(x)
        if x.shape[0] == 0:
            return x.new_zeros((0, self.cfg.repr_dim))
        return self.encoder(x)

    def classify(self, reprs: torch.Tensor) -> torch.Tensor:
        return self.head(reprs)

    def discriminate(self, reprs: torch.Tensor, reverse: bool = True) -> torch.Tensor:
        """Probability of the source domain; the GRL sits on the input when ``reverse``."""
        if reverse:
            reprs = grl(reprs, self.cfg.grl_scale)
        return torch.sigmoid(self.discriminator(reprs)).squeeze(-1)

    def score_embeddings(self, emb: torch.Tensor) -> torch.Tensor:
        if self.cfg.head == "plain_bce":
            return torch.sigmoid(emb).squeeze(-1)
        return ((emb - self.centre) ** 2).sum(-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.score_embeddings(self.classify(self.encode(x)))


def to_tensor(windows: Sequence[Window] | np.ndarray) -> torch.Tensor:
    arr = windows if isinstance(windows, np.ndarray) else stack_windows(list(windows))
    return torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32))


@torch.no_grad()
def embed(model: DACAD, windows, batch_size: int = 2048) -> np.ndarray:
    """Classifier-space embeddings g(w) for a sequence of windows."""
    x = to_tensor(windows)
    if x.shape[0] == 0:
        return np.zeros((0, model.cfg.output_dim), dtype=np.float32)
    out = [model.classify(model.encode(x[i : i + batch_size])) for i in range(0, len(x), batch_size)]
    return torch.cat(out).numpy()


@torch.no_grad()
def init_centre(model: DACAD, normal_windows, snap: float = CENTRE_SNAP) -> torch.Tensor:
    """Set the centre to the mean embedding of ``normal_windows``.

    Coordinates closer to zero than ``snap`` are pushed out to ``+/-snap`` so the
    head cannot reach the centre by collapsing to zero weights.
    """
    emb = torch.from_numpy(embed(model, normal_windows))
    if emb.shape[0] == 0:
        raise ModelError("cannot initialise centre from an empty batch")
    c = emb.mean(0)
    small = c.abs() < snap
    c[small] = torch.where(c[small] < 0, -snap, snap)
    model.centre.copy_(c)
    return model.centre


# -- checkpoints ------------------------------------------------------------


def _tensors(model: DACAD) -> dict[str, torch.Tensor]:
    return dict(model.state_dict())


def model_hash(model: DACAD) -> str:
    h = hashlib.sha256()
    for name, t in _tensors(model).items():
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()[:16]


def save_checkpoint(model: DACAD, path: str | Path, extra: Optional[dict] = None) -> Path:
    """Write ``params.bin`` (raw little-endian tensors back to back) and ``manifest.json``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name, t in _tensors(model).items():
        arr = t.detach().cpu().contiguous().numpy()
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = arr.tobytes()
        entries.append(
            {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    (path / "params.bin").write_bytes(blob)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(model.cfg),
        "seed": model.cfg.seed,
        "tensors": entries,
        "sha256": hashlib.sha256(blob).hexdigest(),
        "norm_stats": {
            k: {"mean": s.mean.tolist(), "std": s.std.tolist(), "eps": s.eps} for k, s in model.norm_stats.items()
        },
        "extra": extra or {},
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_checkpoint(path: str | Path, expect_dims: Optional[int] = None) -> DACAD:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
        blob = (path / "params.bin").read_bytes()
    except FileNotFoundError as exc:
        raise ModelError(f"checkpoint incomplete: {exc.filename}") from exc
    except json.JSONDecodeError as exc:
        raise ModelError(f"corrupt checkpoint manifest: {exc}") from exc
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ModelError(f"unsupported checkpoint format {manifest.get('format')!r}")
    if hashlib.sha256(blob).hexdigest() != manifest["sha256"]:
        raise ModelError("checkpoint parameter blob does not match manifest checksum")
    cfg = ModelConfig(**manifest["config"])
    if expect_dims is not None and cfg.input_dims != expect_dims:
        raise ModelError(f"checkpoint expects {cfg.input_dims} channels, data has {expect_dims}")
    model = DACAD(cfg)
    state = {}
    for e in manifest["tensors"]:
        arr = np.frombuffer(blob, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)),
                            offset=e["offset"]).reshape(e["shape"])
        state[e["name"]] = torch.from_numpy(arr.copy())
    model.load_state_dict(state)
    model.norm_stats = {
        k: ChannelStats(np.array(v["mean"]), np.array(v["std"]), v["eps"]) for k, v in manifest["norm_stats"].items()
    }
    return model
