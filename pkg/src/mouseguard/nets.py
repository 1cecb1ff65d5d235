"""Torch networks shared by the authenticator, selector, and attack models.

Every classifier follows the same conv(2x9) -> conv(7) -> conv(5) -> LSTM ->
dense family; ``scale="paper"`` uses the full 64/96/128-filter stack with a
128-wide two-layer LSTM, ``scale="desk"`` is a narrow variant of the same
shape that trains in seconds on a CPU.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

_SCALES = {
    # channels, lstm hidden, lstm layers, dense width, pool after conv1/conv2
    "desk": ((8, 12, 16), 16, 1, 32, True),
    "paper": ((64, 96, 128), 128, 2, 128, False),
}

_SELECTOR_SCALES = {
    "desk": ((8, 12, 1), 16, 1, 32, True),
    "paper": ((64, 96, 1), 64, 2, 400, True),
}


def _check_scale(scale: str) -> None:
    if scale not in _SCALES:
        raise ValueError(f"unknown architecture scale {scale!r}")


class ChannelNormMixin:
    """Per-channel input standardization stored as buffers.

    Raw velocities are hundreds of px/s; every net standardizes them with
    statistics of its training data so the px/s interfaces stay untouched.
    """

    def _init_norm(self):
        self.register_buffer("input_mean", torch.zeros(2, 1))
        self.register_buffer("input_std", torch.ones(2, 1))

    def set_normalization(self, mean, std) -> None:
        mean = torch.as_tensor(np.asarray(mean, dtype=np.float32)).reshape(2, 1)
        std = torch.as_tensor(np.asarray(std, dtype=np.float32)).reshape(2, 1)
        self.input_mean.copy_(mean.to(self.input_mean.dtype))
        self.input_std.copy_(std.clamp(min=1e-6).to(self.input_std.dtype))

    def normalize(self, x: torch.Tensor) -> torch.Tensor:
        return (x - self.input_mean) / self.input_std

    def denormalize(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.input_std + self.input_mean


def channel_stats(batch) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std of a (B, 2, M) training array."""
    arr = np.asarray(batch, dtype=np.float64)
    return arr.mean(axis=(0, 2)), arr.std(axis=(0, 2))


class AuthenticatorNet(ChannelNormMixin, nn.Module):
    """Binary sequence classifier over a flattened (2, n_movements*L) trial."""

    def __init__(self, scale: str = "desk", dropout: float = 0.1):
        super().__init__()
        self._init_norm()
        _check_scale(scale)
        (c1, c2, c3), hidden, layers, dense, pool = _SCALES[scale]
        self.scale = scale
        self.pool = pool
        self.drop = nn.Dropout(dropout)
        self.conv1 = nn.Conv2d(1, c1, kernel_size=(2, 9))
        self.bn1 = nn.BatchNorm1d(c1)
        self.conv2 = nn.Conv1d(c1, c2, kernel_size=7)
        self.bn2 = nn.BatchNorm1d(c2)
        self.conv3 = nn.Conv1d(c2, c3, kernel_size=5)
        self.lstm = nn.LSTM(c3, hidden, num_layers=layers, batch_first=True)
        self.fc1 = nn.Linear(hidden, dense)
        self.fc2 = nn.Linear(dense, 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: (B, 2, M) velocities; returns logits (B, 2) as (valid, invalid)."""
        x = self.normalize(x)
        h = self.conv1(self.drop(x.unsqueeze(1))).squeeze(2)
        h = self.bn1(h)
        if self.pool:
            h = F.max_pool1d(h, 2)
        h = self.bn2(self.conv2(self.drop(h)))
        if self.pool:
            h = F.max_pool1d(h, 2)
        h = self.conv3(self.drop(h))
        out, _ = self.lstm(F.relu(h).transpose(1, 2))
        h = F.relu(self.fc1(out[:, -1]))
        return self.fc2(h)


class SelectorNet(ChannelNormMixin, nn.Module):
    """Maps a flattened trial to one relevance score per movement."""

    def __init__(self, n_movements: int, scale: str = "desk"):
        super().__init__()
        self._init_norm()
        _check_scale(scale)
        (c1, c2, c3), hidden, layers, dense, pool = _SELECTOR_SCALES[scale]
        self.pool = pool
        self.conv1 = nn.Conv2d(1, c1, kernel_size=(2, 9))
        self.bn1 = nn.BatchNorm1d(c1)
        self.conv2 = nn.Conv1d(c1, c2, kernel_size=7)
        self.bn2 = nn.BatchNorm1d(c2)
        self.conv3 = nn.Conv1d(c2, c3, kernel_size=5)
        self.lstm = nn.LSTM(c3, hidden, num_layers=layers, batch_first=True)
        self.fc1 = nn.Linear(hidden, dense)
        self.fc2 = nn.Linear(dense, n_movements)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.normalize(x)
        h = F.max_pool1d(self.bn1(self.conv1(x.unsqueeze(1)).squeeze(2)), 2)
        h = F.max_pool1d(self.bn2(self.conv2(h)), 2)
        h = self.conv3(h)
        out, _ = self.lstm(F.relu(h).transpose(1, 2))
        return self.fc2(F.relu(self.fc1(out[:, -1])))


class GeneratorNet(ChannelNormMixin, nn.Module):
    """Two dense layers producing one adversarial movement (2, L).

    Input and output stay in raw px/s; the layers work in standardized
    coordinates so the initial outputs already live at data scale.
    """

    def __init__(self, in_features: int, movement_length: int):
        super().__init__()
        self._init_norm()
        width = 2 * movement_length
        self.movement_length = movement_length
        self.fc1 = nn.Linear(in_features, width)
        self.fc2 = nn.Linear(width, width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.normalize(x.view(len(x), 2, -1)).flatten(1)
        h = self.fc2(F.relu(self.fc1(h)))
        return self.denormalize(h.view(-1, 2, self.movement_length))


class ReconstructionNet(ChannelNormMixin, nn.Module):
    """Two dense layers mapping a masked composite back to a full trial."""

    def __init__(self, n_features: int):
        super().__init__()
        self._init_norm()
        self.fc1 = nn.Linear(n_features, n_features)
        self.fc2 = nn.Linear(n_features, n_features)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        shape = x.shape
        h = self.normalize(x).flatten(1)
        return self.denormalize(self.fc2(F.relu(self.fc1(h))).view(shape))


# ---------------------------------------------------------------------------
# differentiable k-hot selection


def hard_topk_mask(scores: torch.Tensor, k: int) -> torch.Tensor:
    """Exact k-hot mask of the top-k scores per row."""
    hard = torch.zeros_like(scores)
    idx = torch.topk(scores, k, dim=-1).indices
    return hard.scatter(-1, idx, 1.0)


def relaxed_topk(scores: torch.Tensor, k: int, temperature: float) -> torch.Tensor:
    """Successive-softmax relaxation of top-k selection.

    Rows sum to exactly k; as temperature -> 0 the result converges to the
    hard k-hot mask (for distinct scores).
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    khot = torch.zeros_like(scores)
    s = scores.clone()
    for _ in range(k):
        p = torch.softmax(s / temperature, dim=-1)
        khot = khot + p
        s = s + torch.log1p(-p.clamp(max=1.0 - 1e-7))
    return khot


def topk_mask(scores: torch.Tensor, k: int, temperature: float, mode: str) -> torch.Tensor:
    """k-hot selection in one of three modes.

    ``hard``  exact top-k, no gradient through the selection;
    ``soft``  smooth relaxation (for gradient checking);
    ``st``    straight-through: hard values forward, soft gradient backward.
    """
    if k >= scores.shape[-1]:
        return torch.ones_like(scores)
    if mode == "hard":
        return hard_topk_mask(scores, k)
    soft = relaxed_topk(scores, k, temperature)
    if mode == "soft":
        return soft
    if mode == "st":
        return hard_topk_mask(scores, k) + (soft - soft.detach())
    raise ValueError(f"unknown mask mode {mode!r}")


def expand_mask(mask: torch.Tensor, movement_length: int) -> torch.Tensor:
    """(B, n_movements) -> (B, 1, n_movements*L), broadcastable over channels."""
    return mask.repeat_interleave(movement_length, dim=-1).unsqueeze(1)


def torch_mean_speed(movements: torch.Tensor, convention: str = "magnitude") -> torch.Tensor:
    """Average speed of (B, 2, L) movement blocks; differentiable."""
    if convention == "magnitude":
        return movements.pow(2).sum(dim=1).clamp_min(1e-12).sqrt().mean(dim=-1)
    if convention == "per_coordinate":
        return movements.abs().mean(dim=(1, 2))
    raise ValueError(f"unknown speed convention {convention!r}")
