import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from typing import List, Sequence, Tuple

from dcc_segmenter.utils.errors import ModelError

ENCODER_WIDTHS = (8, 16, 32, 64)
DECODER_WIDTHS = (32, 16, 8, 8)
NORM_EPS = 1e-12
DTYPE = torch.float64


class Encoder(nn.Module):
    """Four stages of 3x3 conv, ReLU and 2x average pooling, then global average pooling"""

    def __init__(self, in_channels: int = 2, widths: Sequence[int] = ENCODER_WIDTHS):
        super().__init__()
        self.in_channels = in_channels
        self.widths = tuple(widths)
        self.convs = nn.ModuleList()
        previous = in_channels
        for width in self.widths:
            self.convs.append(nn.Conv2d(previous, width, kernel_size=3, padding=1))
            previous = width

    @property
    def feature_dim(self) -> int:
        return self.widths[-1]

    def forward_with_skips(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, List[torch.Tensor]]:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ModelError(f"encoder expects (N, {self.in_channels}, P, P) input, got {tuple(x.shape)}", code="model.shape")
        downsample = 2 ** len(self.convs)
        if x.shape[2] % downsample or x.shape[3] % downsample:
            raise ModelError(f"patch size must be a multiple of {downsample}, got {tuple(x.shape[2:])}", code="model.shape")
        skips = []
        for conv in self.convs:
            x = F.relu(conv(x))
            skips.append(x)
            x = F.avg_pool2d(x, 2)
        feature = x.mean(dim=(2, 3))
        return feature, x, skips

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        feature, feature_map, _ = self.forward_with_skips(x)
        return feature, feature_map


class ProjectionHead(nn.Module):
    """Two affine layers with a ReLU between, output L2-normalized"""

    def __init__(self, in_dim: int = 64, hidden_dim: int = 64, out_dim: int = 32):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, hidden_dim)
        self.fc2 = nn.Linear(hidden_dim, out_dim)

    def forward(self, feature: torch.Tensor) -> torch.Tensor:
        h = self.fc2(F.relu(self.fc1(feature)))
        return h / (h.norm(dim=1, keepdim=True) + NORM_EPS)


class SegmentationHead(nn.Module):
    """
    Mirror decoder: four stages of 2x upsampling and 3x3 conv + ReLU from the pre-pool feature map

    Each stage concatenates the encoder activation of matching resolution before its conv.
    A 1x1 conv and a sigmoid give the P x P probability map.
    """

    def __init__(self, encoder_widths: Sequence[int] = ENCODER_WIDTHS, widths: Sequence[int] = DECODER_WIDTHS):
        super().__init__()
        self.convs = nn.ModuleList()
        previous = encoder_widths[-1]
        for skip_width, width in zip(reversed(encoder_widths), widths):
            self.convs.append(nn.Conv2d(previous + skip_width, width, kernel_size=3, padding=1))
            previous = width
        self.out = nn.Conv2d(previous, 1, kernel_size=1)

    def forward(self, feature_map: torch.Tensor, skips: Sequence[torch.Tensor]) -> torch.Tensor:
        x = feature_map
        for conv, skip in zip(self.convs, reversed(skips)):
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = F.relu(conv(torch.cat([x, skip], dim=1)))
        return torch.sigmoid(self.out(x))[:, 0]


class ContrastiveModel(nn.Module):
    """Encoder followed by the projection head used for pretraining"""

    def __init__(self, projection_dim: int = 32):
        super().__init__()
        self.encoder = Encoder()
        self.projection = ProjectionHead(self.encoder.feature_dim, self.encoder.feature_dim, projection_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feature, _ = self.encoder(x)
        return self.projection(feature)


class SegmentationModel(nn.Module):
    """Encoder followed by the segmentation head used for fine-tuning"""

    def __init__(self):
        super().__init__()
        self.encoder = Encoder()
        self.head = SegmentationHead(self.encoder.widths)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _, feature_map, skips = self.encoder.forward_with_skips(x)
        return self.head(feature_map, skips)


def init_weights(module: nn.Module) -> nn.Module:
    # He-style uniform fan-in weights, zero biases
    for layer in module.modules():
        if isinstance(layer, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_uniform_(layer.weight, nonlinearity="relu")
            nn.init.zeros_(layer.bias)
    return module


def build_contrastive_model(seed: int, projection_dim: int = 32) -> ContrastiveModel:
    torch.manual_seed(seed)
    return init_weights(ContrastiveModel(projection_dim)).to(DTYPE)


def build_segmentation_model(seed: int) -> SegmentationModel:
    torch.manual_seed(seed)
    return init_weights(SegmentationModel()).to(DTYPE)


def as_input(batch: np.ndarray) -> torch.Tensor:
    """(N, 2, P, P) or (2, P, P) numpy input as a float64 tensor"""
    array = np.asarray(batch, dtype=np.float64)
    if array.ndim == 3:
        array = array[None]
    return torch.from_numpy(np.ascontiguousarray(array))


def encoder_forward(encoder: Encoder, inputs: np.ndarray) -> Tuple[torch.Tensor, torch.Tensor]:
    """Feature vectors (N, 64) and pre-pool feature maps (N, 64, P/16, P/16)"""
    return encoder(as_input(inputs))


def project(projection: ProjectionHead, feature: torch.Tensor) -> torch.Tensor:
    return projection(feature)


def seg_forward(model: SegmentationModel, inputs: np.ndarray) -> torch.Tensor:
    """Probability maps (N, P, P) in (0, 1)"""
    return model(as_input(inputs))
