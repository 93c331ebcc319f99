"""Toy networks: two small feature extractors and a slim U-Net.

Extractor variant "a" is a plain conv stack; variant "b" adds a parallel
1x1/3x3 branch (inception-flavored). Both stay under 200k parameters; the
U-Net stays under 500k.
"""

from __future__ import annotations

import torch
import torch.nn as nn


class ExtractorA(nn.Module):
    """conv-bn-pool stack -> global average pool -> feature layer -> head."""

    def __init__(self, feature_dim: int = 64):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 16, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(16)
        self.conv2 = nn.Conv2d(16, 32, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(32)
        self.conv3 = nn.Conv2d(32, 64, 3, padding=1)
        self.bn3 = nn.BatchNorm2d(64)
        self.pool = nn.MaxPool2d(2, 2)
        self.fc_feat = nn.Linear(64, feature_dim)
        self.head = nn.Linear(feature_dim, 3)
        self.feature_dim = feature_dim

    def features(self, x: torch.Tensor) -> torch.Tensor:
        x = self.pool(torch.relu(self.bn1(self.conv1(x))))
        x = self.pool(torch.relu(self.bn2(self.conv2(x))))
        x = self.pool(torch.relu(self.bn3(self.conv3(x))))
        x = x.mean(dim=(2, 3))
        return self.fc_feat(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(torch.relu(self.features(x)))


class ExtractorB(nn.Module):
    """Same skeleton with a two-path (1x1 + 3x3) block in the middle."""

    def __init__(self, feature_dim: int = 64):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 16, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(16)
        self.branch1 = nn.Conv2d(16, 16, 1)
        self.branch3 = nn.Conv2d(16, 16, 3, padding=1)
        self.bn_cat = nn.BatchNorm2d(32)
        self.conv2 = nn.Conv2d(32, 48, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(48)
        self.pool = nn.MaxPool2d(2, 2)
        self.fc_feat = nn.Linear(48, feature_dim)
        self.head = nn.Linear(feature_dim, 3)
        self.feature_dim = feature_dim

    def features(self, x: torch.Tensor) -> torch.Tensor:
        x = self.pool(torch.relu(self.bn1(self.conv1(x))))
        x = torch.cat([torch.relu(self.branch1(x)), torch.relu(self.branch3(x))], dim=1)
        x = self.pool(torch.relu(self.bn_cat(x)))
        x = self.pool(torch.relu(self.bn2(self.conv2(x))))
        x = x.mean(dim=(2, 3))
        return self.fc_feat(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(torch.relu(self.features(x)))


EXTRACTORS = {"a": ExtractorA, "b": ExtractorB}


class TinyUNet(nn.Module):
    """Two-level encoder/decoder with skip concatenation, sigmoid output."""

    def __init__(self):
        super().__init__()
        self.enc1 = nn.Conv2d(3, 16, 3, padding=1)
        self.enc2 = nn.Conv2d(16, 32, 3, padding=1)
        self.bottleneck = nn.Conv2d(32, 64, 3, padding=1)
        self.pool = nn.MaxPool2d(2, 2)
        self.up1 = nn.ConvTranspose2d(64, 32, 2, stride=2)
        self.dec1 = nn.Conv2d(64, 32, 3, padding=1)
        self.up2 = nn.ConvTranspose2d(32, 16, 2, stride=2)
        self.dec2 = nn.Conv2d(32, 16, 3, padding=1)
        self.out = nn.Conv2d(16, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        e1 = torch.relu(self.enc1(x))
        e2 = torch.relu(self.enc2(self.pool(e1)))
        b = torch.relu(self.bottleneck(self.pool(e2)))
        d1 = torch.relu(self.dec1(torch.cat([self.up1(b), e2], dim=1)))
        d2 = torch.relu(self.dec2(torch.cat([self.up2(d1), e1], dim=1)))
        return torch.sigmoid(self.out(d2))


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
