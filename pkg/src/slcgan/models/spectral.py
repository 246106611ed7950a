"""Spectral normalization via power iteration.

Weights are divided by a running power-iteration estimate of their largest
singular value; conv kernels are reshaped to (out_channels, fan_in) first.
The estimate is refined by one power iteration per training-mode call and
frozen in evaluation mode so forward passes stay bitwise deterministic.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

SIGMA_EPS = 1e-12  # floor for near-zero weights: 0 / eps leaves them unchanged


def spectral_normalize(weight: torch.Tensor, u: torch.Tensor,
                       n_power_iterations: int = 1) -> tuple[torch.Tensor, torch.Tensor]:
    """Normalize ``weight`` by its estimated top singular value.

    ``u`` is the persistent left power-iteration vector (length = rows of
    the 2D view). Returns the normalized weight and the updated ``u``.
    """
    w2d = weight.reshape(weight.shape[0], -1)
    with torch.no_grad():
        v = None
        for _ in range(max(n_power_iterations, 0)):
            v = F.normalize(w2d.t().mv(u), dim=0, eps=SIGMA_EPS)
            u = F.normalize(w2d.mv(v), dim=0, eps=SIGMA_EPS)
        if v is None:
            v = F.normalize(w2d.t().mv(u), dim=0, eps=SIGMA_EPS)
    sigma = torch.dot(u, w2d.mv(v)).clamp_min(SIGMA_EPS)
    return weight / sigma, u


class _SpectralMixin:
    """Shared normalized-weight logic for spectrally normalized layers."""

    sn_enabled: bool

    def _init_sn(self, enabled: bool):
        self.sn_enabled = enabled
        if enabled:
            self.register_buffer("weight_u", torch.zeros(self.weight.shape[0]))

    def normalized_weight(self) -> torch.Tensor:
        if not self.sn_enabled:
            return self.weight
        w2d = self.weight.reshape(self.weight.shape[0], -1)
        u = self.weight_u
        with torch.no_grad():
            v = F.normalize(w2d.t().mv(u), dim=0, eps=SIGMA_EPS)
            if self.training:
                u = F.normalize(w2d.mv(v), dim=0, eps=SIGMA_EPS)
                self.weight_u.copy_(u)
        sigma = torch.dot(u, w2d.mv(v)).clamp_min(SIGMA_EPS)
        return self.weight / sigma


class SNLinear(nn.Linear, _SpectralMixin):
    def __init__(self, in_features, out_features, bias=True, spectral_norm=True):
        super().__init__(in_features, out_features, bias=bias)
        self._init_sn(spectral_norm)

    def forward(self, x):
        return F.linear(x, self.normalized_weight(), self.bias)


class SNConv2d(nn.Conv2d, _SpectralMixin):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0,
                 bias=True, spectral_norm=True):
        super().__init__(in_channels, out_channels, kernel_size,
                         stride=stride, padding=padding, bias=bias)
        self._init_sn(spectral_norm)

    def forward(self, x):
        return self._conv_forward(x, self.normalized_weight(), self.bias)
