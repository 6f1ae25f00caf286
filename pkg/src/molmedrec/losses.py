"""Training losses and the interaction-rate-controlled mixing coefficient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, matmul

__all__ = ["LossConfig", "bce_loss", "margin_loss", "ddi_loss", "alpha",
           "combined_loss"]

PROB_CLAMP = 1e-12


@dataclass
class LossConfig:
    beta: float = 0.95        # bce / margin mix
    phi: float = 0.06         # acceptable interaction rate
    kappa_ddi: float = 2.5    # controller sharpness
    threshold: float = 0.5    # recommendation cut

    def validate(self) -> None:
        if not 0 < self.beta < 1:
            raise ValueError("beta must be in (0, 1)")
        if not 0 < self.phi < 1:
            raise ValueError("phi must be in (0, 1)")
        if self.kappa_ddi <= 0:
            raise ValueError("kappa_ddi must be positive")


def _check_lengths(m: np.ndarray, p: Tensor) -> None:
    if m.shape != p.shape:
        raise ValueError(f"length mismatch: labels {m.shape} vs probs {p.shape}")


def bce_loss(m: np.ndarray, p: Tensor) -> Tensor:
    """Binary cross-entropy summed over drugs (no mean)."""
    _check_lengths(m, p)
    pc = p.clip(PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -(m * pc.log() + (1.0 - m) * (1.0 - pc).log()).sum()


def margin_loss(m: np.ndarray, p: Tensor) -> Tensor:
    """Multi-label margin: sum over (positive, negative) pairs of
    max(0, 1 - (p_i - p_j)) / |M|; 0 when either index set is empty."""
    _check_lengths(m, p)
    pos = np.flatnonzero(m > 0.5)
    neg = np.flatnonzero(m <= 0.5)
    if len(pos) == 0 or len(neg) == 0:
        return Tensor(0.0)
    diff = p[pos].reshape(len(pos), 1) - p[neg].reshape(1, len(neg))
    return (1.0 - diff).relu().sum() * (1.0 / m.shape[0])


def ddi_loss(p: Tensor, ddi: np.ndarray) -> Tensor:
    """Full double sum p^T M p (each unordered interacting pair counts twice)."""
    n = p.shape[0]
    if ddi.shape != (n, n):
        raise ValueError(f"ddi matrix shape {ddi.shape} does not match {n} drugs")
    row = p.reshape(1, n)
    return matmul(matmul(row, Tensor(ddi)), row.transpose()).reshape(())


def alpha(rho: float, cfg: LossConfig) -> float:
    """Mixing weight: 1 below the acceptance rate, exponential decay above."""
    if cfg.phi <= 0:
        raise ValueError("phi must be positive")
    if rho < cfg.phi:
        return 1.0
    return min(1.0, float(np.exp(cfg.kappa_ddi * (1.0 - rho / cfg.phi))))


def combined_loss(m: np.ndarray, p: Tensor, ddi: np.ndarray, rho: float,
                  cfg: LossConfig) -> Tensor:
    """alpha * (beta * bce + (1 - beta) * margin) + (1 - alpha) * ddi.

    `rho` is the current thresholded interaction rate, computed outside the
    tape (the controller treats it as a plain number).
    """
    a = alpha(rho, cfg)
    base = cfg.beta * bce_loss(m, p) + (1.0 - cfg.beta) * margin_loss(m, p)
    if a == 1.0:
        return base
    return a * base + (1.0 - a) * ddi_loss(p, ddi)
