from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..grid import Constellation


class NumericalFailure(FloatingPointError):
    def __init__(self, detector: str, iteration: int):
        super().__init__(f"{detector}: non-finite messages at iteration {iteration}")
        self.detector = detector
        self.iteration = iteration


@dataclass
class SoftOutput:
    """Per-symbol posteriors, or a linear estimate with its output SINR.

    ``pmf`` rows follow the column-stacked symbol order and sum to one.
    For LMMSE ``estimate`` holds x_hat, ``bias`` the per-symbol gain mu_i
    (E[x_hat_i | x_i] = mu_i x_i) and ``sinr`` = mu_i / (1 - mu_i).
    """

    constellation: Constellation
    pmf: np.ndarray | None = None
    estimate: np.ndarray | None = None
    sinr: np.ndarray | None = None
    bias: np.ndarray | None = None
    iterations: int = 0
    converged: bool = False
    info: dict = field(default_factory=dict)

    def probabilities(self) -> np.ndarray:
        """pmf rows; for LMMSE, the Gaussian output model posterior."""
        if self.pmf is not None:
            return self.pmf
        pts = self.constellation.points
        mu = self.bias[:, None]
        var = (self.bias * (1 - self.bias))[:, None]
        var = np.maximum(var, 1e-300)
        ll = -np.abs(self.estimate[:, None] - mu * pts[None, :]) ** 2 / var
        return softmax(ll)

    def hard(self) -> np.ndarray:
        return self.constellation.points[np.argmax(self.probabilities(), axis=1)]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    return p


def log_prior(prior, n: int, Q: int) -> np.ndarray:
    if prior is None:
        return np.zeros((n, Q))
    p = np.broadcast_to(np.asarray(prior, dtype=float), (n, Q))
    if np.any(np.abs(p.sum(axis=1) - 1) > 1e-9) or np.any(p < 0):
        raise ValueError("priors must be normalized pmfs")
    with np.errstate(divide="ignore"):
        return np.log(p)
