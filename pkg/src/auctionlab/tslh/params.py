"""Parameter container for the three-stage model."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import InvalidCovariance


def _check_spd(mat, name, allow_zero=False):
    mat = np.asarray(mat, dtype=float)
    if not np.allclose(mat, mat.T, atol=1e-10):
        raise InvalidCovariance(name)
    eig = np.linalg.eigvalsh((mat + mat.T) / 2.0)
    lo = 0.0 if allow_zero else -1e-300
    if np.min(eig) < lo - 1e-12 or (not allow_zero and np.min(eig) <= 0):
        raise InvalidCovariance(name)


@dataclass
class TslhParams:
    """Everything except the latents: transition, loadings, noise scales.

    gamma holds the (log valuation, log price) loadings on log lot volume;
    gamma_pv is the generator-only direct valuation -> price arrow (the
    sampler never estimates it as a parameter, only the causality test
    recovers it as a derived regression statistic).
    """
    F: np.ndarray          # (D, D) state transition
    Q: np.ndarray          # (D, D) state innovation covariance
    phi0: float
    phi: float
    beta: np.ndarray       # (3,) direct / same-source / same-grade loadings
    H: np.ndarray          # (kx,) stage-2 exogenous loadings
    R: float
    gamma: np.ndarray      # (2,)
    S: np.ndarray          # (2, 2)
    gamma_pv: float = 0.0

    def validate(self, noise_free: bool = False) -> "TslhParams":
        if self.F.shape[0] != self.F.shape[1]:
            raise ValueError("F must be square")
        if self.Q.shape != self.F.shape or self.S.shape != (2, 2):
            raise ValueError("covariance shapes do not match")
        _check_spd(self.Q, "Q", allow_zero=noise_free)
        _check_spd(self.S, "S", allow_zero=noise_free)
        if self.R < 0 or (self.R == 0 and not noise_free):
            raise InvalidCovariance("R")
        if len(self.beta) != 3:
            raise ValueError("beta must have three entries")
        return self

    def theta(self) -> np.ndarray:
        """Stage-2 coefficient vector [phi0, phi, beta1..3, H]."""
        return np.concatenate([[self.phi0, self.phi], self.beta, self.H])

    def with_theta(self, theta) -> "TslhParams":
        theta = np.asarray(theta, dtype=float)
        return replace(self, phi0=float(theta[0]), phi=float(theta[1]),
                       beta=theta[2:5].copy(), H=theta[5:].copy())
