"""Parameter layout: one common vector plus one fixed-effect vector per stratum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError

__all__ = ["ParameterPoint"]


@dataclass(frozen=True, eq=False)
class ParameterPoint:
    """Common parameter ``phi`` and per-stratum effects ``eta``.

    ``phi`` has shape (dim_phi,), ``eta`` has shape (n, dim_eta).  The
    flattened order is (phi, eta_1, ..., eta_n).  Rows of ``eta`` belonging
    to strata dropped during a fit are NaN (their maximizer does not exist);
    everything downstream works on the retained rows.
    """

    phi: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim == 1:
            eta = eta[:, None]
        if phi.ndim != 1 or phi.size < 1:
            raise UsageError(f"phi must be a non-empty vector, got shape {phi.shape}")
        if eta.ndim != 2 or eta.shape[1] < 1:
            raise UsageError(f"eta must have shape (n, dim_eta), got {eta.shape}")
        phi.setflags(write=False)
        eta.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "eta", eta)

    @property
    def n(self) -> int:
        return self.eta.shape[0]

    @property
    def dim_phi(self) -> int:
        return self.phi.shape[0]

    @property
    def dim_eta(self) -> int:
        return self.eta.shape[1]

    def flatten(self) -> np.ndarray:
        """Concatenate into (phi, eta_1, ..., eta_n)."""
        return np.concatenate([self.phi, self.eta.ravel()])

    @classmethod
    def unflatten(cls, vec, n: int, dim_phi: int, dim_eta: int) -> "ParameterPoint":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (dim_phi + n * dim_eta,):
            raise UsageError(
                f"flat vector must have length {dim_phi + n * dim_eta}, got {vec.shape}"
            )
        return cls(phi=vec[:dim_phi].copy(), eta=vec[dim_phi:].reshape(n, dim_eta).copy())

    def replace(self, phi=None, eta=None) -> "ParameterPoint":
        return ParameterPoint(
            phi=self.phi if phi is None else phi,
            eta=self.eta if eta is None else eta,
        )
