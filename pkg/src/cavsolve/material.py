"""Stored energy W(F) = kappa/q ||F||^q + h(det F) with h(d) = c1 d^e1 + c2 d^-e2.

All matrix helpers accept a single 2x2 matrix or a stack of shape (..., 2, 2).
The elastic fluid is the case kappa = 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from cavsolve.errors import DeterminantCollapseError

logger = logging.getLogger(__name__)

DIMENSION = 2


def det2(F: np.ndarray) -> np.ndarray:
    """Determinant of 2x2 matrices."""
    F = np.asarray(F, dtype=float)
    return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]


def adj2(F: np.ndarray) -> np.ndarray:
    """Adjugate of 2x2 matrices: adj([[a, b], [c, d]]) = [[d, -b], [-c, a]]."""
    F = np.asarray(F, dtype=float)
    out = np.empty_like(F)
    out[..., 0, 0] = F[..., 1, 1]
    out[..., 0, 1] = -F[..., 0, 1]
    out[..., 1, 0] = -F[..., 1, 0]
    out[..., 1, 1] = F[..., 0, 0]
    return out


def cof2(F: np.ndarray) -> np.ndarray:
    """Cofactor matrix (Adj F)^T, the derivative of det F with respect to F."""
    return np.swapaxes(adj2(F), -1, -2)


def stress_free_c2(
    kappa: float, q: float, c1: float, e1: float, e2: float, n: int = DIMENSION
) -> float:
    """Coefficient c2 that makes the identity a stress-free state.

    Returns (kappa * sqrt(n)^(q - 2) + c1 * e1) / e2.

    Raises:
        ValueError: if e2 <= 0.
    """
    if e2 <= 0:
        raise ValueError(f"e2 must be > 0, got {e2}")
    return (kappa * math.sqrt(n) ** (q - 2.0) + c1 * e1) / e2


def _check_positive(d: np.ndarray) -> None:
    bad = d <= 0.0
    if np.any(bad):
        raise DeterminantCollapseError(np.asarray(d)[bad].flat[0])


@dataclass(frozen=True)
class MaterialModel:
    """Parameters of the stored energy.

    Attributes:
        kappa: coefficient of the ||F||^q term (>= 0).
        q: exponent of the ||F||^q term.
        c1: coefficient of d^e1 in h (>= 0).
        c2: coefficient of d^-e2 in h (>= 0).
        e1: growth exponent of h at infinity (>= 1 keeps h convex).
        e2: growth exponent of h at zero (> 0).
    """

    kappa: float = 0.0
    q: float = 2.0
    c1: float = 1.0
    c2: float = 2.0
    e1: float = 2.0
    e2: float = 1.0

    def __post_init__(self):
        """Reject parameters for which h is not convex."""
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError(f"c1 and c2 must be >= 0, got c1={self.c1}, c2={self.c2}")
        if self.e1 < 1:
            raise ValueError(f"e1 must be >= 1 for a convex h, got {self.e1}")
        if self.e2 <= 0:
            raise ValueError(f"e2 must be > 0, got {self.e2}")
        if self.kappa > 0 and not DIMENSION - 1 <= self.q < DIMENSION:
            logger.warning(
                "q = %g lies outside [n-1, n) = [%d, %d); the existence theory assumes it",
                self.q, DIMENSION - 1, DIMENSION,
            )

    @classmethod
    def stress_free(
        cls, kappa: float = 0.0, q: float = 2.0, c1: float = 1.0, e1: float = 2.0, e2: float = 1.0
    ) -> MaterialModel:
        """Build a model whose c2 makes the reference configuration stress free."""
        return cls(kappa=kappa, q=q, c1=c1, c2=stress_free_c2(kappa, q, c1, e1, e2), e1=e1, e2=e2)

    @property
    def is_fluid(self) -> bool:
        """True for the elastic fluid (kappa = 0)."""
        return self.kappa == 0

    def h_eval(self, d):
        """Volumetric energy h(d) = c1 d^e1 + c2 d^-e2 for d > 0."""
        d = np.asarray(d, dtype=float)
        _check_positive(d)
        return self.c1 * d**self.e1 + self.c2 * d ** (-self.e2)

    def h_prime(self, d):
        """Derivative h'(d) = c1 e1 d^(e1-1) - c2 e2 d^(-e2-1)."""
        d = np.asarray(d, dtype=float)
        _check_positive(d)
        return self.c1 * self.e1 * d ** (self.e1 - 1.0) - self.c2 * self.e2 * d ** (-self.e2 - 1.0)

    def h_second(self, d):
        """Second derivative of h."""
        d = np.asarray(d, dtype=float)
        _check_positive(d)
        return (
            self.c1 * self.e1 * (self.e1 - 1.0) * d ** (self.e1 - 2.0)
            + self.c2 * self.e2 * (self.e2 + 1.0) * d ** (-self.e2 - 2.0)
        )

    def energy_density(self, F: np.ndarray) -> np.ndarray:
        """W(F) for one matrix or a stack of matrices with positive determinant."""
        F = np.asarray(F, dtype=float)
        density = self.h_eval(det2(F))
        if self.kappa:
            norm = np.sqrt(np.sum(F * F, axis=(-2, -1)))
            density = density + self.kappa / self.q * norm**self.q
        return density

    def piola(self, F: np.ndarray) -> np.ndarray:
        """Piola stress dW/dF = kappa ||F||^(q-2) F + h'(det F) (Adj F)^T.

        Raises:
            DeterminantCollapseError: if det F <= 0.
        """
        F = np.asarray(F, dtype=float)
        stress = self.h_prime(det2(F))[..., None, None] * cof2(F)
        if self.kappa:
            norm = np.sqrt(np.sum(F * F, axis=(-2, -1)))
            stress = stress + (self.kappa * norm ** (self.q - 2.0))[..., None, None] * F
        return stress
