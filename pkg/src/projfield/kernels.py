"""Green functions of ``1 - d^2/dx^2`` on the circle and on the line."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class KernelOracle:
    """Closed-form covariance kernel of ``(1 + Laplacian)^{-1}`` in one dimension.

    ``geometry`` is ``"circle"`` (circumference ``length``) or ``"line"``.
    """

    geometry: str
    length: float | None = None
    fourier_terms: int = 10_000

    def __post_init__(self):
        if self.geometry == "circle":
            if self.length is None or not self.length > 0:
                raise ValidationError("circle kernel needs a positive circumference")
        elif self.geometry == "line":
            if self.length is not None:
                raise ValidationError("line kernel takes no length")
        else:
            raise ValidationError(f"unknown geometry {self.geometry!r}")

    def distance(self, x, y) -> np.ndarray:
        r = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        if self.geometry == "circle":
            r = np.mod(r, self.length)
            r = np.minimum(r, self.length - r)
        return r

    def __call__(self, x, y) -> np.ndarray:
        r = self.distance(x, y)
        if self.geometry == "line":
            return 0.5 * np.exp(-r)
        half = 0.5 * self.length
        return np.cosh(half - r) / (2.0 * np.sinh(half))

    def kink_shifts(self) -> tuple[float, ...]:
        """Values of ``x - y`` where the kernel is not smooth, for ``x, y`` in one period."""
        if self.geometry == "line":
            return (0.0,)
        L = self.length
        return (-L, -0.5 * L, 0.0, 0.5 * L, L)

    def fourier(self, x, y, terms: int | None = None, accelerate: bool = True) -> np.ndarray:
        """Circle kernel from its Fourier series ``sum_k e^{i w_k (x-y)} / (L (1 + w_k^2))``.

        The series is truncated at ``|k| <= terms``. With ``accelerate`` the
        ``1/k^2`` part of the tail is added back using
        ``sum_{k>=1} cos(k r)/k^2 = pi^2/6 - pi r/2 + r^2/4`` (``0 <= r <= 2 pi``),
        which leaves an ``O(terms^-3)`` remainder.
        """
        if self.geometry != "circle":
            raise ValidationError("Fourier series is only defined for the circle kernel")
        K = self.fourier_terms if terms is None else terms
        L = self.length
        theta = np.atleast_1d(2 * np.pi * np.mod(np.asarray(x, float) - np.asarray(y, float), L) / L)
        w = 2 * np.pi / L
        k = np.arange(1, K + 1, dtype=float)
        out = np.empty(theta.shape)
        for n, th in enumerate(theta.ravel()):
            c = np.cos(k * th)
            s = 1.0 + 2.0 * np.sum(c / (1.0 + (w * k) ** 2))
            if accelerate:
                head = np.sum(c / k ** 2)
                full = np.pi ** 2 / 6 - np.pi * th / 2 + th ** 2 / 4
                s += 2.0 * (full - head) / w ** 2
            out.ravel()[n] = s / L
        return out.reshape(np.shape(theta)) if np.ndim(x) or np.ndim(y) else out[0]


def kernel_oracle(name: str, **params) -> KernelOracle:
    """Build an oracle from a config name: ``circle`` (needs ``length``) or ``line``/``exponential``."""
    if name == "circle":
        return KernelOracle("circle", float(params.get("length", 2 * np.pi)))
    if name in ("line", "exponential"):
        return KernelOracle("line")
    raise ValidationError(f"unknown kernel {name!r}")
