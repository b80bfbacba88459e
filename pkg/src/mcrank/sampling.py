"""
Seeded index samplers for picking columns (or rows) to read.

Randomness comes from SplitMix64, a 64-bit-state generator with a published
reference output stream. Each draw consumes one 64-bit output ``z`` and maps it
to ``u = (z >> 11) * 2**-53`` in [0, 1). Index selection is by inversion of a
cumulative weight table (unit weights for the uniform schemes), so a weighted
sampler with all-equal weights yields the same stream as the uniform
with-replacement sampler for the same seed.
"""

from __future__ import annotations

import copy
import enum
from typing import Optional

import numpy as np

from .linalg import _sequential_row_sums

__all__ = [
    "SplitMix64",
    "SamplerKind",
    "Sampler",
    "next_indices",
    "weights_from_row_norms",
    "weights_from_gradient_image",
]

_MASK = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator (Steele, Lea & Flood constants)."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def next_float(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


class SamplerKind(enum.Enum):
    WITH_REPLACEMENT = "uniform-wr"
    WITHOUT_REPLACEMENT = "uniform-wor"
    WEIGHTED = "weighted"


def _invert(cum: np.ndarray, u: float) -> int:
    j = int(np.searchsorted(cum, u * cum[-1], side="right"))
    if j >= len(cum):
        # u * total rounded up to the total; take the last index with weight
        j = int(np.flatnonzero(np.diff(cum, prepend=0.0) > 0)[-1])
    return j


class Sampler:
    """Stateful index stream over ``range(n)``.

    Parameters
    ----------
    kind : SamplerKind or str
    seed : int
    weights : array_like, optional
        Required for ``WEIGHTED``: finite, non-negative, positive sum. Its length
        fixes the index space.
    strict : bool
        Without-replacement only. When the pool runs dry, return the short
        remainder (then nothing) instead of starting a new epoch.

    Use :meth:`clone` to fork a reproducible copy of the stream.
    """

    def __init__(self, kind, seed: int = 0, weights=None, strict: bool = False):
        self.kind = SamplerKind(kind)
        self.seed = int(seed)
        self.strict = strict
        self.rng = SplitMix64(seed)
        self.epoch = 0
        self.n: Optional[int] = None
        self.pool: list[int] = []
        self._cum: Optional[np.ndarray] = None
        if self.kind is SamplerKind.WEIGHTED:
            if weights is None:
                raise ValueError("weighted sampler needs a weight vector")
            w = np.asarray(weights, dtype=np.float64).ravel()
            if w.size == 0 or not np.all(np.isfinite(w)) or np.any(w < 0) or not w.sum() > 0:
                raise ValueError("weights must be finite, non-negative and not all zero")
            if np.all(w == w[0]):
                w = np.ones_like(w)
            self.weights = w
            self.n = w.size
            self._cum = np.cumsum(w)
        elif weights is not None:
            raise ValueError(f"{self.kind.value} sampler takes no weights")
        else:
            self.weights = None

    def __repr__(self):
        return f"Sampler({self.kind.value!r}, seed={self.seed}, epoch={self.epoch})"

    def clone(self) -> "Sampler":
        return copy.deepcopy(self)

    def _bind(self, n: int):
        if self.n is None:
            self.n = n
            if self.kind is SamplerKind.WITHOUT_REPLACEMENT:
                self.pool = list(range(n))
        elif self.n != n:
            raise ValueError(f"sampler is bound to {self.n} indices, asked for {n}")
        if self.kind is SamplerKind.WITH_REPLACEMENT and self._cum is None:
            self._cum = np.arange(1, n + 1, dtype=np.float64)

    def next_indices(self, l: int, n: int) -> list[int]:
        """Draw up to `l` indices from ``range(n)`` and advance the stream."""
        if int(l) != l or l < 1:
            raise ValueError(f"sample count must be a positive integer, got {l!r}")
        if n < 1:
            raise ValueError(f"index space must be non-empty, got n={n}")
        self._bind(n)
        if self.kind is not SamplerKind.WITHOUT_REPLACEMENT:
            return [_invert(self._cum, self.rng.next_float()) for _ in range(l)]
        out = []
        while len(out) < l:
            if not self.pool:
                if self.strict:
                    break
                self.epoch += 1
                self.pool = list(range(n))
            pos = min(int(self.rng.next_float() * len(self.pool)), len(self.pool) - 1)
            out.append(self.pool.pop(pos))
        return out


def next_indices(sampler: Sampler, l: int, n: int):
    """Functional form: returns ``(indices, advanced_copy)``; `sampler` is untouched."""
    s = sampler.clone()
    return s.next_indices(l, n), s


def weights_from_row_norms(A, axis: str = "rows") -> np.ndarray:
    """Squared Euclidean norm of each row (``axis="rows"``) or column."""
    A = np.asarray(A, dtype=np.float64)
    if axis in ("columns", "cols"):
        A = A.T
    elif axis != "rows":
        raise ValueError(f"axis must be 'rows' or 'columns', got {axis!r}")
    return _sequential_row_sums(A * A)


def weights_from_gradient_image(img, axis: str = "rows") -> np.ndarray:
    """Per-row (or per-column) sum of gradient magnitudes of a grayscale image.

    Gradients use central differences in the interior and one-sided
    differences on the border. An image with zero gradient everywhere gets
    uniform weights.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 2:
        raise ValueError(f"gradient weights need an image at least 2x2, got {img.shape}")
    gy, gx = np.gradient(img)
    mag = np.sqrt(gx * gx + gy * gy)
    if axis in ("columns", "cols"):
        mag = mag.T
    elif axis != "rows":
        raise ValueError(f"axis must be 'rows' or 'columns', got {axis!r}")
    w = _sequential_row_sums(mag)
    if not np.any(w > 0):
        return np.ones_like(w)
    return w
