"""Mixed-type search spaces with optional optimum priors.

A point in a space (a parameter vector) is a plain ``dict`` mapping
dimension name to value. Surrogates work in an encoded unit hypercube:
real/integer/ordinal dimensions map to one coordinate in [0, 1];
categorical dimensions map to a one-hot block scaled by 1/sqrt(2) so that
flipping the category moves the point by exactly 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy import stats

REAL = "real"
INTEGER = "integer"
ORDINAL = "ordinal"
CATEGORICAL = "categorical"
KINDS = (REAL, INTEGER, ORDINAL, CATEGORICAL)

Value = Union[float, int, str]
ParamVector = dict

_ONE_HOT = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class Prior:
    """Belief about where the optimum lies.

    For ordered dimensions samples follow a normal around ``mode`` with
    standard deviation ``0.5 / strength`` of the range, truncated to the
    bounds. For categorical dimensions the mode gets weight ``1 + strength``
    and every other value weight 1.
    """

    mode: Value
    strength: float = 10.0

    def __post_init__(self):
        if not self.strength > 0:
            raise ValueError("prior strength must be positive")


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: str = REAL
    lower: Optional[float] = None
    upper: Optional[float] = None
    values: tuple = ()
    prior: Optional[Prior] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind in (REAL, INTEGER):
            if self.lower is None or self.upper is None:
                raise ValueError(f"{self.name}: bounds required")
            if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
                raise ValueError(f"{self.name}: bounds must be finite")
            if not self.lower < self.upper:
                raise ValueError(f"{self.name}: need lower < upper")
        else:
            if not self.values:
                raise ValueError(f"{self.name}: value list must be non-empty")
            object.__setattr__(self, "values", tuple(self.values))
        if self.prior is not None and not self.contains(self.prior.mode):
            raise ValueError(f"{self.name}: prior mode {self.prior.mode!r} outside domain")

    @property
    def width(self) -> int:
        return len(self.values) if self.kind == CATEGORICAL else 1

    def contains(self, value: Value) -> bool:
        if self.kind == REAL:
            return isinstance(value, (int, float)) and self.lower <= value <= self.upper
        if self.kind == INTEGER:
            return float(value) == int(value) and self.lower <= value <= self.upper
        return value in self.values

    def encode(self, value: Value) -> np.ndarray:
        if self.kind in (REAL, INTEGER):
            return np.array([(float(value) - self.lower) / (self.upper - self.lower)])
        idx = self.values.index(value)
        if self.kind == ORDINAL:
            k = len(self.values)
            return np.array([idx / (k - 1) if k > 1 else 0.0])
        out = np.zeros(len(self.values))
        out[idx] = _ONE_HOT
        return out

    def decode(self, u: np.ndarray) -> Value:
        """Map (possibly relaxed) encoded coordinates back to a valid value."""
        if self.kind == CATEGORICAL:
            return self.values[int(np.argmax(u))]
        x = float(np.clip(u[0], 0.0, 1.0))
        if self.kind == REAL:
            # clamp: lower + 1.0 * (upper - lower) can round past upper
            return min(max(self.lower + x * (self.upper - self.lower), self.lower), self.upper)
        if self.kind == INTEGER:
            return int(round(self.lower + x * (self.upper - self.lower)))
        k = len(self.values)
        return self.values[int(round(x * (k - 1)))]

    def sample_encoded(self, rng: np.random.Generator, n: int, use_prior: bool = True) -> np.ndarray:
        """Draw ``n`` points in encoded coordinates, shape (n, width)."""
        prior = self.prior if use_prior else None
        if self.kind == CATEGORICAL:
            k = len(self.values)
            if prior is None:
                idx = rng.integers(0, k, size=n)
            else:
                w = np.ones(k)
                w[self.values.index(prior.mode)] += prior.strength
                idx = rng.choice(k, size=n, p=w / w.sum())
            out = np.zeros((n, k))
            out[np.arange(n), idx] = _ONE_HOT
            return out
        if prior is None:
            u = rng.random(n)
        else:
            mu = float(self.encode(prior.mode)[0])
            sigma = 0.5 / prior.strength
            a, b = (0.0 - mu) / sigma, (1.0 - mu) / sigma
            u = stats.truncnorm.rvs(a, b, loc=mu, scale=sigma, size=n, random_state=rng)
        return np.asarray(u, dtype=float).reshape(n, 1)

    def log_prior(self, U: np.ndarray) -> np.ndarray:
        """Unnormalised log prior density of encoded rows, 0 at the mode.

        Zero everywhere when the dimension has no prior.
        """
        U = np.asarray(U, dtype=float).reshape(-1, self.width)
        if self.prior is None:
            return np.zeros(len(U))
        if self.kind == CATEGORICAL:
            hit = np.argmax(U, axis=1) == self.values.index(self.prior.mode)
            return np.where(hit, 0.0, -math.log1p(self.prior.strength))
        mu = float(self.encode(self.prior.mode)[0])
        sigma = 0.5 / self.prior.strength
        return -0.5 * ((U[:, 0] - mu) / sigma) ** 2


class ParamSpace:
    """Ordered collection of dimensions."""

    def __init__(self, dims: Sequence[Dimension] = ()):
        names = [d.name for d in dims]
        if len(set(names)) != len(names):
            raise ValueError("dimension names must be unique")
        self.dims = tuple(dims)
        self._offsets = np.cumsum([0] + [d.width for d in self.dims])

    def __len__(self) -> int:
        return len(self.dims)

    def __iter__(self):
        return iter(self.dims)

    def __eq__(self, other) -> bool:
        return isinstance(other, ParamSpace) and self.dims == other.dims

    def __repr__(self) -> str:
        return f"ParamSpace({[d.name for d in self.dims]})"

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    @property
    def encoded_dim(self) -> int:
        return int(self._offsets[-1])

    def __getitem__(self, name: str) -> Dimension:
        for d in self.dims:
            if d.name == name:
                return d
        raise KeyError(name)

    @property
    def has_priors(self) -> bool:
        return any(d.prior is not None for d in self.dims)

    def contains(self, vector: Mapping[str, Value]) -> bool:
        return set(vector) == set(self.names) and all(d.contains(vector[d.name]) for d in self.dims)

    def encode(self, vector: Mapping[str, Value]) -> np.ndarray:
        if not self.dims:
            return np.zeros(0)
        return np.concatenate([d.encode(vector[d.name]) for d in self.dims])

    def encode_many(self, vectors: Sequence[Mapping[str, Value]]) -> np.ndarray:
        return np.array([self.encode(v) for v in vectors]).reshape(len(vectors), self.encoded_dim)

    def decode(self, u: np.ndarray) -> ParamVector:
        o = self._offsets
        return {d.name: d.decode(u[o[i]:o[i + 1]]) for i, d in enumerate(self.dims)}

    def snap(self, u: np.ndarray) -> np.ndarray:
        """Round relaxed encoded coordinates to the nearest valid point."""
        return self.encode(self.decode(u))

    def snap_many(self, U: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`snap` for a batch of encoded rows."""
        raw = np.array(U, dtype=float)
        U = np.clip(raw, 0.0, 1.0)
        for i, d in enumerate(self.dims):
            lo, hi = self._offsets[i], self._offsets[i + 1]
            if d.kind == INTEGER:
                span = d.upper - d.lower
                vals = np.round(d.lower + U[:, lo] * span)
                U[:, lo] = (vals - d.lower) / span
            elif d.kind == ORDINAL:
                k = len(d.values)
                U[:, lo] = np.round(U[:, lo] * (k - 1)) / (k - 1) if k > 1 else 0.0
            elif d.kind == CATEGORICAL:
                idx = np.argmax(raw[:, lo:hi], axis=1)  # before clipping, as decode does
                U[:, lo:hi] = 0.0
                U[np.arange(len(U)), lo + idx] = _ONE_HOT
        return U

    def column_ranges(self) -> list[tuple[int, int]]:
        """Encoded column span of each dimension."""
        return [(int(self._offsets[i]), int(self._offsets[i + 1])) for i in range(len(self.dims))]

    def continuous_columns(self) -> list[int]:
        """Encoded columns that can be moved along a line (non-categorical)."""
        return [int(self._offsets[i]) for i, d in enumerate(self.dims) if d.kind != CATEGORICAL]

    def categorical_blocks(self) -> list[tuple[int, int]]:
        return [
            (int(self._offsets[i]), int(self._offsets[i + 1]))
            for i, d in enumerate(self.dims)
            if d.kind == CATEGORICAL
        ]

    def sample_encoded(self, rng: np.random.Generator, n: int, use_prior: bool = True) -> np.ndarray:
        if not self.dims:
            return np.zeros((n, 0))
        cols = [d.sample_encoded(rng, n, use_prior) for d in self.dims]
        return np.hstack(cols)

    def sample(self, rng: np.random.Generator, n: int, use_prior: bool = True) -> list[ParamVector]:
        return [self.decode(u) for u in self.sample_encoded(rng, n, use_prior)]

    def log_prior(self, U: np.ndarray) -> np.ndarray:
        """Sum of the per-dimension log priors of encoded rows (0 at the modes)."""
        U = np.asarray(U, dtype=float).reshape(-1, self.encoded_dim)
        out = np.zeros(len(U))
        for d, (lo, hi) in zip(self.dims, self.column_ranges()):
            if d.prior is not None:
                out += d.log_prior(U[:, lo:hi])
        return out

    def with_priors(self, modes: Mapping[str, Value], strength: float = 10.0) -> "ParamSpace":
        """Copy of the space with priors centred on ``modes`` (names not in the space are ignored)."""
        dims = [
            replace(d, prior=Prior(modes[d.name], strength)) if d.name in modes else d
            for d in self.dims
        ]
        return ParamSpace(dims)

    def without_priors(self) -> "ParamSpace":
        return ParamSpace([replace(d, prior=None) for d in self.dims])
