"""Shared domain types, seeded randomness, noise samplers, and normal special functions.

All noise is sampled by inverse-CDF transform of a single uniform draw, so
every mechanism run is a pure function of its seed and the draws can be
replayed or paired antithetically in tests.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "ParameterError",
    "IngestionError",
    "BOTTOM",
    "RESERVED_LABEL_PREFIX",
    "MAX_COUNT",
    "is_reserved_label",
    "validate_label",
    "padding_label",
    "Histogram",
    "SensitivityBound",
    "NoiseSpec",
    "RandomSource",
    "laplace_inverse_cdf",
    "gumbel_inverse_cdf",
    "sample_laplace",
    "sample_gaussian",
    "sample_gumbel",
    "normal_cdf",
    "normal_inverse_cdf",
]


class ParameterError(ValueError):
    """A mechanism or accountant argument violates its contract."""


class IngestionError(ParameterError):
    """Input data (histogram entries, CSV rows, stream events) is invalid."""


#: Reserved sentinel marker; "⊥" terminates ranked lists, "⊥1", "⊥2", ... pad
#: truncated histograms.  User labels must never start with it.
RESERVED_LABEL_PREFIX = "⊥"
BOTTOM = RESERVED_LABEL_PREFIX

#: Counts are 64-bit integers; noisy counts are 64-bit floats.
MAX_COUNT = 2**63 - 1


def is_reserved_label(label: str) -> bool:
    return label.startswith(RESERVED_LABEL_PREFIX)


def padding_label(index: int) -> str:
    """The index-th sentinel used to pad truncated histograms (1-based)."""
    return f"{RESERVED_LABEL_PREFIX}{index}"


def validate_label(label: object) -> str:
    if not isinstance(label, str):
        raise IngestionError(f"label must be text, got {type(label).__name__}")
    if not label:
        raise IngestionError("label must be non-empty")
    if is_reserved_label(label):
        raise IngestionError(
            f"label {label!r} uses the reserved sentinel prefix {RESERVED_LABEL_PREFIX!r}"
        )
    return label


def _validate_count(label: str, count: object) -> int:
    if isinstance(count, bool) or not isinstance(count, int):
        raise IngestionError(f"count for {label!r} must be an integer, got {count!r}")
    if count < 0:
        raise IngestionError(f"count for {label!r} must be non-negative, got {count}")
    if count > MAX_COUNT:
        raise IngestionError(f"count for {label!r} exceeds 64-bit range")
    return count


class Histogram:
    """Finite map from label to non-negative integer count.

    Iteration is always in sorted label order so that seeded mechanism runs
    are reproducible.
    """

    __slots__ = ("_counts",)

    def __init__(self, counts: Mapping[str, int] | Iterable[tuple[str, int]] = ()):
        pairs = counts.items() if isinstance(counts, Mapping) else counts
        acc: dict[str, int] = {}
        for label, count in pairs:
            validate_label(label)
            if label in acc:
                raise IngestionError(f"duplicate label {label!r}")
            acc[label] = _validate_count(label, count)
        self._counts = dict(sorted(acc.items()))

    @classmethod
    def coerce(cls, value: "Histogram" | Mapping[str, int]) -> "Histogram":
        return value if isinstance(value, cls) else cls(value)

    def items(self) -> list[tuple[str, int]]:
        return list(self._counts.items())

    def labels(self) -> list[str]:
        return list(self._counts)

    def get(self, label: str, default: int = 0) -> int:
        return self._counts.get(label, default)

    def __getitem__(self, label: str) -> int:
        return self._counts[label]

    def __contains__(self, label: str) -> bool:
        return label in self._counts

    def __len__(self) -> int:
        return len(self._counts)

    def __iter__(self):
        return iter(self._counts)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Histogram):
            return self._counts == other._counts
        return NotImplemented

    def __repr__(self) -> str:
        return f"Histogram({self._counts!r})"


@dataclass(frozen=True)
class SensitivityBound:
    """(l0, linf) sensitivity of input histograms.

    One user's addition or removal changes at most ``l0`` distinct labels,
    each count by at most ``linf``.  ``l0`` may be ``math.inf`` for the
    mechanisms that tolerate an unbounded number of touched labels.
    """

    l0: int | float
    linf: float

    def __post_init__(self) -> None:
        if self.l0 != math.inf:
            if isinstance(self.l0, bool) or not isinstance(self.l0, int) or self.l0 < 1:
                raise ParameterError(f"l0 must be an integer >= 1 or inf, got {self.l0!r}")
        linf = self.linf
        if not isinstance(linf, (int, float)) or isinstance(linf, bool):
            raise ParameterError(f"linf must be a positive real, got {linf!r}")
        if not math.isfinite(linf) or linf <= 0:
            raise ParameterError(f"linf must be positive and finite, got {linf!r}")

    @property
    def has_bounded_l0(self) -> bool:
        return self.l0 != math.inf


_NOISE_KINDS = ("laplace", "gaussian", "gumbel")


@dataclass(frozen=True)
class NoiseSpec:
    """A noise law and its scale: b for Laplace, sigma for Gaussian, beta for Gumbel."""

    kind: str
    scale: float

    def __post_init__(self) -> None:
        if self.kind not in _NOISE_KINDS:
            raise ParameterError(f"noise kind must be one of {_NOISE_KINDS}, got {self.kind!r}")
        if not isinstance(self.scale, (int, float)) or isinstance(self.scale, bool):
            raise ParameterError(f"noise scale must be a positive real, got {self.scale!r}")
        if not math.isfinite(self.scale) or self.scale <= 0:
            raise ParameterError(f"noise scale must be positive and finite, got {self.scale!r}")


_SEED_MASK = 0xFFFF_FFFF_FFFF_FFFF


def _token_entropy(token: object) -> int:
    if isinstance(token, bool):
        raise ParameterError("child-stream tokens must be ints or strings")
    if isinstance(token, int):
        return token & _SEED_MASK
    if isinstance(token, str):
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:16], "big")
    raise ParameterError(f"child-stream tokens must be ints or strings, got {type(token).__name__}")


class RandomSource:
    """Deterministic stream of uniforms on the open interval (0, 1).

    The same seed and the same call sequence reproduce the same draws
    bit-for-bit.  ``child(*tokens)`` derives an independent substream keyed
    by the tokens, for per-label or per-trial noise that stays reproducible
    regardless of how sibling streams are consumed.
    """

    __slots__ = ("seed", "_entropy", "_gen")

    def __init__(self, seed: int, *, _entropy: tuple[int, ...] | None = None):
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ParameterError(f"seed must be an integer, got {seed!r}")
        if not -(2**63) <= seed < 2**64:
            raise ParameterError("seed must fit in 64 bits")
        if _entropy is None:
            _entropy = (seed & _SEED_MASK,)
        self.seed = seed
        self._entropy = _entropy
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(_entropy)))

    def child(self, *tokens: int | str) -> "RandomSource":
        entropy = self._entropy + tuple(_token_entropy(t) for t in tokens)
        return RandomSource(self.seed, _entropy=entropy)

    def uniform(self) -> float:
        u = self._gen.random()
        while u == 0.0:
            u = self._gen.random()
        return u

    def uniforms(self, n: int) -> np.ndarray:
        u = self._gen.random(int(n))
        u[u == 0.0] = 2.0**-53
        return u


def _check_scale(name: str, value: float) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ParameterError(f"{name} must be a positive real, got {value!r}")
    if not math.isfinite(value) or value <= 0:
        raise ParameterError(f"{name} must be positive and finite, got {value!r}")
    return float(value)


def _check_open_unit(name: str, value: float) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ParameterError(f"{name} must be a real in (0, 1), got {value!r}")
    if not 0.0 < value < 1.0:
        raise ParameterError(f"{name} must lie strictly between 0 and 1, got {value!r}")
    return float(value)


def laplace_inverse_cdf(u: float, scale: float) -> float:
    """Quantile of Lap(scale): scale*ln(2u) below the median, -scale*ln(2(1-u)) above."""
    _check_scale("scale", scale)
    _check_open_unit("u", u)
    if u < 0.5:
        return scale * math.log(2.0 * u)
    return -scale * math.log(2.0 * (1.0 - u)) + 0.0


def gumbel_inverse_cdf(u: float, beta: float) -> float:
    """Quantile of Gumbel(beta): -beta*ln(-ln u)."""
    _check_scale("beta", beta)
    _check_open_unit("u", u)
    return -beta * math.log(-math.log(u)) + 0.0


def sample_laplace(scale: float, rng: RandomSource) -> float:
    """One draw from the Laplace law with density exp(-|z|/scale)/(2*scale)."""
    _check_scale("scale", scale)
    return laplace_inverse_cdf(rng.uniform(), scale)


def sample_gaussian(sigma: float, rng: RandomSource) -> float:
    """One draw from N(0, sigma^2)."""
    _check_scale("sigma", sigma)
    return sigma * normal_inverse_cdf(rng.uniform())


def sample_gumbel(beta: float, rng: RandomSource) -> float:
    """One draw from Gumbel(beta), mean beta*gamma, variance beta^2*pi^2/6."""
    _check_scale("beta", beta)
    return gumbel_inverse_cdf(rng.uniform(), beta)


_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def normal_cdf(z: float) -> float:
    """Standard normal CDF via erfc, accurate in both tails."""
    if not isinstance(z, (int, float)) or isinstance(z, bool) or math.isnan(z):
        raise ParameterError(f"z must be a real number, got {z!r}")
    return 0.5 * math.erfc(-z / _SQRT2)


# Rational-approximation coefficients for the normal quantile (Acklam).
_ICDF_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_ICDF_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_ICDF_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_ICDF_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)
_ICDF_P_LOW = 0.02425


def _normal_inverse_cdf_half(p: float) -> float:
    # p in (0, 0.5]; result is <= 0.
    if p < _ICDF_P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        c = _ICDF_C
        d = _ICDF_D
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    else:
        q = p - 0.5
        r = q * q
        a = _ICDF_A
        b = _ICDF_B
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / (
            ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        )
    # One Halley step against the erfc-based forward CDF; skipped only in the
    # far tail where exp(x^2/2) would overflow and the raw estimate already
    # has negligible absolute error.
    if x > -37.4:
        err = 0.5 * math.erfc(-x / _SQRT2) - p
        u = err * _SQRT_2PI * math.exp(0.5 * x * x)
        x -= u / (1.0 + 0.5 * x * u)
    return x


def normal_inverse_cdf(p: float) -> float:
    """Standard normal quantile, absolute error below 1e-9 on [1e-15, 1-1e-15].

    Antisymmetric by construction: the upper half is evaluated as the
    mirrored lower half, so quantiles of u and 1-u cancel exactly.
    """
    _check_open_unit("p", p)
    if p > 0.5:
        return -_normal_inverse_cdf_half(1.0 - p)
    return _normal_inverse_cdf_half(p) + 0.0
