"""Thresholded noisy release of a positive-count histogram over an unknown domain.

Only labels present in the input can ever be emitted; the threshold is
calibrated so that a label whose true count is at the sensitivity floor
survives with probability at most delta / l0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .accountant import CdpBudget
from .core import (
    Histogram,
    IngestionError,
    NoiseSpec,
    ParameterError,
    RandomSource,
    SensitivityBound,
    normal_inverse_cdf,
    sample_gaussian,
    sample_laplace,
)

__all__ = [
    "ReleaseReport",
    "threshold_laplace",
    "threshold_gaussian",
    "release",
]


@dataclass
class ReleaseReport:
    """A released noisy histogram plus the exact budget the run spent."""

    mechanism: str
    released: dict[str, float]
    threshold: float
    budget: CdpBudget
    seed: int
    params: dict = field(default_factory=dict)

    def items(self) -> list[tuple[str, float]]:
        return sorted(self.released.items())


def _check_epsilon(epsilon: float) -> float:
    if not isinstance(epsilon, (int, float)) or isinstance(epsilon, bool):
        raise ParameterError(f"epsilon must be a positive real, got {epsilon!r}")
    if not math.isfinite(epsilon) or epsilon <= 0.0:
        raise ParameterError(f"epsilon must be positive and finite, got {epsilon!r}")
    return float(epsilon)


def _check_delta(delta: float) -> float:
    if not isinstance(delta, (int, float)) or isinstance(delta, bool):
        raise ParameterError(f"delta must be a real in (0, 1), got {delta!r}")
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must lie strictly between 0 and 1, got {delta!r}")
    return float(delta)


def _check_sens(sens: SensitivityBound) -> SensitivityBound:
    if not isinstance(sens, SensitivityBound):
        raise ParameterError(f"expected a SensitivityBound, got {sens!r}")
    if not sens.has_bounded_l0:
        raise ParameterError("this threshold needs a finite l0 sensitivity")
    return sens


def threshold_laplace(sens: SensitivityBound, epsilon: float, delta: float) -> float:
    """T = linf + (linf/eps) * ln(l0 / (2*delta)) for Laplace noise of scale linf/eps."""
    sens = _check_sens(sens)
    eps = _check_epsilon(epsilon)
    d = _check_delta(delta)
    return sens.linf + (sens.linf / eps) * math.log(sens.l0 / (2.0 * d))


def threshold_gaussian(sens: SensitivityBound, epsilon: float, delta: float) -> float:
    """T = linf + (linf/eps) * PhiInv(1 - delta/l0) for Gaussian noise of deviation linf/eps."""
    sens = _check_sens(sens)
    eps = _check_epsilon(epsilon)
    d = _check_delta(delta)
    ratio = d / sens.l0
    if ratio >= 1.0:
        raise ParameterError(f"delta/l0 = {ratio} must lie in (0, 1)")
    return sens.linf + (sens.linf / eps) * normal_inverse_cdf(1.0 - ratio)


_TAGS = {"laplace": "unknown-domain-laplace", "gaussian": "unknown-domain-gaussian"}
_THRESHOLDS = {"laplace": threshold_laplace, "gaussian": threshold_gaussian}


def _resolve_noise_kind(noise: str | NoiseSpec, derived_scale: float) -> str:
    if isinstance(noise, NoiseSpec):
        kind = noise.kind
        if not math.isclose(noise.scale, derived_scale, rel_tol=1e-12):
            raise ParameterError(
                f"noise scale {noise.scale} disagrees with linf/epsilon = {derived_scale}"
            )
    elif isinstance(noise, str):
        kind = noise
    else:
        raise ParameterError(f"noise must be 'laplace', 'gaussian', or a NoiseSpec, got {noise!r}")
    if kind not in _TAGS:
        raise ParameterError(f"noise kind must be 'laplace' or 'gaussian', got {kind!r}")
    return kind


def release(
    h: Histogram,
    sens: SensitivityBound,
    noise: str | NoiseSpec,
    epsilon: float,
    delta: float,
    rng: RandomSource,
    *,
    min_count: int = 1,
    scale_override: float | None = None,
    threshold_override: float | None = None,
) -> ReleaseReport:
    """Add one independent draw per entry and keep (label, noisy count) above T.

    The noise scale is fixed at linf/epsilon by the calibration, and the run
    spends (delta, l0 * epsilon^2 / 2) regardless of what survives.  Entries
    must have count >= min_count (default 1: only positive-count items are
    accepted; raise the floor for histograms truncated at a known value).

    scale_override and threshold_override are test hooks; scale 0 makes the
    release a deterministic count-above-threshold filter.
    """
    h = Histogram.coerce(h)
    sens = _check_sens(sens)
    eps = _check_epsilon(epsilon)
    d = _check_delta(delta)
    if isinstance(min_count, bool) or not isinstance(min_count, int) or min_count < 1:
        raise ParameterError(f"min_count must be an integer >= 1, got {min_count!r}")
    derived_scale = sens.linf / eps
    kind = _resolve_noise_kind(noise, derived_scale)

    scale = derived_scale
    if scale_override is not None:
        if not isinstance(scale_override, (int, float)) or scale_override < 0:
            raise ParameterError(f"scale_override must be >= 0, got {scale_override!r}")
        scale = float(scale_override)
    threshold = _THRESHOLDS[kind](sens, eps, d)
    if threshold_override is not None:
        threshold = float(threshold_override)

    for label, count in h.items():
        if count < min_count:
            raise IngestionError(
                f"count for {label!r} is {count}, below the ingestion floor {min_count}"
            )

    sampler = sample_laplace if kind == "laplace" else sample_gaussian
    released: dict[str, float] = {}
    for label, count in h.items():
        z = sampler(scale, rng) if scale > 0.0 else 0.0
        noisy = count + z
        if noisy > threshold:
            released[label] = noisy

    return ReleaseReport(
        mechanism=_TAGS[kind],
        released=released,
        threshold=threshold,
        budget=CdpBudget(delta=d, rho=sens.l0 * eps * eps / 2.0),
        seed=rng.seed,
        params={
            "noise": kind,
            "epsilon": eps,
            "delta": d,
            "l0": sens.l0,
            "linf": sens.linf,
            "min_count": min_count,
        },
    )
