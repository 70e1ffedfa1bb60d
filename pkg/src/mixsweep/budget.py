"""Reference constants and factor algebra for power-of-two training budgets.

Every training setup in the sweep is parametrized by integer "halving"
factors. All identities between the derived quantities hold exactly
because the arithmetic stays on integer base-2 exponents and converts to
floats only at the boundary (``math.ldexp`` scales by powers of two
without rounding), and because ratios are kept as exact fractions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import InfeasibleSplitError, InvalidFactorError, SplitOrderingError

#: Reference compute budget in FLOPs: the anchor of the whole grid.
REFERENCE_COMPUTE = 1e18

#: Empirical compute-optimal data allocation, tokens = coeff * compute^exponent,
#: used once to derive the reference corpus size from the reference budget.
DATA_ALLOCATION_COEFF = 5.8316
DATA_ALLOCATION_EXPONENT = 0.4757


@dataclass(frozen=True, slots=True)
class ReferenceConstants:
    """Anchor point of the sweep grid.

    ``model_scale * target_tokens == compute`` holds to within a few ulp
    because ``model_scale`` is defined as the exact float quotient.
    """

    compute: float
    target_tokens: float
    model_scale: float


def _build_reference() -> ReferenceConstants:
    compute = REFERENCE_COMPUTE
    tokens = DATA_ALLOCATION_COEFF * compute**DATA_ALLOCATION_EXPONENT
    return ReferenceConstants(
        compute=compute, target_tokens=tokens, model_scale=compute / tokens
    )


_REFERENCE = _build_reference()


def reference_constants() -> ReferenceConstants:
    """The immutable grid anchor, evaluated once at import time."""
    return _REFERENCE


@dataclass(frozen=True, slots=True)
class FactorTuple:
    """Integer halving factors for ratio, model scale, epochs and compute.

    ``f_r`` halves the target-language ratio, ``f_M`` halves the model
    scale, ``f_k`` doubles the epoch count and ``f_C`` halves the compute
    budget. The corpus factor ``f_D`` is fully determined by the other
    four and is therefore a derived property, never stored.
    """

    f_r: int
    f_M: int
    f_k: int
    f_C: int

    def __post_init__(self) -> None:
        if self.f_r < 0:
            raise InvalidFactorError(f"f_r must be >= 0, got {self.f_r}")
        if self.f_k < 0:
            raise InvalidFactorError(f"f_k must be >= 0, got {self.f_k}")
        if self.f_C > 0:
            raise InvalidFactorError(f"f_C must be <= 0, got {self.f_C}")

    @property
    def f_D(self) -> int:
        return -self.f_r + self.f_M - self.f_k + self.f_C


@dataclass(frozen=True, slots=True)
class DerivedSetup:
    """Concrete hyperparameters derived from a :class:`FactorTuple`.

    Floats are produced with ``math.ldexp``, so every value is the exact
    power-of-two multiple of its reference constant; the compute identity
    ``model_scale * total_tokens == compute`` holds exactly on the integer
    exponents (see :meth:`exponent_identity_holds`).
    """

    factors: FactorTuple
    ratio: Fraction
    model_scale: float
    epochs: int
    compute: float
    target_tokens: float
    total_tokens: float

    @property
    def f_D(self) -> int:
        return self.factors.f_D

    def exponent_identity_holds(self) -> bool:
        """Check model_scale * (epochs * target / ratio) == compute in exponent space.

        Relative to the reference constants the three sides carry integer
        exponents -f_M, (f_D + f_k + f_r) and f_C; the identity is their sum.
        """
        f = self.factors
        return -f.f_M + (f.f_D + f.f_k + f.f_r) == f.f_C


def derive_single_stage(factors: FactorTuple) -> DerivedSetup:
    """Expand a factor tuple into concrete training quantities."""
    ref = _REFERENCE
    f_D = factors.f_D
    return DerivedSetup(
        factors=factors,
        ratio=Fraction(1, 2**factors.f_r),
        model_scale=math.ldexp(ref.model_scale, -factors.f_M),
        epochs=2**factors.f_k,
        compute=math.ldexp(ref.compute, factors.f_C),
        target_tokens=math.ldexp(ref.target_tokens, f_D),
        total_tokens=math.ldexp(ref.target_tokens, f_D + factors.f_k + factors.f_r),
    )


RatioLike = Fraction | int | float


def as_fraction(value: RatioLike) -> Fraction:
    """Convert a ratio-like value to an exact fraction.

    Floats convert via their exact binary value, which is lossless for the
    dyadic ratios used throughout the grid (0.25 -> 1/4). Pass a Fraction
    directly for non-dyadic ratios such as 1/3.
    """
    return value if isinstance(value, Fraction) else Fraction(value)


@dataclass(frozen=True, slots=True)
class StageSplit:
    """Stage ratios and the stage-length proportions that realize an average ratio."""

    first_ratio: Fraction
    second_ratio: Fraction
    first_length: Fraction
    second_length: Fraction

    @property
    def degenerate(self) -> bool:
        """True when one stage has zero length (collapses to single-stage)."""
        return self.first_length == 0 or self.second_length == 0

    @property
    def average_ratio(self) -> Fraction:
        return (
            self.first_length * self.first_ratio
            + self.second_length * self.second_ratio
        )


def stage_split(
    first_ratio: RatioLike, second_ratio: RatioLike, average_ratio: RatioLike
) -> StageSplit:
    """Solve for stage-length proportions given both stage ratios and the average.

    The first-stage proportion is (r2 - r) / (r2 - r1); exact because all
    arithmetic is on fractions.
    """
    r1 = as_fraction(first_ratio)
    r2 = as_fraction(second_ratio)
    r = as_fraction(average_ratio)
    if r1 >= r2:
        raise SplitOrderingError(f"stage ratios must satisfy r1 < r2, got {r1} >= {r2}")
    if not r1 <= r <= r2:
        raise InfeasibleSplitError(
            f"average ratio {r} outside the stage-ratio interval [{r1}, {r2}]"
        )
    first_length = (r2 - r) / (r2 - r1)
    return StageSplit(
        first_ratio=r1,
        second_ratio=r2,
        first_length=first_length,
        second_length=1 - first_length,
    )
