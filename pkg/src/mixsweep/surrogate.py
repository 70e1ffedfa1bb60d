"""Synthetic loss generators for desk-scale testing of the pipeline.

None of this reproduces measured training losses. The step/ratio form is
a simple saturating two-factor shape used to unit-test the ratio fitter;
the composite landscape is a fictional test fixture with known structure
(saturating epoch returns, a ratio penalty that two-stage schedules can
partially dodge) whose constants are configuration, not claims.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .analysis import LossRecord
from .errors import ValidationError
from .seeds import fnv1a64, mix64, uniform_pair
from .space import SetupSpec


@dataclass(frozen=True, slots=True)
class GeParams:
    """Step/ratio loss shape: (amplitude / steps^step_exp + floor) * scale / ratio^ratio_exp."""

    amplitude: float
    floor: float
    scale: float
    step_exponent: float
    ratio_exponent: float


def ge_loss(steps: float, ratio: float, params: GeParams) -> float:
    """Evaluate the step/ratio shape at a step count and language ratio."""
    if steps <= 0:
        raise ValidationError(f"steps must be positive, got {steps}")
    if not 0 < ratio <= 1:
        raise ValidationError(f"ratio must be in (0, 1], got {ratio}")
    return (
        (params.amplitude / steps**params.step_exponent + params.floor)
        * params.scale
        / ratio**params.ratio_exponent
    )


@dataclass(frozen=True, slots=True)
class SurrogateParams:
    """Composite-landscape knobs. All constants are test-fixture configuration.

    ``ratio_exponent`` is negative by convention (loss grows as the ratio
    shrinks). ``second_stage_weight`` (gamma) interpolates how much the
    second-stage ratio, rather than the average ratio, sets the penalty:
    gamma = 0 makes two-stage setups indistinguishable from single-stage
    ones with the same average ratio. Defaults are tuned so that, on the
    default grid, gamma = 0.5 produces an approach switch below the
    compute-optimal corpus while gamma = 0 produces none.
    """

    irreducible_loss: float = 2.0
    model_coeff: float = 120.0
    model_exponent: float = 0.3
    data_coeff: float = 400.0
    data_exponent: float = 0.3
    ratio_exponent: float = -0.4
    repeat_decay: float = 15.4
    second_stage_weight: float = 0.5
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.irreducible_loss, self.model_coeff, self.data_coeff) <= 0:
            raise ValidationError("loss coefficients must be positive")
        if min(self.model_exponent, self.data_exponent) <= 0:
            raise ValidationError("scale exponents must be positive")
        if self.ratio_exponent >= 0:
            raise ValidationError("ratio_exponent must be negative")
        if self.repeat_decay <= 0:
            raise ValidationError("repeat_decay must be positive")
        if not 0 <= self.second_stage_weight <= 1:
            raise ValidationError("second_stage_weight must be in [0, 1]")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")

    def with_overrides(self, **kwargs) -> "SurrogateParams":
        return replace(self, **kwargs)


def effective_tokens(
    target_tokens: float, epochs: int, ratio, params: SurrogateParams
) -> float:
    """Effective data after repeating the target corpus ``epochs`` times.

    The unique-token pool is the target corpus (counted once) plus the
    never-repeated high-resource tokens; repetition multiplies it by a
    saturating factor that tends to (1 + repeat_decay) as epochs grow.
    """
    r = float(ratio)
    if not 0 < r <= 1:
        raise ValidationError(f"ratio must be in (0, 1], got {r}")
    unique = target_tokens + epochs * target_tokens * (1.0 / r - 1.0)
    saturation = 1.0 + params.repeat_decay * (
        1.0 - math.exp(-(epochs - 1) / params.repeat_decay)
    )
    return unique * saturation


def base_loss(model_scale: float, d_eff: float, params: SurrogateParams) -> float:
    """Ratio-free part: irreducible + model term + data term.

    Strictly decreasing in both arguments.
    """
    return (
        params.irreducible_loss
        + params.model_coeff / model_scale**params.model_exponent
        + params.data_coeff / d_eff**params.data_exponent
    )


def composite_loss(
    model_scale: float,
    target_tokens: float,
    epochs: int,
    ratio,
    first_stage_ratio=None,
    second_stage_ratio=None,
    first_stage_length=None,
    *,
    params: SurrogateParams,
) -> float:
    """Composite landscape over one setup's quantities.

    Single-stage setups pay the penalty ratio^ratio_exponent on the average
    ratio; two-stage setups pay it on r2^gamma * r^(1-gamma) instead. With
    |ratio_exponent| > data_exponent the result is strictly decreasing in
    the ratio even accounting for the ratio's effect on the unique-token
    pool. The first-stage ratio and length do not enter the current form;
    they are accepted so callers can pass a full two-stage description.
    """
    del first_stage_ratio, first_stage_length
    r = float(ratio)
    d_eff = effective_tokens(target_tokens, epochs, r, params)
    base = base_loss(model_scale, d_eff, params)
    gamma = params.second_stage_weight
    if second_stage_ratio is None or gamma == 0.0:
        r_eff = r
    else:
        r_eff = float(second_stage_ratio) ** gamma * r ** (1.0 - gamma)
    return base * r_eff**params.ratio_exponent


def _noise_factor(seed: int, setup_id: str, sigma: float) -> float:
    """Deterministic multiplicative log-normal noise keyed by (seed, setup id)."""
    key = mix64(seed, fnv1a64(setup_id))
    u1, u2 = uniform_pair(key)
    z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
    return math.exp(sigma * z)


def generate_dataset(
    setups: Sequence[SetupSpec] | Iterable[SetupSpec],
    params: SurrogateParams,
    seed: int | None = None,
    *,
    language_pair: str = "surrogate",
) -> list[LossRecord]:
    """One loss record per setup, fully deterministic given (params, seed).

    Noise is derived per record from (seed, setup id), so generation is
    order-independent and parallelizable.
    """
    noise_seed = params.seed if seed is None else seed
    records: list[LossRecord] = []
    for spec in setups:
        derived = spec.derived()
        split = spec.split()
        loss = composite_loss(
            derived.model_scale,
            derived.target_tokens,
            derived.epochs,
            derived.ratio,
            spec.first_stage_ratio,
            spec.second_stage_ratio,
            split.first_length if split is not None else None,
            params=params,
        )
        if params.noise_sigma > 0:
            loss *= _noise_factor(noise_seed, spec.id, params.noise_sigma)
        records.append(
            LossRecord(setup_id=spec.id, language_pair=language_pair, val_loss=loss)
        )
    return records


def params_from_dict(obj: dict) -> SurrogateParams:
    """Build params from a JSON config dict, rejecting unknown keys."""
    known = {f for f in SurrogateParams.__dataclass_fields__}
    unknown = set(obj) - known
    if unknown:
        raise ValidationError(f"unknown surrogate parameter(s): {sorted(unknown)}")
    return SurrogateParams(**obj)


def params_to_dict(params: SurrogateParams) -> dict:
    return {
        "irreducible_loss": params.irreducible_loss,
        "model_coeff": params.model_coeff,
        "model_exponent": params.model_exponent,
        "data_coeff": params.data_coeff,
        "data_exponent": params.data_exponent,
        "ratio_exponent": params.ratio_exponent,
        "repeat_decay": params.repeat_decay,
        "second_stage_weight": params.second_stage_weight,
        "noise_sigma": params.noise_sigma,
        "seed": params.seed,
    }
