"""Grid enumeration of single-stage and two-stage training setups.

The default ranges reproduce the factor search space used for the sweep:
shared ``f_r`` in [0,4) and ``f_k`` in [0,10), with per-budget rows for
``f_M`` and the derived ``f_D`` filter. Enumeration order is the
lexicographic key (f_C, f_D, f_r, f_M, f_k, r1, r2), so two runs always
produce identical lists and ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterable, Iterator

from .budget import DerivedSetup, FactorTuple, StageSplit, derive_single_stage, stage_split
from .errors import FileFormatError, InfeasibleSplitError

APPROACH_MONO_1STAGE = "mono-1stage"
APPROACH_MULTI_1STAGE = "multi-1stage"
APPROACH_MULTI_2STAGE = "multi-2stage"
APPROACHES = (APPROACH_MONO_1STAGE, APPROACH_MULTI_1STAGE, APPROACH_MULTI_2STAGE)

#: First-stage ratio grid for two-stage setups (0 means a high-resource-only stage).
FIRST_STAGE_RATIOS = (
    Fraction(0),
    Fraction(1, 32),
    Fraction(1, 16),
    Fraction(1, 8),
    Fraction(1, 4),
    Fraction(1, 2),
)

#: Second-stage ratio grid for two-stage setups.
SECOND_STAGE_RATIOS = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1))


@dataclass(frozen=True, slots=True)
class RangeRow:
    """Half-open integer intervals for one compute-budget row of the grid."""

    f_M: tuple[int, int]
    f_D: tuple[int, int]


@dataclass(frozen=True)
class SearchRanges:
    """Factor ranges, keyed by f_C. All intervals are half-open [lo, hi)."""

    rows: dict[int, RangeRow]
    f_r: tuple[int, int] = (0, 4)
    f_k: tuple[int, int] = (0, 10)

    def restrict_budgets(self, f_C_values: Iterable[int]) -> "SearchRanges":
        """Keep only the rows for the given compute factors."""
        keep = set(f_C_values)
        rows = {f_C: row for f_C, row in self.rows.items() if f_C in keep}
        return SearchRanges(rows=rows, f_r=self.f_r, f_k=self.f_k)


def default_ranges() -> SearchRanges:
    """The default sweep grid: five compute rows with matched f_M/f_D windows."""
    return SearchRanges(
        rows={
            0: RangeRow(f_M=(-1, 5), f_D=(-5, 2)),
            -1: RangeRow(f_M=(0, 5), f_D=(-6, 1)),
            -2: RangeRow(f_M=(0, 5), f_D=(-6, 1)),
            -3: RangeRow(f_M=(1, 6), f_D=(-7, 0)),
            -4: RangeRow(f_M=(1, 6), f_D=(-7, 0)),
        }
    )


@dataclass(frozen=True, slots=True)
class SetupSpec:
    """One training setup: factors plus optional two-stage ratios."""

    factors: FactorTuple
    first_stage_ratio: Fraction | None = None
    second_stage_ratio: Fraction | None = None

    def __post_init__(self) -> None:
        r1, r2 = self.first_stage_ratio, self.second_stage_ratio
        if (r1 is None) != (r2 is None):
            raise InfeasibleSplitError("two-stage setups need both r1 and r2")
        if r1 is not None and r2 is not None:
            ratio = Fraction(1, 2**self.factors.f_r)
            if not r1 < ratio < r2:
                raise InfeasibleSplitError(
                    f"need r1 < r < r2 strictly, got r1={r1}, r={ratio}, r2={r2}"
                )

    @property
    def is_two_stage(self) -> bool:
        return self.second_stage_ratio is not None

    @property
    def approach(self) -> str:
        if self.is_two_stage:
            return APPROACH_MULTI_2STAGE
        if self.factors.f_r == 0:
            return APPROACH_MONO_1STAGE
        return APPROACH_MULTI_1STAGE

    @property
    def id(self) -> str:
        """Canonical id, reproducible across runs: factor values plus exact ratios."""
        f = self.factors
        base = f"fC{f.f_C}_fD{f.f_D}_fr{f.f_r}_fM{f.f_M}_fk{f.f_k}"
        if not self.is_two_stage:
            return base
        return f"{base}_r1{self.first_stage_ratio}_r2{self.second_stage_ratio}"

    def derived(self) -> DerivedSetup:
        return derive_single_stage(self.factors)

    def split(self) -> StageSplit | None:
        if not self.is_two_stage:
            return None
        assert self.first_stage_ratio is not None
        assert self.second_stage_ratio is not None
        return stage_split(
            self.first_stage_ratio,
            self.second_stage_ratio,
            Fraction(1, 2**self.factors.f_r),
        )


def in_category(spec: SetupSpec, category: str) -> bool:
    """Nested category membership: mono < multi-1stage < multi-2stage."""
    if category == APPROACH_MULTI_2STAGE:
        return True
    if category == APPROACH_MULTI_1STAGE:
        return not spec.is_two_stage
    if category == APPROACH_MONO_1STAGE:
        return spec.approach == APPROACH_MONO_1STAGE
    raise ValueError(f"unknown category {category!r}")


def _order_key(spec: SetupSpec):
    f = spec.factors
    r1 = spec.first_stage_ratio if spec.first_stage_ratio is not None else Fraction(-1)
    r2 = spec.second_stage_ratio if spec.second_stage_ratio is not None else Fraction(-1)
    return (f.f_C, f.f_D, f.f_r, f.f_M, f.f_k, r1, r2)


def enumerate_single_stage(ranges: SearchRanges | None = None) -> list[SetupSpec]:
    """All single-stage setups whose derived f_D falls inside its row window."""
    ranges = default_ranges() if ranges is None else ranges
    out: list[SetupSpec] = []
    for f_C, row in ranges.rows.items():
        for f_r in range(*ranges.f_r):
            for f_M in range(*row.f_M):
                for f_k in range(*ranges.f_k):
                    factors = FactorTuple(f_r=f_r, f_M=f_M, f_k=f_k, f_C=f_C)
                    if row.f_D[0] <= factors.f_D < row.f_D[1]:
                        out.append(SetupSpec(factors))
    out.sort(key=_order_key)
    return out


def enumerate_two_stage(ranges: SearchRanges | None = None) -> list[SetupSpec]:
    """Two-stage variants of every single-stage tuple, with r1 < r < r2 strictly.

    Boundary cases r1 == r and r == r2 are representable only as
    single-stage setups, so they are excluded here; every emitted split is
    non-degenerate by construction.
    """
    out: list[SetupSpec] = []
    for base in enumerate_single_stage(ranges):
        ratio = Fraction(1, 2**base.factors.f_r)
        for r1 in FIRST_STAGE_RATIOS:
            if not r1 < ratio:
                continue
            for r2 in SECOND_STAGE_RATIOS:
                if ratio < r2:
                    out.append(SetupSpec(base.factors, r1, r2))
    out.sort(key=_order_key)
    return out


def enumerate_all(ranges: SearchRanges | None = None) -> list[SetupSpec]:
    """Single-stage block followed by the two-stage block, each in canonical order."""
    return enumerate_single_stage(ranges) + enumerate_two_stage(ranges)


def group_by_budget(
    setups: Iterable[SetupSpec],
) -> dict[tuple[int, int], list[SetupSpec]]:
    """Partition setups by (f_C, f_D); within a group all share compute and corpus.

    Keys come out sorted; values keep the input order.
    """
    groups: dict[tuple[int, int], list[SetupSpec]] = {}
    for spec in setups:
        groups.setdefault((spec.factors.f_C, spec.factors.f_D), []).append(spec)
    return {key: groups[key] for key in sorted(groups)}


def to_wire(spec: SetupSpec) -> dict:
    """Serializable form of a setup: ids, factors, and derived quantities.

    Ratios carry both a decimal float and an exact "num/den" companion
    string so consumers never have to re-derive exact values from floats.
    """
    derived = spec.derived()
    obj: dict = {
        "id": spec.id,
        "approach": spec.approach,
        "f_r": spec.factors.f_r,
        "f_M": spec.factors.f_M,
        "f_k": spec.factors.f_k,
        "f_C": spec.factors.f_C,
        "f_D": spec.factors.f_D,
    }
    if spec.is_two_stage:
        obj["r1"] = float(spec.first_stage_ratio)
        obj["r1_frac"] = str(spec.first_stage_ratio)
        obj["r2"] = float(spec.second_stage_ratio)
        obj["r2_frac"] = str(spec.second_stage_ratio)
    derived_obj: dict = {
        "r": float(derived.ratio),
        "r_frac": str(derived.ratio),
        "M": derived.model_scale,
        "k": derived.epochs,
        "C": derived.compute,
        "D_T": derived.target_tokens,
        "D_total": derived.total_tokens,
    }
    split = spec.split()
    if split is not None:
        derived_obj["s1"] = float(split.first_length)
        derived_obj["s1_frac"] = str(split.first_length)
        derived_obj["s2"] = float(split.second_length)
        derived_obj["s2_frac"] = str(split.second_length)
    obj["derived"] = derived_obj
    return obj


def from_wire(obj: dict) -> SetupSpec:
    """Rebuild a setup from its wire form, checking the id round-trips."""
    try:
        factors = FactorTuple(
            f_r=int(obj["f_r"]), f_M=int(obj["f_M"]), f_k=int(obj["f_k"]), f_C=int(obj["f_C"])
        )
        r1 = Fraction(obj["r1_frac"]) if "r1_frac" in obj else None
        r2 = Fraction(obj["r2_frac"]) if "r2_frac" in obj else None
        spec = SetupSpec(factors, r1, r2)
    except (KeyError, ValueError, TypeError) as exc:
        raise FileFormatError(f"bad setup object: {exc}") from exc
    if "id" in obj and obj["id"] != spec.id:
        raise FileFormatError(f"setup id {obj['id']!r} does not match fields ({spec.id})")
    return spec


def write_jsonl(specs: Iterable[SetupSpec], fp: IO[str]) -> int:
    """Write one wire object per line; returns the number of lines."""
    count = 0
    for spec in specs:
        fp.write(json.dumps(to_wire(spec)))
        fp.write("\n")
        count += 1
    return count


def read_jsonl(fp: IO[str]) -> Iterator[SetupSpec]:
    """Parse setups back from JSON Lines, reporting the offending line on error."""
    for lineno, line in enumerate(fp, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"line {lineno}: invalid JSON ({exc})") from exc
        try:
            yield from_wire(obj)
        except FileFormatError as exc:
            raise FileFormatError(f"line {lineno}: {exc}") from exc
