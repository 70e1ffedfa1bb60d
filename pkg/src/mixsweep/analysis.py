"""Ingestion of loss measurements and the sweep analyses built on them.

Analyses: per-budget category minima over the nested approach categories,
the compute-optimal corpus estimate, the approach-switch threshold scan,
and the optimal-model-scale table. Everything is a deterministic function
of the validated result set; ties break toward fewer epochs, then the
smaller model-scale factor, then the lexicographically smaller id.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

from .budget import reference_constants
from .errors import FileFormatError, InsufficientDataError, ValidationError
from .space import (
    APPROACH_MONO_1STAGE,
    APPROACH_MULTI_1STAGE,
    APPROACH_MULTI_2STAGE,
    APPROACHES,
    SetupSpec,
    in_category,
)

RESULTS_HEADER = ("setup_id", "language_pair", "val_loss")


@dataclass(frozen=True, slots=True)
class LossRecord:
    """One measured validation loss (nats/token) for a setup and language pair."""

    setup_id: str
    language_pair: str
    val_loss: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.val_loss) or self.val_loss <= 0:
            raise ValidationError(
                f"val_loss must be positive and finite, got {self.val_loss!r}"
            )


def read_results_csv(fp: IO[str]) -> Iterator[LossRecord]:
    """Parse a results CSV with header 'setup_id,language_pair,val_loss'.

    Malformed rows and non-positive losses raise with the file line number.
    """
    reader = csv.reader(fp)
    try:
        header = next(reader)
    except StopIteration:
        raise FileFormatError("empty results file (missing header)") from None
    if tuple(h.strip() for h in header) != RESULTS_HEADER:
        raise FileFormatError(
            f"bad header {header!r}, expected {','.join(RESULTS_HEADER)}"
        )
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise FileFormatError(f"line {lineno}: expected 3 fields, got {len(row)}")
        setup_id, pair, raw_loss = (field.strip() for field in row)
        try:
            loss = float(raw_loss)
        except ValueError:
            raise FileFormatError(
                f"line {lineno}: val_loss {raw_loss!r} is not a number"
            ) from None
        try:
            yield LossRecord(setup_id=setup_id, language_pair=pair, val_loss=loss)
        except ValidationError as exc:
            raise FileFormatError(f"line {lineno}: {exc}") from exc


@dataclass(frozen=True)
class IngestSummary:
    """What happened during ingestion.

    ``rejected_unknown`` holds (position, setup_id) pairs where position is
    the 1-based record index in the input stream; for CSV input the file
    line is position + 1 (header). ``duplicates`` maps (setup_id, pair) to
    the number of extra measurements reduced away (minimum kept).
    """

    n_input: int
    n_records: int
    rejected_unknown: tuple[tuple[int, str], ...]
    duplicates: tuple[tuple[tuple[str, str], int], ...]


@dataclass(frozen=True)
class ResultSet:
    """Validated measurements bound to their setups (immutable snapshot)."""

    losses: dict[tuple[str, str], float]
    setups: dict[str, SetupSpec]
    summary: IngestSummary

    def pairs(self) -> tuple[str, ...]:
        return tuple(sorted({pair for _, pair in self.losses}))

    def for_pair(self, pair: str | None = None) -> dict[str, float]:
        """Losses keyed by setup id for one language pair.

        ``pair=None`` is allowed only when the set holds exactly one pair.
        """
        pairs = self.pairs()
        if pair is None:
            if len(pairs) != 1:
                raise InsufficientDataError(
                    f"result set has pairs {pairs}; specify which one to analyze"
                )
            pair = pairs[0]
        return {
            setup_id: loss
            for (setup_id, rec_pair), loss in self.losses.items()
            if rec_pair == pair
        }


def ingest(records: Iterable[LossRecord], setups: Iterable[SetupSpec]) -> ResultSet:
    """Validate records against known setups and reduce duplicates.

    Unknown setup ids are rejected (reported with positions, not fatal);
    duplicate (setup_id, pair) measurements keep the minimum loss with the
    extra count reported.
    """
    setups_by_id = {spec.id: spec for spec in setups}
    losses: dict[tuple[str, str], float] = {}
    rejected: list[tuple[int, str]] = []
    duplicates: dict[tuple[str, str], int] = {}
    n_input = 0
    for position, record in enumerate(records, start=1):
        n_input += 1
        if record.setup_id not in setups_by_id:
            rejected.append((position, record.setup_id))
            continue
        key = (record.setup_id, record.language_pair)
        if key in losses:
            duplicates[key] = duplicates.get(key, 0) + 1
            losses[key] = min(losses[key], record.val_loss)
        else:
            losses[key] = record.val_loss
    summary = IngestSummary(
        n_input=n_input,
        n_records=len(losses),
        rejected_unknown=tuple(rejected),
        duplicates=tuple(sorted(duplicates.items())),
    )
    return ResultSet(losses=losses, setups=setups_by_id, summary=summary)


def _tie_key(spec: SetupSpec) -> tuple[int, int, str]:
    derived = spec.derived()
    return (derived.epochs, spec.factors.f_M, spec.id)


@dataclass(frozen=True, slots=True)
class BestEntry:
    loss: float
    setup_id: str


@dataclass(frozen=True)
class CategoryMinima:
    """Minimum loss per nested category within one (f_C, f_D) budget cell."""

    f_C: int
    f_D: int
    compute: float
    target_tokens: float
    best: dict[str, BestEntry]


def category_minima(results: ResultSet, pair: str | None = None) -> list[CategoryMinima]:
    """Per-budget minima over the nested categories.

    A category with no measured member is absent from ``best`` (not zero).
    The nesting inequality multi-2stage <= multi-1stage <= mono-1stage is
    structural; a violation would signal a membership bug, so it is
    re-checked here.
    """
    losses = results.for_pair(pair)
    cells: dict[tuple[int, int], dict[str, tuple[float, SetupSpec]]] = {}
    for setup_id, loss in losses.items():
        spec = results.setups[setup_id]
        key = (spec.factors.f_C, spec.factors.f_D)
        cell = cells.setdefault(key, {})
        for category in APPROACHES:
            if not in_category(spec, category):
                continue
            incumbent = cell.get(category)
            if (
                incumbent is None
                or loss < incumbent[0]
                or (loss == incumbent[0] and _tie_key(spec) < _tie_key(incumbent[1]))
            ):
                cell[category] = (loss, spec)
    out: list[CategoryMinima] = []
    ref = reference_constants()
    for (f_C, f_D) in sorted(cells):
        cell = cells[(f_C, f_D)]
        best = {
            category: BestEntry(loss=entry[0], setup_id=entry[1].id)
            for category, entry in cell.items()
        }
        chain = [APPROACH_MULTI_2STAGE, APPROACH_MULTI_1STAGE, APPROACH_MONO_1STAGE]
        present = [best[c].loss for c in chain if c in best]
        if any(a > b for a, b in zip(present, present[1:])):
            raise AssertionError(
                f"category nesting violated at (f_C={f_C}, f_D={f_D}); membership bug"
            )
        out.append(
            CategoryMinima(
                f_C=f_C,
                f_D=f_D,
                compute=math.ldexp(ref.compute, f_C),
                target_tokens=math.ldexp(ref.target_tokens, f_D),
                best=best,
            )
        )
    return out


@dataclass(frozen=True, slots=True)
class ComputeOptimalEstimate:
    """Effective corpus (epochs * target tokens) of the best mono setup at a budget."""

    compute: float
    d_star: float
    setup_id: str


def estimate_compute_optimal(
    results: ResultSet, compute: float, pair: str | None = None
) -> ComputeOptimalEstimate:
    """D*(C): effective corpus of the minimum-loss mono-1stage setup at budget C."""
    ref = reference_constants()
    if compute <= 0:
        raise ValidationError(f"compute must be positive, got {compute}")
    f_C = round(math.log2(compute / ref.compute))
    if not math.isclose(math.ldexp(ref.compute, f_C), compute, rel_tol=1e-9):
        raise ValidationError(f"compute {compute:.6g} is not on the power-of-two grid")
    losses = results.for_pair(pair)
    candidates = [
        (loss, results.setups[setup_id])
        for setup_id, loss in losses.items()
        if results.setups[setup_id].approach == APPROACH_MONO_1STAGE
        and results.setups[setup_id].factors.f_C == f_C
    ]
    if not candidates:
        raise InsufficientDataError(
            f"no mono-1stage measurements at compute factor f_C={f_C}"
        )
    loss, spec = min(candidates, key=lambda item: (item[0], _tie_key(item[1])))
    derived = spec.derived()
    return ComputeOptimalEstimate(
        compute=derived.compute,
        d_star=derived.epochs * derived.target_tokens,
        setup_id=spec.id,
    )


@dataclass(frozen=True, slots=True)
class ThresholdReport:
    """Where the winning approach switches between mono-1stage and multi-2stage.

    The crossing is reported as a grid interval (never interpolated to a
    point): ``lower_target_tokens`` is the largest corpus size where
    multi-2stage strictly wins and ``upper_target_tokens`` the adjacent
    grid size where it does not. ``open_upper`` flags the case where
    multi-2stage wins everywhere measured (no upper crossing). Ties go to
    mono-1stage.
    """

    compute: float
    d_star: float
    crossed: bool
    lower_target_tokens: float | None
    upper_target_tokens: float | None
    open_upper: bool
    ratio_lower: float | None
    ratio_upper: float | None


def detect_threshold(
    minima: Iterable[CategoryMinima], d_star: float, epsilon: float = 0.0
) -> ThresholdReport:
    """Scan one budget's minima (ascending f_D) for the approach switch.

    ``epsilon`` is an optional noise margin: multi-2stage must win by more
    than epsilon to count. Defaults to raw comparison.
    """
    cells = sorted(minima, key=lambda m: m.f_D)
    if not cells:
        raise InsufficientDataError("no minima to scan for a threshold")
    compute = cells[0].compute
    eligible = [
        m
        for m in cells
        if APPROACH_MONO_1STAGE in m.best and APPROACH_MULTI_2STAGE in m.best
    ]
    wins = [
        (
            m.target_tokens,
            m.best[APPROACH_MULTI_2STAGE].loss < m.best[APPROACH_MONO_1STAGE].loss - epsilon,
        )
        for m in eligible
    ]
    win_indices = [i for i, (_, won) in enumerate(wins) if won]
    if not win_indices:
        return ThresholdReport(
            compute=compute,
            d_star=d_star,
            crossed=False,
            lower_target_tokens=None,
            upper_target_tokens=None,
            open_upper=False,
            ratio_lower=None,
            ratio_upper=None,
        )
    last_win = max(win_indices)
    lower = wins[last_win][0]
    if last_win == len(wins) - 1:
        return ThresholdReport(
            compute=compute,
            d_star=d_star,
            crossed=True,
            lower_target_tokens=lower,
            upper_target_tokens=None,
            open_upper=True,
            ratio_lower=lower / d_star,
            ratio_upper=None,
        )
    upper = wins[last_win + 1][0]
    return ThresholdReport(
        compute=compute,
        d_star=d_star,
        crossed=True,
        lower_target_tokens=lower,
        upper_target_tokens=upper,
        open_upper=False,
        ratio_lower=lower / d_star,
        ratio_upper=upper / d_star,
    )


@dataclass(frozen=True, slots=True)
class ScaleWinner:
    """Best model scale for one (f_C, f_D) cell."""

    f_C: int
    f_D: int
    compute: float
    target_tokens: float
    f_M: int
    model_scale: float
    loss: float
    setup_id: str


@dataclass(frozen=True)
class ScaleTable:
    """Winning model scale per budget cell plus per-budget fold change.

    ``fold_change`` maps f_C to max/min of the winning scales across the
    corpus-size axis: 1.0 means the optimum never moved.
    """

    winners: tuple[ScaleWinner, ...]
    fold_change: dict[int, float]


def per_scale_minima(
    results: ResultSet, pair: str | None = None
) -> list[ScaleWinner]:
    """Minimum loss per (f_C, f_D, f_M) triple, for loss-vs-corpus plots by scale."""
    losses = results.for_pair(pair)
    cells: dict[tuple[int, int, int], tuple[float, SetupSpec]] = {}
    for setup_id, loss in losses.items():
        spec = results.setups[setup_id]
        key = (spec.factors.f_C, spec.factors.f_D, spec.factors.f_M)
        incumbent = cells.get(key)
        if (
            incumbent is None
            or loss < incumbent[0]
            or (loss == incumbent[0] and _tie_key(spec) < _tie_key(incumbent[1]))
        ):
            cells[key] = (loss, spec)
    ref = reference_constants()
    out = []
    for (f_C, f_D, f_M) in sorted(cells):
        loss, spec = cells[(f_C, f_D, f_M)]
        out.append(
            ScaleWinner(
                f_C=f_C,
                f_D=f_D,
                compute=math.ldexp(ref.compute, f_C),
                target_tokens=math.ldexp(ref.target_tokens, f_D),
                f_M=f_M,
                model_scale=spec.derived().model_scale,
                loss=loss,
                setup_id=spec.id,
            )
        )
    return out


def optimal_scale_table(results: ResultSet, pair: str | None = None) -> ScaleTable:
    """Argmin over the model-scale factor of the per-cell minimum loss."""
    losses = results.for_pair(pair)
    cells: dict[tuple[int, int], tuple[float, SetupSpec]] = {}
    for setup_id, loss in losses.items():
        spec = results.setups[setup_id]
        key = (spec.factors.f_C, spec.factors.f_D)
        incumbent = cells.get(key)
        if (
            incumbent is None
            or loss < incumbent[0]
            or (loss == incumbent[0] and _tie_key(spec) < _tie_key(incumbent[1]))
        ):
            cells[key] = (loss, spec)
    winners = []
    ref = reference_constants()
    for (f_C, f_D) in sorted(cells):
        loss, spec = cells[(f_C, f_D)]
        derived = spec.derived()
        winners.append(
            ScaleWinner(
                f_C=f_C,
                f_D=f_D,
                compute=math.ldexp(ref.compute, f_C),
                target_tokens=math.ldexp(ref.target_tokens, f_D),
                f_M=spec.factors.f_M,
                model_scale=derived.model_scale,
                loss=loss,
                setup_id=spec.id,
            )
        )
    fold_change: dict[int, float] = {}
    for f_C in sorted({w.f_C for w in winners}):
        scales = [w.model_scale for w in winners if w.f_C == f_C]
        fold_change[f_C] = max(scales) / min(scales)
    return ScaleTable(winners=tuple(winners), fold_change=fold_change)


def build_report(
    results: ResultSet, pair: str | None = None, epsilon: float = 0.0
) -> dict:
    """Full analysis report as a JSON-ready dict.

    Budgets without mono-1stage measurements get a null compute-optimal
    entry (with a reason) instead of failing the whole report.
    """
    pairs = results.pairs()
    if pair is None:
        if len(pairs) != 1:
            raise InsufficientDataError(
                f"result set has pairs {pairs}; specify which one to analyze"
            )
        pair = pairs[0]
    minima = category_minima(results, pair)
    by_budget: dict[int, list[CategoryMinima]] = {}
    for cell in minima:
        by_budget.setdefault(cell.f_C, []).append(cell)

    groups_obj = [
        {
            "f_C": cell.f_C,
            "f_D": cell.f_D,
            "C": cell.compute,
            "D_T": cell.target_tokens,
            "minima": {
                category: {"loss": entry.loss, "setup_id": entry.setup_id}
                for category, entry in sorted(cell.best.items())
            },
        }
        for cell in minima
    ]
    compute_optimal_obj = []
    thresholds_obj = []
    for f_C in sorted(by_budget):
        cells = by_budget[f_C]
        compute = cells[0].compute
        try:
            estimate = estimate_compute_optimal(results, compute, pair)
        except InsufficientDataError as exc:
            compute_optimal_obj.append(
                {"f_C": f_C, "C": compute, "D_star": None, "setup_id": None, "note": str(exc)}
            )
            continue
        compute_optimal_obj.append(
            {
                "f_C": f_C,
                "C": estimate.compute,
                "D_star": estimate.d_star,
                "setup_id": estimate.setup_id,
            }
        )
        report = detect_threshold(cells, estimate.d_star, epsilon)
        thresholds_obj.append(
            {
                "f_C": f_C,
                "C": report.compute,
                "D_star": report.d_star,
                "crossed": report.crossed,
                "lower_D_T": report.lower_target_tokens,
                "upper_D_T": report.upper_target_tokens,
                "open_upper": report.open_upper,
                "ratio_lower": report.ratio_lower,
                "ratio_upper": report.ratio_upper,
            }
        )
    scale_rows = per_scale_minima(results, pair)
    scale_minima_obj = [
        {
            "f_C": row.f_C,
            "f_D": row.f_D,
            "C": row.compute,
            "D_T": row.target_tokens,
            "f_M": row.f_M,
            "M": row.model_scale,
            "loss": row.loss,
            "setup_id": row.setup_id,
        }
        for row in scale_rows
    ]
    table = optimal_scale_table(results, pair)
    scale_obj = {
        "winners": [
            {
                "f_C": w.f_C,
                "f_D": w.f_D,
                "C": w.compute,
                "D_T": w.target_tokens,
                "f_M": w.f_M,
                "M": w.model_scale,
                "loss": w.loss,
                "setup_id": w.setup_id,
            }
            for w in table.winners
        ],
        "fold_change": {str(f_C): value for f_C, value in sorted(table.fold_change.items())},
    }
    summary = results.summary
    return {
        "schema_version": 1,
        "language_pair": pair,
        "epsilon": epsilon,
        "ingest": {
            "n_input": summary.n_input,
            "n_records": summary.n_records,
            "rejected_unknown": [
                {"position": pos, "setup_id": sid} for pos, sid in summary.rejected_unknown
            ],
            "duplicates": [
                {"setup_id": sid, "language_pair": rec_pair, "extra": count}
                for (sid, rec_pair), count in summary.duplicates
            ],
        },
        "groups": groups_obj,
        "compute_optimal": compute_optimal_obj,
        "thresholds": thresholds_obj,
        "optimal_scale": scale_obj,
        "scale_minima": scale_minima_obj,
    }
