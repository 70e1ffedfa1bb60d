import math
from fractions import Fraction

import pytest

from mixsweep import budget, schedule, space
from mixsweep.errors import InsufficientCorpusError, ValidationError
from mixsweep.seeds import mix64


def test_single_stage_budget_is_definition_of_ratio():
    setup = budget.derive_single_stage(budget.FactorTuple(2, 0, 0, 0))  # r=1/4
    (stage,) = schedule.stage_budgets(setup)
    assert stage.target_tokens == setup.total_tokens / 4
    assert stage.high_tokens == pytest.approx(setup.total_tokens * 3 / 4, rel=1e-15)
    assert stage.target_tokens + stage.high_tokens == stage.total_tokens


def test_two_stage_budget_example():
    setup = budget.derive_single_stage(budget.FactorTuple(2, 1, 1, -1))  # r=1/4
    split = budget.stage_split(Fraction(0), Fraction(1, 2), Fraction(1, 4))
    first, second = schedule.stage_budgets(setup, split)
    total = setup.total_tokens
    assert first.total_tokens == pytest.approx(total / 2, rel=1e-15)
    assert first.target_tokens == 0.0
    assert first.high_tokens == first.total_tokens
    assert second.total_tokens == pytest.approx(total / 2, rel=1e-15)
    assert second.target_tokens == pytest.approx(total / 4, rel=1e-15)
    assert second.high_tokens == pytest.approx(total / 4, rel=1e-15)
    assert first.target_tokens + second.target_tokens == total / 4


def test_target_sum_exact_across_grid(all_setups):
    ref = budget.reference_constants()
    two_stage = [s for s in all_setups if s.is_two_stage and s.factors.f_C == -4]
    assert two_stage
    for spec in two_stage:
        setup = spec.derived()
        budgets = schedule.stage_budgets(setup, spec.split())
        expected = math.ldexp(ref.target_tokens, setup.f_D + setup.factors.f_k)
        assert sum(b.target_tokens for b in budgets) == expected
        assert sum(b.total_tokens for b in budgets) == pytest.approx(
            setup.total_tokens, rel=1e-12
        )
        for b in budgets:
            assert b.target_tokens + b.high_tokens == b.total_tokens


def test_insufficient_high_resource_corpus():
    setup = budget.derive_single_stage(budget.FactorTuple(2, 0, 0, 0))
    needed = setup.total_tokens * 3 / 4
    schedule.stage_budgets(setup, high_available=needed)  # exactly enough
    with pytest.raises(InsufficientCorpusError):
        schedule.stage_budgets(setup, high_available=needed * 0.999)


def test_epoch_seeds_single():
    assert schedule.epoch_seeds(1, 42) == [mix64(42, 1)]


def test_epoch_seeds_distinct_and_reproducible():
    seeds = schedule.epoch_seeds(8, 42)
    assert len(set(seeds)) == 8
    assert seeds == schedule.epoch_seeds(8, 42)
    assert schedule.epoch_seeds(8, 43) != seeds


def test_epoch_seeds_distinct_for_large_counts():
    assert len(set(schedule.epoch_seeds(512, 0))) == 512


def test_epoch_seeds_rejects_zero():
    with pytest.raises(ValidationError):
        schedule.epoch_seeds(0, 1)


def _simulate_accumulator(ratio, n):
    """Independent oracle: the literal error-diffusion accumulator."""
    acc = Fraction(0)
    out = []
    for _ in range(n):
        acc += ratio
        if acc >= Fraction(1, 2):
            out.append("target")
            acc -= 1
        else:
            out.append("high")
    return out


@pytest.mark.parametrize(
    "ratio",
    [Fraction(0), Fraction(1, 8), Fraction(1, 4), Fraction(1, 3), Fraction(1, 2), Fraction(1)],
)
def test_interleaver_matches_accumulator_oracle(ratio):
    pattern = schedule.interleave_pattern(ratio, 4096)
    assert [pattern.source_at(i) for i in range(500)] == _simulate_accumulator(ratio, 500)


@pytest.mark.parametrize(
    "ratio",
    [Fraction(0), Fraction(1, 8), Fraction(1, 4), Fraction(1, 3), Fraction(1, 2), Fraction(1)],
)
def test_interleaver_prefix_discrepancy_bounded(ratio):
    pattern = schedule.interleave_pattern(ratio, 4096)
    worst = max(
        abs(pattern.targets_before(n) - float(ratio) * n) for n in range(1, 10001)
    )
    assert worst <= 1.0


def test_interleaver_special_patterns():
    half = schedule.interleave_pattern(Fraction(1, 2), 1)
    assert [half.source_at(i) for i in range(6)] == ["target", "high"] * 3
    third = schedule.interleave_pattern(Fraction(1, 3), 1)
    window = [third.source_at(i) for i in range(9)]
    assert window == ["high", "target", "high"] * 3
    assert all(schedule.interleave_pattern(Fraction(0), 1).source_at(i) == "high" for i in range(10))
    assert all(schedule.interleave_pattern(Fraction(1), 1).source_at(i) == "target" for i in range(10))


def test_interleaver_validation():
    with pytest.raises(ValidationError):
        schedule.interleave_pattern(Fraction(3, 2), 1)
    with pytest.raises(ValidationError):
        schedule.interleave_pattern(Fraction(1, 2), 0)


def test_build_schedule_deterministic():
    spec = space.SetupSpec(budget.FactorTuple(2, 1, 1, -1), Fraction(0), Fraction(1, 2))
    setup = spec.derived()
    one = schedule.build_schedule(setup, spec.split(), batch_tokens=98304, base_seed=7, setup_id=spec.id)
    two = schedule.build_schedule(setup, spec.split(), batch_tokens=98304, base_seed=7, setup_id=spec.id)
    assert one == two
    assert schedule.schedule_to_wire(one) == schedule.schedule_to_wire(two)
    assert one.trailing_partial_epoch  # reference corpus is not batch-aligned


def test_schedule_rows_accounting():
    spec = space.SetupSpec(budget.FactorTuple(2, 1, 1, -1), Fraction(0), Fraction(1, 2))
    setup = spec.derived()
    sched = schedule.build_schedule(setup, spec.split(), batch_tokens=98304, setup_id=spec.id)
    rows = list(schedule.schedule_rows(sched))
    indices = [r[0] for r in rows]
    assert indices == list(range(len(rows)))
    for stage_budget in sched.budgets:
        stage_rows = [r for r in rows if r[1] == stage_budget.stage_index]
        assert sum(r[3] for r in stage_rows) == stage_budget.total_tokens
        assert all(r[3] <= 98304 for r in stage_rows)
    # stage 1 of this split is high-resource only
    assert all(r[2] == "high" for r in rows if r[1] == 1)
