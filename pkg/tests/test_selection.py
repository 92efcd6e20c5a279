import numpy as np
import pytest

from conftest import random_runs, three_step_run
from dgselect.errors import ConfigurationError, InputError
from dgselect.selection import (
    CheckpointRecord,
    RunRecord,
    SelectionConfig,
    compare_methods,
    group_runs,
    percentile_filter,
    select_ours,
    select_traditional,
    validation_loss,
)

NO_FILTER = SelectionConfig(pct_low=0.0, pct_high=1.0)


class TestValidationLoss:
    def test_alpha_zero_is_scaled_ce(self):
        cfg = SelectionConfig(alpha=0.0, beta=2.5)
        assert validation_loss(0.8, 123.0, cfg) == 2.5 * 0.8

    def test_alpha_one_is_mmd(self):
        cfg = SelectionConfig(alpha=1.0, beta=1.0)
        assert validation_loss(123.0, 0.37, cfg) == 0.37

    def test_hand_arithmetic(self):
        assert validation_loss(1.0, 0.5, SelectionConfig()) == pytest.approx(0.9)

    def test_non_finite_rejected(self):
        with pytest.raises(InputError):
            validation_loss(float("nan"), 0.0, SelectionConfig())


class TestSelectionConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"alpha": -0.1},
            {"alpha": 1.5},
            {"beta": 0.0},
            {"beta": -1.0},
            {"pct_low": 0.6, "pct_high": 0.5},
            {"pct_low": 1.0},
            {"pct_high": 0.0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            SelectionConfig(**kwargs)

    def test_defaults(self):
        cfg = SelectionConfig()
        assert (cfg.alpha, cfg.beta, cfg.pct_low, cfg.pct_high) == (0.2, 1.0, 0.05, 0.50)


def _records_with_ces(ces):
    return [
        CheckpointRecord("r", (i + 1) * 10, ce=ce, mmd=0.0, acc=0.5)
        for i, ce in enumerate(ces)
    ]


class TestPercentileFilter:
    def test_twenty_records_keeps_ranks_1_to_10(self):
        records = _records_with_ces([0.05 * k for k in range(1, 21)])
        kept = percentile_filter(records, SelectionConfig())
        assert [r.ce for r in kept] == pytest.approx([0.05 * k for k in range(1, 11)])

    def test_single_record_survives(self):
        records = _records_with_ces([0.3])
        assert percentile_filter(records, SelectionConfig()) == records

    def test_full_window_is_identity_on_sorted(self):
        rng = np.random.default_rng(0)
        records = _records_with_ces(list(rng.random(9)))
        kept = percentile_filter(records, NO_FILTER)
        assert kept == sorted(records, key=lambda r: r.ce)

    def test_never_empty(self):
        rng = np.random.default_rng(1)
        for n in range(1, 12):
            records = _records_with_ces(list(rng.random(n)))
            cfg = SelectionConfig(pct_low=0.45, pct_high=0.50)
            assert len(percentile_filter(records, cfg)) >= 1

    def test_output_is_subsequence_of_sorted(self):
        rng = np.random.default_rng(2)
        records = _records_with_ces(list(rng.random(17)))
        kept = percentile_filter(records, SelectionConfig())
        ordered = sorted(records, key=lambda r: r.ce)
        idx = [ordered.index(r) for r in kept]
        assert idx == sorted(idx)

    def test_widening_window_is_monotone(self):
        rng = np.random.default_rng(3)
        records = _records_with_ces(list(rng.random(15)))
        kept_narrow = set(
            (r.run_id, r.step)
            for r in percentile_filter(records, SelectionConfig(pct_high=0.4))
        )
        kept_wide = set(
            (r.run_id, r.step)
            for r in percentile_filter(records, SelectionConfig(pct_high=0.8))
        )
        assert kept_narrow <= kept_wide

    def test_empty_input_rejected(self):
        with pytest.raises(InputError):
            percentile_filter([], SelectionConfig())


class TestSelectOurs:
    def test_hand_fixture_picks_step_300(self):
        result = select_ours([three_step_run()], NO_FILTER)
        assert result.chosen == ("run0", 300)
        assert result.criterion_value == pytest.approx(0.52)
        losses = sorted(r.loss for r in result.audit)
        assert losses == pytest.approx([0.52, 0.56, 0.74])

    def test_identical_metrics_tie_breaks_to_earliest(self):
        runs = [
            RunRecord(
                run_id=rid,
                checkpoints=tuple(
                    CheckpointRecord(rid, s, ce=0.5, mmd=0.5, acc=0.5) for s in (100, 200)
                ),
            )
            for rid in ("b", "a")
        ]
        result = select_ours(runs, NO_FILTER)
        assert result.chosen == ("a", 100)

    def test_alpha_zero_equals_argmin_ce(self):
        rng = np.random.default_rng(4)
        cfg = SelectionConfig(alpha=0.0, pct_low=0.0, pct_high=1.0)
        for _ in range(30):
            runs = random_runs(rng)
            result = select_ours(runs, cfg)
            flat = [c for run in runs for c in run.checkpoints]
            want = min(flat, key=lambda c: (c.ce, c.step, c.run_id))
            assert result.chosen == (want.run_id, want.step)

    def test_common_rescaling_keeps_argmin(self):
        rng = np.random.default_rng(5)
        cfg = SelectionConfig()
        for _ in range(30):
            runs = random_runs(rng)
            scale = float(rng.uniform(0.1, 10.0))
            scaled = [
                RunRecord(
                    run_id=run.run_id,
                    checkpoints=tuple(
                        CheckpointRecord(
                            c.run_id, c.step, c.ce * scale, c.mmd * scale, c.acc, c.test_acc
                        )
                        for c in run.checkpoints
                    ),
                )
                for run in runs
            ]
            assert select_ours(runs, cfg).chosen == select_ours(scaled, cfg).chosen

    def test_chosen_survives_own_run_filter(self):
        rng = np.random.default_rng(6)
        cfg = SelectionConfig()
        for _ in range(20):
            runs = random_runs(rng)
            result = select_ours(runs, cfg)
            run = next(r for r in runs if r.run_id == result.chosen[0])
            kept = percentile_filter(list(run.checkpoints), cfg)
            assert result.chosen in {(c.run_id, c.step) for c in kept}

    def test_empty_run_set_rejected(self):
        with pytest.raises(InputError):
            select_ours([], SelectionConfig())


class TestSelectTraditional:
    def test_hand_fixture_picks_step_200(self):
        result = select_traditional([three_step_run()])
        assert result.chosen == ("run0", 200)
        assert result.criterion_value == pytest.approx(0.80)

    def test_single_checkpoint(self):
        run = RunRecord(
            run_id="r", checkpoints=(CheckpointRecord("r", 10, 0.1, 0.1, 0.9),)
        )
        assert select_traditional([run]).chosen == ("r", 10)

    def test_acc_tie_breaks_to_lower_ce(self):
        run = RunRecord(
            run_id="r",
            checkpoints=(
                CheckpointRecord("r", 10, ce=0.4, mmd=0.0, acc=0.9),
                CheckpointRecord("r", 20, ce=0.3, mmd=0.0, acc=0.9),
            ),
        )
        assert select_traditional([run]).chosen == ("r", 20)


class TestCompareMethods:
    def test_fixture_with_test_accs(self):
        cps = (
            CheckpointRecord("run0", 100, ce=0.90, mmd=0.10, acc=0.70, test_acc=0.60),
            CheckpointRecord("run0", 200, ce=0.50, mmd=0.80, acc=0.80, test_acc=0.55),
            CheckpointRecord("run0", 300, ce=0.60, mmd=0.20, acc=0.75, test_acc=0.65),
        )
        comp = compare_methods([RunRecord(run_id="run0", checkpoints=cps)], NO_FILTER)
        assert comp.ours_test_acc == 0.65
        assert comp.traditional_test_acc == 0.55
        assert comp.delta == pytest.approx(0.10)

    def test_identical_single_checkpoint_delta_zero(self):
        run = RunRecord(
            run_id="r", checkpoints=(CheckpointRecord("r", 10, 0.1, 0.1, 0.9, 0.7),)
        )
        comp = compare_methods([run], SelectionConfig())
        assert comp.delta == 0.0

    def test_missing_test_acc_gives_nulls(self):
        run = RunRecord(
            run_id="r", checkpoints=(CheckpointRecord("r", 10, 0.1, 0.1, 0.9),)
        )
        comp = compare_methods([run], SelectionConfig())
        assert comp.ours_test_acc is None
        assert comp.delta is None


class TestRecordInvariants:
    def test_negative_ce_rejected(self):
        with pytest.raises(InputError):
            CheckpointRecord("r", 0, ce=-1.0, mmd=0.0, acc=0.5)

    def test_acc_out_of_range(self):
        with pytest.raises(InputError):
            CheckpointRecord("r", 0, ce=0.0, mmd=0.0, acc=1.5)

    def test_unsorted_steps_rejected(self):
        with pytest.raises(InputError):
            RunRecord(
                run_id="r",
                checkpoints=(
                    CheckpointRecord("r", 200, 0.1, 0.1, 0.5),
                    CheckpointRecord("r", 100, 0.1, 0.1, 0.5),
                ),
            )

    def test_group_runs_sorts_and_checks_duplicates(self):
        records = [
            CheckpointRecord("b", 200, 0.1, 0.1, 0.5),
            CheckpointRecord("a", 100, 0.1, 0.1, 0.5),
            CheckpointRecord("b", 100, 0.1, 0.1, 0.5),
        ]
        runs = group_runs(records)
        assert [r.run_id for r in runs] == ["a", "b"]
        assert [c.step for c in runs[1].checkpoints] == [100, 200]
        with pytest.raises(InputError):
            group_runs(records + [CheckpointRecord("a", 100, 0.2, 0.1, 0.5)])
