"""Metric, benchmark-orchestration, and sweep tests."""

from __future__ import annotations

import numpy as np
import pytest

from iava.decoder import DecodeConfig
from iava.errors import EmptyInput, InvariantViolation, LengthMismatch, SessionFailure
from iava.evaluation import (
    EvalResult,
    SweepPoint,
    format_sweep_table,
    format_table,
    pope_metrics,
    result_payload,
    run_benchmark,
    sweep_i,
    toy_session_factory,
    write_report,
)
from iava.negative_sample import NegativeStrategy
from iava.selection import SelectionParams
from iava.toy_lvlm import EOS, ToyConfig


def brute_metrics(predictions, golds):
    """Independent confusion-matrix count."""
    tp = sum(p == "yes" and g == "yes" for p, g in zip(predictions, golds))
    fp = sum(p == "yes" and g == "no" for p, g in zip(predictions, golds))
    tn = sum(p == "no" and g == "no" for p, g in zip(predictions, golds))
    fn = sum(p == "no" and g == "yes" for p, g in zip(predictions, golds))
    return tp, fp, tn, fn


def toy_decode_config(alpha=1.0, seed=42):
    return DecodeConfig(alpha=alpha, seed=seed, max_steps=4, stop_tokens=frozenset({EOS}))


class TestPopeMetrics:
    def test_perfect_predictor(self):
        result = pope_metrics(["yes", "no", "yes"], ["yes", "no", "yes"])
        assert result.accuracy == result.precision == result.recall == result.f1 == 1.0
        assert (result.tp, result.fp, result.tn, result.fn) == (2, 0, 1, 0)

    def test_all_yes_half_yes(self):
        predictions = ["yes"] * 10
        golds = ["yes"] * 5 + ["no"] * 5
        result = pope_metrics(predictions, golds)
        assert result.accuracy == 0.5
        assert result.precision == 0.5
        assert result.recall == 1.0
        assert result.f1 == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_inverted_predictor(self):
        result = pope_metrics(["no", "yes"], ["yes", "no"])
        assert result.accuracy == 0.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            n = int(rng.integers(1, 60))
            predictions = ["yes" if x else "no" for x in rng.integers(0, 2, size=n)]
            golds = ["yes" if x else "no" for x in rng.integers(0, 2, size=n)]
            result = pope_metrics(predictions, golds)
            assert (result.tp, result.fp, result.tn, result.fn) == brute_metrics(
                predictions, golds
            )
            assert result.total == n

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            pope_metrics(["yes"], ["yes", "no"])

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            pope_metrics([], [])

    def test_bad_labels(self):
        with pytest.raises(InvariantViolation):
            pope_metrics(["maybe"], ["yes"])
        with pytest.raises(InvariantViolation):
            pope_metrics(["yes"], ["maybe"])

    def test_degenerate_precision_flagged(self):
        result = pope_metrics(["no", "no"], ["no", "yes"])
        assert result.precision == 0.0
        assert "precision" in result.degenerate
        assert "f1" in result.degenerate

    def test_degenerate_recall_flagged(self):
        result = pope_metrics(["no", "no"], ["no", "no"])
        assert "recall" in result.degenerate
        assert result.accuracy == 1.0

    def test_f1_consistent_with_parts(self):
        result = pope_metrics(
            ["yes", "yes", "no", "no", "yes"], ["yes", "no", "no", "yes", "yes"]
        )
        expected = 2 * result.precision * result.recall / (result.precision + result.recall)
        assert result.f1 == pytest.approx(expected, abs=1e-12)


class TestRunBenchmark:
    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            run_benchmark(
                toy_session_factory(ToyConfig()),
                None,
                SelectionParams(16, -0.1),
                toy_decode_config(),
                0,
            )

    def test_iava_beats_base(self):
        factory = toy_session_factory(ToyConfig())
        params = SelectionParams(16, -0.1)
        base = run_benchmark(factory, None, params, toy_decode_config(), 120)
        iava = run_benchmark(
            factory, NegativeStrategy(kind="iava-mask"), params, toy_decode_config(), 120
        )
        assert iava.accuracy > base.accuracy
        assert base.recall == 1.0

    def test_alpha_zero_equals_base_exactly(self):
        factory = toy_session_factory(ToyConfig())
        params = SelectionParams(16, -0.1)
        base = run_benchmark(factory, None, params, toy_decode_config(alpha=1.0), 120)
        collapsed = run_benchmark(
            factory,
            NegativeStrategy(kind="iava-mask"),
            params,
            toy_decode_config(alpha=0.0),
            120,
        )
        assert collapsed == base

    def test_counts_sum_to_n(self):
        result = run_benchmark(
            toy_session_factory(ToyConfig()),
            None,
            SelectionParams(16, -0.1),
            toy_decode_config(),
            60,
        )
        assert result.total == 60
        assert result.invalid == 0

    def test_deterministic(self):
        args = (
            toy_session_factory(ToyConfig()),
            NegativeStrategy(kind="iava-mask"),
            SelectionParams(16, -0.1),
            toy_decode_config(),
            60,
        )
        assert run_benchmark(*args) == run_benchmark(*args)

    def test_invalid_predictions_tallied(self):
        class EosSession:
            n_tokens = 4
            vocab_size = 3

            def attention(self, instruction):
                return np.full(4, 0.25)

            def step(self, visual, query, prefix):
                return np.array([-9.0, -9.0, 9.0])

            def close(self):
                pass

        def factory(index):
            return EosSession(), "q", "yes"

        result = run_benchmark(
            factory, None, SelectionParams(1, 0.0), DecodeConfig(max_steps=1), 5
        )
        assert result.invalid == 5
        assert result.fn == 5
        assert result.accuracy == 0.0

    def test_session_failure_names_example(self):
        class BrokenSession:
            n_tokens = 4
            vocab_size = 3

            def attention(self, instruction):
                raise SessionFailure("wire down")

            def step(self, visual, query, prefix):
                raise SessionFailure("wire down")

            def close(self):
                pass

        def factory(index):
            return BrokenSession(), "q", "yes"

        with pytest.raises(SessionFailure, match="example 0"):
            run_benchmark(
                factory,
                NegativeStrategy(kind="iava-mask"),
                SelectionParams(1, 0.0),
                DecodeConfig(max_steps=1),
                3,
            )

    def test_sessions_closed(self):
        closed = []

        class TrackingSession:
            n_tokens = 4
            vocab_size = 3

            def attention(self, instruction):
                return np.full(4, 0.25)

            def step(self, visual, query, prefix):
                return np.array([1.0, 0.0, -9.0])

            def close(self):
                closed.append(True)

        def factory(index):
            return TrackingSession(), "q", "yes"

        run_benchmark(factory, None, SelectionParams(1, 0.0), DecodeConfig(max_steps=1), 4)
        assert len(closed) == 4


class TestSweep:
    def test_single_point_matches_run_benchmark(self):
        factory = toy_session_factory(ToyConfig())
        points = sweep_i(factory, [16], lam=-0.1, config=toy_decode_config(), n_examples=80)
        direct = run_benchmark(
            factory,
            NegativeStrategy(kind="iava-mask"),
            SelectionParams(16, -0.1),
            toy_decode_config(),
            80,
        )
        assert points == [SweepPoint(i=16, score=direct.accuracy)]

    def test_duplicates_identical(self):
        points = sweep_i(
            toy_session_factory(ToyConfig()),
            [8, 8],
            lam=-0.1,
            config=toy_decode_config(),
            n_examples=50,
        )
        assert points[0].score == points[1].score

    def test_empty_values(self):
        with pytest.raises(EmptyInput):
            sweep_i(
                toy_session_factory(ToyConfig()),
                [],
                lam=0.0,
                config=toy_decode_config(),
                n_examples=10,
            )


class TestReporting:
    def test_format_table_exact(self):
        result = EvalResult.from_counts(tp=2, fp=1, tn=1, fn=0)
        assert format_table(result) == (
            "acc     prec    rec     f1\n"
            "0.7500  0.6667  1.0000  0.8000\n"
            "counts  tp=2 fp=1 tn=1 fn=0 invalid=0\n"
        )

    def test_format_table_degenerate_line(self):
        result = EvalResult.from_counts(tp=0, fp=0, tn=2, fn=0)
        assert "degenerate" in format_table(result)

    def test_format_sweep_table(self):
        text = format_sweep_table([SweepPoint(2, 0.5), SweepPoint(16, 0.975)])
        assert text == "i       acc\n2       0.5000\n16      0.9750\n"

    def test_write_report(self, tmp_path):
        result = EvalResult.from_counts(tp=1, fp=0, tn=1, fn=0)
        path = tmp_path / "report.jsonl"
        write_report([result_payload(result, strategy="iava")], path)
        lines = path.read_text().splitlines()
        assert lines[0] == '{"version":1}'
        assert '"strategy":"iava"' in lines[1]
        assert '"accuracy":1.0' in lines[1]
