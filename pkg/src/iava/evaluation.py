"""POPE-style metrics, benchmark orchestration, and the rank-cutoff sweep.

The positive class for precision and recall is "yes" (object present).
Predictions that are not a clean yes/no count as incorrect: they land in
the confusion cell that marks them wrong (fn on gold-yes, fp on
gold-no) and are tallied separately in ``invalid``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from iava.decoder import DecodeConfig, decode_with_strategy
from iava.errors import EmptyInput, InvariantViolation, LengthMismatch, SessionFailure
from iava.negative_sample import NegativeStrategy
from iava.protocol import GENERAL_INSTRUCTION, RemoteSession
from iava.selection import SelectionParams, select_irrelevant
from iava.toy_lvlm import TOY_QUERY, VOCAB, ToyConfig, ToySession, generate_scene, scene_rng

REPORT_VERSION = 1
_JSON_SEPARATORS = (",", ":")


@dataclass(frozen=True)
class EvalResult:
    """Accuracy, precision, recall, F1, and the confusion counts."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    invalid: int = 0
    degenerate: tuple[str, ...] = ()

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int, invalid: int = 0) -> "EvalResult":
        total = tp + fp + tn + fn
        degenerate = []
        accuracy = (tp + tn) / total
        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            precision = 0.0
            degenerate.append("precision")
        if tp + fn > 0:
            recall = tp / (tp + fn)
        else:
            recall = 0.0
            degenerate.append("recall")
        if precision + recall > 0:
            f1 = 2.0 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
            degenerate.append("f1")
        return cls(
            accuracy=accuracy,
            precision=precision,
            recall=recall,
            f1=f1,
            tp=tp,
            fp=fp,
            tn=tn,
            fn=fn,
            invalid=invalid,
            degenerate=tuple(degenerate),
        )


@dataclass(frozen=True)
class SweepPoint:
    """Benchmark accuracy at one rank cutoff."""

    i: int
    score: float


def _tally(predictions, golds) -> EvalResult:
    tp = fp = tn = fn = invalid = 0
    for pred, gold in zip(predictions, golds):
        if gold not in ("yes", "no"):
            raise InvariantViolation(f"gold label must be yes or no, not {gold!r}")
        if pred not in ("yes", "no"):
            invalid += 1
            pred = "no" if gold == "yes" else "yes"
        if pred == "yes":
            if gold == "yes":
                tp += 1
            else:
                fp += 1
        else:
            if gold == "no":
                tn += 1
            else:
                fn += 1
    return EvalResult.from_counts(tp, fp, tn, fn, invalid)


def pope_metrics(predictions, golds) -> EvalResult:
    """Confusion-matrix metrics over yes/no labels."""
    predictions = list(predictions)
    golds = list(golds)
    if len(predictions) != len(golds):
        raise LengthMismatch(
            f"{len(predictions)} predictions vs {len(golds)} golds"
        )
    if not predictions:
        raise EmptyInput("no examples to score")
    for pred in predictions:
        if pred not in ("yes", "no"):
            raise InvariantViolation(f"prediction must be yes or no, not {pred!r}")
    return _tally(predictions, golds)


def toy_session_factory(config: ToyConfig):
    """Per-example in-process toy sessions: factory(k) -> (session, query, gold)."""

    def factory(example_index: int):
        session = ToySession.for_example(config, example_index)
        return session, TOY_QUERY, session.scene.gold

    return factory


def remote_toy_factory(address: str, config: ToyConfig, timeout: float | None = None):
    """Per-example wire sessions against a served toy.

    Gold labels come from regenerating scene k locally, so config and
    seed must match the server's; the k-th connection must land on the
    server's k-th scene (fresh server, single client).
    """

    def factory(example_index: int):
        scene = generate_scene(config, scene_rng(config.seed, example_index))
        if timeout is None:
            session = RemoteSession(address)
        else:
            session = RemoteSession(address, timeout=timeout)
        return session, TOY_QUERY, scene.gold

    return factory


def iter_benchmark(
    session_factory,
    strategy: NegativeStrategy | None,
    params: SelectionParams,
    config: DecodeConfig,
    n_examples: int,
    labels=VOCAB,
):
    """Yield (example_index, prediction, gold) over the benchmark."""
    needs_selection = strategy is not None and strategy.kind == "iava-mask"
    for example_index in range(n_examples):
        session, query, gold = session_factory(example_index)
        try:
            try:
                att1 = session.attention(GENERAL_INSTRUCTION)
                att2 = session.attention(query)
                selection = (
                    select_irrelevant(att1, att2, params) if needs_selection else None
                )
                tokens = decode_with_strategy(
                    session, query, strategy, config, selection=selection
                )
            except SessionFailure as exc:
                raise SessionFailure(f"example {example_index}: {exc}") from exc
        finally:
            session.close()
        prediction = labels[tokens[0]] if tokens and tokens[0] < len(labels) else "invalid"
        yield example_index, prediction, gold


def run_benchmark(
    session_factory,
    strategy: NegativeStrategy | None,
    params: SelectionParams,
    config: DecodeConfig,
    n_examples: int,
) -> EvalResult:
    """Decode every example, compare to gold, aggregate POPE-style."""
    if n_examples < 1:
        raise EmptyInput("n_examples must be >= 1")
    predictions = []
    golds = []
    for _, prediction, gold in iter_benchmark(
        session_factory, strategy, params, config, n_examples
    ):
        predictions.append(prediction)
        golds.append(gold)
    return _tally(predictions, golds)


def sweep_i(
    session_factory,
    i_values,
    lam: float,
    config: DecodeConfig,
    n_examples: int,
    strategy: NegativeStrategy | None = None,
) -> list[SweepPoint]:
    """One benchmark run per rank cutoff, all other settings fixed."""
    i_values = list(i_values)
    if not i_values:
        raise EmptyInput("i_values must be non-empty")
    if strategy is None:
        strategy = NegativeStrategy(kind="iava-mask")
    points = []
    for i in i_values:
        result = run_benchmark(
            session_factory, strategy, SelectionParams(i=int(i), lam=lam), config, n_examples
        )
        points.append(SweepPoint(i=int(i), score=result.accuracy))
    return points


def format_table(result: EvalResult) -> str:
    """Aligned-column metric table, newline-terminated, locale-free."""
    lines = [
        "acc     prec    rec     f1",
        f"{result.accuracy:.4f}  {result.precision:.4f}  {result.recall:.4f}  {result.f1:.4f}",
        f"counts  tp={result.tp} fp={result.fp} tn={result.tn} fn={result.fn}"
        f" invalid={result.invalid}",
    ]
    if result.degenerate:
        lines.append("degenerate  " + ",".join(result.degenerate))
    return "\n".join(lines) + "\n"


def format_sweep_table(points) -> str:
    lines = ["i       acc"]
    for point in points:
        lines.append(f"{point.i:<7d} {point.score:.4f}")
    return "\n".join(lines) + "\n"


def result_payload(result: EvalResult, **extra) -> dict:
    payload = {"type": "eval_result", **extra}
    payload.update(
        accuracy=result.accuracy,
        precision=result.precision,
        recall=result.recall,
        f1=result.f1,
        tp=result.tp,
        fp=result.fp,
        tn=result.tn,
        fn=result.fn,
        invalid=result.invalid,
        degenerate=list(result.degenerate),
    )
    return payload


def sweep_payload(point: SweepPoint) -> dict:
    return {"type": "sweep_point", "i": point.i, "accuracy": point.score}


def write_report(payloads, path):
    """Structured report: version header plus one JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"version": REPORT_VERSION}, separators=_JSON_SEPARATORS))
        fh.write("\n")
        for payload in payloads:
            fh.write(json.dumps(payload, separators=_JSON_SEPARATORS))
            fh.write("\n")
