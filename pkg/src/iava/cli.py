"""Command-line entry point.

Exit codes are a stable contract: 0 success, 2 parse error, 3 invariant
violation, 4 usage error, 5 connection failure.  Set IAVA_LOG=debug (or
any logging level name) for diagnostics on stderr; logging is off by
default.  Output is deterministic: identical flags produce byte-identical
reports.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from iava import evaluation, protocol
from iava.decoder import DecodeConfig, decode_sequence
from iava.errors import EXIT_OK, EXIT_USAGE, IavaError, ParseError, UsageError
from iava.negative_sample import NegativeStrategy
from iava.selection import SelectionParams, select_irrelevant
from iava.toy_lvlm import EOS, ToyConfig, ToyServer

logger = logging.getLogger(__name__)

# Paper-tied defaults: rank cutoff and lambda per image-token count.
DEFAULTS_BY_TOKENS = {32: (16, -0.1), 576: (292, 0.0)}

_JSON_SEPARATORS = (",", ":")


class _Parser(argparse.ArgumentParser):
    """argparse that reports flag problems as UsageError (exit 4)."""

    def error(self, message):
        raise UsageError(message)


def resolve_params(i: int | None, lam: float | None, n_tokens: int) -> SelectionParams:
    """Fill --i/--lambda from the token-count defaults where omitted."""
    default = DEFAULTS_BY_TOKENS.get(n_tokens)
    if i is None:
        if default is None:
            raise UsageError(
                f"no default --i for {n_tokens} tokens; pass --i explicitly"
            )
        i = default[0]
    if lam is None:
        if default is None:
            raise UsageError(
                f"no default --lambda for {n_tokens} tokens; pass --lambda explicitly"
            )
        lam = default[1]
    if not 0 <= i < n_tokens:
        raise UsageError(f"--i {i} beyond token count {n_tokens}")
    return SelectionParams(i=int(i), lam=float(lam))


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _nonnegative_float(text: str) -> float:
    value = float(text)
    if value < 0.0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _open_trace(path):
    try:
        yield from protocol.read_traces(path)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        raise UsageError(f"cannot read trace {path}: {exc}") from exc


def cmd_select(args) -> int:
    lines = []
    for record in _open_trace(args.trace):
        params = resolve_params(args.i, args.lam, record.n_tokens)
        selection = select_irrelevant(record.att1, record.att2, params)
        lines.append(
            json.dumps(
                {
                    "id": record.id,
                    "i": params.i,
                    "lambda": params.lam,
                    "total_tokens": selection.total_tokens,
                    "indices": list(selection.indices),
                },
                separators=_JSON_SEPARATORS,
            )
        )
    body = "".join(line + "\n" for line in lines)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(
                json.dumps({"version": evaluation.REPORT_VERSION}, separators=_JSON_SEPARATORS)
                + "\n"
            )
            fh.write(body)
        print(f"wrote {len(lines)} selections to {args.report}")
    else:
        sys.stdout.write(body)
    return EXIT_OK


def _strategy_from_flag(name: str, noise_sigma: float) -> NegativeStrategy | None:
    if name == "iava":
        return NegativeStrategy(kind="iava-mask")
    if name == "noise":
        return NegativeStrategy(kind="gaussian-noise", sigma=noise_sigma)
    if name == "text":
        return NegativeStrategy(kind="text-only")
    return None


def _toy_decode_config(alpha: float, seed: int) -> DecodeConfig:
    return DecodeConfig(alpha=alpha, seed=seed, max_steps=4, stop_tokens=frozenset({EOS}))


def cmd_simulate(args) -> int:
    toy_config = ToyConfig(seed=args.seed)
    params = resolve_params(args.i, args.lam, toy_config.n_tokens)
    strategy = _strategy_from_flag(args.strategy, args.noise_sigma)
    result = evaluation.run_benchmark(
        evaluation.toy_session_factory(toy_config),
        strategy,
        params,
        _toy_decode_config(args.alpha, args.seed),
        args.n,
    )
    sys.stdout.write(evaluation.format_table(result))
    if args.report:
        payload = evaluation.result_payload(
            result,
            strategy=args.strategy,
            n=args.n,
            seed=args.seed,
            alpha=args.alpha,
            i=params.i,
            lam=params.lam,
        )
        evaluation.write_report([payload], args.report)
    return EXIT_OK


def _parse_i_values(text: str, n_tokens: int) -> list[int]:
    items = [piece.strip() for piece in text.split(",") if piece.strip()]
    if not items:
        raise UsageError("--i-values must name at least one cutoff")
    values = []
    for piece in items:
        try:
            value = int(piece)
        except ValueError:
            raise UsageError(f"--i-values entry {piece!r} is not an integer") from None
        if not 0 <= value < n_tokens:
            raise UsageError(f"--i-values entry {value} beyond token count {n_tokens}")
        values.append(value)
    return values


def cmd_sweep(args) -> int:
    toy_config = ToyConfig(seed=args.seed)
    i_values = _parse_i_values(args.i_values, toy_config.n_tokens)
    lam = args.lam
    if lam is None:
        lam = DEFAULTS_BY_TOKENS[toy_config.n_tokens][1]
    points = evaluation.sweep_i(
        evaluation.toy_session_factory(toy_config),
        i_values,
        lam=lam,
        config=_toy_decode_config(args.alpha, args.seed),
        n_examples=args.n,
    )
    sys.stdout.write(evaluation.format_sweep_table(points))
    if args.report:
        evaluation.write_report([evaluation.sweep_payload(p) for p in points], args.report)
    return EXIT_OK


def _read_labels(path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            raw_lines = fh.read().splitlines()
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    labels = []
    for line_number, raw in enumerate(raw_lines, start=1):
        text = raw.strip().lower()
        if text not in ("yes", "no"):
            raise ParseError(f"expected yes or no, got {raw!r}", line_number)
        labels.append(text)
    return labels


def cmd_eval(args) -> int:
    predictions = _read_labels(args.pred)
    golds = _read_labels(args.gold)
    result = evaluation.pope_metrics(predictions, golds)
    sys.stdout.write(evaluation.format_table(result))
    return EXIT_OK


def cmd_serve_toy(args) -> int:
    host, port = protocol.parse_address(args.addr)
    server = ToyServer(ToyConfig(seed=args.seed), host=host, port=port)
    print(f"serving toy model on {server.address}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def cmd_decode(args) -> int:
    with protocol.RemoteSession(args.endpoint, timeout=args.timeout) as session:
        params = resolve_params(args.i, args.lam, session.n_tokens)
        att1 = session.attention(protocol.GENERAL_INSTRUCTION)
        att2 = session.attention(args.query)
        selection = select_irrelevant(att1, att2, params)
        config = DecodeConfig(
            alpha=args.alpha,
            mode=args.mode,
            temperature=args.temperature,
            max_steps=args.max_steps,
            stop_tokens=frozenset(args.stop_token or ()),
            seed=args.seed,
        )
        tokens = decode_sequence(session, args.query, selection, config)
    print(" ".join(str(token) for token in tokens))
    return EXIT_OK


def _add_selection_flags(parser):
    parser.add_argument("--i", type=int, default=None, help="rank cutoff (default per token count)")
    parser.add_argument(
        "--lambda", dest="lam", type=float, default=None,
        help="std-dev multiplier (default per token count)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="iava",
        description="Instruction-aligned visual-token selection and contrastive decoding.",
        epilog="Exit codes: 0 ok, 2 parse, 3 invariant, 4 usage, 5 connection. "
        "Set IAVA_LOG=debug for diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="apply the selection rule to a trace file")
    p.add_argument("--trace", required=True, help="input trace (.jsonl)")
    _add_selection_flags(p)
    p.add_argument("--report", default=None, help="write selections to this report file")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="run the toy benchmark")
    p.add_argument("--n", type=_positive_int, default=1000, help="number of scenes")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--alpha", type=_nonnegative_float, default=1.0)
    _add_selection_flags(p)
    p.add_argument(
        "--strategy", choices=("iava", "noise", "text", "none"), default="iava"
    )
    p.add_argument("--noise-sigma", type=float, default=1.0, help="sigma for --strategy noise")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="benchmark accuracy across rank cutoffs")
    p.add_argument("--i-values", required=True, help="comma-separated cutoffs, e.g. 2,8,16,24,31")
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--alpha", type=_nonnegative_float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="score prediction/gold label files")
    p.add_argument("--pred", required=True, help="file with one yes/no per line")
    p.add_argument("--gold", required=True, help="file with one yes/no per line")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve-toy", help="serve the toy model over the wire protocol")
    p.add_argument("--addr", default="127.0.0.1:8731", help="host:port to bind")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_serve_toy)

    p = sub.add_parser("decode", help="decode one query against a served model")
    p.add_argument("--endpoint", required=True, help="host:port of the model server")
    p.add_argument("--query", required=True)
    p.add_argument("--alpha", type=_nonnegative_float, default=1.0)
    _add_selection_flags(p)
    p.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--max-steps", type=_positive_int, default=8)
    p.add_argument("--stop-token", type=int, action="append", default=None)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--timeout", type=float, default=protocol.DEFAULT_TIMEOUT)
    p.set_defaults(func=cmd_decode)

    return parser


def _setup_logging():
    level_name = os.environ.get("IAVA_LOG", "").strip()
    if not level_name:
        return
    level = getattr(logging, level_name.upper(), logging.INFO)
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IavaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
