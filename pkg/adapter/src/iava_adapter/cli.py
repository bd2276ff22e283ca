"""Command-line entry point for the adapter.

``export`` writes a trace file the engine can replay; ``serve`` hosts
the model behind the wire protocol.  Exit codes: 0 success, 1 runtime
failure (bind or write errors), 2 bad flags or configuration.  Set
IAVA_ADAPTER_LOG to a logging level name for diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from iava_adapter.export import export_traces
from iava_adapter.model import MODEL_ID, HookConfig, TinyVLM, make_dataset
from iava_adapter.wire import AdapterServer, parse_address


def _hook_from_args(args) -> HookConfig:
    layer: int | str = args.layer
    if layer != "mean-all":
        try:
            layer = int(layer)
        except ValueError:
            raise ValueError(
                f"--layer must be an integer or 'mean-all', not {layer!r}"
            ) from None
    return HookConfig(layer=layer, heads=args.heads, mask_policy=args.mask_policy)


def _add_hook_flags(parser):
    parser.add_argument(
        "--layer", default="-1", help="attention layer index or 'mean-all'"
    )
    parser.add_argument("--heads", choices=("mean", "max"), default="mean")
    parser.add_argument(
        "--mask-policy",
        choices=("zero-fill", "mask-token", "drop"),
        default="zero-fill",
    )


def cmd_export(args) -> int:
    model = TinyVLM()
    examples = make_dataset(args.n, args.seed)
    summary = export_traces(
        model, _hook_from_args(args), examples, args.out, args.i, args.lam
    )
    print(f"wrote {summary.written} records to {args.out} (skipped {summary.skipped})")
    return 0


def cmd_serve(args) -> int:
    host, port = parse_address(args.addr)
    model = TinyVLM()
    examples = make_dataset(args.n, args.seed)
    server = AdapterServer(model, _hook_from_args(args), examples, host=host, port=port)
    print(f"serving {MODEL_ID} on {server.address}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iava-adapter",
        description="Host a small attention model for the iava engine.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="write a trace file the engine can replay")
    p.add_argument("--out", required=True, help="output trace path (.jsonl)")
    p.add_argument("--n", type=int, default=25, help="number of examples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--i", type=int, default=None, help="rank cutoff (default per token count)")
    p.add_argument(
        "--lambda", dest="lam", type=float, default=None,
        help="std-dev multiplier (default per token count)",
    )
    _add_hook_flags(p)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="serve the model over the wire protocol")
    p.add_argument("--addr", default="127.0.0.1:8741", help="host:port to bind")
    p.add_argument("--n", type=int, default=100, help="dataset size to serve")
    p.add_argument("--seed", type=int, default=0)
    _add_hook_flags(p)
    p.set_defaults(func=cmd_serve)

    return parser


def _setup_logging():
    level_name = os.environ.get("IAVA_ADAPTER_LOG", "").strip()
    if not level_name:
        return
    level = getattr(logging, level_name.upper(), logging.INFO)
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 0


if __name__ == "__main__":
    sys.exit(main())
