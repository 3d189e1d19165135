"""Command-line client for the stage service.

Every subcommand is a thin HTTP call: against an in-process service by
default, or a remote one when --server is given. Results print to stdout
(JSON summaries, scan visit lines, the flops table); progress and errors
go to stderr. Exit codes: 0 success, 1 validation/usage, 2 data, 3
numeric fault.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from typing import Optional, Tuple

import httpx

from .errors import ValidationError

log = logging.getLogger("histoseq")


class _Parser(argparse.ArgumentParser):
    # usage mistakes are validation errors: exit 1, not argparse's default 2
    def error(self, message):
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="histoseq", description=__doc__)
    parser.add_argument("--server", default=None,
                        help="base URL of a running service; default runs in-process")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_workspace(p):
        p.add_argument("--workspace", required=True, help="artifact directory")
        p.add_argument("--config", default=None, help="config file path")

    p = sub.add_parser("extract-regions", help="annotation XML + slide raster -> region dirs")
    add_workspace(p)
    p.add_argument("--xml", required=True)
    p.add_argument("--image", required=True)

    p = sub.add_parser("scan", help="print the visit order for a patch grid")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--strategy", default="scan2")

    p = sub.add_parser("tile", help="cut normalized regions into ordered patches")
    add_workspace(p)

    p = sub.add_parser("extract-features", help="patches -> per-region feature sequences")
    add_workspace(p)

    p = sub.add_parser("train", help="fit the sequence classifier on the train split")
    add_workspace(p)

    p = sub.add_parser("evaluate", help="score the held-out test split")
    add_workspace(p)

    p = sub.add_parser("cross-validate", help="k-fold cross-validation over the dataset")
    add_workspace(p)

    p = sub.add_parser("flops", help="parameter and flop counts for a network shape")
    p.add_argument("--input-size", type=int, required=True)
    p.add_argument("--hidden", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)

    p = sub.add_parser("run-all", help="run every stage in order with one config")
    add_workspace(p)
    p.add_argument("--xml", required=True)
    p.add_argument("--image", required=True)

    return parser


def _payload(args: argparse.Namespace) -> Tuple[str, dict]:
    command = args.command
    if command == "flops":
        return "/flops", {
            "input_size": args.input_size,
            "hidden_units": args.hidden,
            "class_count": args.classes,
        }
    if command == "scan":
        return "/scan", {"rows": args.rows, "cols": args.cols, "strategy": args.strategy}
    body = {"workspace": args.workspace, "config_path": args.config}
    if command in ("extract-regions", "run-all"):
        body.update({"xml": args.xml, "image": args.image})
    return f"/{command}", body


async def _post(server: Optional[str], path: str, payload: dict) -> Tuple[int, dict]:
    if server is not None:
        async with httpx.AsyncClient(base_url=server, timeout=None) as client:
            response = await client.post(path, json=payload)
            return response.status_code, response.json()
    from .service.app import create_app

    transport = httpx.ASGITransport(app=create_app())
    async with httpx.AsyncClient(
        transport=transport, base_url="http://histoseq.internal", timeout=None
    ) as client:
        response = await client.post(path, json=payload)
        return response.status_code, response.json()


def _render(command: str, body: dict) -> None:
    if command == "scan":
        for r, c in body["visits"]:
            print(f"{r},{c}")
        return
    if command == "flops":
        print(body["text"])
        print(json.dumps(body["report"], indent=2, sort_keys=True))
        return
    print(json.dumps(body, indent=2, sort_keys=True))


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    logging.getLogger("httpx").setLevel(logging.WARNING)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        path, payload = _payload(args)
        log.info("histoseq %s", args.command)
        status, body = asyncio.run(_post(args.server, path, payload))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except httpx.HTTPError as exc:
        print(f"error: request failed: {exc}", file=sys.stderr)
        return 1
    if status >= 400:
        error = body.get("error")
        if error is None:
            # request body rejected before reaching the toolkit: usage problem
            print(f"error: {json.dumps(body)}", file=sys.stderr)
            return 1
        print(f"error ({error['category']}): {error['message']}", file=sys.stderr)
        return int(error["exit_code"])
    _render(args.command, body)
    return 0


if __name__ == "__main__":
    sys.exit(main())
