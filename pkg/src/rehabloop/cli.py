"""Hub entry point: `rehabloop serve` starts listeners, loops, and the API."""
from __future__ import annotations

import argparse
import asyncio
import logging
import sys

import uvicorn

from .config import HubConfig
from .hub import Hub


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rehabloop", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the middleware hub")
    serve.add_argument("--config", help="JSON configuration file")
    serve.add_argument("--host", default=None)
    serve.add_argument("--http-port", type=int, default=None)
    serve.add_argument("--sessions-root", default=None)
    serve.add_argument("--session-id", default=None)
    serve.add_argument("--catalog", default=None, help="exercise catalog JSON")
    serve.add_argument("--rules", default=None, help="rule config JSON (hot-reloaded)")
    serve.add_argument("--plan", default=None, help="therapy plan JSON")
    serve.add_argument("--static", default=None, help="dashboard static files directory")
    serve.add_argument("-v", "--verbose", action="store_true")
    return parser


async def _serve(args) -> None:
    config = HubConfig.load(args.config)
    if args.host:
        config.host = args.host
    if args.http_port is not None:
        config.http_port = args.http_port
    if args.sessions_root:
        config.sessions_root = args.sessions_root
    if args.rules:
        config.rules_path = args.rules
    if args.plan:
        config.plan_path = args.plan
    if args.catalog:
        config.catalog_path = args.catalog

    hub = Hub(config, session_id=args.session_id, static_dir=args.static)
    await hub.start()
    ports = hub.bound_ports()
    logging.info(
        "listening: ecg=%s ppg=%s game=%s affect/udp=%s http=%s",
        ports["ecg"], ports["ppg"], ports["game"], ports["affect"], config.http_port,
    )

    server = uvicorn.Server(
        uvicorn.Config(hub.app, host=config.host, port=config.http_port, log_level="warning")
    )
    try:
        await server.serve()
    finally:
        await hub.stop()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        asyncio.run(_serve(args))
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
