"""Launcher: `claimgate-sidecar [--host H] [--port P] [--max-inflight N]`."""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(prog="claimgate-sidecar")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8100)
    parser.add_argument("--max-inflight", type=int, default=8,
                        help="concurrent inference requests before 429")
    args = parser.parse_args(argv)
    uvicorn.run(create_app(max_inflight=args.max_inflight),
                host=args.host, port=args.port, log_level="info")


if __name__ == "__main__":
    main()
