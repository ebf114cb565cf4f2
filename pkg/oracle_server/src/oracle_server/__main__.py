"""Command-line entry: oracle-server [--host H] [--port P] ..."""

from __future__ import annotations

import argparse
import sys

import uvicorn

from .app import build_app
from .config import BadConfig, ServerConfig


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="oracle-server",
        description="HTTP detection/classification oracle (wire protocol v1)")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8008)
    ap.add_argument("--detector-model", default="toy")
    ap.add_argument("--classifier-model", default="toy")
    ap.add_argument("--device", default="cpu")
    ap.add_argument("--score-threshold", type=float, default=0.3)
    args = ap.parse_args(argv)
    try:
        cfg = ServerConfig(host=args.host, port=args.port,
                           detector_model_id=args.detector_model,
                           classifier_model_id=args.classifier_model,
                           device=args.device,
                           score_threshold=args.score_threshold)
        app = build_app(cfg)
    except BadConfig as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
