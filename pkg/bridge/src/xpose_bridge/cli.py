"""Service entry point: xpose-bridge --checkpoint PATH --port N --device cpu"""

from __future__ import annotations

import argparse
import logging
import sys


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="xpose-bridge")
    parser.add_argument("--checkpoint", required=True, help="model checkpoint path")
    parser.add_argument("--port", type=int, default=8639)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-batch", type=int, default=8)
    parser.add_argument("--steps", type=int, default=50, help="default diffusion steps")
    args = parser.parse_args(argv)

    logging.basicConfig(stream=sys.stderr, level=logging.INFO)

    from .app import create_app
    from .config import BridgeConfig
    from .model import Zero123Backend

    config = BridgeConfig(
        checkpoint=args.checkpoint,
        device=args.device,
        port=args.port,
        max_batch=args.max_batch,
        default_steps=args.steps,
    )
    app = create_app(Zero123Backend(args.checkpoint, args.device), config)

    import uvicorn

    uvicorn.run(app, host="0.0.0.0", port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
