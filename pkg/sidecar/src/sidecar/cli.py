"""Command line entry point: load models, bind the port, serve forever."""

import argparse
import json
import sys

from .app import SidecarApp, make_server
from .models import ModelLoadError, load_models


def build_app(config: dict, deterministic: bool = True,
              batch_size: int = 4) -> SidecarApp:
    """Model loading separated from serving so failures are testable."""
    return SidecarApp(load_models(config), deterministic=deterministic,
                      batch_size=batch_size)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vil-sidecar",
        description="model inference service speaking the vil wire protocol",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8040)
    parser.add_argument("--config", help="JSON model-selection file")
    parser.add_argument("--batch-size", type=int, default=4,
                        help="max requests running in the models at once")
    parser.add_argument("--nondeterministic", action="store_true",
                        help="draw fresh seeds when /generate requests omit one")
    args = parser.parse_args(argv)

    config = {}
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                config = json.load(f)
        except (OSError, ValueError) as exc:
            print(f"error: cannot read config {args.config}: {exc}",
                  file=sys.stderr)
            return 3

    try:
        app = build_app(config, deterministic=not args.nondeterministic,
                        batch_size=args.batch_size)
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    server = make_server(app, args.host, args.port)
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port} "
          f"(models {json.dumps(app.models.identities(), sort_keys=True)})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
