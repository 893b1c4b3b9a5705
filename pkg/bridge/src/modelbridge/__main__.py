"""Run the bridge: `modelbridge --config service.yaml` or with defaults."""

from __future__ import annotations

import argparse
from pathlib import Path

import uvicorn
import yaml

from .registry import reference_registry, registry_from_config
from .service import create_app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="modelbridge")
    parser.add_argument("--config", default=None, help="service config (YAML)")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=None)
    args = parser.parse_args(argv)

    host, port = args.host, args.port or 8801
    if args.config:
        raw = yaml.safe_load(Path(args.config).read_text()) or {}
        registry = registry_from_config(raw.get("models", {}))
        host = raw.get("host", host)
        if args.port is None:
            port = int(raw.get("port", port))
    else:
        registry = reference_registry()

    app = create_app(registry)
    uvicorn.run(app, host=host, port=port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
