#!/usr/bin/env python3
"""Regenerate the committed openapi.json from the live FastAPI app.

Run with --check to verify the committed document is current without
rewriting it (used by the test suite and CI).
"""

import json
import sys
import tempfile
from pathlib import Path

from radtriage.service import ServiceConfig, create_app


def generate() -> dict:
    with tempfile.TemporaryDirectory() as tmp:
        config = ServiceConfig(
            db_path=Path(tmp) / "schema.db",
            cache_dir=Path(tmp) / "overlays",
            scorer=None,
        )
        app = create_app(config)
        schema = app.openapi()
        app.state.store.close()
    return schema


def render() -> str:
    return json.dumps(generate(), indent=2, sort_keys=True) + "\n"


def main() -> int:
    target = Path(__file__).resolve().parent.parent / "openapi.json"
    text = render()
    if "--check" in sys.argv[1:]:
        if not target.is_file() or target.read_text() != text:
            print(f"{target} is stale; run scripts/export_openapi.py", file=sys.stderr)
            return 1
        print(f"{target} is up to date")
        return 0
    target.write_text(text)
    print(f"wrote {target}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
