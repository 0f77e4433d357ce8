from __future__ import annotations

import sys
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parents[1]
SRC_ROOT = REPO_ROOT / "src"
if str(SRC_ROOT) not in sys.path:
    sys.path.insert(0, str(SRC_ROOT))

from biosignal_transfer.cli import main as cli_main
from biosignal_transfer.config.paths import DATA_DIR, RUNS_DIR, ensure_data_dirs


def _cmd_paths() -> int:
    ensure_data_dirs()
    print(f"DATA_DIR={DATA_DIR}")
    print(f"RUNS_DIR={RUNS_DIR}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    if args[:1] == ["paths"]:
        return _cmd_paths()
    return cli_main(args)


if __name__ == "__main__":
    raise SystemExit(main())
