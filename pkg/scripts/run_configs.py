"""Run every config in configs/ through the CLI and tabulate exit codes.

Usage: python scripts/run_configs.py [out_dir] [--threads N]
"""

import argparse
import json
import time
from pathlib import Path

from kinetic_brw.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]
# exit code each shipped config is expected to produce
EXPECTED = {"validate_m_equals_two": 1}


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("out", nargs="?", default="runs")
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    bad = 0
    for cfg in sorted((ROOT / "configs").glob("*.json")):
        command = json.loads(cfg.read_text())["command"]["name"]
        argv = [command, "--config", str(cfg), "--out", str(Path(args.out) / cfg.stem)]
        if args.threads:
            argv += ["--threads", str(args.threads)]
        t0 = time.perf_counter()
        code = cli_main(argv)
        want = EXPECTED.get(cfg.stem, 0)
        bad += code != want
        print(f"{cfg.stem:28s} exit {code} (expected {want}) {time.perf_counter() - t0:6.1f} s", flush=True)
    return 1 if bad else 0


if __name__ == "__main__":
    raise SystemExit(main())
