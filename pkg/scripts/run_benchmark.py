"""Run the seeded reference benchmark and write a manifest, or replay one.

    python3 scripts/run_benchmark.py --out results/bench
    python3 scripts/run_benchmark.py --parts grappa,apirnet --out results/quick
    python3 scripts/run_benchmark.py --replay results/bench/manifest.json
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from apirnet.benchmark import BenchmarkConfig, comparable, manifest, replay, run_benchmark

log = logging.getLogger("benchmark")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path("results/bench"), help="output directory (default results/bench)")
    ap.add_argument("--parts", default="grappa,apirnet,noise", help="comma list (default grappa,apirnet,noise)")
    ap.add_argument("--replicas", type=int, help="override replica count")
    ap.add_argument("--replay", type=Path, help="manifest to rerun and compare")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    if args.replay:
        recorded = json.loads(args.replay.read_text())
        fresh, identical = replay(recorded, log=log.info)
        print(json.dumps({"identical": identical, "timings": fresh["timings"]}, indent=2))
        return 0 if identical else 1

    cfg = BenchmarkConfig()
    if args.replicas is not None:
        cfg = BenchmarkConfig.from_dict({**cfg.to_dict(), "replicas": args.replicas})
    results = run_benchmark(cfg, log=log.info, parts=tuple(args.parts.split(",")))
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "manifest.json").write_text(json.dumps(manifest(cfg, results), indent=2))
    summary = {k: {kk: vv for kk, vv in v.items() if kk != "digests"} for k, v in comparable(results).items()}
    print(json.dumps({**summary, "timings": results["timings"]}, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
