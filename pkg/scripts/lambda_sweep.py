"""GRAPPA on the benchmark data across ridge strengths.

Prints image MSE, kernel weight norm and (with --replicas) the mean noise
amplification over the object support for each lambda.
"""
import argparse

import numpy as np

from apirnet.benchmark import BenchmarkConfig, make_data
from apirnet.grappa import calibrate, grappa_reconstruct
from apirnet.kspace import mse
from apirnet.noise import Method, ReplicaConfig, run_replicas


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lambdas", default="0,1e-4,1e-3,1e-2,1e-1,1,10", help="comma list (default 0,1e-4,...,10)")
    ap.add_argument("--replicas", type=int, default=0, help="pseudo-replicas per lambda (default 0: skip)")
    args = ap.parse_args()

    cfg = BenchmarkConfig()
    data = make_data(cfg)
    print(f"{'lambda':>8} {'mse':>10} {'|w|':>9} {'amp':>7}")
    for lam in (float(v) for v in args.lambdas.split(",")):
        norm = calibrate(data.noisy, data.masks, cfg.geometry, lam).weight_norm()
        _, image = grappa_reconstruct(data.noisy, data.masks, cfg.geometry, lam)
        amp = np.nan
        if args.replicas >= 2:
            rc = ReplicaConfig(Method("grappa", lam=lam, geometry=cfg.geometry), cfg.sigma, args.replicas,
                               cfg.replica_base_seed)
            amp = run_replicas(data.full, data.masks, rc).spatial_mean(data.support)
        print(f"{lam:8g} {mse(image, data.reference, data.support):10.3e} {norm:9.4f} {amp:7.3f}")


if __name__ == "__main__":
    main()
