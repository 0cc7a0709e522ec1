"""Image MSE after each APIR-Net training level on the benchmark data.

``--epoch-scale 0.1`` gives a quick look; the default reproduces the
benchmark schedule.
"""
import argparse
import logging

from apirnet.benchmark import BenchmarkConfig, make_data
from apirnet.kspace import mse, reconstruct_image
from apirnet.model import ArchitectureSpec, complete_kspace, desk_schedule, hierarchical_train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epoch-scale", type=float, default=1.0, help="multiply every level's epochs (default 1)")
    ap.add_argument("--reset-optimizer", action="store_true", help="fresh Adam state at each level")
    ap.add_argument("--seed", type=int, default=0, help="network init seed (default 0)")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = BenchmarkConfig()
    data = make_data(cfg)
    schedule = desk_schedule(cfg.shape, cfg.epochs).scaled_epochs(args.epoch_scale)
    run = hierarchical_train(data.noisy, data.masks, ArchitectureSpec(cfg.n_coils, cfg.widths), schedule,
                             args.seed, args.reset_optimizer, logging.getLogger("train").info)
    print(f"zero-filled {mse(reconstruct_image(data.noisy), data.reference, data.support):.3e}")
    for level, params, losses in zip(schedule.levels, run.checkpoints, run.losses):
        image = reconstruct_image(complete_kspace(params, data.noisy, data.masks, run.normalization))
        print(f"region {level.region} lr {level.lr:g} epochs {level.epochs}: "
              f"loss {losses[-1]:.3e} mse {mse(image, data.reference, data.support):.3e}")


if __name__ == "__main__":
    main()
