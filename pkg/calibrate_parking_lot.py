"""
Monte Carlo calibration of the parking-lot test.

Parks cars with coordinates from numpy's PCG64 generator, using the exact
geometry of diehard_tests.parking_lot, and stores the mean and standard
deviation of the number parked.

    python calibrate_parking_lot.py --trials 1000 --seed 2024
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

import config
from diehard_tests import PARKING_ATTEMPTS, PARKING_SIDE, PARKING_WORD_BITS, park_cars, parking_coordinates

logger = logging.getLogger(__name__)


def calibrate(trials: int, seed: int, attempts: int = PARKING_ATTEMPTS) -> dict:
    rng = np.random.default_rng(seed)
    parked = np.empty(trials, dtype=np.float64)
    for t in range(trials):
        words = rng.integers(0, 2 ** PARKING_WORD_BITS, size=2 * attempts, dtype=np.uint64)
        xs, ys = parking_coordinates(words)
        parked[t] = park_cars(xs, ys)
        if (t + 1) % 100 == 0:
            logger.info(f"{t + 1}/{trials} trials, running mean {parked[: t + 1].mean():.2f}")
    return {
        "attempts": attempts,
        "mean": round(float(parked.mean()), 3),
        "seed": seed,
        "side": PARKING_SIDE,
        "source": "calibrate_parking_lot.py (numpy PCG64)",
        "std": round(float(parked.std(ddof=1)), 3),
        "trials": trials,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Calibrate the parking-lot test by Monte Carlo")
    parser.add_argument("--trials", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--out", type=Path, default=config.PARKING_CALIBRATION)
    args = parser.parse_args(argv)

    logging.basicConfig(level=config.LOG_LEVEL, format='%(asctime)s - %(levelname)s - %(message)s')
    if args.trials < 2:
        logger.error("Need at least 2 trials")
        return 2

    result = calibrate(args.trials, args.seed)
    try:
        args.out.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        logger.error(f"Failed to write {args.out}: {str(e)}")
        return 3
    logger.info(f"Parking lot: mean {result['mean']}, std {result['std']} over {args.trials} trials")
    return 0


if __name__ == "__main__":
    sys.exit(main())
