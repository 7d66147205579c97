"""Wall time of linear assignment vs graduated assignment as the graph grows."""
import argparse
import time

import numpy as np

from gmlearn import GraduatedAssignmentConfig, WeightVector, predict
from gmlearn import harness as H


def median_ms(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(1e3 * (time.perf_counter() - t0))
    return float(np.median(times))


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sizes", default="10,20,30,50")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    ga = GraduatedAssignmentConfig()
    print(f"{'n':>4} {'linear ms':>10} {'graduated ms':>13} {'ratio':>8}")
    for n in (int(s) for s in args.sizes.split(",")):
        scenes = H.synth_sequence(2, n, 0.03, 3.0, args.seed)
        inst = H.pair_instance(H.make_pairs(scenes, 1).entries[0])
        dim = inst.g.attr_dim
        lin = median_ms(lambda: predict(WeightVector(np.ones(dim), 0.0), inst.g, inst.g_prime, "linear"),
                        args.repeats)
        quad = median_ms(lambda: predict(WeightVector(np.ones(dim), 1.0), inst.g, inst.g_prime, ga),
                         args.repeats)
        print(f"{n:>4} {lin:10.3f} {quad:13.1f} {quad / lin:8.0f}")


if __name__ == "__main__":
    main()
