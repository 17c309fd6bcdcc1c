"""Compare the compiled and numpy circuit kernels on the classifier program.

    python3 benchmarks/bench_kernels.py [--sizes 100 1000 10000 100000] [--repeat 5]

Also times a full SPSA training run and one FGSM sweep with each backend,
since those are the call patterns experiments actually hit (many small
batches rather than one large one).
"""

import argparse
import time

import numpy as np

from qtrust import _kernels_py, kernels
from qtrust.vqc import _program


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[100, 1000, 10_000, 100_000])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if not kernels.compiled_available():
        print("compiled extension not built; only the numpy kernel is available")
    from qtrust import _kernels as compiled  # noqa: E402  (fails loudly if missing)

    rng = np.random.default_rng(0)
    prog = _program(rng.normal(size=4))
    print(f"{'n':>8}  {'cython (ms)':>12}  {'numpy (ms)':>12}  {'speedup':>8}  {'max |diff|':>10}")
    for n in args.sizes:
        X = rng.normal(size=(n, 2))
        f_c = compiled.expectation_z_batch(X, *prog, 0)
        f_p = _kernels_py.expectation_z_batch(X, *prog, 0)
        t_c = best_of(lambda: compiled.expectation_z_batch(X, *prog, 0), args.repeat)
        t_p = best_of(lambda: _kernels_py.expectation_z_batch(X, *prog, 0), args.repeat)
        print(f"{n:>8}  {1e3 * t_c:>12.3f}  {1e3 * t_p:>12.3f}  {t_p / t_c:>8.1f}  "
              f"{np.abs(f_c - f_p).max():>10.1e}")

    # end-to-end: swap the module-level kernel and time training
    from qtrust import vqc
    from qtrust.adv import fgsm_batch
    from qtrust.data import two_moons_split
    from qtrust.seeding import derive

    train, test = two_moons_split(rng=derive(0, "data"))
    cfg = vqc.TrainConfig(seed=0)
    print()
    for name, impl in (("cython", compiled.expectation_z_batch),
                       ("numpy", _kernels_py.expectation_z_batch)):
        saved = kernels.expectation_z_batch
        kernels.expectation_z_batch = impl
        try:
            t_train = best_of(lambda: vqc.train_fresh(train, cfg), max(1, args.repeat // 2))
            model = vqc.train_fresh(train, cfg).model
            t_fgsm = best_of(lambda: fgsm_batch(model, test.X, test.y, 0.2), args.repeat)
        finally:
            kernels.expectation_z_batch = saved
        print(f"{name:>6}: 50-iteration training {1e3 * t_train:8.1f} ms, FGSM on 600 samples "
              f"{1e3 * t_fgsm:6.2f} ms")


if __name__ == "__main__":
    main()
