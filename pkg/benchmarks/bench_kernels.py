"""Time the compiled kernels against the pure-Python fallback.

Run ``python benchmarks/bench_kernels.py`` after an install that built the
extension. Both implementations are called on identical seeded inputs and
their results are checked to agree before timings are reported.
"""

import argparse
import timeit

import numpy as np

from prepressure import _kernels_py as pure
from prepressure.kernels import compiled


def lse_inputs(rng, states, steps):
    masks = rng.random((steps, states, states)) < 0.6
    adds = rng.normal(size=(steps, states))
    return rng.normal(size=states), masks, adds


def mwis_inputs(rng, vertices, density):
    adj = [0] * vertices
    for i in range(vertices):
        for j in range(i + 1, vertices):
            if rng.random() < density:
                adj[i] |= 1 << j
                adj[j] |= 1 << i
    return rng.random(vertices).tolist(), adj


def bench(label, fn_pure, fn_compiled, args, repeat):
    ref = fn_pure(*args)
    got = fn_compiled(*args)
    if isinstance(ref, np.ndarray):
        assert np.allclose(ref, got, rtol=1e-13, atol=1e-13, equal_nan=True), label
    else:
        assert abs(ref[0] - got[0]) <= 1e-12 and ref[1] == got[1], label
    t_pure = min(timeit.repeat(lambda: fn_pure(*args), number=1, repeat=repeat))
    t_comp = min(timeit.repeat(lambda: fn_compiled(*args), number=1, repeat=repeat))
    print(f"{label:<32} pure {t_pure * 1e3:9.3f} ms   compiled {t_comp * 1e3:9.3f} ms   "
          f"speed-up {t_pure / t_comp:7.1f}x")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if compiled is None:
        raise SystemExit("compiled extension not available; reinstall with Cython present")
    rng = np.random.default_rng(args.seed)
    for states, steps in [(4, 64), (16, 256), (64, 512)]:
        bench(f"lse_chain states={states} steps={steps}", pure.lse_chain, compiled.lse_chain,
              lse_inputs(rng, states, steps), args.repeat)
    for vertices, density in [(16, 0.3), (24, 0.2), (24, 0.5)]:
        bench(f"mwis_bitmask n={vertices} p={density}", pure.mwis_bitmask, compiled.mwis_bitmask,
              mwis_inputs(rng, vertices, density), args.repeat)


if __name__ == "__main__":
    main()
