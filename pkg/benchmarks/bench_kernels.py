"""Time the compiled frame kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --size 32 --repeat 2000
"""

import argparse
import timeit

import numpy as np

from morlcam._kernels import _pykernels

try:
    from morlcam._kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def bench(fn, repeat: int) -> float:
    """Best-of-5 mean seconds per call."""
    return min(timeit.repeat(fn, number=repeat, repeat=5)) / repeat


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=32, help="frame side in pixels")
    ap.add_argument("--repeat", type=int, default=2000, help="calls per timing run")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    latent = rng.uniform(0.0, 1.0, (args.size, args.size, 3))
    settings = (70, 40, 60, 80)
    backends = {"numpy": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled kernels not available; timing the numpy fallback only")

    results = {}
    for name, mod in backends.items():
        frame = mod.capture(latent, *settings)
        results[name] = {
            "capture": bench(lambda: mod.capture(latent, *settings), args.repeat),
            "measure": bench(lambda: mod.measure(frame), args.repeat),
            "step": bench(lambda: mod.measure(mod.capture(latent, *settings)), args.repeat),
        }

    print(f"{args.size}x{args.size} frame, {args.repeat} calls x 5 runs (best)")
    print(f"{'kernel':<8} " + " ".join(f"{n:>12}" for n in results) + ("     speedup" if len(results) > 1 else ""))
    for kernel in ("capture", "measure", "step"):
        cells = " ".join(f"{results[n][kernel] * 1e6:>10.1f}us" for n in results)
        extra = ""
        if len(results) > 1:
            extra = f" {results['numpy'][kernel] / results['cython'][kernel]:>10.1f}x"
        print(f"{kernel:<8} {cells}{extra}")
    if _ckernels is not None:
        a = _pykernels.measure(_pykernels.capture(latent, *settings))
        b = _ckernels.measure(_ckernels.capture(latent, *settings))
        print(f"max |measurement difference| = {np.max(np.abs(np.subtract(a, b))):.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
