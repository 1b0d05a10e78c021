"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N time for each backend and the
speedup.  Outputs are checked for agreement before timing.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from smartcube import _pykernels

try:
    from smartcube import _ckernels
except ImportError:
    _ckernels = None


def cases(rng: np.random.Generator):
    x = rng.normal(size=(10, 16, 64, 64))
    w = rng.normal(size=(16, 16, 3, 3))
    b = rng.normal(size=16)
    dout = rng.normal(size=(10, 16, 64, 64))
    src = rng.normal(size=(2, 512, 512))
    valid = rng.random(src.shape) > 0.05
    rows = np.clip(np.linspace(-0.5, 511.5, 700), 0, 511)
    cols = np.clip(np.linspace(-0.5, 511.5, 700), 0, 511)
    mask = rng.random((256, 256)) < 0.55
    return {
        "conv2d_forward 10x16x64x64": ("conv2d_forward", (x, w, b, 1, 1)),
        "conv2d_backward 10x16x64x64": ("conv2d_backward", (x, w, dout, 1, 1)),
        "bilinear_sample 2x512x512 -> 700x700": ("bilinear_sample", (src, valid, rows, cols)),
        "label_components 256x256": ("label_components", (mask,)),
    }


def agree(a, b) -> bool:
    if isinstance(a, tuple):
        return all(agree(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return bool(np.allclose(a, b, rtol=1e-10, atol=1e-10))
    return a == b


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _ckernels is None:
        print("compiled kernels are not built; only the numpy fallback is available")
    for label, (name, call_args) in cases(np.random.default_rng(0)).items():
        py = getattr(_pykernels, name)
        t_py = min(timeit.repeat(lambda: py(*call_args), number=1, repeat=args.repeat))
        if _ckernels is None:
            print(f"{label:40s} python {t_py * 1e3:9.2f} ms")
            continue
        cy = getattr(_ckernels, name)
        ok = agree(py(*call_args), cy(*call_args))
        t_cy = min(timeit.repeat(lambda: cy(*call_args), number=1, repeat=args.repeat))
        print(f"{label:40s} python {t_py * 1e3:9.2f} ms  cython {t_cy * 1e3:9.2f} ms  speedup {t_py / t_cy:6.1f}x  agree={ok}")


if __name__ == "__main__":
    main()
