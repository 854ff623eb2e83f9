"""Time the compiled kernels against the pure NumPy fallback.

Runs each hot kernel on identical inputs through both implementations
and reports per-call time plus the speedup ratio.  With ``--end-to-end``
it also re-executes itself under each PANELBOOT_BACKEND value and times
a full dynamic-logit fit, which is how the backend choice actually
reaches users.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat 200] [--end-to-end]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

SHAPES = ((100, 10), (250, 20), (1000, 50))


def _nm_args(n, m, rng):
    return (
        np.ascontiguousarray(rng.normal(size=(n, m))),
        np.ascontiguousarray(rng.normal(size=n)),
        1.3,
    )


def _dl_args(n, m, rng):
    return (
        np.ascontiguousarray(rng.integers(0, 2, size=(n, m)).astype(float)),
        np.ascontiguousarray(rng.integers(0, 2, size=(n, m)).astype(float)),
        np.ascontiguousarray(rng.normal(size=n)),
        0.7,
    )


def _sim_args(n, m, rng):
    return (
        np.ascontiguousarray(rng.integers(0, 2, size=n).astype(float)),
        np.ascontiguousarray(rng.random(size=(n, m))),
        np.ascontiguousarray(rng.normal(size=n)),
        0.7,
    )


def _time_call(fn, args, repeat) -> float:
    fn(*args)  # warm up
    return min(timeit.repeat(lambda: fn(*args), number=repeat, repeat=3)) / repeat


def bench_kernels(repeat: int) -> None:
    from panelboot import _kernels_py

    try:
        from panelboot import _kernels as compiled
    except ImportError:
        print("compiled extension unavailable; nothing to compare", file=sys.stderr)
        raise SystemExit(1)

    rng = np.random.default_rng(0)
    cases = [
        ("nm_blocks", _nm_args),
        ("dl_blocks", _dl_args),
        ("dl_simulate_core", _sim_args),
    ]
    print(f"{'kernel':<18} {'n x m':>10} {'compiled':>12} {'python':>12} {'speedup':>8}")
    for name, make in cases:
        for n, m in SHAPES:
            args = make(n, m, rng)
            t_c = _time_call(getattr(compiled, name), args, repeat)
            t_p = _time_call(getattr(_kernels_py, name), args, repeat)
            print(
                f"{name:<18} {f'{n}x{m}':>10} {t_c * 1e6:>10.1f}us {t_p * 1e6:>10.1f}us "
                f"{t_p / t_c:>7.1f}x"
            )


def bench_fit_current_backend(repeat: int) -> None:
    """Time one dynamic-logit fit under whatever backend is active."""
    from panelboot import estimate, get_model
    from panelboot._backend import BACKEND
    from panelboot.models.dynamic_logit import dl_simulate

    rng = np.random.default_rng(np.random.SeedSequence(7))
    data = dl_simulate(0.5, np.zeros(250), 250, 20, rng=rng)
    model = get_model("dynamic-logit")
    estimate(model, data)  # warm up
    t = min(timeit.repeat(lambda: estimate(model, data), number=1, repeat=repeat))
    print(f"backend={BACKEND}: dynamic-logit fit (n=250, m=20) {t * 1e3:.1f} ms")


def bench_end_to_end(repeat: int) -> None:
    sys.stdout.flush()  # keep child output after the kernel table when piped
    for backend in ("c", "python"):
        env = dict(os.environ, PANELBOOT_BACKEND=backend)
        subprocess.run(
            [sys.executable, __file__, "--fit-only", "--repeat", str(repeat)],
            env=env,
            check=True,
        )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200, help="calls per timing sample")
    parser.add_argument(
        "--end-to-end",
        action="store_true",
        help="also time a full fit under each PANELBOOT_BACKEND",
    )
    parser.add_argument("--fit-only", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.fit_only:
        bench_fit_current_backend(max(3, min(args.repeat, 10)))
        return
    bench_kernels(args.repeat)
    if args.end_to_end:
        bench_end_to_end(args.repeat)


if __name__ == "__main__":
    main()
