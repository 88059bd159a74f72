"""Time the compiled and numpy arrival renderers on image-source workloads.

Run with ``python benchmarks/bench_kernels.py``. Each case renders the
arrivals of a shoebox response; the output of both backends is compared
bit for bit before timing.
"""
import argparse
import timeit

import numpy as np

from hoadoa import kernels
from hoadoa.room import RoomSpec, SrirRequest, fractional_delay_taps, image_sources
from hoadoa.sh import n_channels, sh_matrix, vectors_to_directions

CASES = {
    "small dry room, order 1": (RoomSpec((4.0, 3.5, 3.0), (0.8,) * 6), 1),
    "medium room, order 4": (RoomSpec((8.0, 6.0, 3.5), (0.4,) * 6), 4),
    "large live room, order 4": (RoomSpec((20.0, 18.0, 5.0), (0.1,) * 6), 4),
}


def workload(room, order):
    src = tuple(0.3 * d for d in room.dims)
    rcv = tuple(0.6 * d for d in room.dims)
    req = SrirRequest(room, src, rcv, order)
    arr = image_sources(req)
    el, az = vectors_to_directions(arr.vectors)
    gains = sh_matrix(order, el, az) * arr.amplitudes[:, None]
    start, taps = fractional_delay_taps(arr.delays)
    return n_channels(order), req.length, start, taps, gains


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["python"] + (["compiled"] if kernels.BACKEND == "compiled" else [])
    if len(backends) == 1:
        print("compiled kernels not built; timing the numpy fallback only")
    print(f"{'case':<28} {'arrivals':>8} " + " ".join(f"{b + ' ms':>12}" for b in backends) + "  speedup")
    for name, (room, order) in CASES.items():
        job = workload(room, order)
        outputs = [kernels.render_arrivals(*job, backend=b) for b in backends]
        if len(outputs) == 2 and not np.array_equal(outputs[0], outputs[1]):
            raise SystemExit(f"{name}: backends disagree")
        times = []
        for b in backends:
            t = timeit.repeat(lambda: kernels.render_arrivals(*job, backend=b), number=1, repeat=args.repeat)
            times.append(1e3 * min(t))
        speed = f"{times[0] / times[1]:6.2f}x" if len(times) == 2 else "   n/a"
        print(f"{name:<28} {len(job[2]):>8} " + " ".join(f"{t:>12.2f}" for t in times) + f"  {speed}")


if __name__ == "__main__":
    main()
