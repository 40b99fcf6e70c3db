"""Numba vs pure-numpy timings for the hot kernels.

Each backend runs in its own interpreter because the switch
(CLSTM_ROM_NUMBA) is read at import time.  The first call of every
kernel is a warm-up so JIT compilation is not counted.

    python benchmarks/bench_kernels.py            # both backends, table
    python benchmarks/bench_kernels.py --repeat 5
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _cases():
    from clstm_rom import clstm, linalg, nn, ode

    rng = np.random.default_rng(0)
    lstm = nn.LstmCellParams(0.3 * rng.standard_normal((4, 32, 40)), np.zeros((4, 32)))
    x_seq = rng.standard_normal((32, 100, 8))
    x_one = rng.standard_normal((1, 200, 8))
    _, _, _, cache = nn.lstm_forward(lstm, x_seq)
    conv = nn.Conv1dParams.init(rng, 8, 16, 3, stride=2)
    x_conv = rng.standard_normal((32, 200, 8))
    y_conv = nn.conv1d_forward(conv, x_conv)
    snap = rng.standard_normal((400, 120))
    cfg = clstm.CLstmConfig(n_in=4, m=1, z=2, hidden=16, channels=8, stride=2)
    model = clstm.CLstmModel.init(cfg, rng)
    xb, yb = rng.standard_normal((64, 50, 4)), rng.standard_normal((64, 1, 2))
    duffing = ode.SYSTEMS["duffing"]

    return {
        "lstm_forward": lambda: nn.lstm_forward(lstm, x_seq)[0],
        "lstm_forward_b1": lambda: nn.lstm_forward(lstm, x_one)[0],
        "lstm_backward": lambda: nn.lstm_backward(cache, np.ones((32, 100, 32)))[0].w,
        "conv1d_forward": lambda: nn.conv1d_forward(conv, x_conv),
        "conv1d_backward": lambda: nn.conv1d_backward(conv, x_conv, y_conv)[0].kernels,
        "svd_400x120": lambda: linalg.svd(snap).sigma,
        "rk4_10k_steps": lambda: ode.rk4_integrate(duffing, 3.0, steps=10_000).states[:, -1],
        "clstm_grad": lambda: clstm.loss_and_grads(model, xb, yb)[1]["lstm.w"],
    }


def run_backend(repeat):
    from clstm_rom._accel import backend

    out = {"backend": backend(), "timings": {}, "checksums": {}}
    for name, fn in _cases().items():
        result = fn()  # warm-up / JIT compile
        best = min(_timed(fn) for _ in range(repeat))
        out["timings"][name] = best
        out["checksums"][name] = float(np.sum(np.abs(result)))
    return out


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        print(json.dumps(run_backend(args.repeat)))
        return

    results = {}
    for flag in ("0", "1"):
        env = dict(os.environ, CLSTM_ROM_NUMBA=flag)
        proc = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(args.repeat)],
                              env=env, capture_output=True, text=True, check=True)
        res = json.loads(proc.stdout.strip().splitlines()[-1])
        results[res["backend"]] = res

    np_res, nb_res = results["numpy"], results["numba"]
    print(f"{'kernel':<18}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>9}  checksum agreement")
    for name, t_np in np_res["timings"].items():
        t_nb = nb_res["timings"][name]
        a, b = np_res["checksums"][name], nb_res["checksums"][name]
        agree = abs(a - b) / max(abs(a), 1e-300)
        print(f"{name:<18}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>8.1f}x  {agree:.1e}")


if __name__ == "__main__":
    main()
