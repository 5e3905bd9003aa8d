"""Wall time of the closed-loop kernel with numba and with the pure-numpy fallback.

Each backend runs in its own interpreter because the switch is read at
import time. Usage::

    python3 benchmarks/bench_kernels.py [--t-end 0.05] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
from mmcsim import USE_NUMBA, ConverterParams, FaultSpec, simulate
t_end, repeat = float(sys.argv[1]), int(sys.argv[2])
conv = ConverterParams()
fault = FaultSpec(sm_index=1, fault_type="T1", t_fault=0.5 * t_end)
t0 = time.perf_counter()
simulate(conv, fault=fault, t_end=conv.dt * 10)  # compile or warm caches
warm = time.perf_counter() - t0
times = []
for _ in range(repeat):
    t0 = time.perf_counter()
    res = simulate(conv, fault=fault, t_end=t_end)
    times.append(time.perf_counter() - t0)
print(json.dumps({"numba": USE_NUMBA, "warmup_s": warm, "best_s": min(times),
                  "steps": round(t_end / conv.dt), "final_i": res.i_arm[-1].tolist()}))
"""


def run_backend(disable, t_end, repeat):
    env = dict(os.environ)
    if disable:
        env["MMCSIM_DISABLE_NUMBA"] = "1"
    else:
        env.pop("MMCSIM_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", CHILD, str(t_end), str(repeat)],
                         env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--t-end", type=float, default=0.05)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    res = {name: run_backend(name == "numpy", args.t_end, args.repeat) for name in ("numba", "numpy")}
    for name, r in res.items():
        rate = r["steps"] / r["best_s"]
        print(f"{name:6s} best {r['best_s'] * 1e3:9.1f} ms  {rate:12.0f} steps/s  warmup {r['warmup_s']:.2f} s")
    print(f"speedup {res['numpy']['best_s'] / res['numba']['best_s']:.1f}x")
    diff = max(abs(a - b) for a, b in zip(res["numba"]["final_i"], res["numpy"]["final_i"]))
    print(f"max final arm-current difference between backends: {diff:.3g} A")


if __name__ == "__main__":
    main()
