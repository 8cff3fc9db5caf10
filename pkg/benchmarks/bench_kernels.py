"""Compare the numba kernels against the numpy fallback.

Both backends are imported side by side (the env flag only picks the default),
so one process can time them on identical inputs.  An end-to-end timing of a
CKN evaluation is run in a subprocess per backend, because the flag is read
once at import time.

    python3 benchmarks/bench_kernels.py [--batch 200000] [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys
import importlib
import timeit

import numpy as np

# import the modules directly: the package attribute is None when numba is disabled
numba_impl = importlib.import_module("ckntools.kernels.numba_impl")
numpy_impl = importlib.import_module("ckntools.kernels.numpy_impl")

END_TO_END = """
import time, json
from ckntools import kernels
from ckntools.catalog import euclidean_dilation, conformal_flat
from ckntools.inequalities import CKNParams, evaluate_ckn
from ckntools.testfunctions import smooth_bump
out = {}
for entry in (euclidean_dilation(3), conformal_flat()):
    u = smooth_bump([0.0, 0.0, 0.0], 0.2, 0.8, entry.chart)
    evaluate_ckn(entry.chart, entry.field, u, CKNParams(0.5, 0.0, 2.0))
    t = time.perf_counter()
    rep = evaluate_ckn(entry.chart, entry.field, u, CKNParams(0.5, 0.0, 2.0))
    out[entry.name] = {"seconds": time.perf_counter() - t, "ratio": rep.ratio}
print(json.dumps({"backend": kernels.BACKEND, "results": out}))
"""


def inputs(batch, n, rng):
    A = rng.normal(size=(batch, n, n))
    G = np.einsum("bij,bkj->bik", A, A) + n * np.eye(n)
    dG = rng.normal(size=(batch, n, n, n))
    dG = dG + np.swapaxes(dG, 1, 2)
    J = rng.normal(size=(batch, n, n))
    H = rng.normal(size=(batch, n))
    x = rng.uniform(-1.5, 1.5, size=batch * n)
    return G, dG, J, H, x


def kernel_table(batch, n, repeat):
    rng = np.random.default_rng(0)
    G, dG, J, H, x = inputs(batch, n, rng)
    rows = []
    for mod in (numba_impl, numpy_impl):
        mod.spd_inverse(G[:4])  # compile outside the timing
        Ginv, _, _ = mod.spd_inverse(G)
        Gam = mod.christoffel(Ginv, dG)
        cases = {
            "spd_inverse": lambda: mod.spd_inverse(G),
            "christoffel": lambda: mod.christoffel(Ginv, dG),
            "covariant_jacobian": lambda: mod.covariant_jacobian(J, Gam, H),
            "quad_form": lambda: mod.quad_form(G, H, H),
            "smooth_step": lambda: mod.smooth_step(x),
            "norm_gradient": lambda: mod.norm_gradient(G, dG, H, J),
            "density_divergence": lambda: mod.density_divergence(Ginv, dG, H, J),
        }
        for name, fn in cases.items():
            fn()
            best = min(timeit.repeat(fn, number=1, repeat=repeat))
            rows.append({"backend": mod.__name__.rsplit(".", 1)[-1], "kernel": name, "seconds": best})
    return rows


def end_to_end():
    out = []
    for disable in ("", "1"):
        env = dict(os.environ, CKNTOOLS_DISABLE_NUMBA=disable)
        res = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        out.append(json.loads(res.stdout))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=200_000)
    ap.add_argument("--dim", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args()

    rows = kernel_table(args.batch, args.dim, args.repeat)
    by = {(r["backend"], r["kernel"]): r["seconds"] for r in rows}
    print(f"batch={args.batch} n={args.dim}  (best of {args.repeat})")
    print(f"{'kernel':<20}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name in dict.fromkeys(r["kernel"] for r in rows):
        a, b = by[("numba_impl", name)], by[("numpy_impl", name)]
        print(f"{name:<20}{1e3 * a:>12.2f}{1e3 * b:>12.2f}{b / a:>10.2f}")
    if not args.skip_end_to_end:
        print("\nend-to-end evaluate_ckn (bump at the zero, a=0.5, b=0, p=2)")
        for res in end_to_end():
            for name, r in res["results"].items():
                print(f"  {res['backend']:<6} {name:<22} {r['seconds']:7.2f} s  ratio={r['ratio']:.12f}")


if __name__ == "__main__":
    main()
