"""Compiled versus pure-Python kernels.

    python benchmarks/bench_kernels.py [--repeat N]

Times each hot kernel and one closed-loop right-hand-side evaluation of the
four-machine system under every available backend, and prints a table of
microseconds per call with the speed-up of the compiled backend.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from exgov import kernels
from exgov.controller import ClosedLoop
from exgov.network import reduce_network
from exgov.scenarios.config import load_config
from exgov.scenarios.simulate import initialize_equilibrium


def _cases():
    g = np.random.default_rng(0)
    n = 5
    Y = g.normal(size=(n, n)) + 1j * g.normal(size=(n, n))
    Y = Y + Y.T
    G, B = np.ascontiguousarray(Y.real), np.ascontiguousarray(Y.imag)
    delta, eq, xdp = g.uniform(-1, 1, n), g.uniform(0.9, 1.2, n), g.uniform(0.05, 0.3, n)
    M = g.normal(size=(18, 18)) + 18 * np.eye(18)
    b = g.normal(size=18)
    S = g.normal(size=(18, 18))
    S = S + S.T

    cfg = load_config("four-machine")
    st = initialize_equilibrium(cfg)
    loop = ClosedLoop(cfg.machines, reduce_network(cfg.network), cfg.controller)
    loop.pm_fixed = st.pm_fixed.copy()
    loop.ef_guess = st.ef.copy()
    x = st.x.copy()
    x[loop.layout.i_omega] += 1e-3
    U0, P0 = st.U0.copy(), st.P0.copy()

    return {
        "network_terms (5 machines)": lambda: kernels.network_terms(G, B, delta, eq, xdp, True),
        "lu_solve (18x18)": lambda: kernels.lu_solve(M, b, 1e-13),
        "jacobi_eigh (18x18)": lambda: kernels.jacobi_eigh(S, 1e-12),
        "closed-loop evaluate": lambda: loop.evaluate(x, U0, P0),
    }


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    backends = kernels.available_backends()
    before = kernels.BACKEND
    rows = {}
    for name in backends:
        kernels.set_backend(name)
        for label, fn in _cases().items():
            number, _ = timeit.Timer(fn).autorange()
            best = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
            rows.setdefault(label, {})[name] = best * 1e6
    kernels.set_backend(before)
    head = f"{'kernel':<30}" + "".join(f"{b + ' us':>16}" for b in backends)
    if "compiled" in backends:
        head += f"{'speed-up':>10}"
    print(head)
    for label, t in rows.items():
        line = f"{label:<30}" + "".join(f"{t[b]:>16.2f}" for b in backends)
        if "compiled" in backends:
            line += f"{t['python'] / t['compiled']:>9.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
