#!/usr/bin/env python3
"""Reference values for the vMF log normalization constant.

log C_d(kappa) = (d/2 - 1) ln kappa - (d/2) ln(2 pi) - ln I_{d/2-1}(kappa)

Computed with mpmath at 60 decimal digits and frozen into the Rust tests.
Run from anywhere; prints Rust array literals to stdout.
"""

import mpmath as mp

mp.mp.dps = 60


def log_c(dim, kappa):
    nu = mp.mpf(dim) / 2 - 1
    k = mp.mpf(kappa)
    return (nu * mp.log(k)
            - (nu + 1) * mp.log(2 * mp.pi)
            - mp.log(mp.besseli(nu, k)))


def emit(name, dims, kappas):
    print(f"const {name}: &[(usize, f64, f64)] = &[")
    for d in dims:
        for k in kappas:
            v = log_c(d, k)
            print(f"    ({d}, {float(k)!r}_f64, {mp.nstr(v, 20)}_f64),")
    print("];")


# Acceptance table: high dims across the kappa range used in practice.
emit("LOG_NORM_ORACLE_HIGH_DIM", [256, 1024, 2565],
     [1.0, 10.0, 100.0, 1000.0, 10000.0])
print()
# Unit-test table: low dims (power-series route), dims straddling the
# series/asymptotic crossover, and extremes of the clamped kappa range.
emit("LOG_NORM_ORACLE_BROAD",
     [2, 3, 5, 16, 52, 80, 82, 120, 512, 4096],
     [1e-6, 0.5, 5.0, 500.0, 1e5])
print()
emit("LOG_NORM_ORACLE_SPOT", [2565], [500.0])
