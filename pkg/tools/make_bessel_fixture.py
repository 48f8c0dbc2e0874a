#!/usr/bin/env python3
"""Regenerate tests/fixtures/bessel_real_axis.txt.

Offline tool; the runtime never imports mpmath. Evaluates J_m, Y_m and their
first derivatives at 200 decimal digits on a fixed real-axis grid and writes
one line per (m, z): "m z J Y Jp Yp", 17 significant digits.

Grid points are nudged away from zeros of any of the four columns: at a
near-zero the column's relative error is amplified by scale/|value| for any
fixed-precision evaluator, so testing 1e-12 relative there would measure the
grid, not the library. The nudge loop is deterministic.
"""

import math
import pathlib

import mpmath as mp

mp.mp.dps = 200

ORDERS = range(0, 21)
BASE_GRID = [
    0.001, 0.01, 0.1, 0.35, 0.75, 1.0, 1.5, 1.9, 2.0, 2.1, 2.6, 3.3,
    4.2, 5.5, 7.0, 9.0, 11.5, 14.0, 17.0, 20.5, 24.0, 28.0, 32.5,
    37.0, 41.5, 46.0, 50.0,
]
MIN_RATIO = 0.02


def column_ok(z) -> bool:
    zm = mp.mpf(z)
    for m in ORDERS:
        if z <= m - 2:
            # monotone region: J decays and Y grows structurally with m,
            # with full relative accuracy and no accidental zeros to dodge
            continue
        j0 = mp.besselj(m, zm)
        j1 = mp.besselj(m + 1, zm)
        jp = mp.besselj(m, zm, derivative=1)
        y0 = mp.bessely(m, zm)
        y1 = mp.bessely(m + 1, zm)
        yp = mp.bessely(m, zm, derivative=1)
        jscale = max(abs(j0), abs(j1))
        yscale = max(abs(y0), abs(y1))
        if abs(j0) < MIN_RATIO * jscale or abs(jp) < MIN_RATIO * jscale:
            return False
        if abs(y0) < MIN_RATIO * yscale or abs(yp) < MIN_RATIO * yscale:
            return False
    return True


def main():
    out = pathlib.Path(__file__).resolve().parents[1] / "tests" / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        "# m z J Y Jp Yp  (17 significant digits; 200-digit reference)",
    ]
    for z0 in BASE_GRID:
        z = z0
        for _ in range(200):
            if column_ok(z):
                break
            z = z + 0.0173
        else:
            raise RuntimeError(f"could not place a grid point near {z0}")
        zm = mp.mpf(z)
        for m in ORDERS:
            vals = [
                mp.besselj(m, zm),
                mp.bessely(m, zm),
                mp.besselj(m, zm, derivative=1),
                mp.bessely(m, zm, derivative=1),
            ]
            fields = [str(m), mp.nstr(zm, 17, strip_zeros=False)]
            fields += [mp.nstr(v, 17, strip_zeros=False) for v in vals]
            lines.append(" ".join(fields))
    path = out / "bessel_real_axis.txt"
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path} ({len(lines) - 1} rows)")


if __name__ == "__main__":
    main()
