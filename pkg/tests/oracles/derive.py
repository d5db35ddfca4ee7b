"""Independent reference values frozen into the test suite.

Nothing here imports ``memcapneuron``: the model is re-typed from its
defining formulas and solved with scipy (LSODA/DOP853, brentq). Run with
``python3 tests/oracles/derive.py`` to regenerate the printed values.
"""

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

d, x_c, beta, k, r, rho0, g = 8.0, 6.4, 5e4, 5 / 6, 1e-3, 1.25e-4, 1.25e-4


def R1(x):
    return np.arctan(beta * (x_c - x)) / np.pi + 0.5 + rho0 * (d - x)


def R2(x):
    return rho0 * (d - x) * (9 * (np.arctan(50 * (x_c - x)) / np.pi + 0.5) + 1)


def dU(x):
    return k * x + 4 * (12 * (d - x) ** -13 - 6 * (d - x) ** -7)


def field(t, y, V, R=R1):
    x, q = y
    vc = q * (d - x)
    return [(q * q - dU(x)) / g, (V - vc) / r - vc / R(x)]


def G(x, R):
    # DC voltage whose fixed point sits at displacement x (q = sqrt(U'))
    return np.sqrt(np.maximum(dU(x), 0)) * (d - x) * (1 + r / R(x))


def folds(R):
    xs = np.concatenate([np.linspace(1e-9, 6.3, 400001), np.linspace(6.3, 7.7, 4000001)])
    Gx = G(xs, R)
    dG = np.diff(Gx)
    ext = np.where(np.sign(dG[1:]) != np.sign(dG[:-1]))[0] + 1
    out = []
    for i in ext:
        # refine the extremum on a local fine grid
        xx = np.linspace(xs[i - 1], xs[i + 1], 20001)
        gg = G(xx, R)
        j = np.argmax(gg) if dG[i - 1] > 0 else np.argmin(gg)
        out.append((float(xx[j]), float(gg[j])))
    return out


def spike_isi(V, y0, T=1.5):
    sol = solve_ivp(field, (0, T), y0, args=(V,), method="DOP853", rtol=1e-11, atol=1e-13, dense_output=True)
    t = np.arange(0, T, 1e-6)
    x = sol.sol(t)[0]
    up = np.where((x[:-1] < x_c) & (x[1:] >= x_c))[0]
    # linear interpolation of the crossing instants
    tc = t[up] + (x_c - x[up]) / (x[up + 1] - x[up]) * 1e-6
    return tc, sol.y[:, -1]


if __name__ == "__main__":
    print("x* at V=0:", brentq(dU, 0, 1, xtol=1e-16))
    print("type I folds (x, V):", folds(R1))
    print("type II folds (x, V):", folds(R2))
    print("V1' r=0:", 2 * math.sqrt(k * (d / 3) ** 3))
    for V, y0 in ((8.0829, [0, 0]), (11.547, [6.6, 2.0207]), (15.0111, [0, 0])):
        tc, yend = spike_isi(V, y0)
        isi = np.diff(tc[len(tc) // 3:])
        print(f"V={V}: n={len(tc)} first={tc[0]:.8f} period={isi.mean():.10g} omega={2 * math.pi / isi.mean():.8g}")
    sol = solve_ivp(field, (0, 0.5), [0, 0], args=(7.852,), method="LSODA", rtol=1e-10, atol=1e-13)
    print("V=7.852 static end state:", sol.y[:, -1])
