"""Tabulated fixed points and Jacobian scalars used as reference data.

Each row is ``(V, x, q, det, tr, delta, kind)`` with values as printed, to
four decimals for the coordinates and five significant digits for the
Jacobian scalars.
"""

from __future__ import annotations

from .phase import FixedPointKind

_S = FixedPointKind.SINK_NODE
_SS = FixedPointKind.SINK_SPIRAL
_D = FixedPointKind.SADDLE
_F = FixedPointKind.SPIRAL_SOURCE

TYPE_I_ROWS = [
    (0.0, 0.0, 0.0, 53386000, -14675, 1799400, _S),
    (4.0, 0.3253, 0.5207, 46873000, -14349, 18401000, _S),
    (4.0, 6.1776, 2.1927, -82951000, 1436, 333870000, _D),
    (4.0, 6.4011, 2.1315, 16939000000, 15938, -67502000000, _F),
    (6.9, 1.2523, 1.0216, 28312000, -13421, 66869000, _S),
    (6.9, 4.3978, 1.9136, -34780000, -10225, 243670000, _D),
    (6.9, 6.4083, 2.1277, 11226000000, 15265, -44672000000, _F),
    (7.0, 1.3120, 1.0456, 27119000, -13361, 70041000, _S),
    (7.0, 4.3078, 1.8940, -32957000, -10324, 238410000, _D),
    (7.0, 6.4086, 2.1275, 11053000000, 15248, -43978000000, _F),
    (8.0, 6.4120, 2.1257, 9343300000, 15105, -37145000000, _F),
    (15.5, 6.7918, 1.8384, 551970000, -72552, 3056000000, _S),
    (15.5, 6.6754, 1.8575, -232640000, 29278, 1787700000, _D),
    (15.5, 6.5041, 2.0601, 614580000, 21641, -1990000000, _F),
    (17.5, 6.8444, 2.0750, 2044700000, -251620, 55133000000, _S),
]

TYPE_II_ROWS = [
    (0.0, 0.0, 0.0, 58671000, -15467, 4554500, _S),
    (6.0, 0.6503, 0.7362, 45666000, -14817, 36880000, _S),
    (6.0, 6.0838, 2.1971, -74046000, -2558, 302730000, _D),
    (6.0, 6.3914, 2.1365, 1465700000, 14073, -5664600000, _F),
    (8.0, 1.4035, 1.0815, 30604000, -14064, 75372000, _S),
    (8.0, 4.7989, 1.9980, -37553000, -10549, 261500000, _D),
    (8.0, 6.4149, 2.1240, 3814100000, 15393, -15020000000, _F),
    (9.0, 2.2998, 1.3843, 12682000, -13167, 122640000, _S),
    (9.0, 3.6172, 1.7360, -13679000, -11841, 194930000, _D),
    (9.0, 6.4239, 2.1188, 3619200000, 15831, -14226000000, _F),
    (10.0, 6.4339, 2.1127, 3137600000, 16392, -12282000000, _F),
    (14.7, 6.7664, 1.8031, 245070000, -28346, -176810000, _SS),
    (14.7, 6.6907, 1.8389, -123710000, 26224, 1182500000, _D),
    (14.7, 6.55914, 2.00512, 295680000, 28319, -380770000, _F),
    (16.0, 6.8230, 1.9457, 1305900000, -159780, 20307000000, _S),
]

COLUMNS = ("V", "x", "q", "det", "tr", "delta", "kind")
