"""Shipped five-sensor benchmark parameter sets.

Two variants of the same 2x2 plant collection: one used for the rate-budget
experiments and one (with modified third/fifth plants and noisier sensors)
for the activation-budget experiments. Plants 1-3 are unstable, 4-5 stable.
"""

from __future__ import annotations

import numpy as np

from fairsched.models import SystemModel

_I2 = np.eye(2)


def case1_systems() -> list[SystemModel]:
    """Five benchmark plants for the rate-constrained experiments."""
    A = [
        [[1.2, 0.0], [0.0, 0.0]],
        [[1.1, 1.0], [0.0, 1.0]],
        [[1.2, 1.0], [0.0, 0.8]],
        [[0.8, 0.6], [0.0, 0.9]],
        [[0.3, 1.0], [0.0, 0.1]],
    ]
    Q = [
        [[4.0, 0.0], [0.0, 1.0]],
        [[1.0, 0.0], [0.0, 4.0]],
        [[1.0, 0.0], [0.0, 4.0]],
        [[16.0, 0.0], [0.0, 1.0]],
        [[0.3, 0.0], [0.0, 1.2]],
    ]
    return [
        SystemModel(A=A[i], C=_I2, Q=Q[i], R_meas=_I2, label=f"sensor{i + 1}")
        for i in range(5)
    ]


def case2_systems() -> list[SystemModel]:
    """Five benchmark plants for the activation-constrained experiments."""
    systems = case1_systems()
    out = list(systems)
    out[2] = SystemModel(
        A=[[1.1, 0.0], [0.0, 0.0]],
        C=_I2,
        Q=_I2,
        R_meas=10.0 * _I2,
        label="sensor3",
    )
    out[4] = SystemModel(
        A=systems[4].A,
        C=_I2,
        Q=[[2.0, 0.0], [0.0, 8.0]],
        R_meas=5.0 * _I2,
        label="sensor5",
    )
    return out
