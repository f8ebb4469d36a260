"""Fair sensor-to-estimator transmission scheduling under bandwidth limits.

Schedules N independent linear plants, each watched by a sensor running a
local Kalman filter, so that the remote estimation errors trade off total
efficiency against fairness through a tunable convexity parameter q.
"""

from fairsched.models import (
    FairnessParam,
    SteadyStateCache,
    SystemModel,
    fair_cost,
    lyapunov_step,
    measurement_update,
    open_loop_trace,
    spectral_radius,
    steady_state,
)

__all__ = [
    "FairnessParam",
    "SteadyStateCache",
    "SystemModel",
    "fair_cost",
    "lyapunov_step",
    "measurement_update",
    "open_loop_trace",
    "spectral_radius",
    "steady_state",
]

__version__ = "0.1.0"
