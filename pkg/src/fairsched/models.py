"""Linear system models, steady-state Kalman covariance, and the fairness cost.

Everything downstream (rate allocation, MDP scheduling, greedy scheduling,
schedule evaluation) consumes only two quantities computed here: the
steady-state filtered covariance of each sensor and the trace sequence of its
open-loop (prediction-only) iterates.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

PSD_TOL = 1e-10
FIXED_POINT_TOL = 1e-12
FIXED_POINT_MAX_ITER = 10**6
TRACE_SEQ_CAP = 10**4


class ModelError(ValueError):
    """Raised for ill-posed system matrices or non-contracting recursions."""


def _as_matrix(X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ModelError(f"{name} must be a 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ModelError(f"{name} contains non-finite entries")
    return X


def _check_symmetric(X: np.ndarray, name: str) -> None:
    if not np.allclose(X, X.T, atol=1e-8):
        raise ModelError(f"{name} must be symmetric")


@dataclass(frozen=True)
class SystemModel:
    """One sensor/plant pair: dynamics, observation, and noise covariances."""

    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R_meas: np.ndarray
    label: str = ""

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        C = _as_matrix(self.C, "C")
        Q = _as_matrix(self.Q, "Q")
        R = _as_matrix(self.R_meas, "R_meas")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ModelError(f"A must be square, got {A.shape}")
        if C.shape[1] != n:
            raise ModelError(f"C has {C.shape[1]} columns, expected {n}")
        m = C.shape[0]
        if Q.shape != (n, n):
            raise ModelError(f"Q must be {n}x{n}, got {Q.shape}")
        if R.shape != (m, m):
            raise ModelError(f"R_meas must be {m}x{m}, got {R.shape}")
        _check_symmetric(Q, "Q")
        _check_symmetric(R, "R_meas")
        if np.linalg.eigvalsh((Q + Q.T) / 2).min() < -PSD_TOL:
            raise ModelError("Q must be positive semidefinite")
        if np.linalg.eigvalsh((R + R.T) / 2).min() <= PSD_TOL:
            raise ModelError("R_meas must be positive definite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R_meas", R)

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class FairnessParam:
    """Convexity parameter of the fairness cost x^(1+q)/(1+q)."""

    q: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.q) or self.q < 0:
            raise ValueError(f"q must be finite and nonnegative, got {self.q}")


def fair_cost(x: float, fp: FairnessParam) -> float:
    """Evaluate x^(1+q)/(1+q); increasing and convex on x >= 0."""
    if x < 0:
        raise ValueError(f"fair cost is defined for x >= 0, got {x}")
    return x ** (1.0 + fp.q) / (1.0 + fp.q)


def spectral_radius(A) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def _sym(X: np.ndarray) -> np.ndarray:
    return (X + X.T) / 2


def lyapunov_step(X, sys: SystemModel) -> np.ndarray:
    """One prediction step of the covariance recursion: A X A^T + Q."""
    X = np.asarray(X, dtype=float)
    if X.shape != (sys.n, sys.n):
        raise ModelError(f"X has shape {X.shape}, expected {(sys.n, sys.n)}")
    return _sym(sys.A @ X @ sys.A.T + sys.Q)


def measurement_update(X, sys: SystemModel) -> np.ndarray:
    """Covariance measurement update: X - X C^T (C X C^T + R)^{-1} C X."""
    X = np.asarray(X, dtype=float)
    if X.shape != (sys.n, sys.n):
        raise ModelError(f"X has shape {X.shape}, expected {(sys.n, sys.n)}")
    if not np.all(np.isfinite(X)):
        raise ModelError("X contains non-finite entries")
    S = sys.C @ X @ sys.C.T + sys.R_meas
    K = np.linalg.solve(S.T, (X @ sys.C.T).T).T
    return _sym(X - K @ sys.C @ X)


@dataclass
class SteadyStateCache:
    """Steady covariance P_bar plus the memoized open-loop trace sequence.

    trace_seq[j] = Tr of the j-fold prediction iterate of P_bar; it is
    extended lazily and is nondecreasing in j. Extension happens under a
    lock so concurrent readers are safe.
    """

    sys: SystemModel
    P_bar: np.ndarray
    rho_A: float
    _traces: list = field(default_factory=list)
    _csum: list = field(default_factory=list)
    _last_mat: np.ndarray = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if not self._traces:
            t0 = float(np.trace(self.P_bar))
            self._traces = [t0]
            self._csum = [t0]
            self._last_mat = self.P_bar.copy()

    def trace(self, j: int) -> float:
        """Tr of the j-fold open-loop iterate; inf once the recursion overflows."""
        if j < 0:
            raise ValueError(f"j must be nonnegative, got {j}")
        if j >= TRACE_SEQ_CAP:
            raise ModelError(
                f"trace sequence request j={j} exceeds cap {TRACE_SEQ_CAP}"
            )
        if j < len(self._traces):
            return self._traces[j]
        with self._lock:
            while len(self._traces) <= j:
                if not np.all(np.isfinite(self._last_mat)):
                    # Diverged: every later iterate is reported as infinite.
                    self._traces.append(np.inf)
                    self._csum.append(np.inf)
                    continue
                self._last_mat = lyapunov_step(self._last_mat, self.sys)
                t = float(np.trace(self._last_mat))
                t = t if np.isfinite(t) else np.inf
                self._traces.append(t)
                self._csum.append(self._csum[-1] + t)
        return self._traces[j]

    def head_sum(self, b: int) -> float:
        """Sum of the first b traces (indices 0..b-1); 0 for b = 0."""
        if b <= 0:
            return 0.0
        self.trace(b - 1)
        return self._csum[b - 1]

    def traces(self, count: int) -> np.ndarray:
        """First `count` entries of the trace sequence as an array."""
        if count > 0:
            self.trace(count - 1)
        return np.asarray(self._traces[:count], dtype=float)

    def prefix_sums(self, count: int) -> np.ndarray:
        """Cumulative sums of the first `count` traces (index k = sum of 0..k)."""
        if count > 0:
            self.trace(count - 1)
        return np.asarray(self._csum[:count], dtype=float)


def open_loop_trace(cache: SteadyStateCache, sys: SystemModel, j: int) -> float:
    """Tr of the j-fold prediction iterate of the steady covariance."""
    same = sys is cache.sys or (
        sys.A.shape == cache.sys.A.shape
        and np.array_equal(sys.A, cache.sys.A)
        and np.array_equal(sys.C, cache.sys.C)
        and np.array_equal(sys.Q, cache.sys.Q)
        and np.array_equal(sys.R_meas, cache.sys.R_meas)
    )
    if not same:
        raise ModelError("cache was built for a different system")
    return cache.trace(j)


def steady_state(
    sys: SystemModel,
    tol: float = FIXED_POINT_TOL,
    max_iter: int = FIXED_POINT_MAX_ITER,
) -> SteadyStateCache:
    """Solve the filtered-covariance fixed point by direct iteration.

    Iterates X <- update(predict(X)) from X0 = Q until the Frobenius residual
    drops below tol. Raises if the iteration fails to contract, which signals
    a model violating the detectability/stabilizability assumptions.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    X = _sym(sys.Q.copy())
    for _ in range(max_iter):
        X_next = measurement_update(lyapunov_step(X, sys), sys)
        if not np.all(np.isfinite(X_next)):
            raise ModelError(f"steady-state iteration diverged for {sys.label!r}")
        if np.linalg.norm(X_next - X, "fro") <= tol:
            X = X_next
            break
        X = X_next
    else:
        raise ModelError(
            f"steady-state iteration did not converge within {max_iter} "
            f"iterations for {sys.label!r}"
        )
    return SteadyStateCache(sys=sys, P_bar=X, rho_A=spectral_radius(sys.A))
