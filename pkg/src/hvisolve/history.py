"""Quadrature rules for history-dependent (Volterra) operators.

The operator acts on a trajectory v as

    (S v)(t) = R( int_0^t q(t, s) v(s) ds + a_S ),

and is approximated at grid times from stored past values only.  Three
rules are provided, all of which avoid the value at the current time t_n:

  * modified trapezoid: trapezoid weights with the last sub-interval
    integrated by the left-point rectangle rule (second order),
  * left rectangle: all weights k at t_0 .. t_{n-1} (first order),
  * extrapolated: the endpoint contribution (k/2) q(t_n, t_n) v_n replaced
    by linear extrapolation from the two previous nodes (second order).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TimeGrid:
    """Uniform partition of [0, T] with N steps."""

    T: float
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"step count must be >= 1, got {self.N}")
        if self.T <= 0:
            raise ValueError(f"final time must be positive, got {self.T}")

    @property
    def k(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    def t(self, n: int) -> float:
        return n * self.T / self.N


@dataclass
class HistoryOperatorSpec:
    """Kernel q(t, s), output map R, and offset a_S of the operator."""

    q: "callable"
    R: "callable | None" = None
    a_S: object = 0.0

    def apply_R(self, value):
        return value if self.R is None else self.R(value)


@dataclass
class HistoryState:
    """Stored trajectory u_0 .. u_m plus the scalar strain-path accumulator."""

    trajectory: list = field(default_factory=list)
    zeta_tilde: float = 0.0


def modified_trapezoid_weights(k: float, n: int) -> np.ndarray:
    """Combined weights on v_0 .. v_{n-1}; the weight sum is n*k."""
    if n == 0:
        return np.zeros(0)
    if n == 1:
        return np.array([k])
    w = np.full(n, k)
    w[0] = 0.5 * k
    w[-1] = 1.5 * k
    return w


def left_rectangle_weights(k: float, n: int) -> np.ndarray:
    return np.full(n, k)


def extrapolated_weights(k: float, n: int) -> np.ndarray:
    """Weights of the extrapolated rule; falls back to the modified
    trapezoid for n < 2 where no second history value exists."""
    if n < 2:
        return modified_trapezoid_weights(k, n)
    w = np.full(n, k)
    w[0] = 0.5 * k
    w[-2] += -0.5 * k  # n == 2 leaves w[0] = 0
    w[-1] = 2.0 * k
    return w


def _evaluate(weights, spec, grid, traj, n):
    if len(traj.trajectory) < n:
        raise ValueError(
            f"history evaluation at step {n} needs {n} stored values, "
            f"trajectory holds {len(traj.trajectory)}"
        )
    tn = grid.t(n)
    acc = spec.a_S
    for j in range(n):
        acc = acc + weights[j] * spec.q(tn, grid.t(j)) * traj.trajectory[j]
    return spec.apply_R(acc)


def s_modified_trapezoid(spec: HistoryOperatorSpec, grid: TimeGrid, traj: HistoryState, n: int):
    return _evaluate(modified_trapezoid_weights(grid.k, n), spec, grid, traj, n)


def s_left_rectangle(spec: HistoryOperatorSpec, grid: TimeGrid, traj: HistoryState, n: int):
    return _evaluate(left_rectangle_weights(grid.k, n), spec, grid, traj, n)


def s_extrapolated(spec: HistoryOperatorSpec, grid: TimeGrid, traj: HistoryState, n: int):
    return _evaluate(extrapolated_weights(grid.k, n), spec, grid, traj, n)


def update_zeta(traj: HistoryState, grid: TimeGrid, strain_norms, n: int) -> float:
    """Accumulate the strain-norm path integral up to t_{n-1} with the
    modified trapezoid weights and store it on the state."""
    if len(strain_norms) < n:
        raise ValueError(
            f"zeta update at step {n} needs {n} strain norms, got {len(strain_norms)}"
        )
    w = modified_trapezoid_weights(grid.k, n)
    value = float(w @ np.asarray(strain_norms[:n])) if n else 0.0
    traj.zeta_tilde = value
    return value
