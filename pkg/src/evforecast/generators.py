"""Synthetic benchmark series: the Lorenz attractor and noisy sinusoids."""

from __future__ import annotations

import numpy as np

from .series import TimeSeries

LORENZ_SIGMA = 10.0
LORENZ_RHO = 28.0
LORENZ_BETA = 8.0 / 3.0


def _lorenz_deriv(state: np.ndarray, sigma: float, rho: float, beta: float) -> np.ndarray:
    x, y, z = state
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


def lorenz_step(state: np.ndarray, dt: float, sigma: float = LORENZ_SIGMA,
                rho: float = LORENZ_RHO, beta: float = LORENZ_BETA) -> np.ndarray:
    """One classical 4th-order Runge-Kutta step of the Lorenz system."""
    k1 = _lorenz_deriv(state, sigma, rho, beta)
    k2 = _lorenz_deriv(state + 0.5 * dt * k1, sigma, rho, beta)
    k3 = _lorenz_deriv(state + 0.5 * dt * k2, sigma, rho, beta)
    k4 = _lorenz_deriv(state + dt * k3, sigma, rho, beta)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def gen_lorenz(n: int, dt: float = 0.01, initial=(1.0, 1.0, 1.0),
               seed: int | None = None, transient: int = 1000,
               sigma: float = LORENZ_SIGMA, rho: float = LORENZ_RHO,
               beta: float = LORENZ_BETA, name: str = "lorenz") -> TimeSeries:
    """x-coordinate of an RK4-integrated Lorenz trajectory.

    A ``transient`` burn-in is discarded so sampling starts on the attractor.
    ``seed`` perturbs the initial state by N(0, 1e-3) noise to diversify
    trajectories; None keeps the initial state exact.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if dt <= 0:
        raise ValueError("dt must be positive")
    state = np.asarray(initial, dtype=float).copy()
    if state.shape != (3,):
        raise ValueError("initial state must have three components")
    if seed is not None:
        state = state + np.random.default_rng(seed).normal(0.0, 1e-3, size=3)
    xs = np.empty(n)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(transient + n):
            state = lorenz_step(state, dt, sigma, rho, beta)
            if not np.all(np.isfinite(state)):
                raise ValueError(f"Lorenz integration diverged at step {i}; reduce dt={dt}")
            if i >= transient:
                xs[i - transient] = state[0]
    return TimeSeries(xs, name=name)


def gen_sine(n: int, period: float, amplitude: float = 1.0, noise_sd: float = 0.0,
             seed: int = 0, name: str = "sine") -> TimeSeries:
    """A * sin(2*pi*t/period) plus Gaussian noise."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if period <= 0:
        raise ValueError("period must be positive")
    t = np.arange(n)
    values = amplitude * np.sin(2.0 * np.pi * t / period)
    if noise_sd > 0.0:
        values = values + np.random.default_rng(seed).normal(0.0, noise_sd, size=n)
    return TimeSeries(values, name=name)
