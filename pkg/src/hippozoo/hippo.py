"""Leg-T and Leg-S generators, ZOH stepping, reconstruction, and the
brute-force projection oracle.

Conventions: the polynomial basis is the orthonormal shifted Legendre
family L_n on [0, 1] with the (-1)^n orientation, so that the normalized
coordinate 0 is the present.  A Leg-T state with window tau represents
f(t - tau') for tau' in [0, tau] at coordinate tau'/tau; a Leg-S state
with forgetting timescale tau represents f(t - tau') at coordinate
exp(-tau'/tau) under the exponential weight.

The generator entries follow from differentiating the projection
coefficients; a transcription of the published coefficient table is kept
separately (``table_generator``) for the convention tests, since the two
disagree for Leg-T and the projection oracle is the ground truth here.
"""

from dataclasses import dataclass

import numpy as np

from . import numkit, orthopoly

LEGT = "legt"
LEGS = "legs"


@dataclass(frozen=True)
class HippoSpec:
    family: str
    N: int
    tau: float = 1.0

    def __post_init__(self):
        if self.family not in (LEGT, LEGS):
            raise ValueError(f"unknown family {self.family!r}")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError("tau must be finite and positive")


@dataclass(frozen=True)
class ContinuousLTI:
    A: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class DiscreteLTI:
    A_d: np.ndarray
    b_d: np.ndarray
    dt: float


def table_generator(family, N):
    """Raw transcription of the published Leg-T/Leg-S coefficient table.

    Kept only so the convention tests can compare both global signs of the
    table against the projection oracle; ``make_hippo`` is the production
    construction.
    """
    bn = np.sqrt(2.0 * np.arange(N) + 1.0)
    A = np.zeros((N, N))
    for n in range(N):
        for k in range(N):
            if family == LEGT:
                if n > k:
                    A[n, k] = bn[n] * bn[k] * (-1.0) ** (n - k + 1)
                elif n == k:
                    A[n, k] = bn[n] * bn[k]
            else:
                if n > k:
                    A[n, k] = -bn[n] * bn[k]
                elif n == k:
                    A[n, k] = -(n + 1.0)
    return A, bn.copy()


def make_hippo(spec):
    """Continuous generator (A, b) for the oriented basis, scaled by 1/tau."""
    N = spec.N
    n = np.arange(N)
    bn = np.sqrt(2.0 * n + 1.0)
    outer = np.outer(bn, bn)
    if spec.family == LEGT:
        # k <= n: -b_n b_k ; k > n: -b_n b_k (-1)^(n-k)
        alt = (-1.0) ** (n[:, None] - n[None, :])
        A = -np.where(n[:, None] >= n[None, :], outer, outer * alt)
        b = bn.copy()
    else:
        # Leg-S in the oriented basis: conjugate the lower-triangular
        # generator by diag((-1)^n).
        sign = (-1.0) ** n
        A = np.zeros((N, N))
        lower = n[:, None] > n[None, :]
        A[lower] = (-outer * sign[:, None] * sign[None, :])[lower]
        A[n, n] = -(n + 1.0)
        b = sign * bn
    return ContinuousLTI(A=A / spec.tau, b=b / spec.tau)


def discretize(cont, dt):
    A_d, b_d = numkit.zoh_discretize(cont.A, cont.b, dt)
    return DiscreteLTI(A_d=A_d, b_d=b_d, dt=float(dt))


def make_discrete(spec, dt):
    return discretize(make_hippo(spec), dt)


def step(sys, s, f):
    """One exact ZOH step: s <- A_d s + b_d f."""
    s_next = sys.A_d @ s + sys.b_d * f
    if not np.all(np.isfinite(s_next)):
        raise FloatingPointError("state became non-finite (unstable stepping)")
    return s_next


def step_channels(sys, S, u):
    """Batched step over a (channels, N) state matrix with one shared system."""
    return S @ sys.A_d.T + np.outer(u, sys.b_d)


def basis_for(spec):
    return orthopoly.legendre_shifted(spec.N)


def reconstruct(spec, s, lags):
    """Evaluate the represented history at the given lags (>= 0).

    Returns (values, in_support): for Leg-T, in_support flags lags inside
    the window [0, tau]; for Leg-S all nonnegative lags are in support.
    """
    lags = np.asarray(lags, dtype=float)
    basis = basis_for(spec)
    if spec.family == LEGT:
        x = lags / spec.tau
        in_support = (lags >= 0) & (x <= 1.0)
    else:
        x = np.exp(-lags / spec.tau)
        in_support = lags >= 0
    values = orthopoly.eval_basis(basis, x) @ np.asarray(s)
    return values, in_support


def project_history_oracle(samples, dt, spec, t, t0=0.0):
    """Direct-quadrature projection of a sampled history onto the basis.

    ``samples[i]`` is f(t0 + i*dt); intermediate values are linearly
    interpolated.  This is the brute-force oracle that ODE-integrated
    states are checked against.
    """
    samples = np.asarray(samples, dtype=float)
    t_grid = t0 + dt * np.arange(samples.shape[0])
    t_end = t_grid[-1]
    if t > t_end + 1e-12 or t < t_grid[0]:
        raise ValueError("query time outside the sampled history")

    def f(times):
        return np.interp(times, t_grid, samples)

    basis = basis_for(spec)
    if spec.family == LEGT:
        if t - spec.tau < t_grid[0] - 1e-12:
            raise ValueError("history does not cover the Leg-T window")
        rule = orthopoly.gauss_legendre(max(4 * spec.N, 64), (0.0, 1.0))
        vals = f(t - spec.tau * rule.nodes)
        return orthopoly.eval_basis(basis, rule.nodes).T @ (rule.weights * vals)
    # Leg-S: integrate f(t - tau') L_n(e^{-tau'/tau}) e^{-tau'/tau}/tau
    # over enough timescales that the discarded tail is negligible.
    depth = 14.0 * spec.tau
    if t - depth < t_grid[0] - 1e-12:
        raise ValueError(
            "history does not cover enough Leg-S timescales "
            f"(need {depth:g} before the query time)"
        )
    edges = np.linspace(0.0, depth, 29)
    rule = orthopoly.composite_gauss_legendre(
        0, (0.0, depth), edges, min_per_panel=max(spec.N, 24))
    x = np.exp(-rule.nodes / spec.tau)
    w = rule.weights * x / spec.tau
    return orthopoly.eval_basis(basis, x).T @ (w * f(t - rule.nodes))
