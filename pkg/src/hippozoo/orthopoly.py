"""Orthonormal polynomial bases on an interval under a weight.

Two construction routes: closed-form shifted Legendre on [0, 1], and the
Stieltjes procedure run against a composite Gauss-Legendre rule for
arbitrary positive weights (uniform on a shifted interval, Jeffreys
1/g, ...).  Bases store their Favard three-term recurrence together with
an explicit per-degree orientation sign, so the (-1)^n Legendre
convention and the sign-agnostic Stieltjes output can coexist.
"""

from dataclasses import dataclass, field

import numpy as np

ORTHONORMALITY_TOL = 1e-8


@dataclass(frozen=True)
class Quadrature:
    """Nodes and positive weights of a quadrature rule on an interval."""

    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values):
        return float(np.dot(self.weights, values))


@dataclass(frozen=True)
class OrthoBasis:
    """An orthonormal polynomial family under a weight on an interval.

    Evaluation follows the Favard recurrence

        a[n+1] p[n+1](x) = (x - b[n]) p[n](x) - a[n] p[n-1](x)

    for the unoriented polynomials p[n]; the basis exposed to callers is
    P[n] = orientation[n] * p[n].  ``quad`` is a rule accurate enough for
    all pairwise inner products of basis members times the weight.
    """

    order: int
    interval: tuple
    weight_name: str
    a: np.ndarray          # off-diagonal recurrence coefficients, a[0] unused
    b: np.ndarray          # diagonal recurrence coefficients
    orientation: np.ndarray
    mass: float            # total weight mass over the interval
    quad: Quadrature = field(repr=False)
    weight_values: np.ndarray = field(repr=False)  # weight at quad nodes

    def contains(self, x):
        lo, hi = self.interval
        return (np.asarray(x) >= lo) & (np.asarray(x) <= hi)


def gauss_legendre(Q, interval=(0.0, 1.0)):
    """Q-node Gauss-Legendre rule, exact for polynomials of degree <= 2Q-1."""
    if Q < 1:
        raise ValueError("need at least one node")
    lo, hi = map(float, interval)
    if not hi > lo:
        raise ValueError(f"degenerate interval {interval}")
    x, w = np.polynomial.legendre.leggauss(Q)
    nodes = 0.5 * (hi - lo) * (x + 1.0) + lo
    weights = 0.5 * (hi - lo) * w
    return Quadrature(nodes=nodes, weights=weights)


def composite_gauss_legendre(Q, interval, panels, min_per_panel=2):
    """Gauss-Legendre rule split over sub-panels (edges given by ``panels``)."""
    nodes, weights = [], []
    per = max(min_per_panel, Q // (len(panels) - 1))
    for lo, hi in zip(panels[:-1], panels[1:]):
        rule = gauss_legendre(per, (lo, hi))
        nodes.append(rule.nodes)
        weights.append(rule.weights)
    return Quadrature(nodes=np.concatenate(nodes), weights=np.concatenate(weights))


def legendre_shifted(M):
    """Orthonormal shifted Legendre basis on [0, 1], uniform weight.

    Closed-form recurrence; orientation (-1)^n so that degree n evaluates
    to +sqrt(2n+1) at x = 0 (the "present" end in HiPPO conventions).
    """
    if M < 1:
        raise ValueError("order must be >= 1")
    n = np.arange(M, dtype=float)
    a = np.zeros(M)
    a[1:] = n[1:] / (2.0 * np.sqrt(4.0 * n[1:] ** 2 - 1.0))
    b = np.full(M, 0.5)
    quad = gauss_legendre(max(2 * M, 32), (0.0, 1.0))
    return OrthoBasis(
        order=M,
        interval=(0.0, 1.0),
        weight_name="uniform",
        a=a,
        b=b,
        orientation=(-1.0) ** np.arange(M),
        mass=1.0,
        quad=quad,
        weight_values=np.ones_like(quad.nodes),
    )


def stieltjes_basis(weight, interval, M, Q=None, weight_name="custom",
                    log_panels=False):
    """Build an orthonormal basis for an arbitrary positive weight.

    ``weight`` is a callable evaluated at quadrature nodes.  Recurrence
    coefficients come from the Stieltjes procedure run against a composite
    Gauss-Legendre rule with Q = max(4M, 256) nodes by default.  Raises if
    a computed off-diagonal coefficient loses positivity, which signals an
    insufficient quadrature order.
    """
    if M < 1:
        raise ValueError("order must be >= 1")
    lo, hi = map(float, interval)
    if Q is None:
        Q = max(4 * M, 256)
    if log_panels:
        # Geometric panels resolve weights that concentrate near the lower
        # endpoint (Jeffreys 1/g); smooth weights get a single exact rule.
        if lo <= 0:
            raise ValueError("log-spaced panels need a positive lower endpoint")
        edges = np.geomspace(lo, hi, 33)
        # Per-panel order must track M so that degree-2(M-1) polynomial
        # factors stay resolved on the wide panels near the upper endpoint.
        quad = composite_gauss_legendre(Q, interval, edges,
                                        min_per_panel=M + 8)
    else:
        quad = gauss_legendre(Q, interval)
    w = np.asarray(weight(quad.nodes), dtype=float)
    if np.any(w <= 0):
        raise ValueError("weight must be positive on the interval interior")
    ww = quad.weights * w
    mass = float(ww.sum())

    x = quad.nodes
    a = np.zeros(M)
    b = np.zeros(M)
    p_prev = np.zeros_like(x)
    p = np.full_like(x, 1.0 / np.sqrt(mass))
    for n in range(M):
        b[n] = float(np.dot(ww, x * p * p))
        if n == M - 1:
            break
        q = (x - b[n]) * p - (a[n] if n > 0 else 0.0) * p_prev
        norm_sq = float(np.dot(ww, q * q))
        if norm_sq <= 0:
            raise ValueError(
                f"Stieltjes recurrence lost positivity at degree {n + 1}; "
                "increase the quadrature order"
            )
        a[n + 1] = np.sqrt(norm_sq)
        p_prev, p = p, q / a[n + 1]
    return OrthoBasis(
        order=M,
        interval=(lo, hi),
        weight_name=weight_name,
        a=a,
        b=b,
        orientation=np.ones(M),
        mass=mass,
        quad=quad,
        weight_values=w,
    )


def jeffreys_basis(M, eps, Q=None):
    """Orthonormal polynomials for the Jeffreys weight 1/g on [eps, 1]."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    return stieltjes_basis(
        lambda g: 1.0 / g, (eps, 1.0), M, Q=Q,
        weight_name=f"jeffreys({eps:g})", log_panels=True,
    )


def eval_basis(basis, x):
    """Evaluate [P_0(x), ..., P_{M-1}(x)] by the forward recurrence.

    ``x`` may be a scalar or an array; the result has shape x.shape + (M,).
    Values outside the interval are permitted (the recurrence extrapolates);
    callers clamp where range control matters.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    xf = np.atleast_1d(x).astype(float)
    M = basis.order
    out = np.empty(xf.shape + (M,))
    p_prev = np.zeros_like(xf)
    p = np.full_like(xf, 1.0 / np.sqrt(basis.mass))
    out[..., 0] = p
    for n in range(M - 1):
        q = ((xf - basis.b[n]) * p - (basis.a[n] if n > 0 else 0.0) * p_prev)
        q = q / basis.a[n + 1]
        out[..., n + 1] = q
        p_prev, p = p, q
    out *= basis.orientation
    return out[0] if scalar else out


def eval_basis_and_deriv(basis, x):
    """Evaluate the basis and its first derivative at scalar or array x."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    xf = np.atleast_1d(x).astype(float)
    M = basis.order
    val = np.empty(xf.shape + (M,))
    der = np.empty(xf.shape + (M,))
    p_prev = np.zeros_like(xf)
    d_prev = np.zeros_like(xf)
    p = np.full_like(xf, 1.0 / np.sqrt(basis.mass))
    d = np.zeros_like(xf)
    val[..., 0], der[..., 0] = p, d
    for n in range(M - 1):
        a_n = basis.a[n] if n > 0 else 0.0
        q = ((xf - basis.b[n]) * p - a_n * p_prev) / basis.a[n + 1]
        dq = (p + (xf - basis.b[n]) * d - a_n * d_prev) / basis.a[n + 1]
        val[..., n + 1], der[..., n + 1] = q, dq
        p_prev, d_prev, p, d = p, d, q, dq
    val *= basis.orientation
    der *= basis.orientation
    if scalar:
        return val[0], der[0]
    return val, der


def jacobi_matrix(basis):
    """Symmetric tridiagonal matrix for multiplication by the variable.

    Satisfies x * phi(x) = J phi(x) up to a residual confined to the last
    component, in the oriented basis returned by ``eval_basis``.
    """
    M = basis.order
    J = np.zeros((M, M))
    J[np.arange(M), np.arange(M)] = basis.b
    off = basis.a[1:] * basis.orientation[:-1] * basis.orientation[1:]
    J[np.arange(M - 1), np.arange(1, M)] = off
    J[np.arange(1, M), np.arange(M - 1)] = off
    return J


def orthonormality_defect(basis):
    """max |<P_i, P_j> - delta_ij| over the basis, via the stored rule."""
    V = eval_basis(basis, basis.quad.nodes)
    G = V.T @ (V * (basis.quad.weights * basis.weight_values)[:, None])
    return float(np.abs(G - np.eye(basis.order)).max())
