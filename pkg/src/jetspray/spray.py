"""Semisprays and their iterated complete lifts.

A semispray is held as its coefficient map G: (x, y) -> R^n, written so it
evaluates over multidual coordinates.  Feeding G the blockwise multidual
coordinates of a T^{r+1}M state produces the coefficients of the r-th
complete lift in one pass: for r = 1 the base and top blocks of G are
exactly the vertical and complete lifts of the coefficients, and the same
holds recursively at every order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import multidual as md
from .bundle import BundlePoint, assemble, in_slashed
from .errors import DomainError, OutsideSlashed


@dataclass(frozen=True)
class Semispray:
    """Chart dimension, coefficient map and a human-readable label."""

    n: int
    G: Callable[[Sequence, Sequence], list]
    label: str
    chart_radius: float = field(default=float("inf"))

    def coefficients(self, x, y):
        """Evaluate G componentwise; inputs are sequences of floats or
        multiduals of a common order."""
        return self.G(x, y)


@dataclass(frozen=True)
class ConnectionCoefficients:
    N: np.ndarray  # (n, n); N^i_j = dG^i/dy^j


@dataclass(frozen=True)
class JacobiEndomorphism:
    Phi: np.ndarray  # (n, n)


# -- builders ---------------------------------------------------------------

def flat_spray(n: int) -> Semispray:
    def G(x, y):
        return [0.0 * y[i] for i in range(n)]
    return Semispray(n, G, "flat")


def damped_semispray(n: int, c: float) -> Semispray:
    """The non-homogeneous example G^i = c y^i (geodesics solve x'' + 2c x' = 0)."""
    def G(x, y):
        return [c * y[i] for i in range(n)]
    return Semispray(n, G, f"damped(c={c})")


def constant_curvature_spray(n: int, K: float) -> Semispray:
    """Geodesic spray of the conformal metric delta_ij / (1 + K|x|^2/4)^2.

    For K > 0 this is the stereographic chart of the round sphere of
    curvature K; for K < 0 the Poincare-ball chart (radius 2/sqrt(-K)).
    """
    radius = float("inf") if K >= 0 else 2.0 / np.sqrt(-K)

    def G(x, y):
        q = sum(xi * xi for xi in x)          # |x|^2
        denom = 1.0 + (K / 4.0) * q
        real = denom.real if isinstance(denom, md.MultidualValue) else denom
        if np.any(np.asarray(real) <= 0):
            raise DomainError("point outside the conformal chart")
        # sigma = ln conformal factor; sigma_j = -(K/2) x_j / denom
        sig = [-(K / 2.0) * x[j] / denom for j in range(n)]
        sy = sum(sig[j] * y[j] for j in range(n))
        yy = sum(y[j] * y[j] for j in range(n))
        return [sy * y[i] - 0.5 * yy * sig[i] for i in range(n)]

    return Semispray(n, G, f"constant_curvature(K={K})", chart_radius=radius)


def christoffel_spray(n: int, gamma: Callable[[Sequence], list],
                      label: str = "christoffel") -> Semispray:
    """G^i = (1/2) Gamma^i_jk(x) y^j y^k from a Christoffel table.

    `gamma(x)` returns a nested list [i][j][k] of entries evaluable over
    multiduals (polynomials in x suffice).
    """
    def G(x, y):
        g = gamma(x)
        out = []
        for i in range(n):
            acc = 0.0
            for j in range(n):
                for k in range(n):
                    gijk = g[i][j][k]
                    if gijk is None:
                        continue
                    acc = acc + gijk * y[j] * y[k]
            out.append(0.5 * acc)
        return out

    return Semispray(n, G, label)


def custom_spray(n: int, G: Callable, label: str = "custom") -> Semispray:
    return Semispray(n, G, label)


def polynomial_christoffel(n: int, table: dict) -> Callable:
    """Build a Christoffel closure from a JSON coefficient table.

    Keys are "i,j,k" (1-based); values are lists of terms
    {"coef": c, "powers": [e_1..e_n]} meaning c * prod x_m^{e_m}.
    """
    parsed = {}
    for key, terms in table.items():
        i, j, k = (int(p) - 1 for p in key.split(","))
        parsed[(i, j, k)] = [(float(t["coef"]), [int(e) for e in t["powers"]])
                             for t in terms]

    def gamma(x):
        g = [[[None] * n for _ in range(n)] for _ in range(n)]
        for (i, j, k), terms in parsed.items():
            acc = 0.0
            for coef, powers in terms:
                term = coef
                for m, e in enumerate(powers):
                    if e:
                        term = term * md.powi(x[m], e)
                acc = acc + term
            g[i][j][k] = acc
        return g

    return gamma


def load_spray_config(source) -> Semispray:
    """Build a semispray from a JSON config (path, file object, or dict)."""
    if isinstance(source, dict):
        cfg = source
    elif hasattr(source, "read"):
        cfg = json.load(source)
    else:
        with open(source) as f:
            cfg = json.load(f)
    known = {"kind", "n", "K", "c", "christoffel"}
    unknown = set(cfg) - known
    if unknown:
        raise ValueError(f"unknown spray config keys: {sorted(unknown)}")
    kind = cfg["kind"]
    n = int(cfg["n"])
    if kind == "flat":
        return flat_spray(n)
    if kind == "constant_curvature":
        return constant_curvature_spray(n, float(cfg["K"]))
    if kind == "damped":
        return damped_semispray(n, float(cfg["c"]))
    if kind == "christoffel":
        return christoffel_spray(n, polynomial_christoffel(n, cfg["christoffel"]))
    raise ValueError(f"unknown spray kind {kind!r}")


# -- lifted right-hand side ---------------------------------------------------

def _state_multiduals(xi: BundlePoint, eta: BundlePoint):
    r, n = xi.r, xi.n
    if r == 0:
        return list(xi.blocks[0]), list(eta.blocks[0])
    x = [md.MultidualValue(r, xi.blocks[:, i]) for i in range(n)]
    y = [md.MultidualValue(r, eta.blocks[:, i]) for i in range(n)]
    return x, y


def lifted_rhs(S: Semispray, r: int, xi: BundlePoint, eta: BundlePoint) -> BundlePoint:
    """Acceleration of the r-th complete lift S^(r) at state (position xi,
    fiber velocity eta): -2 G evaluated blockwise over multidual coordinates.
    """
    if (xi.r, eta.r) != (r, r) or xi.n != S.n or eta.n != S.n:
        raise OutsideSlashed("state orders/dimensions do not match")
    if not in_slashed(assemble(xi, eta)).member:
        raise OutsideSlashed("state outside the slashed bundle")
    x, y = _state_multiduals(xi, eta)
    g = S.coefficients(x, y)
    acc = np.zeros((1 << r, S.n))
    for i in range(S.n):
        gi = g[i]
        if isinstance(gi, md.MultidualValue):
            acc[:, i] = -2.0 * gi.blocks
        else:
            acc[0, i] = -2.0 * float(gi)
    return BundlePoint(S.n, r, acc)


def _grad_block(g, mask: int, shape) -> np.ndarray:
    if isinstance(g, md.MultidualValue):
        return np.broadcast_to(np.asarray(g.block(mask), float), shape)
    return np.zeros(shape)


def _cols(v: np.ndarray, shape) -> np.ndarray:
    return np.broadcast_to(np.asarray(v, float)[:, None], shape)


def _onehot_rows(i: int, shape) -> np.ndarray:
    return np.broadcast_to(np.eye(shape[1])[i], shape)


def connection_grid(S: Semispray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Nonlinear connection N^i_j = dG^i/dy^j at a whole batch of states.

    X, Y have shape (T, n); one order-1 multidual evaluation with batch
    shape (T, n) computes every column of every N at once.  Returns (T, n, n).
    """
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    if np.any(np.linalg.norm(Y, axis=1) == 0.0):
        raise OutsideSlashed("connection needs nonzero velocities")
    T, n = X.shape
    shape = (T, n)
    zeros = np.zeros(shape)
    xs = [md.MultidualValue(1, np.stack([_cols(X[:, i], shape), zeros]))
          for i in range(n)]
    ys = [md.MultidualValue(1, np.stack([_cols(Y[:, i], shape), _onehot_rows(i, shape)]))
          for i in range(n)]
    g = S.coefficients(xs, ys)
    return np.stack([_grad_block(g[i], 1, shape) for i in range(n)], axis=1)


def connection_and_phi_grid(S: Semispray, X: np.ndarray, Y: np.ndarray):
    """Nonlinear connection and Jacobi endomorphism at a batch of states.

    Phi^i_j = 2 dG^i/dx^j - S(N^i_j) - N^i_r N^r_j, with the derivative
    along the semispray expanded as y^k dN/dx^k - 2 G^k dN/dy^k.  All first
    and second jets come from two order-2 multidual evaluations with batch
    shape (T, n).  Returns (N, Phi), each of shape (T, n, n).
    """
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    if np.any(np.linalg.norm(Y, axis=1) == 0.0):
        raise OutsideSlashed("Jacobi endomorphism needs nonzero velocities")
    T, n = X.shape
    shape = (T, n)
    ones = np.ones(T)
    gplain = S.coefficients([X[:, i] for i in range(n)], [Y[:, i] for i in range(n)])
    g0 = np.stack([np.asarray(gplain[i], float) * ones for i in range(n)], axis=1)
    zeros = np.zeros(shape)
    # e1 along e_j in x, e2 along e_j in y: the e1 block is dG/dx^j and the
    # e2 block is N^i_j, both for every column j at once.
    xs = [md.MultidualValue(2, np.stack([_cols(X[:, i], shape),
                                         _onehot_rows(i, shape), zeros, zeros]))
          for i in range(n)]
    ys = [md.MultidualValue(2, np.stack([_cols(Y[:, i], shape), zeros,
                                         _onehot_rows(i, shape), zeros]))
          for i in range(n)]
    g = S.coefficients(xs, ys)
    Gx = np.stack([_grad_block(g[i], 1, shape) for i in range(n)], axis=1)
    N = np.stack([_grad_block(g[i], 2, shape) for i in range(n)], axis=1)
    # e1 along e_j in y, e2 along (y, -2G) in (x, y): the mixed block is
    # y^k d2G/dy^j dx^k - 2 G^k d2G/dy^j dy^k = S(N^i_j).
    xs2 = [md.MultidualValue(2, np.stack([_cols(X[:, i], shape), zeros,
                                          _cols(Y[:, i], shape), zeros]))
           for i in range(n)]
    ys2 = [md.MultidualValue(2, np.stack([_cols(Y[:, i], shape),
                                          _onehot_rows(i, shape),
                                          _cols(-2.0 * g0[:, i], shape), zeros]))
           for i in range(n)]
    g2 = S.coefficients(xs2, ys2)
    SN = np.stack([_grad_block(g2[i], 3, shape) for i in range(n)], axis=1)
    Phi = 2.0 * Gx - SN - N @ N
    return N, Phi


def connection(S: Semispray, x: np.ndarray, y: np.ndarray) -> ConnectionCoefficients:
    """Nonlinear connection N^i_j = dG^i/dy^j at one state."""
    x = np.asarray(x, float).reshape(1, S.n)
    y = np.asarray(y, float).reshape(1, S.n)
    return ConnectionCoefficients(connection_grid(S, x, y)[0])


def connection_and_phi(S: Semispray, x: np.ndarray, y: np.ndarray):
    """(N, Phi) at one state; see connection_and_phi_grid."""
    x = np.asarray(x, float).reshape(1, S.n)
    y = np.asarray(y, float).reshape(1, S.n)
    N, Phi = connection_and_phi_grid(S, x, y)
    return N[0], Phi[0]


def jacobi_endomorphism(S: Semispray, x: np.ndarray, y: np.ndarray) -> JacobiEndomorphism:
    return JacobiEndomorphism(connection_and_phi(S, x, y)[1])


def classify_homogeneity(S: Semispray, samples: int = 20, seed: int = 7,
                         tol: float = 1e-9) -> str:
    """Numerical 2-homogeneity test: 'spray' iff G(x, lam y) = lam^2 G(x, y)
    within relative tolerance at random sample points.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        x = 0.3 * rng.standard_normal(S.n)
        y = rng.standard_normal(S.n)
        if np.linalg.norm(y) < 1e-6:
            continue
        g1 = np.array([float(v) for v in S.coefficients(list(x), list(y))])
        scale = max(1.0, np.max(np.abs(g1)))
        for lam in (0.5, 2.0, 3.0):
            g2 = np.array([float(v) for v in S.coefficients(list(x), list(lam * y))])
            worst = max(worst, np.max(np.abs(g2 - lam * lam * g1)) / (lam * lam * scale))
    return "spray" if worst < tol else "semispray_only"
