"""Closed-form geodesic oracles via isometric embeddings.

The constant-curvature sprays use the conformal chart
g_ij = delta_ij / (1 + K|x|^2/4)^2.  For K = 1 this is the stereographic
chart of the unit sphere, for K = -1 the Poincare-ball chart of the
hyperboloid; both give exact geodesics (great circles / hyperbolic lines)
that the tests compare against.
"""

import numpy as np


def sphere_embed(x):
    """Chart point -> unit sphere in R^3 (pullback metric matches K = 1)."""
    x = np.asarray(x, float)
    q = x @ x
    return np.append(4.0 * x, q - 4.0) / (q + 4.0)


def sphere_embed_d(x, v):
    """Differential of sphere_embed applied to a chart vector."""
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    q = x @ x
    dq = 2.0 * x @ v
    top = np.append(4.0 * x, q - 4.0)
    dtop = np.append(4.0 * v, dq)
    return (dtop * (q + 4.0) - top * dq) / (q + 4.0) ** 2


def sphere_chart(p):
    """Inverse of sphere_embed (defined away from the pole (0,0,1))."""
    p = np.asarray(p, float)
    return 2.0 * p[..., :2] / (1.0 - p[..., 2:])


def sphere_geodesic(x0, v0, t):
    """Chart positions of the K = 1 geodesic with initial state (x0, v0)."""
    t = np.asarray(t, float)
    p0 = sphere_embed(x0)
    q0 = sphere_embed_d(x0, v0)
    w = np.linalg.norm(q0)
    p = (np.cos(w * t)[..., None] * p0
         + np.sin(w * t)[..., None] * (q0 / w))
    return sphere_chart(p)


def hyper_embed(x):
    """Chart point -> hyperboloid in Minkowski R^{2,1} (matches K = -1)."""
    x = np.asarray(x, float)
    q = x @ x
    return np.append(4.0 * x, q + 4.0) / (4.0 - q)


def hyper_embed_d(x, v):
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    q = x @ x
    dq = 2.0 * x @ v
    top = np.append(4.0 * x, q + 4.0)
    dtop = np.append(4.0 * v, dq)
    return (dtop * (4.0 - q) + top * dq) / (4.0 - q) ** 2


def hyper_chart(p):
    p = np.asarray(p, float)
    return 2.0 * p[..., :2] / (1.0 + p[..., 2:])


def hyper_geodesic(x0, v0, t):
    """Chart positions of the K = -1 geodesic with initial state (x0, v0)."""
    t = np.asarray(t, float)
    p0 = hyper_embed(x0)
    q0 = hyper_embed_d(x0, v0)
    w = np.sqrt(q0[:2] @ q0[:2] - q0[2] ** 2)  # spacelike Minkowski norm
    p = (np.cosh(w * t)[..., None] * p0
         + np.sinh(w * t)[..., None] * (q0 / w))
    return hyper_chart(p)


def conformal_speed(x, v, K):
    """Metric norm of a chart vector for the curvature-K conformal metric."""
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    return np.linalg.norm(v) / (1.0 + (K / 4.0) * (x @ x))


def unit_velocity(x, direction, K):
    """Chart vector of metric norm 1 at x pointing along `direction`."""
    d = np.asarray(direction, float)
    return d / np.linalg.norm(d) * (1.0 + (K / 4.0) * (np.asarray(x) @ np.asarray(x)))
