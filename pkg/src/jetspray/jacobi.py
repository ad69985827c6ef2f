"""Jacobi tensors along geodesics: parallel transport, the dynamical
covariant derivative, the tensor <-> variation correspondence, Riccati and
shape-operator machinery, and tubular chart construction.

All tensors are sampled on the base geodesic's time grid in chart
components.  Residual equations are evaluated as (n-1) x (n-1) matrices in
a parallel frame {e_a} transverse to the velocity: a parallel basis makes
the covariant derivative act componentwise, so residuals reduce to plain
time differentiation of frame matrices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bundle import BundlePoint, assemble
from .errors import (BadOrder, ChartFailed, DomainError, GridTooShort,
                     NotDiffeo, NotEmbeddable, NotTransversal, OutsideSlashed,
                     ShrinkEpsilon, SingularAt, SingularFrame,
                     TruncatedVariation)
from .flow import GeodesicRecord, integrate_geodesic
from .spray import (Semispray, connection, connection_and_phi,
                    connection_and_phi_grid, connection_grid)
from .variation import GeodesicVariation, mixed_derivative

MIN_GRID = 5


# -- time differentiation on the grid ---------------------------------------

def _ddt(arr: np.ndarray, h: float) -> np.ndarray:
    """4th-order derivative along axis 0 (one-sided at the edges)."""
    if arr.shape[0] < MIN_GRID:
        raise GridTooShort(f"need at least {MIN_GRID} samples")
    d = np.empty_like(arr)
    d[2:-2] = (arr[:-4] - 8 * arr[1:-3] + 8 * arr[3:-1] - arr[4:]) / (12 * h)
    d[0] = (-25 * arr[0] + 48 * arr[1] - 36 * arr[2]
            + 16 * arr[3] - 3 * arr[4]) / (12 * h)
    d[1] = (-3 * arr[0] - 10 * arr[1] + 18 * arr[2]
            - 6 * arr[3] + arr[4]) / (12 * h)
    d[-2] = -(-3 * arr[-1] - 10 * arr[-2] + 18 * arr[-3]
              - 6 * arr[-4] + arr[-5]) / (12 * h)
    d[-1] = -(-25 * arr[-1] + 48 * arr[-2] - 36 * arr[-3]
              + 16 * arr[-4] - 3 * arr[-5]) / (12 * h)
    return d


# -- domain types ------------------------------------------------------------

@dataclass
class ParallelFrame:
    """A basis {c'(t), e_1(t), ..., e_{n-1}(t)} along a base geodesic with
    every e_a parallel (solving v' + N(c, c')v = 0)."""

    S: Semispray
    base: GeodesicRecord  # r = 0
    e: np.ndarray         # (T, n, n-1), columns e_a

    @property
    def t_grid(self) -> np.ndarray:
        return self.base.t_grid

    def basis(self, k: int) -> np.ndarray:
        """Full n x n basis matrix [c'(t_k) | e_1 .. e_{n-1}]."""
        return np.concatenate([self.base.vel[k].T, self.e[k]], axis=1)

    def basis_all(self) -> np.ndarray:
        cdot = self.base.vel[:, 0, :, None]  # (T, n, 1)
        return np.concatenate([cdot, self.e], axis=2)

    def condition_numbers(self) -> np.ndarray:
        return np.array([np.linalg.cond(self.basis(k))
                         for k in range(len(self.base))])


@dataclass
class TensorAlongCurve:
    """Chart components of a tensor field along a geodesic."""

    valence: tuple        # (1,0) vector, (0,1) covector, (1,1) endomorphism
    t_grid: np.ndarray
    comps: np.ndarray     # (T, n) or (T, n, n)
    curve_pos: np.ndarray  # (T, n)
    curve_vel: np.ndarray  # (T, n)
    S: Semispray
    frame: Optional[ParallelFrame] = None

    @property
    def step(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0])

    def smoothness_proxy(self) -> float:
        """Max second finite difference on the grid (bounded iff smooth)."""
        c = self.comps
        return float(np.max(np.abs(c[2:] - 2 * c[1:-1] + c[:-2]))) / self.step ** 2


@dataclass
class JacobiTensor:
    """(1,1) tensor J along a geodesic solving nabla^2 J + Phi o J = 0."""

    J: TensorAlongCurve
    residual: float
    nablaJ: Optional[TensorAlongCurve] = None


@dataclass
class ShapeOperator:
    """A_Z = K o DZ along the central geodesic of a variation."""

    A: TensorAlongCurve
    riccati_residual: float
    window: tuple


@dataclass
class Chart:
    """Tubular coordinates around a geodesic segment built from a
    transversal Jacobi tensor."""

    V: GeodesicVariation
    eps: float
    window: tuple
    jacobian_min: float
    t_line_residual: float

    def __call__(self, t: float, s) -> np.ndarray:
        return self.V.evaluate(t, s)


# -- transport and frames -----------------------------------------------------

def _joint_transport(S: Semispray, x0, y0, V0: np.ndarray, t_span, step: float):
    """RK4 for the coupled system (geodesic, linear transport v' = -N v).

    V0 has shape (n, m): m vectors ride along in one pass.  Returns
    (t_grid, pos, vel, V) with V of shape (T, n, m).
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    nsteps = max(1, int(round(abs(t1 - t0) / step)))
    h = (t1 - t0) / nsteps

    def rhs(x, y, v):
        N = connection_grid(S, x[None], y[None])[0]
        g = S.coefficients(list(x), list(y))
        a = -2.0 * np.array([float(gi) for gi in g])
        return a, -N @ v

    x = np.asarray(x0, float).copy()
    y = np.asarray(y0, float).copy()
    v = np.asarray(V0, float).copy()
    ts, P, W, VV = [t0], [x.copy()], [y.copy()], [v.copy()]
    for k in range(nsteps):
        a1, w1 = rhs(x, y, v)
        x2, y2, v2 = x + 0.5 * h * y, y + 0.5 * h * a1, v + 0.5 * h * w1
        a2, w2 = rhs(x2, y2, v2)
        x3, y3, v3 = x + 0.5 * h * y2, y + 0.5 * h * a2, v + 0.5 * h * w2
        a3, w3 = rhs(x3, y3, v3)
        x4, y4, v4 = x + h * y3, y + h * a3, v + h * w3
        a4, w4 = rhs(x4, y4, v4)
        x = x + (h / 6.0) * (y + 2 * y2 + 2 * y3 + y4)
        y = y + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
        v = v + (h / 6.0) * (w1 + 2 * w2 + 2 * w3 + w4)
        ts.append(t0 + (k + 1) * h)
        P.append(x.copy())
        W.append(y.copy())
        VV.append(v.copy())
    return np.array(ts), np.array(P), np.array(W), np.array(VV)


def parallel_transport(S: Semispray, base: GeodesicRecord, v0) -> TensorAlongCurve:
    """Transport v0 along the base geodesic: solves v' + N(c, c')v = 0."""
    if base.r != 0:
        raise BadOrder("parallel transport runs along an order-0 geodesic")
    v0 = np.asarray(v0, float).reshape(S.n, 1)
    ts, P, W, V = _joint_transport(S, base.pos[0, 0], base.vel[0, 0], v0,
                                   (base.t_grid[0], base.t_grid[-1]), base.step)
    return TensorAlongCurve((1, 0), ts, V[:, :, 0], P, W, S)


def build_frame(S: Semispray, base: GeodesicRecord,
                e0: Optional[np.ndarray] = None) -> ParallelFrame:
    """Complete c'(t0) to a basis and parallel-transport the rest of it.

    e0 (n x (n-1)) overrides the default completion, which orthonormalizes
    the standard basis against the initial velocity.
    """
    if base.r != 0:
        raise BadOrder("frames live along order-0 geodesics")
    n = S.n
    y0 = base.vel[0, 0]
    if e0 is None:
        cols = [y0 / np.linalg.norm(y0)]
        for i in range(n):
            c = np.eye(n)[i]
            for q in cols:
                c = c - np.dot(q, c) * q
            if np.linalg.norm(c) > 1e-8:
                cols.append(c / np.linalg.norm(c))
            if len(cols) == n:
                break
        e0 = np.stack(cols[1:], axis=1)
    e0 = np.asarray(e0, float).reshape(n, n - 1)
    if abs(np.linalg.det(np.concatenate([y0[:, None], e0], axis=1))) < 1e-10:
        raise SingularFrame("initial frame vectors are linearly dependent")
    ts, P, W, E = _joint_transport(S, base.pos[0, 0], y0, e0,
                                   (base.t_grid[0], base.t_grid[-1]), base.step)
    frame = ParallelFrame(S, base, E)
    dets = np.array([np.linalg.det(frame.basis(k)) for k in range(len(ts))])
    if np.any(np.abs(dets) < 1e-10):
        raise SingularFrame("frame degenerated along the geodesic")
    return frame


def covariant_derivative(T: TensorAlongCurve) -> TensorAlongCurve:
    """Dynamical covariant derivative along the curve, per valence:
    vectors X' + N X, covectors a' - N^T a, endomorphisms J' + N J - J N.
    """
    N = connection_grid(T.S, T.curve_pos, T.curve_vel)
    d = _ddt(T.comps, T.step)
    if T.valence == (1, 0):
        out = d + np.einsum("tij,tj->ti", N, T.comps)
    elif T.valence == (0, 1):
        out = d - np.einsum("tji,tj->ti", N, T.comps)
    elif T.valence == (1, 1):
        out = d + N @ T.comps - T.comps @ N
    else:
        raise ValueError(f"unsupported valence {T.valence}")
    return TensorAlongCurve(T.valence, T.t_grid, out, T.curve_pos,
                            T.curve_vel, T.S, T.frame)


# -- Jacobi tensors -----------------------------------------------------------

def integrate_jacobi_tensor(S: Semispray, base: GeodesicRecord,
                            J0: np.ndarray, J0p: np.ndarray) -> JacobiTensor:
    """Solve nabla^2 J + Phi o J = 0 along the base geodesic by RK4 on the
    first-order system (J, P = nabla J):

        dJ/dt = P - N J + J N,   dP/dt = -Phi J - N P + P N.

    J0p is the initial nabla J.  The reported residual re-checks the
    defining equation by finite differences, independently of the
    integrator.
    """
    if base.r != 0:
        raise BadOrder("Jacobi tensors ride along an order-0 geodesic")
    n = S.n
    J = np.asarray(J0, float).reshape(n, n).copy()
    P = np.asarray(J0p, float).reshape(n, n).copy()
    x = base.pos[0, 0].copy()
    y = base.vel[0, 0].copy()
    t0, t1 = float(base.t_grid[0]), float(base.t_grid[-1])
    nsteps = max(1, int(round((t1 - t0) / base.step)))
    h = (t1 - t0) / nsteps

    def rhs(x, y, J, P):
        N, Phi = connection_and_phi(S, x, y)
        g = S.coefficients(list(x), list(y))
        a = -2.0 * np.array([float(gi) for gi in g])
        return a, P - N @ J + J @ N, -Phi @ J - N @ P + P @ N

    ts = [t0]
    pos, vel, Js, Ps = [x.copy()], [y.copy()], [J.copy()], [P.copy()]
    for k in range(nsteps):
        a1, dj1, dp1 = rhs(x, y, J, P)
        x2, y2 = x + 0.5 * h * y, y + 0.5 * h * a1
        J2, P2 = J + 0.5 * h * dj1, P + 0.5 * h * dp1
        a2, dj2, dp2 = rhs(x2, y2, J2, P2)
        x3, y3 = x + 0.5 * h * y2, y + 0.5 * h * a2
        J3, P3 = J + 0.5 * h * dj2, P + 0.5 * h * dp2
        a3, dj3, dp3 = rhs(x3, y3, J3, P3)
        x4, y4 = x + h * y3, y + h * a3
        J4, P4 = J + h * dj3, P + h * dp3
        a4, dj4, dp4 = rhs(x4, y4, J4, P4)
        x = x + (h / 6.0) * (y + 2 * y2 + 2 * y3 + y4)
        y = y + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
        J = J + (h / 6.0) * (dj1 + 2 * dj2 + 2 * dj3 + dj4)
        P = P + (h / 6.0) * (dp1 + 2 * dp2 + 2 * dp3 + dp4)
        ts.append(t0 + (k + 1) * h)
        pos.append(x.copy())
        vel.append(y.copy())
        Js.append(J.copy())
        Ps.append(P.copy())
    ts = np.array(ts)
    pos = np.array(pos)
    vel = np.array(vel)
    JT = TensorAlongCurve((1, 1), ts, np.array(Js), pos, vel, S)
    PT = TensorAlongCurve((1, 1), ts, np.array(Ps), pos, vel, S)
    res = jacobi_equation_residual(JT)
    return JacobiTensor(JT, res, PT)


def jacobi_equation_residual(JT: TensorAlongCurve) -> float:
    """Max norm of nabla(nabla J) + Phi J on the grid, all by finite
    differences (no reuse of integrator state)."""
    _, Phi = connection_and_phi_grid(JT.S, JT.curve_pos, JT.curve_vel)
    dd = covariant_derivative(covariant_derivative(JT))
    res = dd.comps + Phi @ JT.comps
    if res.shape[0] > 2 * MIN_GRID:
        # doubled one-sided edge stencils would dominate the interior
        res = res[4:-4]
    return float(np.max(np.abs(res)))


def jacobi_field_equivalence(S: Semispray, base: GeodesicRecord,
                             v: TensorAlongCurve, J: JacobiTensor) -> float:
    """Residual between J o v and the independently integrated Jacobi field
    (an S^(1) geodesic) with the matched initial state.

    v must be parallel; initial j' comes from j' = nabla j - N j with
    nabla j = (nabla J) v.
    """
    jv = np.einsum("tij,tj->ti", J.J.comps, v.comps)
    if float(np.max(np.abs(v.comps))) == 0.0:
        return float(np.max(np.abs(jv)))
    x0, y0 = base.pos[0, 0], base.vel[0, 0]
    N0 = connection(S, x0, y0).N
    if J.nablaJ is not None:
        nJ0 = J.nablaJ.comps[0]
    else:
        nJ0 = covariant_derivative(J.J).comps[0]
    j0 = J.J.comps[0] @ v.comps[0]
    jdot0 = nJ0 @ v.comps[0] - N0 @ j0
    xi0 = BundlePoint(S.n, 1, np.stack([x0, j0]))
    eta0 = BundlePoint(S.n, 1, np.stack([y0, jdot0]))
    g = integrate_geodesic(S, 1, (xi0, eta0),
                           (base.t_grid[0], base.t_grid[-1]), base.step)
    m = min(len(g), jv.shape[0])
    return float(np.max(np.abs(g.pos[:m, 1] - jv[:m])))


# -- frame matrices and transversality ----------------------------------------

def frame_matrix(comps: np.ndarray, frame: ParallelFrame) -> np.ndarray:
    """(T, n-1, n-1) transverse block of B^{-1} (tensor) B."""
    B = frame.basis_all()
    M = np.linalg.solve(B, comps @ B)
    return M[:, 1:, 1:]


def frame_to_chart(Mf: np.ndarray, frame: ParallelFrame) -> np.ndarray:
    """Embed (T, n-1, n-1) frame matrices back into chart components with
    zero action on the velocity direction."""
    T = Mf.shape[0]
    n = frame.S.n
    full = np.zeros((T, n, n))
    full[:, 1:, 1:] = Mf
    B = frame.basis_all()
    return B @ full @ np.linalg.inv(B)


def _tensor_comps(J) -> np.ndarray:
    return J.J.comps if isinstance(J, JacobiTensor) else J.comps


def check_transversality(J, frame: ParallelFrame, tol: float = 1e-6) -> dict:
    """Check J c' = 0 and Im J inside span{e_a} on the whole grid.

    Also evaluates the sufficient criterion: if Phi is transversal along
    the geodesic and the four initial conditions J c'(0) = 0,
    (nabla J) c'(0) = 0, Im J(0) and Im (nabla J)(0) transverse all hold,
    the conclusion (transversality for every t) is asserted numerically.
    """
    comps = _tensor_comps(J)
    B = frame.basis_all()
    M = np.linalg.solve(B, comps @ B)
    scale = max(1.0, float(np.max(np.abs(M))))
    viol = []
    for k in range(M.shape[0]):
        r1 = float(np.max(np.abs(M[k, :, 0])))   # J c' component
        r2 = float(np.max(np.abs(M[k, 0, 1:])))  # c'-component of Im J
        if max(r1, r2) > tol * scale:
            viol.append((float(frame.t_grid[k]), max(r1, r2)))
    out = {"transversal": not viol, "violations": viol}

    _, Phi = connection_and_phi_grid(frame.S, frame.base.pos[:, 0],
                                     frame.base.vel[:, 0])
    MPhi = np.linalg.solve(B, Phi @ B)
    phi_scale = max(1.0, float(np.max(np.abs(MPhi))))
    phi_ok = (float(np.max(np.abs(MPhi[:, :, 0]))) < tol * phi_scale
              and float(np.max(np.abs(MPhi[:, 0, 1:]))) < tol * phi_scale)
    nJ = (J.nablaJ.comps if isinstance(J, JacobiTensor) and J.nablaJ is not None
          else covariant_derivative(
              J.J if isinstance(J, JacobiTensor) else J).comps)
    MnJ0 = np.linalg.solve(B[0], nJ[0] @ B[0])
    init_ok = (float(np.max(np.abs(M[0, :, 0]))) < tol * scale
               and float(np.max(np.abs(M[0, 0, 1:]))) < tol * scale
               and float(np.max(np.abs(MnJ0[:, 0]))) < tol * max(1.0, np.max(np.abs(MnJ0)))
               and float(np.max(np.abs(MnJ0[0, 1:]))) < tol * max(1.0, np.max(np.abs(MnJ0))))
    out["hypotheses_hold"] = bool(phi_ok and init_ok)
    out["conclusion_matches"] = bool(not out["hypotheses_hold"] or out["transversal"])
    return out


def _window_slice(t_grid: np.ndarray, window) -> slice:
    if window is None:
        return slice(0, len(t_grid))
    a, b = float(window[0]), float(window[1])
    idx = np.nonzero((t_grid >= a - 1e-12) & (t_grid <= b + 1e-12))[0]
    if len(idx) < MIN_GRID:
        raise GridTooShort("window holds fewer than 5 grid points")
    return slice(int(idx[0]), int(idx[-1]) + 1)


def invert_transversal(J, frame: ParallelFrame, window=None,
                       det_floor: float = 1e-10) -> TensorAlongCurve:
    """Inverse of the transverse part of a transversal J on a window."""
    comps = _tensor_comps(J)
    sl = _window_slice(frame.t_grid, window)
    chk = check_transversality(J, frame)
    if not chk["transversal"]:
        bad = [t for t, _ in chk["violations"]
               if frame.t_grid[sl][0] - 1e-12 <= t <= frame.t_grid[sl][-1] + 1e-12]
        if bad:
            raise NotTransversal(f"transversality fails inside the window at {bad[:5]}")
    Mf = frame_matrix(comps, frame)[sl]
    dets = np.linalg.det(Mf)
    bad = np.nonzero(np.abs(dets) <= det_floor)[0]
    if len(bad):
        raise SingularAt([float(frame.t_grid[sl][k]) for k in bad])
    inv = np.linalg.inv(Mf)
    subframe = ParallelFrame(frame.S, _slice_record(frame.base, sl), frame.e[sl])
    chart = frame_to_chart(inv, subframe)
    return TensorAlongCurve((1, 1), frame.t_grid[sl], chart,
                            frame.base.pos[sl, 0], frame.base.vel[sl, 0],
                            frame.S, subframe)


def _slice_record(base: GeodesicRecord, sl: slice) -> GeodesicRecord:
    return GeodesicRecord(base.spray_label, base.r, base.n, base.t_grid[sl],
                          base.pos[sl], base.vel[sl], base.step,
                          base.truncated, base.exit_reason)


def riccati_residual(J, frame: ParallelFrame, window=None):
    """L = (nabla J) o J^{-1} on the window and the max norm of the Riccati
    defect nabla L + L^2 + Phi, all as parallel-frame matrices."""
    comps = _tensor_comps(J)
    sl = _window_slice(frame.t_grid, window)
    Mf = frame_matrix(comps, frame)[sl]
    dets = np.linalg.det(Mf)
    bad = np.nonzero(np.abs(dets) <= 1e-10)[0]
    if len(bad):
        raise SingularAt([float(frame.t_grid[sl][k]) for k in bad])
    if isinstance(J, JacobiTensor) and J.nablaJ is not None:
        nJ = J.nablaJ.comps
    else:
        nJ = covariant_derivative(J.J if isinstance(J, JacobiTensor) else J).comps
    nMf = frame_matrix(nJ, frame)[sl]
    Lf = nMf @ np.linalg.inv(Mf)
    h = frame.base.step
    _, Phi = connection_and_phi_grid(frame.S, frame.base.pos[sl, 0],
                                     frame.base.vel[sl, 0])
    B = frame.basis_all()[sl]
    Phif = np.linalg.solve(B, Phi @ B)[:, 1:, 1:]
    # parallel frame: nabla acts on frame matrices as d/dt
    defect = _ddt(Lf, h) + Lf @ Lf + Phif
    subframe = ParallelFrame(frame.S, _slice_record(frame.base, sl), frame.e[sl])
    L = TensorAlongCurve((1, 1), frame.t_grid[sl], frame_to_chart(Lf, subframe),
                         frame.base.pos[sl, 0], frame.base.vel[sl, 0],
                         frame.S, subframe)
    return L, float(np.max(np.abs(defect)))


# -- tensor <-> variation correspondence --------------------------------------

def tensor_from_variation(V: GeodesicVariation, frame: ParallelFrame,
                          hs: float = 1e-3) -> JacobiTensor:
    """Jacobi tensor of an (n-1)-parameter variation: J c' = 0 and
    J e_a = (d/ds^a) V at s = 0."""
    n = frame.S.n
    if V.k != n - 1:
        raise ValueError(f"variation needs {n - 1} parameters, has {V.k}")
    tv = V.t_grid()
    tf = frame.t_grid
    if len(tv) != len(tf) or np.max(np.abs(tv - tf)) > 1e-9:
        raise ValueError("variation and frame grids differ")
    T = len(tf)
    U = np.zeros((T, n, n))
    for a in range(1, n):
        d = mixed_derivative(V, (a,), hs)
        U[:, :, a] = d.values[:, 1]
    B = frame.basis_all()
    if np.min(np.abs(np.linalg.det(B))) < 1e-10:
        raise SingularFrame("degenerate frame under the variation")
    comps = U @ np.linalg.inv(B)
    JT = TensorAlongCurve((1, 1), tf, comps, frame.base.pos[:, 0],
                          frame.base.vel[:, 0], frame.S, frame)
    return JacobiTensor(JT, jacobi_equation_residual(JT))


def variation_from_tensor(J: JacobiTensor, frame: ParallelFrame,
                          eps0: float = 0.1, eps_floor: float = 1e-6) -> GeodesicVariation:
    """Geodesic variation whose parameter derivatives realize J e_a.

    The initial map linearizes the affine family
    U(t, s) = c(t0) + (t - t0) c'(t0) + sum_a (j_a(0) + (t - t0) j_a'(0)) s^a
    at t = t0: positions c(t0) + sum s^a j_a(0), velocities
    c'(t0) + sum s^a j_a'(0), with j_a = J e_a and j_a' = (nabla J - N J) e_a.
    """
    S = frame.S
    n = S.n
    chk = check_transversality(J, frame)
    if not chk["transversal"]:
        raise NotTransversal(f"J not transversal: {chk['violations'][:5]}")
    x0 = frame.base.pos[0, 0]
    y0 = frame.base.vel[0, 0]
    N0 = connection(S, x0, y0).N
    if J.nablaJ is not None:
        nJ0 = J.nablaJ.comps[0]
    else:
        nJ0 = covariant_derivative(J.J).comps[0]
    j0 = J.J.comps[0] @ frame.e[0]               # (n, n-1)
    jdot0 = (nJ0 - N0 @ J.J.comps[0]) @ frame.e[0]

    def init(s):
        s = np.asarray(s, float)
        return x0 + j0 @ s, y0 + jdot0 @ s

    eps = eps0
    while True:
        ok = True
        axes = [np.linspace(-0.9 * eps, 0.9 * eps, 5)] * (n - 1)
        for s in itertools.product(*axes):
            xs, vs = init(np.array(s))
            if np.linalg.norm(vs) < 1e-9 or np.linalg.norm(xs) >= S.chart_radius:
                ok = False
                break
        if ok:
            break
        eps /= 2.0
        if eps < eps_floor:
            raise ShrinkEpsilon("no valid parameter half-width found")
    t0, t1 = float(frame.t_grid[0]), float(frame.t_grid[-1])
    return GeodesicVariation(S, n - 1, eps, init, (t0, t1), frame.base.step,
                             t_init=t0)


def tensor_variation_roundtrip_residual(J: JacobiTensor, frame: ParallelFrame,
                                        hs: float = 1e-3) -> float:
    """Max defect of J e_a against the parameter derivatives of the
    variation rebuilt from J."""
    V = variation_from_tensor(J, frame)
    worst = 0.0
    n = frame.S.n
    je = J.J.comps @ frame.e  # (T, n, n-1)
    for a in range(1, n):
        d = mixed_derivative(V, (a,), hs)
        worst = max(worst, float(np.max(np.abs(d.values[:, 1] - je[:, :, a - 1]))))
    return worst


# -- connection map and shape operator ----------------------------------------

def connection_map(S: Semispray, xi: BundlePoint) -> BundlePoint:
    """K(x, y, X, Y) = (x, Y + N(y) X) on second-order points."""
    if xi.r != 2:
        raise BadOrder("connection map acts on order-2 points")
    x, y, X, Y = xi.blocks
    if np.linalg.norm(y) == 0.0:
        raise OutsideSlashed("connection map needs a nonzero velocity")
    N = connection(S, x, y).N
    return BundlePoint(S.n, 1, np.stack([x, Y + N @ X]))


def shape_operator(V: GeodesicVariation, window=None, hs: float = 1e-3,
                   det_floor: float = 1e-8) -> ShapeOperator:
    """Shape operator of the geodesic field Z = dV/dt along the central
    geodesic: A^i_j = dZ^i/dx^j + N^i_j(Z), with the space derivative
    obtained by pushing (t, s) finite differences through the chart of V.

    Reports the Riccati defect nabla A + A^2 + Phi over the window.
    """
    S = V.S
    n = S.n
    if V.k != n - 1:
        raise ValueError(f"variation needs {n - 1} parameters, has {V.k}")
    tg = V.t_grid()
    P0, W0 = V.sample(np.zeros(V.k))
    h = V.step
    # columns of DV and DZ in (t, s) coordinates
    DV = np.zeros((len(tg), n, n))
    DZ = np.zeros((len(tg), n, n))
    DV[:, :, 0] = W0                       # dV/dt = Z on the center line
    DZ[:, :, 0] = _ddt(W0, h)              # dZ/dt
    for a in range(1, n):
        s = np.zeros(V.k)
        s[a - 1] = hs
        Pp, Wp = V.sample(s)
        Pm, Wm = V.sample(-s)
        DV[:, :, a] = (Pp - Pm) / (2 * hs)
        DZ[:, :, a] = (Wp - Wm) / (2 * hs)
    sl = _window_slice(tg, window)
    dets = np.linalg.det(DV[sl])
    bad = np.nonzero(np.abs(dets) <= det_floor)[0]
    if len(bad):
        raise NotDiffeo(f"Jacobian degenerate at t = {[float(tg[sl][k]) for k in bad[:5]]}")
    N, Phi = connection_and_phi_grid(S, P0[sl], W0[sl])
    A = DZ[sl] @ np.linalg.inv(DV[sl]) + N
    nablaA = _ddt(A, h) + N @ A - A @ N
    defect = float(np.max(np.abs(nablaA + A @ A + Phi)))
    AT = TensorAlongCurve((1, 1), tg[sl], A, P0[sl], W0[sl], S)
    win = (float(tg[sl][0]), float(tg[sl][-1]))
    return ShapeOperator(AT, defect, win)


def check_J1_J2(V: GeodesicVariation, J: JacobiTensor, frame: ParallelFrame,
                window=None, hs: float = 1e-3):
    """Residuals of the two shape-operator identities on a window:
    A_Z = (nabla J) o J^{-1} as frame matrices, and the Liouville formula
    d/dt det J = trace(A_Z) det J for the transverse determinant.
    """
    A = shape_operator(V, window, hs)
    L, _ = riccati_residual(J, frame, window)
    sl = _window_slice(frame.t_grid, window)
    subframe = ParallelFrame(frame.S, _slice_record(frame.base, sl), frame.e[sl])
    Af = frame_matrix(A.A.comps, subframe)
    Lf = frame_matrix(L.comps, subframe)
    res_j1 = float(np.max(np.abs(Af - Lf)))
    Mf = frame_matrix(_tensor_comps(J), frame)[sl]
    dets = np.linalg.det(Mf)
    ddet = _ddt(dets, frame.base.step)
    trA = np.trace(Af, axis1=1, axis2=2)
    res_j2 = float(np.max(np.abs(ddet - trA * dets)))
    return res_j1, res_j2


# -- tubular charts -----------------------------------------------------------

def build_chart(J: JacobiTensor, frame: ParallelFrame, window=None,
                eps0: float = 0.1, eps_floor: float = 1e-6,
                grid_pts: int = 9, det_floor: float = 1e-8) -> Chart:
    """Coordinates (t, s) around a geodesic segment from an invertible J.

    The candidate map is the variation rebuilt from J; eps is bisected
    until the (t, s) Jacobian determinant clears det_floor on a sample grid
    and the sampled image points are pairwise distinct.  The t-coordinate
    lines are re-checked to be geodesics.
    """
    S = frame.S
    n = S.n
    sl = _window_slice(frame.t_grid, window)
    tg = frame.t_grid[sl]
    c = frame.base.pos[sl, 0]
    # self-intersection scan of the center line
    tsep = max(10 * frame.base.step, 0.1 * (tg[-1] - tg[0]))
    stride = max(1, len(tg) // 40)
    for i in range(0, len(tg), stride):
        for j in range(i + 1, len(tg), stride):
            if tg[j] - tg[i] > tsep and np.linalg.norm(c[j] - c[i]) < 1e-6:
                raise NotEmbeddable(f"center line self-intersects near t = {tg[i]:g}")
    invert_transversal(J, frame, window, det_floor=1e-10)
    V = variation_from_tensor(J, frame, eps0=eps0)

    tidx = np.unique(np.linspace(sl.start, sl.stop - 1, grid_pts).astype(int))
    eps = min(eps0, V.eps)
    hs = 1e-4
    while True:
        svals = [np.linspace(-0.9 * eps, 0.9 * eps, 5)] * (n - 1)
        samples = [np.array(s) for s in itertools.product(*svals)]
        ok = True
        jac_min = np.inf
        pts = []
        try:
            for s in samples:
                Pp = {}
                for a in range(n - 1):
                    da = np.zeros(n - 1)
                    da[a] = hs
                    Pp[a] = (V.sample(s + da)[0] - V.sample(s - da)[0]) / (2 * hs)
                P, W = V.sample(s)
                for k in tidx:
                    DV = np.empty((n, n))
                    DV[:, 0] = W[k]
                    for a in range(n - 1):
                        DV[:, a + 1] = Pp[a][k]
                    d = abs(np.linalg.det(DV))
                    jac_min = min(jac_min, d)
                    if d <= det_floor:
                        ok = False
                        break
                    pts.append(P[k])
                if not ok:
                    break
        except (DomainError, TruncatedVariation, OutsideSlashed):
            ok = False
        if ok:
            # injectivity: distinct (t, s) grid nodes map to distinct points
            arr = np.array(pts)
            d2 = np.sum((arr[:, None] - arr[None, :]) ** 2, axis=2)
            np.fill_diagonal(d2, np.inf)
            if np.min(d2) < 1e-18:
                ok = False
        if ok:
            break
        eps /= 2.0
        if eps < eps_floor:
            raise ChartFailed("no usable half-width above the floor")

    # t-lines are geodesics: residual of x'' + 2G = 0 on sampled members
    worst = 0.0
    h = V.step
    for s in itertools.product(*[(-0.5 * eps, 0.0, 0.5 * eps)] * (n - 1)):
        P, W = V.sample(np.array(s))
        acc = _ddt(W, h)
        g = np.stack(
            [np.asarray(gi, float) * np.ones(len(P))
             for gi in S.coefficients([P[:, i] for i in range(n)],
                                      [W[:, i] for i in range(n)])], axis=1)
        worst = max(worst,
                    float(np.max(np.abs(acc + 2.0 * g))),
                    float(np.max(np.abs(_ddt(P, h) - W))))
    return Chart(V, eps, (float(tg[0]), float(tg[-1])), float(jac_min), worst)


def conjugate_point_detector(S: Semispray, base: GeodesicRecord,
                             frame: ParallelFrame) -> list:
    """Zeros of det of the transverse frame matrix of the J with J(0) = 0,
    nabla J(0) = Id (sign changes located by linear interpolation)."""
    n = S.n
    J = integrate_jacobi_tensor(S, base, np.zeros((n, n)), np.eye(n))
    dets = np.linalg.det(frame_matrix(J.J.comps, frame))
    tg = frame.t_grid
    out = []
    for k in range(1, len(dets) - 1):
        if dets[k] == 0.0 and tg[k] > tg[0]:
            out.append(float(tg[k]))
        elif dets[k] * dets[k + 1] < 0.0:
            w = dets[k] / (dets[k] - dets[k + 1])
            out.append(float(tg[k] + w * (tg[k + 1] - tg[k])))
    return out
