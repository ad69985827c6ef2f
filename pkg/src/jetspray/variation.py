"""k-parameter geodesic variations and both directions of the
variation <-> lifted-geodesic correspondence.

A variation is stored by its initial-condition map s -> (x0, v0); each
parameter value is realized by integrating the base geodesic.  Mixed
parameter derivatives at s = 0 are taken with central finite differences
(one Richardson level) and assembled into order-r bundle points, with the
innermost derivative on bit 1.  The reverse direction reconstructs a
variation from an S^(r) geodesic through the multilinear representative
map of its initial state.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bundle import BundlePoint, representative_map
from .errors import DepthCap, DomainError, ShrinkEpsilon, TruncatedVariation
from .flow import GeodesicRecord, integrate_geodesic
from .spray import Semispray

FD_DEPTH_CAP = 3

# central stencils (offset -> weight), premultiplied by h^-m at use site
_STENCILS = {
    1: {-1: -0.5, 1: 0.5},
    2: {-1: 1.0, 0: -2.0, 1: 1.0},
    3: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
}


@dataclass
class GeodesicVariation:
    """Family of geodesics init(s) integrated over a common time window."""

    S: Semispray
    k: int
    eps: float
    init: Callable[[np.ndarray], tuple]  # s -> (x0, v0) chart vectors
    t_span: tuple
    step: float
    t_init: Optional[float] = None  # time at which init(s) holds; t_span[0] if None
    _cache: dict = field(default_factory=dict, repr=False)

    def _key(self, s: np.ndarray) -> tuple:
        return tuple(np.round(np.asarray(s, float), 14))

    def t_grid(self) -> np.ndarray:
        t0, t1 = self.t_span
        nsteps = max(1, int(round((t1 - t0) / self.step)))
        return t0 + (t1 - t0) * np.arange(nsteps + 1) / nsteps

    def ensure(self, svalues) -> None:
        """Integrate (in one vectorized batch) all missing parameter values."""
        missing = [s for s in svalues if self._key(s) not in self._cache]
        if not missing:
            return
        X0 = np.empty((len(missing), self.S.n))
        V0 = np.empty((len(missing), self.S.n))
        for m, s in enumerate(missing):
            X0[m], V0[m] = self.init(np.asarray(s, float))
        t0, t1 = self.t_span
        ti = t0 if self.t_init is None else self.t_init
        if ti <= t0 + 1e-12 * self.step:
            P, V = _integrate_base_batch(self.S, X0, V0, (t0, t1), self.step)
        else:
            # init holds in the window interior: integrate both directions
            Pb, Vb = _integrate_base_batch(self.S, X0, V0, (ti, t0), self.step)
            Pf, Vf = _integrate_base_batch(self.S, X0, V0, (ti, t1), self.step)
            P = np.concatenate([Pb[:0:-1], Pf])
            V = np.concatenate([Vb[:0:-1], Vf])
        for m, s in enumerate(missing):
            self._cache[self._key(s)] = (P[:, m], V[:, m])

    def sample(self, s):
        """(positions, velocities) arrays of shape (T, n) at parameter s."""
        self.ensure([s])
        return self._cache[self._key(s)]

    def evaluate(self, t: float, s) -> np.ndarray:
        """V(t, s): position of the s-geodesic at time t (grid-aligned)."""
        s = np.asarray(s, float).reshape(self.k)
        if np.any(np.abs(s) >= self.eps):
            raise DomainError(f"parameter outside (-{self.eps}, {self.eps})^k")
        grid = self.t_grid()
        idx = int(round((t - grid[0]) / self.step))
        if not 0 <= idx < len(grid) or abs(grid[idx] - t) > 1e-9:
            raise DomainError(f"time {t} not on the variation grid")
        return self.sample(s)[0][idx]


def _integrate_base_batch(S: Semispray, X0: np.ndarray, V0: np.ndarray,
                          t_span, step: float):
    """RK4 for a batch of base geodesics at once.

    Coefficient maps are written componentwise over generic scalars, so
    feeding them numpy arrays integrates every member of the batch in the
    same pass.  Returns (pos, vel) of shape (T, m, n).
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    nsteps = max(1, int(round(abs(t1 - t0) / step)))
    h = (t1 - t0) / nsteps  # signed: t1 < t0 integrates backward
    n = S.n

    def rhs(X, V):
        g = S.coefficients([X[:, i] for i in range(n)], [V[:, i] for i in range(n)])
        out = np.empty_like(X)
        for i in range(n):
            out[:, i] = -2.0 * np.asarray(g[i], float)
        return out

    X, V = X0.copy(), V0.copy()
    P = [X.copy()]
    W = [V.copy()]
    for _ in range(nsteps):
        try:
            a1 = rhs(X, V)
            X2, V2 = X + 0.5 * h * V, V + 0.5 * h * a1
            a2 = rhs(X2, V2)
            X3, V3 = X + 0.5 * h * V2, V + 0.5 * h * a2
            a3 = rhs(X3, V3)
            X4, V4 = X + h * V3, V + h * a3
            a4 = rhs(X4, V4)
        except DomainError as exc:
            raise TruncatedVariation(str(exc)) from exc
        X = X + (h / 6.0) * (V + 2 * V2 + 2 * V3 + V4)
        V = V + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
        if np.any(np.linalg.norm(V, axis=1) < 1e-12):
            raise TruncatedVariation("a member geodesic left the slashed region")
        if np.any(np.linalg.norm(X, axis=1) >= S.chart_radius):
            raise TruncatedVariation("a member geodesic left the chart")
        P.append(X.copy())
        W.append(V.copy())
    return np.array(P), np.array(W)


@dataclass
class DerivedCurve:
    """Mixed-derivative curve of a variation: an order-r path in T^rM."""

    r: int
    n: int
    t_grid: np.ndarray
    values: np.ndarray      # (T, 2^r, n) positions
    velocities: np.ndarray  # (T, 2^r, n) fiber velocities (derivatives of d_t V)

    def value_point(self, k: int) -> BundlePoint:
        return BundlePoint(self.n, self.r, self.values[k])

    def velocity_point(self, k: int) -> BundlePoint:
        return BundlePoint(self.n, self.r, self.velocities[k])


def _block_multiset(indices, mask: int) -> tuple:
    """Parameters (with multiplicity) differentiating block `mask`.

    bit j of a mask pairs with the (r-j+1)-th listed index, so bit 1 is the
    innermost derivative.
    """
    r = len(indices)
    params = [indices[r - j] for j in range(1, r + 1) if mask & (1 << (j - 1))]
    counts = {}
    for p in params:
        counts[p] = counts.get(p, 0) + 1
    return tuple(sorted(counts.items()))


def _stencil_for(counts) -> list:
    """Tensor-product stencil: list of (offsets-by-param dict, weight)."""
    pieces = []
    for p, m in counts:
        if m > 3:
            raise DepthCap(f"derivative multiplicity {m} > 3")
        pieces.append([(p, off, wgt) for off, wgt in _STENCILS[m].items()])
    out = []
    for combo in itertools.product(*pieces) if pieces else [()]:
        offsets = {}
        weight = 1.0
        for p, off, wgt in combo:
            offsets[p] = offsets.get(p, 0) + off
            weight *= wgt
        out.append((offsets, weight))
    return out


def _mixed_fd(V: GeodesicVariation, indices, hs: float):
    """One-h mixed finite difference of positions and velocities, all blocks."""
    r = len(indices)
    k = V.k
    plans = {}
    needed = []
    for mask in range(1 << r):
        counts = _block_multiset(indices, mask)
        order = sum(m for _, m in counts)
        stencil = _stencil_for(counts)
        plans[mask] = (stencil, order)
        for offsets, _ in stencil:
            s = np.zeros(k)
            for p, off in offsets.items():
                s[p - 1] += off * hs
            needed.append(s)
    V.ensure(needed)
    T = len(V.t_grid())
    vals = np.zeros((T, 1 << r, V.S.n))
    vels = np.zeros((T, 1 << r, V.S.n))
    for mask, (stencil, order) in plans.items():
        scale = hs ** order
        for offsets, weight in stencil:
            s = np.zeros(k)
            for p, off in offsets.items():
                s[p - 1] += off * hs
            P, W = V.sample(s)
            vals[:, mask] += (weight / scale) * P
            vels[:, mask] += (weight / scale) * W
    return vals, vels


def mixed_derivative(V: GeodesicVariation, indices, hs: float = 1e-3,
                     richardson: bool = True) -> DerivedCurve:
    """d_{s^{i_1}} ... d_{s^{i_r}} V at s = 0 as an order-r curve.

    Central differences in each listed parameter; one Richardson level by
    default.  Repeated indices are allowed and become higher-order partials.
    """
    r = len(indices)
    if r < 1 or r > FD_DEPTH_CAP:
        raise DepthCap(f"derivative depth {r} outside [1, {FD_DEPTH_CAP}]")
    if any(not 1 <= i <= V.k for i in indices):
        raise ValueError("index out of range for the variation parameters")
    vals, vels = _mixed_fd(V, indices, hs)
    if richardson:
        vals2, vels2 = _mixed_fd(V, indices, hs / 2.0)
        vals = (4.0 * vals2 - vals) / 3.0
        vels = (4.0 * vels2 - vels) / 3.0
    return DerivedCurve(r, V.S.n, V.t_grid(), vals, vels)


def verify_variation_theorem_forward(V: GeodesicVariation, indices,
                                     hs: float = 1e-3,
                                     richardson: bool = True) -> float:
    """Max block discrepancy between the mixed-derivative curve and the
    S^(r) geodesic integrated from the derived initial state."""
    d = mixed_derivative(V, indices, hs, richardson)
    xi0 = d.value_point(0)
    eta0 = d.velocity_point(0)
    g = integrate_geodesic(V.S, d.r, (xi0, eta0),
                           (d.t_grid[0], d.t_grid[-1]), V.step)
    if g.truncated:
        raise TruncatedVariation(f"lifted geodesic truncated: {g.exit_reason}")
    return float(np.max(np.abs(g.pos - d.values)))


def variation_from_geodesic(S: Semispray, g: GeodesicRecord,
                            eps0: float = 0.1, eps_floor: float = 1e-6,
                            extend: bool = True) -> GeodesicVariation:
    """Reconstruct an r-parameter geodesic variation whose mixed derivative
    reproduces the given S^(r) geodesic.

    The initial condition map comes from the multilinear representative maps
    of the initial position and velocity blocks; eps is halved until every
    init(s) on a 5^r sample grid is slashed and chart-interior.
    """
    r = g.r
    Wx = representative_map(g.pos_point(0))
    Wv = representative_map(g.vel_point(0))

    def init(s):
        return Wx(*s), Wv(*s)

    eps = eps0
    while True:
        ok = True
        axes = [np.linspace(-0.9 * eps, 0.9 * eps, 5)] * r
        for s in itertools.product(*axes):
            x0, v0 = init(s)
            if np.linalg.norm(v0) < 1e-9 or np.linalg.norm(x0) >= S.chart_radius:
                ok = False
                break
        if ok:
            break
        eps /= 2.0
        if eps < eps_floor:
            raise ShrinkEpsilon("no valid parameter half-width found")
    t0, t1 = float(g.t_grid[0]), float(g.t_grid[-1])
    if extend:
        t0 -= g.step
        t1 += g.step
    return GeodesicVariation(S, r, eps, init, (t0, t1), g.step,
                             t_init=float(g.t_grid[0]))


def reconstruction_roundtrip_residual(S: Semispray, g: GeodesicRecord,
                                      hs: float = 1e-3) -> float:
    """Residual of the reconstruction round trip: the mixed derivative of
    the rebuilt variation against the source geodesic positions."""
    V = variation_from_geodesic(S, g)
    d = mixed_derivative(V, tuple(range(1, g.r + 1)), hs)
    # the rebuilt window is one step wider on each side; align on g's grid
    off = int(round((g.t_grid[0] - d.t_grid[0]) / g.step))
    vals = d.values[off:off + len(g.t_grid)]
    return float(np.max(np.abs(vals - g.pos)))


def projection_identity_check(V: GeodesicVariation, r: int,
                              hs: float = 1e-3) -> float:
    """Residual of p^(r)_a applied to the full mixed derivative against the
    directly differentiated single-parameter curves."""
    if r > FD_DEPTH_CAP:
        raise DepthCap(f"depth {r} > {FD_DEPTH_CAP}")
    full = mixed_derivative(V, tuple(range(1, r + 1)), hs)
    worst = 0.0
    for a in range(1, r + 1):
        single = mixed_derivative(V, (r - a + 1,), hs)
        proj_vals = full.values[:, [0, 1 << (a - 1)]]
        worst = max(worst, float(np.max(np.abs(proj_vals - single.values))))
    return worst
