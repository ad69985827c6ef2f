"""Named self-checks over every library invariant, runnable against any
spray configuration.

Each check measures a residual and compares it against a fixed threshold.
Checks that only make sense for 2-homogeneous coefficients are skipped for
general semisprays; checks that need a transverse direction are skipped in
dimension 1.  Results are returned in deterministic (registration) order
with the schema {check, status, residual, threshold, seconds}.
"""

from __future__ import annotations

import itertools
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import multidual as md
from .bundle import (BundlePoint, assemble, canonical_projection,
                     canonical_projection_recursive, disassemble, involution,
                     project, random_point, representative_map,
                     representative_map_recursive)
from .errors import JetsprayError, SingularAt
from .flow import (base_state, check_flow_lift, extract_jacobi_fields,
                   geodesic_residual, integrate_geodesic, project_record)
from .jacobi import (build_frame, check_transversality, covariant_derivative,
                     integrate_jacobi_tensor, jacobi_field_equivalence,
                     parallel_transport, riccati_residual, shape_operator,
                     check_J1_J2, frame_matrix, tensor_from_variation)
from .spray import (Semispray, classify_homogeneity, connection,
                    connection_and_phi, lifted_rhs)
from .variation import (GeodesicVariation, mixed_derivative,
                        projection_identity_check,
                        reconstruction_roundtrip_residual,
                        verify_variation_theorem_forward)

EXACT = 0.0


class _Skip(Exception):
    def __init__(self, reason):
        self.reason = reason
        super().__init__(reason)


class _Context:
    """Shared lazily computed artifacts for one spray."""

    def __init__(self, S: Semispray, seed: int = 0):
        self.S = S
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._cache = {}
        n = S.n
        x0 = 0.2 * np.ones(n) / np.sqrt(n)
        if np.isfinite(S.chart_radius):
            x0 = x0 * min(1.0, 0.1 * S.chart_radius / np.linalg.norm(x0))
        v0 = np.zeros(n)
        v0[n - 1] = 1.0
        if n > 1:
            v0[0] = 0.2
        self.x0, self.v0 = x0, v0
        self.step = 5e-3
        self.t1 = 1.5

    def _get(self, key, maker):
        if key not in self._cache:
            self._cache[key] = maker()
        return self._cache[key]

    @property
    def is_spray(self):
        return self._get("is_spray",
                         lambda: classify_homogeneity(self.S) == "spray")

    @property
    def base(self):
        return self._get("base", lambda: integrate_geodesic(
            self.S, 0, base_state(self.S.n, self.x0, self.v0),
            (0.0, self.t1), self.step))

    @property
    def frame(self):
        if self.S.n < 2:
            raise _Skip("needs dimension >= 2")
        return self._get("frame", lambda: build_frame(self.S, self.base))

    @property
    def transversal_tensor(self):
        def make():
            n = self.S.n
            fr = self.frame
            B0 = np.concatenate([self.v0[:, None], fr.e[0]], axis=1)
            proj = B0 @ np.diag([0.0] + [1.0] * (n - 1)) @ np.linalg.inv(B0)
            return integrate_jacobi_tensor(self.S, self.base,
                                           np.zeros((n, n)), proj)
        if self.S.n < 2:
            raise _Skip("needs dimension >= 2")
        return self._get("Jt", make)

    @property
    def variation(self):
        def make():
            n = self.S.n
            x0, v0 = self.x0, self.v0
            J = self.transversal_tensor
            fr = self.frame
            N0 = connection(self.S, x0, v0).N
            jdot0 = (J.nablaJ.comps[0] - N0 @ J.J.comps[0]) @ fr.e[0]

            def init(s):
                # sin keeps the family nonlinear in s even for linear flows,
                # so finite-difference order checks see a real truncation term
                s = np.asarray(s, float)
                return x0.copy(), v0 + jdot0 @ np.sin(s)

            return GeodesicVariation(self.S, n - 1, 0.2, init,
                                     (0.0, self.t1), self.step)
        if self.S.n < 2:
            raise _Skip("needs dimension >= 2")
        return self._get("variation", make)

    def random_lifted_state(self, r):
        xi = random_point(self.S.n, r, self.rng, slashed=True)
        eta = random_point(self.S.n, r, self.rng, slashed=True)
        blocks = 0.15 * xi.blocks
        blocks[0] = self.x0
        xi = BundlePoint(self.S.n, r, blocks)
        vb = 0.15 * eta.blocks
        vb[0] = self.v0
        return xi, BundlePoint(self.S.n, r, vb)


_CHECKS = []


def _check(name, threshold):
    def deco(fn):
        _CHECKS.append((name, threshold, fn))
        return fn
    return deco


# -- bundle structure maps (exact permutations) -------------------------------

def _max_diff(a: BundlePoint, b: BundlePoint) -> float:
    return float(np.max(np.abs(a.blocks - b.blocks)))


def _sample_points(ctx, rmin, rmax, count=20):
    for _ in range(count):
        r = int(ctx.rng.integers(rmin, rmax + 1))
        yield random_point(ctx.S.n, r, ctx.rng)


@_check("bundle.involution_squared", EXACT)
def _c_inv2(ctx):
    worst = 0.0
    for xi in _sample_points(ctx, 2, 4):
        for lvl in range(2, xi.r + 1):
            worst = max(worst, _max_diff(involution(involution(xi, lvl), lvl), xi))
    return worst


@_check("bundle.pi_after_dkappa", EXACT)
def _c_pidk(ctx):
    # dropping the top level commutes with the lifted involution one level down
    worst = 0.0
    for xi in _sample_points(ctx, 3, 4):
        lhs = project(involution(xi, xi.r - 1), "pi")
        rhs = involution(project(xi, "pi"), xi.r - 1)
        worst = max(worst, _max_diff(lhs, rhs))
    return worst


@_check("bundle.dpi_is_pi_after_kappa", EXACT)
def _c_dpi(ctx):
    worst = 0.0
    for xi in _sample_points(ctx, 2, 4):
        worst = max(worst, _max_diff(project(xi, "dpi"),
                                     project(involution(xi, xi.r), "pi")))
    return worst


@_check("bundle.pi_ddpi_exchange", EXACT)
def _c_piddpi(ctx):
    worst = 0.0
    for xi in _sample_points(ctx, 3, 4):
        lhs = project(project(xi, "pi"), "dpi")
        rhs = project(project(xi, "ddpi"), "pi")
        worst = max(worst, _max_diff(lhs, rhs))
    return worst


@_check("bundle.ddpi_kappa_exchange", EXACT)
def _c_ddpik(ctx):
    worst = 0.0
    for xi in _sample_points(ctx, 3, 4):
        lhs = project(involution(xi, xi.r), "ddpi")
        rhs = involution(project(xi, "ddpi"), xi.r - 1)
        worst = max(worst, _max_diff(lhs, rhs))
    return worst


@_check("bundle.pi_dpi_collapse", EXACT)
def _c_pidpi(ctx):
    worst = 0.0
    for xi in _sample_points(ctx, 2, 4):
        lhs = project(project(xi, "dpi"), "pi") if xi.r >= 2 else xi
        rhs = project(project(xi, "pi"), "pi") if xi.r >= 2 else xi
        worst = max(worst, _max_diff(lhs, rhs))
    return worst


@_check("bundle.canonical_projection_recursion", EXACT)
def _c_cprec(ctx):
    worst = 0.0
    for xi in _sample_points(ctx, 1, 4):
        for a in range(1, xi.r + 1):
            worst = max(worst, _max_diff(canonical_projection(xi, a),
                                         canonical_projection_recursive(xi, a)))
    return worst


@_check("bundle.canonical_projections_distinct", 0.5)
def _c_cpdist(ctx):
    # 0.0 iff every pair of projections is separated by some sample point
    for r in range(2, 5):
        pts = [random_point(ctx.S.n, r, ctx.rng) for _ in range(50)]
        for a in range(1, r + 1):
            for b in range(a + 1, r + 1):
                if not any(_max_diff(canonical_projection(p, a),
                                     canonical_projection(p, b)) > 1e-9
                           for p in pts):
                    return 1.0
    return 0.0


@_check("bundle.canonical_projection_base", EXACT)
def _c_cpbase(ctx):
    worst = 0.0
    for xi in _sample_points(ctx, 1, 4):
        for a in range(1, xi.r + 1):
            worst = max(worst, float(np.max(np.abs(
                canonical_projection(xi, a).base - xi.base))))
    return worst


@_check("bundle.canonical_projection_extremes", EXACT)
def _c_cpext(ctx):
    # first projection = full descent by pi; last = the top-level derivative pair
    worst = 0.0
    for xi in _sample_points(ctx, 2, 4):
        down = xi
        for _ in range(xi.r - 1):
            down = project(down, "pi")
        worst = max(worst, _max_diff(canonical_projection(xi, 1), down))
        expect = BundlePoint(xi.n, 1, np.stack([xi.blocks[0],
                                                xi.blocks[1 << (xi.r - 1)]]))
        worst = max(worst, _max_diff(canonical_projection(xi, xi.r), expect))
    return worst


@_check("bundle.representative_map_recursion", 1e-12)
def _c_repmap(ctx):
    worst = 0.0
    for xi in _sample_points(ctx, 1, 4):
        W1 = representative_map(xi)
        W2 = representative_map_recursive(xi)
        for _ in range(5):
            s = ctx.rng.uniform(-1, 1, xi.r)
            worst = max(worst, float(np.max(np.abs(W1(*s) - W2(*s)))))
    return worst


@_check("bundle.json_roundtrip", EXACT)
def _c_json(ctx):
    worst = 0.0
    for xi in _sample_points(ctx, 0, 4, count=5):
        worst = max(worst, _max_diff(BundlePoint.from_json(xi.to_json()), xi))
    return worst


# -- multidual arithmetic ------------------------------------------------------

@_check("multidual.product_reference", 1e-13)
def _c_mdprod(ctx):
    worst = 0.0
    for _ in range(20):
        r = int(ctx.rng.integers(1, 5))
        a = md.MultidualValue(r, ctx.rng.standard_normal(1 << r))
        b = md.MultidualValue(r, ctx.rng.standard_normal(1 << r))
        ref = np.zeros(1 << r)
        for A in range(1 << r):
            B = A
            while True:  # enumerate submasks of A
                ref[A] += a.blocks[B] * b.blocks[A ^ B]
                if B == 0:
                    break
                B = (B - 1) & A
        worst = max(worst, float(np.max(np.abs((a * b).blocks - ref))))
    return worst


@_check("multidual.exp_ln_roundtrip", 1e-12)
def _c_mdexpln(ctx):
    worst = 0.0
    for _ in range(20):
        r = int(ctx.rng.integers(1, 5))
        a = md.MultidualValue(r, ctx.rng.standard_normal(1 << r))
        worst = max(worst, float(np.max(np.abs(md.ln(md.exp(a)).blocks - a.blocks))))
    return worst


@_check("multidual.sin_cos_identity", 1e-13)
def _c_mdtrig(ctx):
    worst = 0.0
    for _ in range(20):
        r = int(ctx.rng.integers(1, 5))
        a = md.MultidualValue(r, ctx.rng.standard_normal(1 << r))
        one = md.sin(a) * md.sin(a) + md.cos(a) * md.cos(a)
        expect = np.zeros(1 << r)
        expect[0] = 1.0
        worst = max(worst, float(np.max(np.abs(one.blocks - expect))))
    return worst


# -- spray coefficients ---------------------------------------------------------

@_check("spray.lifted_rhs_matches_function_lift", 1e-13)
def _c_liftrhs(ctx):
    S = ctx.S
    worst = 0.0
    for _ in range(20):
        xi, eta = ctx.random_lifted_state(1)
        acc = lifted_rhs(S, 1, xi, eta)
        # bitmask-block layout of the assembled order-2 point
        flat = list(np.concatenate([xi.blocks, eta.blocks]).reshape(-1))
        for i in range(S.n):
            fi = lambda *c, i=i: S.coefficients(
                [c[j] for j in range(S.n)],
                [c[S.n + j] for j in range(S.n)])[i]
            vert = md.lift(fi, "vertical", s=1)(*flat)
            comp = md.lift(fi, "complete", s=1)(*flat)
            worst = max(worst, abs(-2.0 * vert - acc.blocks[0, i]),
                        abs(-2.0 * comp - acc.blocks[1, i]))
    return worst


@_check("spray.connection_matches_fd", 1e-6)
def _c_nfd(ctx):
    S = ctx.S
    x, y = ctx.x0, ctx.v0
    N = connection(S, x, y).N
    h = 1e-5

    def G(x, y):
        return np.array([float(v) for v in S.coefficients(list(x), list(y))])

    worst = 0.0
    scale = max(1.0, float(np.max(np.abs(N))))
    for j in range(S.n):
        e = np.zeros(S.n)
        e[j] = h
        col = (G(x, y + e) - G(x, y - e)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(col - N[:, j]))) / scale)
    return worst


@_check("spray.phi_matches_fd", 1e-5)
def _c_phifd(ctx):
    S = ctx.S
    x, y = ctx.x0, ctx.v0
    _, Phi = connection_and_phi(S, x, y)
    h = 1e-4

    def G(x, y):
        return np.array([float(v) for v in S.coefficients(list(x), list(y))])

    def Nfd(x, y):
        out = np.zeros((S.n, S.n))
        for j in range(S.n):
            e = np.zeros(S.n)
            e[j] = h
            out[:, j] = (G(x, y + e) - G(x, y - e)) / (2 * h)
        return out

    Gx = np.zeros((S.n, S.n))
    for j in range(S.n):
        e = np.zeros(S.n)
        e[j] = h
        Gx[:, j] = (G(x + e, y) - G(x - e, y)) / (2 * h)
    a = -2.0 * G(x, y)
    SN = (Nfd(x + h * y, y + h * a) - Nfd(x - h * y, y - h * a)) / (2 * h)
    N = Nfd(x, y)
    ref = 2.0 * Gx - SN - N @ N
    return float(np.max(np.abs(ref - Phi))) / max(1.0, float(np.max(np.abs(ref))))


@_check("spray.phi_kills_velocity", 1e-8)
def _c_phiy(ctx):
    if not ctx.is_spray:
        raise _Skip("2-homogeneous coefficients only")
    _, Phi = connection_and_phi(ctx.S, ctx.x0, ctx.v0)
    return float(np.max(np.abs(Phi @ ctx.v0)))


# -- flow ------------------------------------------------------------------------

@_check("flow.geodesic_residual_r0", 1e-6)
def _c_res0(ctx):
    return geodesic_residual(ctx.base, ctx.S)


@_check("flow.geodesic_residual_r2", 1e-6)
def _c_res2(ctx):
    xi, eta = ctx.random_lifted_state(2)
    g = integrate_geodesic(ctx.S, 2, (xi, eta), (0.0, 1.0), ctx.step)
    ctx._cache["g2"] = g
    return geodesic_residual(g, ctx.S)


@_check("flow.projections_are_geodesics", 1e-6)
def _c_proj(ctx):
    g = ctx._cache.get("g2")
    if g is None:
        xi, eta = ctx.random_lifted_state(2)
        g = integrate_geodesic(ctx.S, 2, (xi, eta), (0.0, 1.0), ctx.step)
    worst = 0.0
    for kind in ("pi", "dpi"):
        worst = max(worst, geodesic_residual(project_record(g, kind), ctx.S))
    for rec in extract_jacobi_fields(g):
        worst = max(worst, geodesic_residual(rec, ctx.S))
    return worst


@_check("flow.flow_lift_identity", 1e-4)
def _c_flowlift(ctx):
    xi, eta = ctx.random_lifted_state(1)
    point = assemble(xi, eta)
    return check_flow_lift(ctx.S, 0, point, 0.5, step=2e-3)


@_check("flow.rk4_order", 0.5)
def _c_rk4(ctx):
    # 0.0 iff the error ratio under step halving is >= 8 (4th order)
    ref = integrate_geodesic(ctx.S, 0, base_state(ctx.S.n, ctx.x0, ctx.v0),
                             (0.0, 1.0), 6.25e-4)
    errs = []
    for h in (1e-2, 5e-3):
        g = integrate_geodesic(ctx.S, 0, base_state(ctx.S.n, ctx.x0, ctx.v0),
                               (0.0, 1.0), h)
        errs.append(float(np.max(np.abs(g.pos[-1] - ref.pos[-1]))))
    if errs[0] < 1e-13:
        return 0.0  # integrator is exact for this flow
    return 0.0 if errs[0] / max(errs[1], 1e-300) >= 8.0 else 1.0


# -- variations -------------------------------------------------------------------

@_check("variation.forward_theorem_r1", 1e-5)
def _c_fwd1(ctx):
    return verify_variation_theorem_forward(ctx.variation, (1,))


@_check("variation.reconstruction_roundtrip_r1", 1e-3)
def _c_rt1(ctx):
    xi, eta = ctx.random_lifted_state(1)
    g = integrate_geodesic(ctx.S, 1, (xi, eta), (0.0, 1.0), ctx.step)
    return reconstruction_roundtrip_residual(ctx.S, g)


@_check("variation.fd_order", 0.5)
def _c_fdorder(ctx):
    # 0.0 iff the residual improves >= 3.5x when the parameter step halves
    ra = verify_variation_theorem_forward(ctx.variation, (1,), hs=0.1,
                                          richardson=False)
    rb = verify_variation_theorem_forward(ctx.variation, (1,), hs=0.05,
                                          richardson=False)
    if ra < 1e-12:
        return 0.0  # derivative is exact for this family
    return 0.0 if ra / max(rb, 1e-300) >= 3.5 else 1.0


@_check("variation.projection_identity", 1e-8)
def _c_projid(ctx):
    if ctx.S.n < 2 or ctx.variation.k < 2:
        raise _Skip("needs a 2-parameter variation")
    return projection_identity_check(ctx.variation, 2)


# -- jacobi tensors --------------------------------------------------------------

@_check("jacobi.parallel_transport_nabla", 1e-7)
def _c_ptn(ctx):
    v = parallel_transport(ctx.S, ctx.base, ctx.v0 + 0.3)
    return float(np.max(np.abs(covariant_derivative(v).comps[4:-4])))


@_check("jacobi.nabla_velocity", 1e-7)
def _c_ncdot(ctx):
    if not ctx.is_spray:
        raise _Skip("2-homogeneous coefficients only")
    from .jacobi import TensorAlongCurve
    cdot = TensorAlongCurve((1, 0), ctx.base.t_grid, ctx.base.vel[:, 0],
                            ctx.base.pos[:, 0], ctx.base.vel[:, 0], ctx.S)
    return float(np.max(np.abs(covariant_derivative(cdot).comps[4:-4])))


@_check("jacobi.leibniz", 1e-6)
def _c_leibniz(ctx):
    from .jacobi import TensorAlongCurve
    T = len(ctx.base)
    tg = ctx.base.t_grid
    n = ctx.S.n
    # smooth synthetic J and v along the curve
    Jc = np.einsum("t,ij->tij", 1.0 + 0.3 * np.sin(tg), np.eye(n)) \
        + np.einsum("t,ij->tij", 0.2 * np.cos(tg),
                    ctx.rng.standard_normal((n, n)))
    vc = np.stack([np.cos((k + 1) * tg) + 0.1 * k for k in range(n)]).T
    pos, vel = ctx.base.pos[:, 0], ctx.base.vel[:, 0]
    J = TensorAlongCurve((1, 1), tg, Jc, pos, vel, ctx.S)
    v = TensorAlongCurve((1, 0), tg, vc, pos, vel, ctx.S)
    Jv = TensorAlongCurve((1, 0), tg, np.einsum("tij,tj->ti", Jc, vc),
                          pos, vel, ctx.S)
    lhs = covariant_derivative(Jv).comps
    rhs = np.einsum("tij,tj->ti", covariant_derivative(J).comps, vc) \
        + np.einsum("tij,tj->ti", Jc, covariant_derivative(v).comps)
    return float(np.max(np.abs(lhs[4:-4] - rhs[4:-4])))


@_check("jacobi.definition_residual", 1e-6)
def _c_jdef(ctx):
    return ctx.transversal_tensor.residual


@_check("jacobi.field_equivalence", 1e-5)
def _c_jfe(ctx):
    e1 = parallel_transport(ctx.S, ctx.base, ctx.frame.e[0][:, 0])
    return jacobi_field_equivalence(ctx.S, ctx.base, e1, ctx.transversal_tensor)


@_check("jacobi.transversality_preserved_by_nabla", 0.5)
def _c_tpn(ctx):
    J = ctx.transversal_tensor
    chk = check_transversality(covariant_derivative(J.J), ctx.frame)
    return 0.0 if chk["transversal"] else 1.0


@_check("jacobi.riccati_defect", 1e-4)
def _c_ricc(ctx):
    J = ctx.transversal_tensor
    try:
        _, res = riccati_residual(J, ctx.frame, (0.3, ctx.t1))
    except SingularAt as exc:
        raise _Skip(f"transverse part singular: {exc}")
    return res


@_check("jacobi.shape_operator_consistency", 1e-4)
def _c_shape(ctx):
    J = ctx.transversal_tensor
    try:
        j1, _ = check_J1_J2(ctx.variation, J, ctx.frame, (0.3, ctx.t1))
    except (SingularAt, JetsprayError) as exc:
        raise _Skip(str(exc))
    return j1


@_check("jacobi.liouville_determinant", 1e-4)
def _c_liou(ctx):
    J = ctx.transversal_tensor
    try:
        _, j2 = check_J1_J2(ctx.variation, J, ctx.frame, (0.3, ctx.t1))
    except (SingularAt, JetsprayError) as exc:
        raise _Skip(str(exc))
    return j2


@_check("jacobi.tensor_from_variation_residual", 1e-4)
def _c_tfv(ctx):
    J = tensor_from_variation(ctx.variation, ctx.frame)
    return J.residual


# -- runner ----------------------------------------------------------------------

def run_checks(S: Semispray, names=None, seed: int = 0,
               threads: int = None) -> list:
    """Run all (or the named) checks against one spray.

    Returns a list of dicts {check, status, residual, threshold, seconds}
    in registration order.  Worker count comes from `threads` or the
    JETSPRAY_THREADS environment variable (default 1).
    """
    ctx = _Context(S, seed)
    selected = [(n, th, f) for (n, th, f) in _CHECKS
                if names is None or n in names]
    if threads is None:
        threads = int(os.environ.get("JETSPRAY_THREADS", "1"))

    def run_one(item):
        name, threshold, fn = item
        t0 = time.perf_counter()
        try:
            residual = float(fn(ctx))
            status = "pass" if residual <= threshold else "fail"
        except _Skip as exc:
            residual, status = float("nan"), "skip"
        except JetsprayError:
            residual, status = float("inf"), "fail"
        return {"check": name, "status": status, "residual": residual,
                "threshold": threshold,
                "seconds": round(time.perf_counter() - t0, 4)}

    if threads > 1:
        # prime the shared lazy artifacts once to keep workers independent
        for attr in ("base", "frame", "transversal_tensor", "variation"):
            try:
                getattr(ctx, attr)
            except (_Skip, JetsprayError):
                pass
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run_one, selected))
    return [run_one(item) for item in selected]


def all_check_names() -> list:
    return [name for name, _, _ in _CHECKS]
