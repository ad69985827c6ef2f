"""End-to-end acceptance checks.

Each test covers one numbered criterion, prints a single pass/fail line,
and enforces both the residual tolerance and a wall-clock budget.
Run with `pytest -s tests/test_acceptance.py` to see the lines live.
"""

import time

import numpy as np
import pytest

from geom_oracles import sphere_geodesic, unit_velocity
from jetspray import multidual as md
from jetspray.bundle import (BundlePoint, canonical_projection,
                             canonical_projection_recursive, involution,
                             project, random_point)
from jetspray.flow import (base_state, check_flow_lift, extract_jacobi_fields,
                           geodesic_residual, integrate_geodesic,
                           involute_record, project_record)
from jetspray.jacobi import (build_chart, build_frame, check_J1_J2,
                             frame_matrix, integrate_jacobi_tensor,
                             riccati_residual, variation_from_tensor)
from jetspray.spray import (constant_curvature_spray, damped_semispray,
                            flat_spray, lifted_rhs)
from jetspray.variation import (GeodesicVariation,
                                reconstruction_roundtrip_residual,
                                verify_variation_theorem_forward)

PROJ = np.array([[1.0, 0.0], [0.0, 0.0]])


def _report(num, name, ok, detail):
    line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {name}  ({detail})"
    print(line)
    assert ok, line


def _four_sprays():
    return [("flat", flat_spray(2)),
            ("curv+1", constant_curvature_spray(2, 1.0)),
            ("curv-1", constant_curvature_spray(2, -1.0)),
            ("damped", damped_semispray(2, 1.0))]


def _bent_family(S, x0, v0, k, t_span, step):
    x0 = np.asarray(x0, float)
    v0 = np.asarray(v0, float)
    w1 = np.array([-v0[1], v0[0]])

    def init(s):
        v = v0 + np.sin(s[0]) * w1
        if len(s) > 1:
            v = v + np.sin(s[1]) * v0
        return x0 + 0.2 * np.array([np.sin(s[0]), 0.0]), v

    return GeodesicVariation(S, k, 0.3, init, t_span, step)


def _unit_base(S, K, t1, step):
    x0 = np.array([1.0, 0.0])
    v0 = unit_velocity(x0, [0.0, 1.0], K)
    base = integrate_geodesic(S, 0, base_state(2, x0, v0), (0.0, t1), step)
    return base, build_frame(S, base)


# -- 1: structure maps --------------------------------------------------------------


def test_criterion_01_structure_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    bad = 0
    for _ in range(100):
        n = int(rng.integers(1, 4))
        r = int(rng.integers(3, 5))
        xi = random_point(n, r, rng)
        for lvl in range(2, r + 1):
            k2 = involution(involution(xi, lvl), lvl)
            bad += not np.array_equal(k2.blocks, xi.blocks)
        pairs = [
            (project(involution(xi, r - 1), "pi"),
             involution(project(xi, "pi"), r - 1)),
            (project(xi, "dpi"), project(involution(xi, r), "pi")),
            (project(project(xi, "dpi"), "pi"),
             project(project(xi, "pi"), "pi")),
            (project(project(xi, "pi"), "dpi"),
             project(project(xi, "ddpi"), "pi")),
            (project(involution(xi, r), "ddpi"),
             involution(project(xi, "ddpi"), r - 1)),
        ]
        bad += sum(not np.array_equal(a.blocks, b.blocks) for a, b in pairs)
        for a in range(1, r + 1):
            got = canonical_projection(xi, a)
            ref = canonical_projection_recursive(xi, a)
            bad += not np.array_equal(got.blocks, ref.blocks)
            bad += not np.array_equal(got.blocks[0], xi.blocks[0])
    dt = time.perf_counter() - t0
    _report(1, "structure-map identities exact on random points",
            bad == 0 and dt < 1.0, f"violations={bad}, {dt:.2f}s of 1s")


# -- 2: lifted right-hand side vs function lifts ----------------------------------------


def _lift_oracle(S, pos, vel):
    n = S.n

    def f(i):
        def fi(*coords):
            return S.coefficients(list(coords[:n]), list(coords[n:]))[i]
        return fi

    coords = [float(v) for blk in (pos.blocks[0], pos.blocks[1],
                                   vel.blocks[0], vel.blocks[1]) for v in blk]
    acc = np.zeros((2, n))
    for i in range(n):
        acc[0, i] = -2.0 * md.lift(f(i), "vertical", s=1)(*coords)
        acc[1, i] = -2.0 * md.lift(f(i), "complete", s=1)(*coords)
    return acc


def test_criterion_02_first_lift_matches_function_lifts():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    sprays = [s for _, s in _four_sprays()] + [constant_curvature_spray(3, -1.0)]
    for S in sprays:
        for _ in range(100):
            pos = BundlePoint(S.n, 1, 0.4 * rng.standard_normal((2, S.n)))
            vel = random_point(S.n, 1, rng, slashed=True)
            got = lifted_rhs(S, 1, pos, vel).blocks
            worst = max(worst, float(np.max(np.abs(got - _lift_oracle(S, pos, vel)))))
    dt = time.perf_counter() - t0
    _report(2, "lifted acceleration matches independent function lifts",
            worst < 1e-13 and dt < 1.0, f"worst={worst:.2e} tol 1e-13, {dt:.2f}s of 1s")


# -- 3: forward variation theorem ----------------------------------------------------


def test_criterion_03_forward_variation_theorem():
    t0 = time.perf_counter()
    details = []
    ok = True
    for label, S in _four_sprays():
        x0 = [0.1, 0.0] if label == "curv+1" else [0.0, 0.0]
        V1 = _bent_family(S, x0, [1.0, 0.2], 1, (0.0, 2.0), 1e-3)
        r1 = verify_variation_theorem_forward(V1, (1,), hs=1e-3)
        V2 = _bent_family(S, x0, [1.0, 0.2], 2, (0.0, 2.0), 1e-3)
        r2 = verify_variation_theorem_forward(V2, (1, 2), hs=1e-3)
        ok = ok and r1 < 1e-5 and r2 < 1e-3
        details.append(f"{label}: r1={r1:.1e} r2={r2:.1e}")
    # convergence-order probe at coarse steps, where truncation dominates
    Vc = _bent_family(constant_curvature_spray(2, 1.0), [0.1, 0.0],
                      [1.0, 0.3], 1, (0.0, 1.0), 2e-3)
    coarse = verify_variation_theorem_forward(Vc, (1,), hs=0.2, richardson=False)
    fine = verify_variation_theorem_forward(Vc, (1,), hs=0.1, richardson=False)
    ratio = coarse / fine
    ok = ok and ratio >= 3.5
    dt = time.perf_counter() - t0
    _report(3, "derivative curves solve the lifted equation",
            ok and dt < 30.0,
            "; ".join(details) + f"; order ratio={ratio:.2f}, {dt:.1f}s of 30s")


# -- 4: reconstruction round trip ----------------------------------------------------


def test_criterion_04_reconstruction_roundtrip():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    for label, S in _four_sprays():
        for r in (1, 2):
            pos = BundlePoint(2, r, 0.2 * rng.standard_normal((1 << r, 2)))
            vel = random_point(2, r, rng, slashed=True)
            g = integrate_geodesic(S, r, (pos, vel), (0.0, 1.0), 1e-3)
            worst = max(worst, reconstruction_roundtrip_residual(S, g))
    dt = time.perf_counter() - t0
    _report(4, "lifted geodesics round-trip through variations",
            worst < 1e-3 and dt < 30.0, f"worst={worst:.2e} tol 1e-3, {dt:.1f}s of 30s")


# -- 5: projections of lifted geodesics are lower-lift geodesics -------------------------


def test_criterion_05_projections_stay_geodesic():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    worst = 0.0
    for S in (flat_spray(2), constant_curvature_spray(2, 1.0)):
        for r in (2, 3):
            pos = BundlePoint(2, r, 0.2 * rng.standard_normal((1 << r, 2)))
            vel = random_point(2, r, rng, slashed=True)
            g = integrate_geodesic(S, r, (pos, vel), (0.0, 1.0), 1e-3)
            images = [project_record(g, "pi"), project_record(g, "dpi"),
                      involute_record(g)]
            if r >= 3:
                images.append(project_record(g, "ddpi"))
            images.extend(extract_jacobi_fields(g))
            for rec in [g] + images:
                worst = max(worst, geodesic_residual(rec, S))
    dt = time.perf_counter() - t0
    _report(5, "all projections of lifted geodesics are geodesics",
            worst < 1e-6 and dt < 10.0, f"worst={worst:.2e} tol 1e-6, {dt:.1f}s of 10s")


# -- 6: flow lift identity -----------------------------------------------------------


def test_criterion_06_flow_lift_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(13)
    worst = 0.0
    for S in (flat_spray(2), constant_curvature_spray(2, 1.0)):
        for r in (0, 1):
            xi = random_point(2, r + 2, rng, slashed=True)
            xi = BundlePoint(2, r + 2, 0.3 * xi.blocks)
            blocks = xi.blocks.copy()
            blocks[1 << (r + 1)] += 1.0  # keep the base velocity well slashed
            xi = BundlePoint(2, r + 2, blocks)
            worst = max(worst, check_flow_lift(S, r, xi, 0.5))
    dt = time.perf_counter() - t0
    _report(6, "tangent of the lifted flow is the flow of the next lift",
            worst < 1e-4 and dt < 10.0, f"worst={worst:.2e} tol 1e-4, {dt:.1f}s of 10s")


# -- 7: Jacobi tensor profiles ---------------------------------------------------------


def test_criterion_07_jacobi_tensor_profiles():
    t0 = time.perf_counter()
    worst = 0.0
    for K, profile in ((1.0, np.sin), (0.0, lambda t: t), (-1.0, np.sinh)):
        if K == 0.0:
            S = flat_spray(2)
            base = integrate_geodesic(S, 0, base_state(2, [0, 0], [0, 1]),
                                      (0.0, 2.8), 1e-2)
            frame = build_frame(S, base)
        else:
            S = constant_curvature_spray(2, K)
            base, frame = _unit_base(S, K, 2.8, 1e-2)
        J = integrate_jacobi_tensor(S, base, np.zeros((2, 2)), PROJ)
        Mf = frame_matrix(J.J.comps, frame)[:, 0, 0]
        worst = max(worst, float(np.max(np.abs(Mf - profile(base.t_grid)))))
    dt = time.perf_counter() - t0
    _report(7, "curvature-dependent Jacobi tensor profiles",
            worst < 1e-6 and dt < 5.0, f"worst={worst:.2e} tol 1e-6, {dt:.1f}s of 5s")


# -- 8: Riccati operators and shape operators -------------------------------------------


def test_criterion_08_riccati_and_shape_operators():
    t0 = time.perf_counter()
    defects = []
    profiles = []
    cases = [(constant_curvature_spray(2, 1.0), 1.0, (0.3, 1.2),
              lambda t: 1.0 / np.tan(t)),
             (flat_spray(2), 0.0, (0.4, 1.8), lambda t: 1.0 / t),
             (constant_curvature_spray(2, -1.0), -1.0, (0.3, 1.2),
              lambda t: 1.0 / np.tanh(t))]
    saved = None
    for S, K, window, prof in cases:
        if K == 0.0:
            base = integrate_geodesic(S, 0, base_state(2, [0, 0], [0, 1]),
                                      (0.0, 2.0), 2e-3)
            frame = build_frame(S, base)
        else:
            base, frame = _unit_base(S, K, 1.5, 2e-3)
        J = integrate_jacobi_tensor(S, base, np.zeros((2, 2)), PROJ)
        L, defect = riccati_residual(J, frame, window)
        Lf = frame_matrix(L.comps, L.frame)[:, 0, 0]
        defects.append(defect)
        profiles.append(float(np.max(np.abs(Lf - prof(L.t_grid)))))
        if K == 1.0:
            saved = (S, J, frame, window)
    S, J, frame, window = saved
    V = variation_from_tensor(J, frame)
    j1, j2 = check_J1_J2(V, J, frame, window)
    ok = (max(defects) < 1e-5 and max(profiles) < 1e-5
          and j1 < 1e-4 and j2 < 1e-4)
    dt = time.perf_counter() - t0
    _report(8, "Riccati defects, shape operator, volume derivative",
            ok and dt < 10.0,
            f"defect={max(defects):.1e} tol 1e-5, profile={max(profiles):.1e}, "
            f"shape={j1:.1e} volume={j2:.1e} tol 1e-4, {dt:.1f}s of 10s")


# -- 9: tubular charts -----------------------------------------------------------------


def test_criterion_09_tubular_charts():
    t0 = time.perf_counter()
    S = flat_spray(2)
    base = integrate_geodesic(S, 0, base_state(2, [0, 0], [0, 1]),
                              (0.0, 1.0), 2e-3)
    frame = build_frame(S, base)
    Jf = integrate_jacobi_tensor(S, base, PROJ, np.zeros((2, 2)))
    chf = build_chart(Jf, frame)
    flat_err = max(float(np.max(np.abs(chf(t, [s]) - [s, t])))
                   for t in (0.0, 0.5, 1.0)
                   for s in (-0.4 * chf.eps, 0.0, 0.3 * chf.eps))
    Ssp = constant_curvature_spray(2, 1.0)
    base, frame = _unit_base(Ssp, 1.0, 1.5, 2e-3)
    J = integrate_jacobi_tensor(Ssp, base, np.zeros((2, 2)), PROJ)
    ch = build_chart(J, frame, window=(0.3, 1.2))
    # spot-check injectivity on a coarse parameter grid
    pts = np.array([ch(t, [s])
                    for t in np.linspace(0.35, 1.15, 9)
                    for s in np.linspace(-0.8 * ch.eps, 0.8 * ch.eps, 5)])
    gaps = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    np.fill_diagonal(gaps, np.inf)
    ok = (flat_err < 1e-12 and chf.t_line_residual < 1e-9
          and ch.jacobian_min > 1e-8 and ch.t_line_residual < 1e-6
          and ch.eps > 0 and gaps.min() > 1e-8)
    dt = time.perf_counter() - t0
    _report(9, "tubular charts: exact flat case, quality-checked curved case",
            ok and dt < 20.0,
            f"flat_err={flat_err:.1e}, jac_min={ch.jacobian_min:.1e}, "
            f"t_line={ch.t_line_residual:.1e}, sep={gaps.min():.1e}, "
            f"{dt:.1f}s of 20s")


# -- 10: integrator convergence order -----------------------------------------------------


def test_criterion_10_integrator_order():
    t0 = time.perf_counter()
    S = constant_curvature_spray(2, 1.0)
    x0 = np.array([1.0, 0.0])
    v0 = unit_velocity(x0, [0.0, 1.0], 1.0)
    errs = []
    for h in (4e-2, 2e-2):
        g = integrate_geodesic(S, 0, base_state(2, x0, v0), (0.0, 2.0), h)
        oracle = sphere_geodesic(x0, v0, g.t_grid)
        errs.append(float(np.max(np.abs(g.pos[:, 0] - oracle))))
    ratio = errs[0] / errs[1]
    dt = time.perf_counter() - t0
    _report(10, "step halving cuts the error fourth-order against a closed form",
            ratio >= 8.0 and dt < 5.0, f"ratio={ratio:.1f} (need >= 8), {dt:.1f}s of 5s")
