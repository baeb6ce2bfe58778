"""Acceptance suite: the package's headline numerical claims, end to end.

Each test exercises one claim at its stated tolerance and prints a single

    [acceptance] <name>: PASS|FAIL|XFAIL (<seconds>) <detail>

line on the unbuffered real stdout (bypassing capture), so a plain pytest
run shows the whole scoreboard.  The three control studies reproduce the
convergence tables on the square, the 135-degree wedge and the L-shaped
domain; the remaining tests pin the normal-derivative rates, dense-oracle
equivalence, structural identities and the large-regularization limit.
"""

import math
import time

import numpy as np
import pytest

from dirfem.boundary import (
    harmonic_extension_Sh,
    l2_projection_Qh,
    steklov_poincare_Nh,
    variational_normal_derivative,
)
from dirfem.control import ControlProblem, solve_control
from dirfem.fem import (
    AnalyticFunction,
    BoundaryFunction,
    assemble_boundary_mass,
    assemble_mass,
    assemble_stiffness,
    h1_seminorm,
    nodal_interpolant,
)
from dirfem.geometry import PolygonalDomain, builtin_domain
from dirfem.meshing import bisect_refine, initial_mesh, prolongate
from dirfem.study import CONTROL_METRICS, StudyConfig, run_bvp_study, run_control_study

from _dense_oracle import dense_control_solve


def _report(capfd, name: str, status: str, t0: float, detail: str) -> None:
    line = (
        f"[acceptance] {name}: {status} "
        f"({time.perf_counter() - t0:.1f}s) {detail}"
    )
    with capfd.disabled():
        print(line, flush=True)


def _finals(table) -> list[float]:
    return [table.eoc_column(m)[-1] for m in CONTROL_METRICS]


def _in_window(values, targets, width=0.15) -> bool:
    return all(abs(v - t) <= width for v, t in zip(values, targets))


def _fmt(values) -> str:
    return "/".join(f"{v:.3f}" for v in values)


def _refine(mesh, passes):
    for _ in range(passes):
        mesh = bisect_refine(mesh)
    return mesh


# ---------------------------------------------------------------------------
# control-study rate tables
# ---------------------------------------------------------------------------

def test_square_control_rates(capfd):
    t0 = time.perf_counter()
    table = run_control_study(
        StudyConfig(domain="omega90", rows=(2, 6), reference_offset=2,
                    nu=1.0, f="0", u_d="x + y")
    )
    elapsed = time.perf_counter() - t0
    finals = _finals(table)
    targets = (1.00, 2.00, 1.50)
    final_h1 = table.column("err_H1_state")[-1]
    # reference tabulations of this benchmark quote 8.43e-04 for the final
    # H1 state error; protocol differences shift absolutes, not rates, so
    # the value is held to a +-25% corridor rather than matched exactly
    corridor = abs(final_h1 / 8.43e-04 - 1.0) <= 0.25
    ok = _in_window(finals, targets) and corridor and elapsed < 120.0
    _report(
        capfd, "square control rates", "PASS" if ok else "FAIL", t0,
        f"final EOCs {_fmt(finals)} vs {_fmt(targets)} +-0.15; "
        f"H1 err {final_h1:.3e} in 8.43e-04 +-25%; budget 120s",
    )
    assert _in_window(finals, targets), (finals, targets)
    assert corridor, final_h1
    assert elapsed < 120.0


def test_obtuse_corner_control_rates(capfd):
    t0 = time.perf_counter()
    table = run_control_study(
        StudyConfig(domain="omega135", rows=(2, 6), reference_offset=2,
                    nu=1.0, f="0", u_d="x + y")
    )
    finals = _finals(table)
    targets = (1.00, 1.83, 1.33)
    h_half_final = table.eoc_column("err_H12_control")[-1]
    ok = _in_window(finals, targets) and h_half_final < 1.45
    _report(
        capfd, "obtuse-corner control rates", "PASS" if ok else "FAIL", t0,
        f"final EOCs {_fmt(finals)} vs {_fmt(targets)} +-0.15; "
        f"H1/2 rate {h_half_final:.3f} < 1.45 (angle barrier)",
    )
    assert _in_window(finals, targets), (finals, targets)
    # the 3/2 smooth-case rate must NOT be reached: the 135-degree corner
    # caps the control regularity at lambda_bar = 4/3
    assert h_half_final < 1.45, h_half_final


def test_reentrant_corner_control_rates(capfd):
    # the reference solution carries the same r^(2/3) singularity as the
    # levels under study; at offset 2 its own error inflates the last-row
    # EOCs by ~0.08 (geometric-series contamination), so this study keeps
    # the reference 3 rows below the finest level instead
    t0 = time.perf_counter()
    table = run_control_study(
        StudyConfig(domain="omega270", rows=(2, 6), reference_offset=3,
                    nu=1.0, f="0", u_d="x + y")
    )
    finals = _finals(table)
    targets = (2.0 / 3.0, 7.0 / 6.0, 2.0 / 3.0)
    ok = _in_window(finals, targets)
    _report(
        capfd, "reentrant-corner control rates", "PASS" if ok else "FAIL", t0,
        f"final EOCs {_fmt(finals)} vs {_fmt(targets)} +-0.15 "
        f"(reference 3 rows finer)",
    )
    assert ok, (finals, targets)


# ---------------------------------------------------------------------------
# normal-derivative rates
# ---------------------------------------------------------------------------

@pytest.mark.xfail(
    strict=True,
    reason=(
        "the h^(3/2) normal-derivative bound assumes d_n y is continuous at "
        "the corners; x^2 - y^2 jumps at every corner of the square, so the "
        "L2-projected target alone costs O(h) and the observed rate sits "
        "near 1.0"
    ),
)
def test_smooth_normal_derivative_rate(capfd):
    t0 = time.perf_counter()
    table = run_bvp_study(
        StudyConfig(domain="omega90", rows=(2, 5), reference_offset=2,
                    f="0", y_exact="x^2 - y^2")
    )
    elapsed = time.perf_counter() - t0
    eocs = table.eoc_column("err_Hm12_dn")[1:]
    ok = all(abs(v - 1.5) <= 0.2 for v in eocs[-3:]) and elapsed < 60.0
    _report(
        capfd, "smooth normal-derivative rate", "PASS" if ok else "XFAIL", t0,
        f"last-three EOCs {_fmt(eocs[-3:])} vs 1.5 +-0.2; corner-jumping "
        f"data floors the rate at 1.0",
    )
    assert elapsed < 60.0
    assert all(abs(v - 1.5) <= 0.2 for v in eocs[-3:]), eocs


_SQ3 = math.sqrt(3.0)


def _compatible_value(x, y):
    # r^(3/2) corner mode at the 120-degree vertex, minus the harmonic
    # cubic whose gradient matches it at the two far corners: the total
    # normal derivative is then continuous (zero) at every corner
    z = x + 1j * y
    p = (
        (_SQ3 / 6.0) * x**3
        - (_SQ3 / 4.0) * x**2
        - (_SQ3 / 2.0) * x * y**2
        + 1.5 * x * y
        + (_SQ3 / 4.0) * y**2
    )
    return (z**1.5).imag - p


def _compatible_gradient(x, y):
    z = x + 1j * y
    d = 1.5 * z**0.5
    px = (_SQ3 / 2.0) * x**2 - (_SQ3 / 2.0) * x - (_SQ3 / 2.0) * y**2 + 1.5 * y
    py = -_SQ3 * x * y + 1.5 * x + (_SQ3 / 2.0) * y
    return d.imag - px, d.real - py


def test_corner_compatible_normal_derivative_rate(capfd):
    # companion to the smooth-case rate: on a triangle whose largest angle
    # is 120 degrees (lambda_bar = 3/2) with corner-compatible data, the
    # 3/2 rate is attainable and observed (up to the logarithmic drag)
    t0 = time.perf_counter()
    tri120 = PolygonalDomain(
        [(0.0, 0.0), (1.0, 0.0), (-0.5, _SQ3 / 2.0)], name="tri120"
    )
    y = AnalyticFunction(_compatible_value, gradient=_compatible_gradient,
                         name="compatible_3_2")
    table = run_bvp_study(
        StudyConfig(domain=tri120, rows=(2, 6), reference_offset=2,
                    f="0", y_exact=y, metrics=("err_Hm12_dn",))
    )
    eocs = table.eoc_column("err_Hm12_dn")[1:]
    ok = all(b > a for a, b in zip(eocs, eocs[1:])) and 1.40 <= eocs[-1] <= 1.55
    _report(
        capfd, "corner-compatible normal-derivative rate", "PASS" if ok else "FAIL",
        t0, f"EOCs {_fmt(eocs)} climbing to 3/2; final in [1.40, 1.55]",
    )
    assert all(b > a for a, b in zip(eocs, eocs[1:])), eocs
    assert 1.40 <= eocs[-1] <= 1.55, eocs


def test_singular_normal_derivative_rate(capfd):
    t0 = time.perf_counter()
    table = run_bvp_study(
        StudyConfig(domain="omega270", rows=(2, 6), reference_offset=2,
                    f="0", y_exact="singular_2_3")
    )
    final = table.eoc_column("err_Hm12_dn")[-1]
    ok = abs(final - 2.0 / 3.0) <= 0.15
    _report(
        capfd, "singular normal-derivative rate", "PASS" if ok else "FAIL", t0,
        f"final EOC {final:.3f} vs 0.667 +-0.15 (dominating r^(2/3) mode)",
    )
    assert ok, final


# ---------------------------------------------------------------------------
# oracle equivalence, invariants, limits
# ---------------------------------------------------------------------------

KKT_PASSES = {"omega90": 7, "omega135": 6, "omega270": 5}


def test_dense_kkt_equivalence(capfd):
    t0 = time.perf_counter()
    worst = 0.0
    sizes = []
    for name, passes in sorted(KKT_PASSES.items()):
        mesh = _refine(initial_mesh(builtin_domain(name)), passes)
        assert mesh.n_nodes <= 200
        sizes.append(mesh.n_nodes)
        prob = ControlProblem(mesh.domain, nu=1.0, f="0", u_d="x + y")
        sol = solve_control(prob, mesh)
        z, u, p = dense_control_solve(mesh, 1.0, prob.f, prob.u_d)
        worst = max(
            worst,
            np.abs(sol.z_h.values - z).max(),
            np.abs(sol.u_h.values - u).max(),
            np.abs(sol.p_h.values - p).max(),
        )
    ok = worst < 1e-8
    _report(
        capfd, "dense KKT equivalence", "PASS" if ok else "FAIL", t0,
        f"max |(z,u,p) - dense| = {worst:.2e} < 1e-8 on "
        f"{'/'.join(map(str, sizes))}-node meshes",
    )
    assert ok, worst


def test_invariant_suite(capfd):
    t0 = time.perf_counter()
    mesh = _refine(initial_mesh(builtin_domain("omega90")), 8)
    A = assemble_stiffness(mesh)
    M = assemble_mass(mesh)
    Mb = assemble_boundary_mass(mesh)
    Bn = mesh.boundary_nodes
    checks: list[tuple[str, float, float]] = []  # label, residual, gate

    # the normal derivative satisfies its defining boundary identity
    u_h = harmonic_extension_Sh(
        mesh, nodal_interpolant(mesh, lambda x, y: x * y).trace()
    )
    d = variational_normal_derivative(mesh, u_h)
    green = np.abs(Mb @ d.values - (A @ u_h.values)[Bn]).max()
    checks.append(("green identity", green, 1e-10))

    rng = np.random.default_rng(11)
    z = BoundaryFunction(mesh, rng.standard_normal(mesh.n_boundary))
    w = BoundaryFunction(mesh, rng.standard_normal(mesh.n_boundary))
    Nz, Nw = steklov_poincare_Nh(mesh, z), steklov_poincare_Nh(mesh, w)

    # <N z, z> is the Dirichlet energy of the harmonic extension
    nzz = float(z.values @ (Mb @ Nz.values))
    energy = h1_seminorm(harmonic_extension_Sh(mesh, z)) ** 2
    checks.append(("energy identity", abs(nzz - energy) / energy, 1e-10))

    nzw = float(w.values @ (Mb @ Nz.values))
    nwz = float(z.values @ (Mb @ Nw.values))
    checks.append(("N symmetry", abs(nzw - nwz) / max(abs(nzw), 1.0), 1e-10))

    ones = BoundaryFunction(mesh, np.ones(mesh.n_boundary))
    none = steklov_poincare_Nh(mesh, ones).values
    checks.append(("N kernel constants", float(np.abs(none).max()), 1e-10))

    # idempotence: on its own range (the trace space) the projection is the
    # identity, and global linears restricted to straight edges lie in it
    q1 = l2_projection_Qh(mesh, lambda x, y: 2.0 * x - y)
    in_range = nodal_interpolant(mesh, lambda x, y: 2.0 * x - y).trace()
    checks.append(
        ("Qh idempotence", float(np.abs(q1.values - in_range.values).max()), 1e-10)
    )

    fine = bisect_refine(mesh)
    coarse_vals = nodal_interpolant(mesh, lambda x, y: 2 * x - y).values
    carried = prolongate(coarse_vals, mesh, fine)
    exact = nodal_interpolant(fine, lambda x, y: 2 * x - y).values
    checks.append(
        ("prolongation exactness", float(np.abs(carried - exact).max()), 1e-12)
    )

    checks.append(
        ("stiffness row sums", float(np.abs(A @ np.ones(mesh.n_nodes)).max()), 1e-10)
    )

    area = float(np.ones(mesh.n_nodes) @ (M @ np.ones(mesh.n_nodes)))
    perim = float(np.ones(mesh.n_boundary) @ (Mb @ np.ones(mesh.n_boundary)))
    pou = max(abs(area - 1.0), abs(perim - 4.0))
    checks.append(("partition of unity", pou, 1e-12))

    elapsed = time.perf_counter() - t0
    ok = all(r < gate for _, r, gate in checks) and elapsed < 10.0
    worst = max(checks, key=lambda c: c[1] / c[2])
    _report(
        capfd, "structural invariants", "PASS" if ok else "FAIL", t0,
        f"{len(checks)} identities; tightest margin {worst[0]} "
        f"{worst[1]:.2e} vs {worst[2]:.0e}; budget 10s",
    )
    for label, residual, gate in checks:
        assert residual < gate, (label, residual, gate)
    assert elapsed < 10.0


def test_large_nu_limit(capfd):
    # for nu -> inf the control collapses onto the kernel of N (constants)
    # and the best constant state is the volume mean of u_d, here 1
    t0 = time.perf_counter()
    mesh = _refine(initial_mesh(builtin_domain("omega90")), 10)
    sol = solve_control(
        ControlProblem(mesh.domain, nu=1e8, f="0", u_d="x + y"), mesh
    )
    dev = float(np.abs(sol.z_h.values - 1.0).max())
    ok = dev < 1e-3
    _report(
        capfd, "large-nu limit", "PASS" if ok else "FAIL", t0,
        f"max|z - 1| = {dev:.2e} < 1e-3 at nu=1e8 "
        f"({sol.gmres_iterations} GMRES iterations)",
    )
    assert ok, dev
