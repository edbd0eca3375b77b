import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradpoly import errors
from gradpoly.flow import (
    FlowParams,
    YSpec,
    _factored_flow,
    compute_A_plus,
    fixed_direction_check,
    flag_orbit_check,
    kostant_check,
    norm_square_flow,
    nullcone_numeric,
    nullcone_torus_exact,
    orbit_sample,
    semistable_fraction,
    semistable_test,
)
from gradpoly.gradmap import AVector, chamber_rep_batch, dual_standard_orbit, mu_a, mu_P, mu_P_batch
from gradpoly.model import build_model, sample_group
from gradpoly.polytope import hausdorff

from conftest import model


def torus(ws):
    return build_model({"kind": "torus", "params": {"weights": ws}})


def vec(*xs):
    return np.array(xs, dtype=complex)


# -- sampling Y ---------------------------------------------------------------

def test_whole_space_torus_image():
    m = model("torus1")
    X = orbit_sample(m, YSpec("whole_space", budget=5000, seed=0))
    y = np.array([mu_a(m, x).coords[0] for x in X])
    assert y.min() >= -1 - 1e-12 and y.max() <= 1 + 1e-12
    # both ends of [-1, 1] are reached
    assert y.min() < -0.999 and y.max() > 0.999


def test_real_point_orbit_stays_at_half():
    # a real line is moved to real lines by SL(2, R), so its value never changes
    m = model("sl2")
    X = orbit_sample(m, YSpec("orbit_closure", point=vec(1, 0), budget=500, seed=1))
    C = chamber_rep_batch(m, mu_P_batch(m, X))
    assert np.max(np.abs([m.display(c)[0] - 0.5 for c in C])) < 1e-12


def test_radius_zero_gives_K_orbit():
    m = model("sl3")
    x = vec(1, 2j, 0.5 - 1j)
    x /= np.linalg.norm(x)
    X = orbit_sample(m, YSpec("orbit_closure", point=x, budget=200, seed=2, radii=(0.0,)))
    assert len(X) == 200
    # K = SO(3) preserves the complex bilinear form, so |w^T w| is constant on K.x
    ref = abs(x @ x)
    assert np.max(np.abs(np.abs(np.einsum("ij,ij->i", X, X)) - ref)) < 1e-12


def test_orbit_sample_deterministic():
    spec = dict(kind="orbit_closure", point=vec(1, 1j, 0), budget=100, seed=7)
    a = orbit_sample(model("sl3"), YSpec(**spec))
    b = orbit_sample(model("sl3"), YSpec(**spec))
    assert np.array_equal(a, b)


def test_yspec_errors():
    with pytest.raises(errors.ParamError):
        YSpec("bogus")
    with pytest.raises(errors.ParamError):
        YSpec("orbit_closure")
    with pytest.raises(errors.ZeroVector):
        YSpec("orbit_closure", point=np.zeros(2))
    with pytest.raises(errors.ParamError):
        YSpec("whole_space", budget=0)
    with pytest.raises(errors.ParamError):
        YSpec("cloud")


def test_cloud_spec_checks_width(tmp_path):
    from gradpoly.io import write_point_cloud
    p = tmp_path / "c.csv"
    write_point_cloud(p, np.array([[1, 0, 0], [0, 1j, 0]], complex))
    with pytest.raises(errors.ParamError):
        orbit_sample(model("sl2"), YSpec("cloud", path=str(p)))
    X = orbit_sample(model("sl3"), YSpec("cloud", path=str(p)))
    assert X.shape == (2, 3)


# -- A_+ ----------------------------------------------------------------------

def test_A_plus_torus_pair():
    r = compute_A_plus(model("torus1"), YSpec("whole_space", budget=2000, seed=0), probes=300)
    assert sorted(r.polytope.vertices[:, 0]) == pytest.approx([-1.0, 1.0], abs=1e-9)
    assert r.verdict.is_convex


def test_A_plus_sl2_segment():
    m = model("sl2")
    r = compute_A_plus(m, YSpec("whole_space", budget=20000, seed=0), probes=300)
    P = r.polytope_display()
    assert hausdorff(P.vertices[:, :1], np.array([[0.0], [0.5]])) < 1e-3
    assert r.verdict.is_convex


def test_A_plus_sl3_segment():
    m = model("sl3")
    r = compute_A_plus(m, YSpec("whole_space", budget=4000, seed=0), probes=300)
    P = r.polytope_display()
    ends = np.array([[1 / 6, 1 / 6, -1 / 3], [2 / 3, -1 / 3, -1 / 3]])
    assert P.affine_dim == 1
    assert hausdorff(P.vertices, ends) < 5e-3


# -- flows --------------------------------------------------------------------

def test_flow_at_target_takes_no_steps():
    m = model("torus1")
    r = norm_square_flow(m, vec(2, 1), AVector(m, np.array([0.6])))
    assert r.iterations == 0 and r.status == "converged_zero"


def test_flow_torus_balances_masses():
    r = norm_square_flow(model("torus1"), vec(2, 1), params=FlowParams(tol_ss=1e-7))
    assert r.final_value < 1e-12
    p = np.abs(r.final_point.rep_vector) ** 2
    assert p / p.sum() == pytest.approx([0.5, 0.5], abs=1e-6)


def test_flow_sl2_real_point_stalls():
    m = model("sl2")
    r = norm_square_flow(m, vec(1, 0))
    assert r.status == "converged_positive"
    # |mu|^2 = |diag(1/2, -1/2)|^2 under the trace form
    assert r.final_value == pytest.approx(0.5, abs=1e-12)


def test_flow_sl2_real_orbit_oracle():
    # dense sampling of the orbit of [1:0] never goes below the flow value
    m = model("sl2")
    rng = np.random.default_rng(0)
    vals = [np.sum(mu_P(m, sample_group(m, "G", 3.0, rng).operator @ vec(1, 0)).coeffs ** 2) for _ in range(300)]
    assert min(vals) >= 0.5 - 1e-12


def test_flow_monotone_trajectory():
    m = model("su21")
    rng = np.random.default_rng(1)
    v = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    r = norm_square_flow(m, v, params=FlowParams(max_iter=200, restarts=0))
    assert np.all(np.diff(r.trajectory) <= 1e-12)


def test_flow_stays_in_torus_orbit():
    # torus orbits preserve the support and the phases of the coordinates
    m = model("cross")
    v = vec(1, 2j, 0, -0.5)
    r = norm_square_flow(m, v, params=FlowParams(max_iter=300, restarts=0))
    w = r.final_point.rep_vector
    assert abs(w[2]) == 0
    ph = w[[0, 1, 3]] / v[[0, 1, 3]]
    ph /= np.abs(ph)
    assert np.max(np.abs(ph - ph[0])) < 1e-12


def test_flow_params_validation():
    with pytest.raises(errors.ParamError):
        FlowParams(eta0=0).validate()
    with pytest.raises(errors.ParamError):
        FlowParams(shrink=1.0).validate()
    with pytest.raises(errors.ParamError):
        FlowParams(max_iter=-1).validate()
    with pytest.raises(errors.ParamError):
        norm_square_flow(model("sl2"), vec(1, 0), alpha=[1, 2, 3])
    with pytest.raises(errors.ZeroVector):
        norm_square_flow(model("sl2"), vec(0, 0))


def test_factored_flow_multiplicity():
    # a factor of multiplicity 2 aimed at 2a lands where mu = a
    m = model("torus1")
    A = m.a_coeffs(np.array([0.2]))
    r = _factored_flow([(m, 2, vec(2, 1))], 2 * A, FlowParams(max_iter=2000, tol_ss=1e-8))
    assert r.status == "converged_zero"
    assert abs(mu_a(m, r.final_point[0]).coords[0] - 0.2) < 1e-8
    # two factors share the step: the sum of their values reaches the target
    r = _factored_flow([(m, 1, vec(2, 1)), (m, 1, vec(1, 3))], 2 * A, FlowParams(max_iter=2000, tol_ss=1e-8))
    tot = sum(mu_a(m, w).coords[0] for w in r.final_point)
    assert abs(tot - 0.4) < 1e-8


# -- semistability ------------------------------------------------------------

@pytest.mark.parametrize("name,z,ok", [
    ("torus1", (1, 1), True),
    ("torus1", (1, 0), False),
    ("sl2", (1, 1j), True),
    ("sl2", (1, 0), False),
])
def test_semistable_examples(name, z, ok):
    v = semistable_test(model(name), vec(*z), params=FlowParams(max_iter=2000))
    assert v.semistable is ok
    if not ok:
        assert v.label.startswith("not semistable")


def test_semistable_shift_routes_agree():
    m = model("sl2")
    orb = dual_standard_orbit(m)
    prm = FlowParams(max_iter=1000, restarts=0)
    beta = AVector.from_display(m, [0.25, -0.25])
    rng = np.random.default_rng(3)
    for _ in range(5):
        z = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        # shifting by (p, q) = (1, 2) moves the target to 0
        s = semistable_test(m, z, None, (1, 2, orb), prm)
        d = semistable_test(m, z, beta, None, prm)
        assert s.semistable == d.semistable
        assert s.route == "shifted p=1 q=2"
    real = semistable_test(m, vec(1, 0.3), None, (1, 2, orb), prm)
    assert not real.semistable


def test_restart_invariance():
    # semistability is G-invariant; restarts only change the search path
    m = model("sl2")
    rng = np.random.default_rng(4)
    for _ in range(20):
        z = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        a = semistable_test(m, z, params=FlowParams(restarts=0, max_iter=1000))
        b = semistable_test(m, z, params=FlowParams(restarts=8, max_iter=1000), seed=9)
        assert a.semistable == b.semistable


def test_semistable_fraction_sl2():
    r = semistable_fraction(model("sl2"), 100, params=FlowParams(max_iter=1000, restarts=0), seed=0)
    assert r["n"] == 100 and r["fraction"] >= 0.99


# -- null cone ----------------------------------------------------------------

@pytest.mark.parametrize("name,v,verdict", [
    ("torus1", (1, 0), "null"),
    ("torus1", (1, 1), "minimal_vector"),
    ("sym2", (1, 0, 1), "minimal_vector"),
    # support weights {2, 0} contain 0 in their hull, so this is not null
    ("sym2", (1, 1, 0), "minimal_vector"),
    ("sym2", (1, 0, 0), "null"),
    ("cross", (1, 0, 1, 0), "null"),
])
def test_nullcone_numeric_examples(name, v, verdict):
    m = model(name)
    r = nullcone_numeric(m, vec(*v))
    assert r.verdict == verdict
    assert nullcone_torus_exact(m, vec(*v)) == (verdict == "null")


def test_nullcone_exact_examples():
    m = torus([[1, 0], [0, 1], [-1, -1]])
    assert not nullcone_torus_exact(m, vec(1, 1, 1))
    assert nullcone_torus_exact(m, vec(1, 1, 0))
    assert nullcone_torus_exact(model("torus1"), vec(1, 0))
    assert not nullcone_torus_exact(model("torus1"), vec(1, 1))


def test_nullcone_errors():
    with pytest.raises(errors.NotTorus):
        nullcone_torus_exact(model("sl2"), vec(1, 0))
    with pytest.raises(errors.ZeroVector):
        nullcone_numeric(model("torus1"), vec(0, 0))
    with pytest.raises(errors.ParamError):
        nullcone_numeric(model("torus1"), vec(1, 0), tol_null=0)


def test_nullcone_sl2_numeric():
    # every nonzero vector of C^2 is unstable for SL(2, R) acting on V
    r = nullcone_numeric(model("sl2"), vec(1, 0.4))
    assert r.verdict == "null"


def test_nullcone_norm_non_increasing():
    m = model("cross")
    v = vec(1, 0.2, 0.5j, 0)
    n_prev = 1.0
    for b in range(0, 40, 5):
        r = nullcone_numeric(m, v, budget=b)
        assert r.final_norm <= n_prev + 1e-12
        n_prev = r.final_norm


# -- structural checks --------------------------------------------------------

def test_fixed_direction_interior_vacuous():
    m = model("torus1")
    r = fixed_direction_check(m, YSpec("whole_space", budget=5000, seed=0), np.array([0.2]))
    assert r.vacuous and r.passed


def test_fixed_direction_torus_fixed_point():
    m = model("torus1")
    r = fixed_direction_check(m, YSpec("orbit_closure", point=vec(1, 0), budget=50), np.zeros(1))
    assert r.q0[0] == pytest.approx(1.0) and r.xi[0] == pytest.approx(1.0)
    assert r.n_fiber > 0 and r.max_xi_norm < 1e-12 and r.passed


def test_fixed_direction_sl2_beyond_end():
    m = model("sl2")
    p0 = AVector.from_display(m, [1, -1])
    r = fixed_direction_check(m, YSpec("whole_space", budget=2000, seed=0), p0)
    assert m.display(r.q0)[0] == pytest.approx(0.5, abs=1e-6)
    assert r.n_fiber > 0 and r.max_xi_norm < 1e-4


def test_fixed_direction_empty():
    with pytest.raises(errors.EmptyCloud):
        fixed_direction_check(model("sl2"), YSpec("whole_space"), np.zeros(1), X=np.zeros((0, 2), complex))


@pytest.mark.parametrize("name", ["sl2", "sl3", "su21", "su22", "product", "cross"])
def test_kostant(name):
    r = kostant_check(model(name), 2000, seed=0)
    assert r.violations == 0 and r.min_gap >= -1e-9


def test_flag_orbit_sl2():
    m = model("sl2")
    r = flag_orbit_check(m, vec(1, 0), 200, seed=0)
    assert r.max_residual < 1e-9


# -- properties ---------------------------------------------------------------

small_vec = st.lists(st.integers(-2, 2), min_size=4, max_size=4).filter(lambda xs: any(xs))


@settings(max_examples=40, deadline=None)
@given(small_vec)
def test_nullcone_tests_agree(xs):
    m = model("cross")
    v = np.array(xs, dtype=complex)
    assert nullcone_numeric(m, v).is_null == nullcone_torus_exact(m, v)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["sl2", "sl3", "torus1", "cross"]))
def test_flow_never_increases(seed, name):
    m = model(name)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m.rep_dim) + 1j * rng.standard_normal(m.rep_dim)
    alpha = rng.uniform(-0.3, 0.3, m.rank)
    r = norm_square_flow(m, v, alpha, FlowParams(max_iter=100, restarts=0))
    assert np.all(np.diff(r.trajectory) <= 1e-12)
    assert r.final_value <= np.sum((mu_P(m, v).coeffs - m.a_coeffs(alpha)) ** 2) + 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_sampled_values_in_chamber(seed):
    m = model("sl3")
    X = orbit_sample(m, YSpec("orbit_closure", point=vec(1, 1j, 0.2), budget=40, seed=seed, limits=False))
    for c in chamber_rep_batch(m, mu_P_batch(m, X)):
        assert m.in_chamber(c)


# -- numerical regressions ----------------------------------------------------

def test_nullcone_boundary_support_is_fast():
    # 0 on an edge of the support hull: the plain gradient is stiff here
    r = nullcone_numeric(model("cross"), vec(1.23, 0.39, 1.42, 0), budget=100)
    assert r.verdict == "minimal_vector" and r.iterations < 100


def test_gradient_direction_option():
    prm = FlowParams(gauss_newton=False, tol_ss=1e-7)
    r = norm_square_flow(model("torus1"), vec(2, 1), params=prm)
    assert r.status == "converged_zero"
    assert semistable_test(model("sl2"), vec(1, 1j), params=prm).semistable


def test_boundary_target_shift_route():
    # alpha at the end of A+ : complex points are semistable, reached only in the limit
    m = model("sl2")
    z = vec(-0.102234 + 0.12448028j, 0.92945498 - 1.1227901j)
    alpha = AVector.from_display(m, [0.5, -0.5])
    prm = FlowParams(restarts=0)
    assert semistable_test(m, z, alpha, None, prm).semistable
    assert semistable_test(m, z, None, (1, 1, dual_standard_orbit(m)), prm).semistable


def test_real_points_stay_real_under_restarts():
    m = model("sl2")
    v = semistable_test(m, vec(1.5, -0.4), None, (1, 2, dual_standard_orbit(m)), FlowParams(restarts=3))
    assert not v.semistable
    assert v.label.startswith("not semistable")
