import dataclasses
import itertools
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradpoly import errors
from gradpoly.model import (
    RepFunctor,
    build_model,
    derived_model,
    group_element,
    load_model,
    matrix_to_json,
    model_from_json,
    model_to_json,
    sample_group,
    save_model,
    tensor_models,
    validate_model,
)

from conftest import SPECS, model


def display_multiset(m):
    return Counter(tuple(float(x) for x in np.round(m.display(w), 9)) for w, d in zip(m.weights_ortho, m.block_dims) for _ in range(d))


# -- construction -------------------------------------------------------------

def test_torus_pair():
    m = model("torus1")
    assert m.rank == 1 and m.rep_dim == 2
    assert m.block_dims == (1, 1)
    assert set(m.weights) == {(Fraction(1),), (Fraction(-1),)}


def test_sl2_cartan_data():
    m = model("sl2")
    assert m.dim_p == 2 and m.rank == 1
    # chamber is diag(a, -a) with a >= 0
    assert m.in_chamber(np.array([0.3]))
    assert not m.in_chamber(np.array([-0.3]))
    d = m.display(np.array([0.3]))
    assert d[0] > 0 and abs(d[0] + d[1]) < 1e-15


def test_sl3_dimensions_and_chamber(rng):
    m = model("sl3")
    # brute-force count of traceless real symmetric 3x3 matrices
    mats = []
    for i, j in itertools.product(range(3), repeat=2):
        E = np.zeros((3, 3))
        E[i, j] = E[j, i] = 1
        mats.append((E - np.trace(E) / 3 * np.eye(3)).ravel())
    assert m.dim_p == np.linalg.matrix_rank(np.array(mats)) == 5
    assert m.rank == 2
    from gradpoly.gradmap import chamber_rep
    for _ in range(20):
        d = chamber_rep(m, rng.standard_normal(5)).display()
        assert d[0] >= d[1] - 1e-12 and d[1] >= d[2] - 1e-12


@pytest.mark.parametrize("name", list(SPECS))
def test_builtin_models_validate(name):
    rep = validate_model(model(name))
    assert rep.passed
    assert rep.max_residual < 1e-12


def test_forced_hermitian_violation():
    m = model("sl2")
    P = np.array(m.p_basis)
    P[0] = 1j * P[0]
    bad = dataclasses.replace(m, p_basis=P)
    rep = validate_model(bad)
    assert not rep.passed
    assert "HermitianResidual" in {c.name for c in rep.failures()}


def test_forced_weight_mislabel():
    m = model("torus1")
    bad = dataclasses.replace(m, weights=(m.weights[1], m.weights[0]))
    rep = validate_model(bad)
    assert "WeightBlockResidual" in {c.name for c in rep.failures()}


# -- functors -----------------------------------------------------------------

def test_sym2_weights():
    m = derived_model(model("torus1"), "sym:2")
    assert m.weight_multiset() == Counter({(Fraction(2),): 1, (Fraction(0),): 1, (Fraction(-2),): 1})


def test_tensor_self_weights():
    t = model("torus1")
    m = derived_model(t, RepFunctor("tensor", 1, SPECS["torus1"]))
    assert m.weight_multiset() == Counter({(Fraction(2),): 1, (Fraction(0),): 2, (Fraction(-2),): 1})
    m2 = tensor_models([t, t])
    assert m2.weight_multiset() == m.weight_multiset()


def test_sl3_ext2_pairwise_sums():
    std = model("sl3")
    m = derived_model(std, "ext:2")
    assert m.rep_dim == 3
    # brute-force wedge basis: weights of e_i ^ e_j are sums of standard weights
    W = [std.display(w) for w in std.weights_ortho]
    expect = Counter(tuple(float(x) for x in np.round(W[i] + W[j], 9)) for i, j in itertools.combinations(range(3), 2))
    assert display_multiset(m) == expect


def test_dual_negates_weights():
    m = derived_model(model("sl3"), "dual")
    std = model("sl3")
    assert display_multiset(m) == Counter({tuple(-x + 0.0 for x in k): v for k, v in display_multiset(std).items()})


def test_functor_parse_roundtrip():
    for s in ("sym:3", "ext:2", "dual"):
        assert RepFunctor.parse(s).to_json() == s
    f = RepFunctor.parse({"tag": "tensor", "with": SPECS["torus1"]})
    assert RepFunctor.parse(f.to_json()) == f
    with pytest.raises(errors.DegenerateSpec):
        RepFunctor.parse("bogus:2")


# -- errors -------------------------------------------------------------------

def test_unknown_kind():
    with pytest.raises(errors.UnsupportedKind):
        build_model({"kind": "so_n"})


def test_dimension_overflow():
    with pytest.raises(errors.DimensionOverflow):
        build_model({"kind": "sl_n_real", "params": {"n": 3}, "functors": ["sym:6"]}, dim_cap=20)


def test_noncommuting_a():
    X = np.array([[1, 0], [0, -1]]) / np.sqrt(2)
    Y = np.array([[0, 1], [1, 0]]) / np.sqrt(2)
    spec = {"kind": "custom", "params": {"p_basis": [matrix_to_json(X), matrix_to_json(Y)], "a_indices": [0, 1]}}
    with pytest.raises(errors.NonCommutative):
        build_model(spec)


def test_degenerate_torus():
    with pytest.raises(errors.DegenerateSpec):
        build_model({"kind": "torus", "params": {"weights": []}})
    with pytest.raises(errors.DegenerateSpec):
        build_model({"kind": "sl_n_real", "params": {"n": 1}})


def test_custom_matches_torus():
    # scale 1/2 makes diag(1, -1) a unit vector with weights +-1
    X = np.diag([1.0, -1.0])
    spec = {"kind": "custom", "inner_product_scale": "1/2",
            "params": {"p_basis": [matrix_to_json(X)], "a_indices": [0], "k_basis": [matrix_to_json(1j * X)]}}
    m = build_model(spec)
    assert validate_model(m).passed
    assert set(m.weights) == {(Fraction(1),), (Fraction(-1),)}


# -- persistence --------------------------------------------------------------

@pytest.mark.parametrize("name", ["torus1", "sl3", "su21", "product"])
def test_json_roundtrip(tmp_path, name):
    m = model(name)
    save_model(m, tmp_path / "m.json")
    m2 = load_model(tmp_path / "m.json")
    assert np.array_equal(m2.p_basis, m.p_basis)
    assert m2.weights == m.weights
    assert model_from_json(model_to_json(m)).chamber == m.chamber


# -- sampling -----------------------------------------------------------------

def test_radius_zero_group_element():
    g = sample_group(model("sl3"), "G", 0.0, 3)
    assert np.allclose(g.p_part, np.eye(3))
    K = g.k_part
    assert np.max(np.abs(K.conj().T @ K - np.eye(3))) < 1e-12
    assert g.factorization_residual() < 1e-12


@pytest.mark.parametrize("seed", [0, 1, 2, 99])
def test_sl2_k_is_rotation(seed):
    g = sample_group(model("sl2"), "K", 0.0, seed)
    R = g.defining
    assert np.max(np.abs(R.imag)) < 1e-12
    assert np.max(np.abs(R.T @ R - np.eye(2))) < 1e-12
    assert abs(np.linalg.det(R) - 1) < 1e-12


def test_sampling_deterministic():
    a = sample_group(model("su21"), "G", 1.5, 42)
    b = sample_group(model("su21"), "G", 1.5, 42)
    assert np.array_equal(a.operator, b.operator)


def test_p_ball_radius_statistics():
    # |xi| for xi uniform in the unit ball of R^d has mean d/(d+1)
    m = model("sl3")
    rng = np.random.default_rng(7)
    N = 10_000
    r = np.array([np.linalg.norm(sample_group(m, "P", 1.0, rng).p_coeffs) for _ in range(N)])
    d = m.dim_p
    mean = d / (d + 1)
    sd = np.sqrt(d / (d + 2) - mean**2)
    assert abs(r.mean() - mean) < 3 * sd / np.sqrt(N)
    assert r.max() <= 1.0


def test_group_element_acts_compatibly(rng):
    # V-operator of exp(xi) equals exp of the V-operator
    m = derived_model(model("sl2"), "sym:2")
    xi = rng.standard_normal(m.dim_p)
    g = group_element(m, p_coeffs=xi)
    w, U = np.linalg.eigh(m.p_operator(xi))
    assert np.allclose(g.operator, (U * np.exp(w)) @ U.conj().T)


def test_bad_sampling_args():
    with pytest.raises(ValueError):
        sample_group(model("sl2"), "Q", 1.0, 0)
    with pytest.raises(ValueError):
        sample_group(model("sl2"), "P", -1.0, 0)


# -- properties ---------------------------------------------------------------

weight_lists = st.lists(st.lists(st.integers(-3, 3), min_size=2, max_size=2), min_size=1, max_size=5)


@settings(max_examples=40, deadline=None)
@given(weight_lists)
def test_random_torus_models_validate(ws):
    m = build_model({"kind": "torus", "params": {"weights": ws}})
    assert validate_model(m).passed
    assert m.weight_multiset() == Counter(tuple(Fraction(x) for x in w) for w in ws)


@settings(max_examples=25, deadline=None)
@given(weight_lists, st.integers(1, 3))
def test_sym_weights_are_sums(ws, k):
    m = build_model({"kind": "torus", "params": {"weights": ws}})
    d = derived_model(m, f"sym:{k}")
    expect = Counter()
    for c in itertools.combinations_with_replacement(range(len(ws)), k):
        expect[tuple(Fraction(sum(ws[i][j] for i in c)) for j in range(2))] += 1
    assert d.weight_multiset() == expect


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ad_preserves_norm(seed):
    m = model("su21")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(m.dim_p)
    k = sample_group(m, "K", 0.0, rng).defining
    assert abs(np.linalg.norm(m.ad(k, x)) - np.linalg.norm(x)) < 1e-10


def test_real_group_elements_are_exactly_real():
    m = model("sl3")
    for seed in range(5):
        g = sample_group(m, "G", 2.0, seed)
        assert not np.any(g.operator.imag) and not np.any(g.defining.imag)


def test_expm_kernels_match_scipy(rng):
    import scipy.linalg
    from gradpoly.linalg import apply_eig, eig_herm, expm_herm, expm_skew
    A = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    H = A + A.conj().T
    S = A - A.conj().T
    assert np.allclose(expm_herm(H, 0.3), scipy.linalg.expm(0.3 * H))
    assert np.allclose(expm_skew(S), scipy.linalg.expm(S))
    v = rng.standard_normal(4) + 0j
    w, U = eig_herm(H)
    assert np.allclose(apply_eig(w, U, v, -0.7), scipy.linalg.expm(-0.7 * H) @ v)
    R = H.real + 0j
    assert not np.any(expm_herm(R).imag)
