import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference, imagenet_example_tree, label_id, naive_loss, path_sum, relative_error
from treeloss import (
    FLAT,
    U,
    V,
    CoverTree,
    InvalidInputError,
    ParamMatrix,
    ParseError,
    build_cover_tree,
    build_embedding_metric,
    decompose_w,
    derive_u_paths,
    derive_v_tree,
    evaluate,
    frobenius_norm,
    loss_forward,
    loss_gradient,
    make_dataset,
    metric_from_distances,
    predict,
    read_dataset_csv,
    read_params,
    reconstruct_w,
    write_dataset_csv,
    write_params,
)


def random_tables(rng, k, base=1.5):
    tree = build_cover_tree(build_embedding_metric(rng.normal(size=(k, 3))), base)
    return derive_u_paths(tree), derive_v_tree(tree)


def random_params(rng, variant, k, d, scale=1.0, base=1.5):
    if variant == FLAT:
        return ParamMatrix(FLAT, scale * rng.normal(size=(k, d)))
    u, v = random_tables(rng, k, base)
    table = u if variant == U else v
    return ParamMatrix(variant, scale * rng.normal(size=(table.k_prime, d)), table)


# --- reconstruct / decompose -------------------------------------------------

def test_single_class_reconstruct():
    table = derive_v_tree(CoverTree(2.0, (0,), (0,), (-1,)))
    np.testing.assert_array_equal(reconstruct_w(ParamMatrix(V, [[1.0, 2.0]], table)), [[1.0, 2.0]])


def test_reconstruct_rejects_flat():
    with pytest.raises(InvalidInputError):
        reconstruct_w(ParamMatrix(FLAT, np.zeros((2, 2))))


def test_imagenet_example_reconstruct_bear():
    table = derive_v_tree(imagenet_example_tree())
    entries = np.arange(14.0)[:, None] ** 2
    w = reconstruct_w(ParamMatrix(V, entries, table))
    bear = label_id("bear")
    assert w[bear, 0] == entries[bear, 0] + entries[11, 0] + entries[10, 0]  # + pseudo2 + pseudo1


@pytest.mark.parametrize("variant", [U, V])
def test_reconstruct_matches_independent_path_sum(variant):
    rng = np.random.default_rng(0)
    p = random_params(rng, variant, 20, 4)
    w = reconstruct_w(p)
    for i, path in enumerate(p.paths.paths):
        np.testing.assert_allclose(w[i], path_sum(p.entries, path), rtol=1e-14, atol=1e-14)


def test_decompose_single_class():
    table = derive_u_paths(CoverTree(2.0, (0,), (0,), (-1,)))
    np.testing.assert_array_equal(decompose_w([[4.0, -1.0]], table).entries, [[4.0, -1.0]])


def test_decompose_chain_hand_telescoped():
    # chain a -> b -> root; labels root=0, b=1, a=2
    tree = CoverTree(2.0, labels=(0, 0, 1, 1, 2, 0), depths=(0, 1, 1, 2, 2, 2), parents=(-1, 0, 0, 2, 2, 1))
    table = derive_u_paths(tree)
    assert table.paths[2] == (2, 1, 0)
    u = decompose_w([[1.0], [2.0], [3.0]], table)
    np.testing.assert_array_equal(u.entries, [[1.0], [1.0], [1.0]])
    np.testing.assert_array_equal(reconstruct_w(u), [[1.0], [2.0], [3.0]])


@pytest.mark.parametrize("variant", [U, V])
@pytest.mark.parametrize("seed", range(5))
def test_roundtrip(variant, seed):
    rng = np.random.default_rng(seed)
    u, v = random_tables(rng, 50)
    w = rng.normal(size=(50, 6))
    back = reconstruct_w(decompose_w(w, u if variant == U else v))
    assert np.linalg.norm(back - w) <= 1e-12 * np.linalg.norm(w)


def test_decompose_rejects_shape_mismatch():
    u, _ = random_tables(np.random.default_rng(0), 5)
    with pytest.raises(InvalidInputError):
        decompose_w(np.zeros((4, 2)), u)


# --- forward -----------------------------------------------------------------

@pytest.mark.parametrize("variant", [FLAT, U, V])
def test_zero_features_give_log_k(variant):
    p = random_params(np.random.default_rng(1), variant, 10, 5)
    assert loss_forward(p, np.zeros(5), 3) == pytest.approx(math.log(10), rel=1e-15)


def test_two_equal_scores_give_log_2():
    p = ParamMatrix(FLAT, [[1.0, 2.0], [1.0, 2.0]])
    assert loss_forward(p, [0.3, -0.7], 1) == pytest.approx(math.log(2), rel=1e-15)


@pytest.mark.parametrize("variant", [FLAT, U, V])
def test_forward_matches_naive_loss(variant):
    rng = np.random.default_rng(2)
    for _ in range(20):
        p = random_params(rng, variant, 12, 4)
        x, y = rng.normal(size=4), int(rng.integers(12))
        w = p.entries if variant == FLAT else reconstruct_w(p)
        assert loss_forward(p, x, y) == pytest.approx(naive_loss(w, x, y), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("variant", [U, V])
def test_reparameterization_exact(variant):
    rng = np.random.default_rng(3)
    for _ in range(50):
        p = random_params(rng, variant, 30, 8)
        x, y = rng.normal(size=8), int(rng.integers(30))
        a = loss_forward(p, x, y)
        b = loss_forward(ParamMatrix(FLAT, reconstruct_w(p)), x, y)
        assert abs(a - b) <= 1e-12 * (1 + abs(a))


def test_forward_is_stable_for_huge_scores():
    p = ParamMatrix(FLAT, [[1e6], [-1e6]])
    assert loss_forward(p, [1.0], 1) == 0.0
    assert loss_forward(p, [1.0], 0) == pytest.approx(2e6)


@pytest.mark.parametrize("x", [[np.nan, 0.0], [np.inf, 1.0], [1.0]])
def test_forward_rejects_bad_x(x):
    with pytest.raises(InvalidInputError):
        loss_forward(ParamMatrix(FLAT, np.zeros((3, 2))), x, 0)


def test_forward_rejects_bad_label():
    with pytest.raises(InvalidInputError):
        loss_forward(ParamMatrix(FLAT, np.zeros((3, 2))), [0.0, 0.0], 3)


# --- gradient ----------------------------------------------------------------

@pytest.mark.parametrize("variant", [FLAT, U, V])
def test_zero_features_give_zero_gradient(variant):
    p = random_params(np.random.default_rng(4), variant, 8, 3)
    assert not loss_gradient(p, np.zeros(3), 2).any()


def test_two_class_gradient_closed_form():
    w = np.array([[0.4], [-1.1]])
    x, y = np.array([0.7]), 0
    p_y = math.exp(-0.4 * 0.7) / (math.exp(-0.4 * 0.7) + math.exp(1.1 * 0.7))
    g = loss_gradient(ParamMatrix(FLAT, w), x, y)
    # d/dw_y [w_y x + log sum_j exp(-w_j x)] = x (1 - p_y)
    assert g[0, 0] == pytest.approx(x[0] * (1 - p_y), rel=1e-14)
    assert g[1, 0] == pytest.approx(-x[0] * (1 - p_y), rel=1e-14)


@pytest.mark.parametrize("variant", [FLAT, U, V])
def test_gradient_matches_finite_differences(variant):
    rng = np.random.default_rng(5)
    for _ in range(10):
        p = random_params(rng, variant, 9, 3, scale=0.5)
        x, y = rng.normal(size=3), int(rng.integers(9))
        g = loss_gradient(p, x, y)
        fd = central_difference(lambda a: loss_forward(p.with_entries(a), x, y), p.entries)
        assert relative_error(g, fd) <= 1e-5


def test_pseudoclass_gradient_accumulates_descendants():
    table = derive_v_tree(imagenet_example_tree())
    p = ParamMatrix(V, np.zeros((14, 2)), table)
    g = loss_gradient(p, np.array([1.0, 0.5]), label_id("sheepdog"))
    # rows on P_sheepdog get (1 - p_y) minus their other descendants' mass; root row sees all k classes
    np.testing.assert_allclose(g[table.root_row], 0.0, atol=1e-15)
    touched = set(table.paths[label_id("sheepdog")])
    assert all(g[r].any() for r in touched - {table.root_row})


@pytest.mark.parametrize("variant", [FLAT, V])
def test_lipschitz_evidence(variant):
    rng = np.random.default_rng(6)
    for _ in range(50):
        p = random_params(rng, variant, 20, 5, scale=3.0)
        x, y = rng.normal(size=5), int(rng.integers(20))
        length = 1 if variant == FLAT else p.paths.max_path_length
        assert frobenius_norm(loss_gradient(p, x, y)) <= math.sqrt(2) * np.linalg.norm(x) * length + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.25, 0.5, 0.75]), st.sampled_from([FLAT, U, V]))
def test_convexity(seed, t, variant):
    rng = np.random.default_rng(seed)
    a = random_params(rng, variant, 7, 3)
    b = a.with_entries(rng.normal(size=a.entries.shape))
    x, y = rng.normal(size=3), int(rng.integers(7))
    mid = a.with_entries(t * a.entries + (1 - t) * b.entries)
    assert loss_forward(mid, x, y) <= t * loss_forward(a, x, y) + (1 - t) * loss_forward(b, x, y) + 1e-10


# --- predict / evaluate --------------------------------------------------------

def test_predict_single_class():
    assert predict(ParamMatrix(FLAT, [[3.0, 1.0]]), [1.0, -2.0]) == 0


def test_predict_uses_smallest_score():
    assert predict(ParamMatrix(FLAT, [[-5.0], [5.0]]), [1.0]) == 0


def test_predict_breaks_ties_by_index():
    assert predict(ParamMatrix(FLAT, np.zeros((4, 2))), [1.0, 1.0]) == 0


def test_predict_v_equals_flat_and_is_shift_invariant():
    rng = np.random.default_rng(7)
    for _ in range(50):
        p = random_params(rng, V, 15, 4)
        x = rng.normal(size=4)
        flat = ParamMatrix(FLAT, reconstruct_w(p))
        assert predict(p, x) == predict(flat, x)
        shifted = p.entries.copy()
        shifted[p.paths.root_row] += rng.normal(size=4) * 10
        assert predict(p.with_entries(shifted), x) == predict(p, x)


def test_evaluate_perfect_and_maximally_wrong():
    metric = metric_from_distances([[0, 1], [1, 0]])
    data = make_dataset([[1.0], [-1.0]], [0, 1])
    good = ParamMatrix(FLAT, [[-1.0], [1.0]])
    bad = ParamMatrix(FLAT, [[1.0], [-1.0]])
    assert evaluate(good, data, metric)[1:] == (1.0, 1.0)
    assert evaluate(bad, data, metric)[1:] == (0.0, 0.0)
    assert evaluate(good, data).similarity_accuracy is None


def test_evaluate_mean_loss_is_mean_of_losses():
    rng = np.random.default_rng(8)
    p = random_params(rng, V, 10, 4)
    data = make_dataset(rng.normal(size=(100, 4)), rng.integers(0, 10, size=100), k=10)
    expected = sum(loss_forward(p, x, y) for x, y in zip(data.features, data.labels)) / 100
    assert evaluate(p, data).mean_loss == pytest.approx(expected, rel=1e-12)


def test_similarity_accuracy_discounts_near_misses():
    metric = metric_from_distances([[0, 0.2, 1], [0.2, 0, 1], [1, 1, 0]])
    data = make_dataset([[1.0]], [1])
    p = ParamMatrix(FLAT, [[-1.0], [0.0], [1.0]])  # predicts class 0
    assert evaluate(p, data, metric).similarity_accuracy == pytest.approx(0.8)


# --- norms -------------------------------------------------------------------

def test_frobenius_examples():
    assert frobenius_norm(ParamMatrix(FLAT, np.zeros((3, 2)))) == 0.0
    assert frobenius_norm(ParamMatrix(FLAT, np.eye(2))) == pytest.approx(math.sqrt(2), rel=1e-15)
    assert frobenius_norm(np.ones((6, 7))) == pytest.approx(math.sqrt(42), rel=1e-15)


def test_param_matrix_validation():
    u, v = random_tables(np.random.default_rng(9), 6)
    with pytest.raises(InvalidInputError):
        ParamMatrix(V, np.zeros((v.k_prime + 1, 2)), v)
    with pytest.raises(InvalidInputError):
        ParamMatrix(V, np.zeros((u.k_prime, 2)), u)
    with pytest.raises(InvalidInputError):
        ParamMatrix(FLAT, [[np.nan]])
    with pytest.raises(InvalidInputError):
        ParamMatrix("W", np.zeros((2, 2)))


# --- file formats ----------------------------------------------------------------

@pytest.mark.parametrize("variant", [FLAT, U, V])
def test_params_roundtrip(tmp_path, variant):
    p = random_params(np.random.default_rng(10), variant, 11, 3)
    write_params(tmp_path / "p.txt", p)
    got = read_params(tmp_path / "p.txt", p.paths)
    assert got.variant == variant
    np.testing.assert_array_equal(got.entries, p.entries)


def test_params_header(tmp_path):
    write_params(tmp_path / "p.txt", ParamMatrix(FLAT, [[1.5, -2.0]]))
    assert (tmp_path / "p.txt").read_text() == "FLAT 1 2\n1.5 -2.0\n"


def test_params_bad_header(tmp_path):
    (tmp_path / "p.txt").write_text("W 1 2\n1 2\n")
    with pytest.raises(ParseError):
        read_params(tmp_path / "p.txt")


def test_dataset_roundtrip_with_and_without_header(tmp_path):
    rng = np.random.default_rng(11)
    data = make_dataset(rng.normal(size=(20, 3)), rng.integers(0, 4, size=20), k=4)
    for header in (True, False):
        write_dataset_csv(tmp_path / "d.csv", data, header=header)
        got = read_dataset_csv(tmp_path / "d.csv", k=4)
        np.testing.assert_array_equal(got.features, data.features)
        np.testing.assert_array_equal(got.labels, data.labels)
        assert got.rho == data.rho


def test_dataset_reports_missing_tokens(tmp_path):
    (tmp_path / "d.csv").write_text("cat,1\nyak,2\nemu,3\n")
    with pytest.raises(InvalidInputError, match="emu, yak"):
        read_dataset_csv(tmp_path / "d.csv", label_index={"cat": 0})


def test_dataset_bad_row_reports_line(tmp_path):
    (tmp_path / "d.csv").write_text("label,a,b\n0,1,2\n1,2\n")
    with pytest.raises(ParseError) as info:
        read_dataset_csv(tmp_path / "d.csv")
    assert info.value.lineno == 3
