import numpy as np
import pytest

from vpreval import similarity as sim
from vpreval.model import DescriptorSet, FormatError, SimilarityMatrix


# --- compare -------------------------------------------------------------------

def test_cosine_self_similarity_is_exactly_one():
    rs = np.random.RandomState(0)
    for _ in range(10):
        v = rs.randn(17)
        assert sim.compare(v, v, "cosine") == 1.0


def test_cosine_orthogonal():
    assert sim.compare([1.0, 0.0], [0.0, 1.0], "cosine") == 0.0


def test_neg_mae_fixture():
    assert sim.compare([1.0, 2.0, 3.0], [2.0, 2.0, 2.0], "neg_mae") == -(2.0 / 3.0)


def test_cosine_zero_vector_rule():
    assert sim.compare([0.0, 0.0], [1.0, 2.0], "cosine") == 0.0
    assert sim.compare([0.0, 0.0], [0.0, 0.0], "cosine") == 0.0


def test_compare_dim_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        sim.compare([1.0], [1.0, 2.0], "cosine")


def test_compare_unknown_measure():
    with pytest.raises(ValueError):
        sim.compare([1.0], [1.0], "dot")


@pytest.mark.parametrize("measure", sim.MEASURES)
def test_compare_symmetric(measure):
    rs = np.random.RandomState(1)
    for _ in range(20):
        a, b = rs.randn(9), rs.randn(9)
        assert sim.compare(a, b, measure) == sim.compare(b, a, measure)


def test_cosine_scale_invariance():
    rs = np.random.RandomState(2)
    a, b = rs.randn(12), rs.randn(12)
    base = sim.compare(a, b, "cosine")
    assert sim.compare(4.0 * a, b, "cosine") == base  # power-of-2 scale: exact
    assert sim.compare(1.7 * a, 0.3 * b, "cosine") == pytest.approx(base, abs=1e-12)


def test_neg_euclidean_sign_and_value():
    assert sim.compare([0.0, 0.0], [3.0, 4.0], "neg_euclidean") == -5.0


# --- build_matrix ------------------------------------------------------------------

def test_build_matrix_orthonormal_identity():
    eye = DescriptorSet(np.eye(4))
    S = sim.build_matrix(eye, eye, "cosine")
    assert np.array_equal(S.values, np.eye(4))
    assert S.measure_tag == "cosine"
    assert S.postprocess_tag == "none"


def test_build_matrix_1x1():
    a = DescriptorSet(np.array([[1.0, 2.0]]))
    b = DescriptorSet(np.array([[2.0, 1.0]]))
    S = sim.build_matrix(a, b, "neg_mae")
    assert S.values[0, 0] == sim.compare([1.0, 2.0], [2.0, 1.0], "neg_mae")


@pytest.mark.parametrize("measure", sim.MEASURES)
def test_build_matrix_matches_scalar_loop_zero_ulp(measure):
    rs = np.random.RandomState(3)
    db = DescriptorSet(rs.randn(5, 7))
    q = DescriptorSet(rs.randn(7, 7))
    S = sim.build_matrix(db, q, measure)
    for i in range(5):
        for j in range(7):
            assert S.values[i, j] == sim.compare(db.data[i], q.data[j], measure)


def test_build_matrix_dim_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        sim.build_matrix(DescriptorSet(np.ones((2, 3))), DescriptorSet(np.ones((2, 4))), "cosine")


def test_build_matrix_partition_invariance():
    rs = np.random.RandomState(4)
    db = DescriptorSet(rs.randn(30, 8))
    q = DescriptorSet(rs.randn(41, 8))
    base = sim.build_matrix(db, q, "cosine", workers=1)
    for workers in (2, 4, 9):
        assert np.array_equal(base.values, sim.build_matrix(db, q, "cosine", workers=workers).values)


# --- top-k -------------------------------------------------------------------------

def test_topk_full_database():
    values = np.array([[0.1], [0.9], [0.5]])
    assert sim.topk_candidates(values, 3)[0].tolist() == [1, 2, 0]


def test_topk_tie_breaks_to_lower_index():
    values = np.zeros((6, 1))
    values[2, 0] = values[5, 0] = 0.7
    assert sim.topk_candidates(values, 1)[0].tolist() == [2]


def test_topk_matches_sort_oracle():
    rs = np.random.RandomState(5)
    values = rs.rand(20, 4)
    got = sim.topk_candidates(values, 3)
    for j in range(4):
        oracle = sorted(range(20), key=lambda i: (-values[i, j], i))[:3]
        assert got[j].tolist() == oracle


def test_topk_range_check():
    with pytest.raises(ValueError):
        sim.topk_candidates(np.ones((3, 2)), 0)
    with pytest.raises(ValueError):
        sim.topk_candidates(np.ones((3, 2)), 4)


# --- sequence prior candidates --------------------------------------------------------

def test_prior_candidates_pure_window():
    S = np.zeros((20, 4))
    got = sim.sequence_prior_candidates(S, prev_matches=[10, 0, 0, 0], j=1, k=0, w=2)
    assert got.tolist() == [8, 9, 10, 11, 12]


def test_prior_candidates_boundary_clip():
    S = np.zeros((20, 4))
    got = sim.sequence_prior_candidates(S, prev_matches=[0, 0, 0, 0], j=1, k=0, w=2)
    assert got.tolist() == [0, 1, 2]


def test_prior_candidates_union_with_topk():
    S = np.zeros((20, 3))
    S[[15, 16, 17], 1] = [0.9, 0.8, 0.7]  # top-3 for query 1, disjoint from window
    got = sim.sequence_prior_candidates(S, prev_matches=[5, 0, 0], j=1, k=3, w=2)
    assert got.tolist() == [3, 4, 5, 6, 7, 15, 16, 17]
    assert len(got) == 3 + (2 * 2 + 1)


def test_prior_candidates_needs_predecessor():
    with pytest.raises(ValueError):
        sim.sequence_prior_candidates(np.zeros((5, 2)), [0, 0], j=0, k=1, w=1)


# --- sequence postprocessing -----------------------------------------------------------

def _matrix(values):
    return SimilarityMatrix(np.asarray(values, dtype=float), measure_tag="cosine")


def test_seqpost_window_one_is_identity():
    rs = np.random.RandomState(6)
    S = _matrix(rs.rand(9, 9))
    out = sim.seq_postprocess(S, sim.SeqPostConfig(window_length=1))
    assert np.array_equal(out.values, S.values)


def test_seqpost_unit_diagonal_construction():
    S = _matrix(np.eye(9))
    cfg = sim.SeqPostConfig(window_length=5, velocities=(1.0,), min_valid_fraction=0.5)
    out = sim.seq_postprocess(S, cfg)
    diag = np.diag(out.values)
    assert np.all(diag == 1.0)
    off = out.values[~np.eye(9, dtype=bool)]
    assert np.all(off < 1.0)


def test_seqpost_constant_matrix_preserved():
    S = _matrix(np.full((12, 10), 0.5))
    out = sim.seq_postprocess(S, sim.SeqPostConfig(window_length=5))
    assert np.array_equal(out.values, S.values)


def test_seqpost_never_exceeds_global_max_and_is_monotone():
    rs = np.random.RandomState(7)
    a = rs.rand(15, 13)
    b = a + rs.rand(15, 13)  # b >= a elementwise
    cfg = sim.SeqPostConfig(window_length=7)
    pa = sim.seq_postprocess(_matrix(a), cfg).values
    pb = sim.seq_postprocess(_matrix(b), cfg).values
    assert pa.max() <= a.max()
    assert np.all(pa <= pb)


def test_seqpost_tag_and_config_validation():
    out = sim.seq_postprocess(_matrix(np.eye(3)), sim.SeqPostConfig(window_length=3))
    assert out.postprocess_tag.startswith("seqpost:L=3")
    with pytest.raises(ValueError):
        sim.SeqPostConfig(window_length=4)
    with pytest.raises(ValueError):
        sim.SeqPostConfig(velocities=())
    with pytest.raises(ValueError):
        sim.SeqPostConfig(velocities=(0.0,))


# --- VPRS file ---------------------------------------------------------------------------

def test_similarity_file_roundtrip(tmp_path):
    values = np.random.RandomState(8).rand(4, 6).astype(np.float32).astype(np.float64)
    S = SimilarityMatrix(values, measure_tag="neg_mae", postprocess_tag="seqpost:L=5")
    path = tmp_path / "s.vprs"
    sim.save_similarity(S, path)
    loaded = sim.load_similarity(path)
    assert np.array_equal(loaded.values, values)
    assert loaded.measure_tag == "neg_mae"
    assert loaded.postprocess_tag == "seqpost:L=5"


def test_similarity_file_errors(tmp_path):
    path = tmp_path / "bad.vprs"
    path.write_bytes(b"NOPE")
    with pytest.raises(FormatError, match="magic"):
        sim.load_similarity(path)
    good = tmp_path / "good.vprs"
    sim.save_similarity(SimilarityMatrix(np.ones((2, 2)), "cosine"), good)
    good.write_bytes(good.read_bytes()[:-3])
    with pytest.raises(FormatError, match="truncated"):
        sim.load_similarity(good)
