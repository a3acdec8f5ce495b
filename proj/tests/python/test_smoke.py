import numpy as np
import pytest

import audio_audit as aa


def test_synthetic_roundtrip_and_ranking(tmp_path):
    syn = aa.gen_synthetic_embeddings(3, 10, 8, 0.05, seed=1)
    ids, vecs = syn["ids"], syn["vectors"]
    assert vecs.shape == (30, 8)
    assert np.allclose(np.linalg.norm(vecs, axis=1), 1.0, atol=1e-5)

    aa.write_embeddings(ids, vecs, tmp_path / "e.json", tmp_path / "e.aemb")
    ids2, vecs2 = aa.load_embeddings(tmp_path / "e.json", tmp_path / "e.aemb")
    assert ids2 == ids
    assert np.array_equal(vecs, vecs2)

    ot = aa.rank_off_topic(ids, vecs, k=3)
    assert len(ot) == 30
    assert all(a[1] >= b[1] for a, b in zip(ot, ot[1:]))


def test_duplicate_pair_ranks_first():
    syn = aa.gen_synthetic_embeddings(2, 5, 4, 0.2, seed=3)
    vecs = syn["vectors"].copy()
    vecs[1] = vecs[0]
    nd = aa.rank_near_duplicates(syn["ids"], vecs)
    a, b, score = nd["pairs"][0]
    assert (a, b) == (syn["ids"][0], syn["ids"][1])
    assert score == pytest.approx(1.0, abs=1e-6)


def test_label_errors_flag_singletons():
    vecs = np.array([[1, 0], [1, 0], [0, 1]], dtype=np.float32)
    ranked, flagged = aa.rank_label_errors(["a", "b", "c"], vecs, [0, 0, 1])
    assert flagged == ["c"]
    assert ranked[0][0] == "c"


def test_metrics():
    assert aa.auroc([0.4, 0.6, 0.5, 0.2], [1, 0, 1, 0]) == pytest.approx(0.5)
    assert aa.average_precision([3, 2, 1], [1, 0, 1]) == pytest.approx(5 / 6)
    ids = [f"s{i:03d}" for i in range(100)]
    curve = aa.foe_curve(ids, ids[:5], [1.0])
    assert curve[0][1] == pytest.approx(0.0594, abs=1e-4)
    assert aa.effort_summary([0.5, 0.5]) == pytest.approx((0.5, 2.0))
    assert len(aa.default_recall_grid()) == 20


def test_errors_map_to_audit_error():
    with pytest.raises(aa.AuditError):
        aa.auroc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        aa.select_targets(["a", "b"], 0.0, 1)


def test_corruption_helpers():
    ids = [f"x{i}" for i in range(2000)]
    t = aa.select_targets(ids, 0.05, 7)
    assert len(t) == 100 and t == aa.select_targets(ids, 0.05, 7)
    assert aa.flip_label(0, 2, seed=5) == 1
