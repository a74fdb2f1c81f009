import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aovsim.views import View, ViewError, export_views, generate_views, import_views, record_delivery, required_cells

ITEM_BITS = 4.0 * (100 + 1e6)  # mean item size in bits for the default size range


def test_record_delivery():
    v = View(0, ((0, 1), (2, 3)))
    record_delivery(v, (0, 1), True, 0.5, 0.25, 0.1)
    assert v.deliveries[(0, 1)].success and v.deliveries[(0, 1)].tra == 0.1
    record_delivery(v, (2, 3), False, 1.0, 2.0, 3.0)
    assert not v.deliveries[(2, 3)].success and v.deliveries[(2, 3)].wai == 2.0
    with pytest.raises(ViewError):
        record_delivery(v, (1, 1), True, 0, 0, 0)


def test_view_needs_cells():
    with pytest.raises(ViewError):
        View(0, ())


def test_generate_matches_target_size():
    rng = np.random.default_rng(0)
    views, sched = generate_views(400, 8 * 6.46e6, 10, 5, ITEM_BITS, 50, rng)
    mean_bits = np.mean([len(v.cells) for v in views]) * ITEM_BITS
    assert mean_bits == pytest.approx(8 * 6.46e6, rel=0.1)
    assert all(len(s) >= 1 for s in sched.slots)
    assert all(g < len(views) for s in sched.slots for g in s)


def test_single_item_target_gives_single_cells():
    views, _ = generate_views(50, ITEM_BITS, 10, 5, ITEM_BITS, 5, np.random.default_rng(1))
    assert all(len(v.cells) == 1 for v in views)


def test_generate_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ViewError):
        generate_views(0, ITEM_BITS, 10, 5, ITEM_BITS, 5, rng)
    with pytest.raises(ViewError):
        generate_views(3, 100 * ITEM_BITS, 2, 2, ITEM_BITS, 5, rng)


def test_generation_deterministic():
    a = generate_views(10, 8 * 6.46e6, 10, 5, ITEM_BITS, 30, np.random.default_rng(3))
    b = generate_views(10, 8 * 6.46e6, 10, 5, ITEM_BITS, 30, np.random.default_rng(3))
    assert [v.cells for v in a[0]] == [v.cells for v in b[0]] and a[1] == b[1]


def test_export_import_roundtrip(tmp_path):
    views, _ = generate_views(6, 8 * 6.46e6, 10, 5, ITEM_BITS, 1, np.random.default_rng(4))
    export_views(tmp_path / "v.csv", views)
    assert [v.cells for v in import_views(tmp_path / "v.csv")] == [v.cells for v in views]


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_required_cells_match_raw_matrices(seed):
    rng = np.random.default_rng(seed)
    views, sched = generate_views(8, 3 * ITEM_BITS, 6, 4, ITEM_BITS, 3, rng)
    for t in range(3):
        req = required_cells(views, sched.at(t))
        m = sum(views[g].requirement_matrix(6, 4) for g in sched.at(t))
        for i in range(6):
            assert tuple(np.nonzero(m[i])[0]) == req.get(i, ())
