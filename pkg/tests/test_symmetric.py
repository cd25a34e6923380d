"""Block-sparse symmetric tensor tests.

The worked three-leg Z2 example (one ingoing link with sectors {0: 2, 1: 1},
two outgoing links with sectors {0: 1, 1: 1}) is used as a frozen fixture
throughout: its dense image, fused blocks, and subtensor-assignment behavior
are all pinned to hand-computed values.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnkit import (
    IN,
    OUT,
    SymmetricLink,
    SymmetricTensor,
    TRIVIAL,
    U1,
    Z2,
    adjusted,
    build_fuse_node,
    contract,
    contract_symmetric,
    downgrade,
    expm_symmetric,
    fuse_index_map,
    fuse_symmetric,
    intersect_links,
    link_index_table,
    norm,
    pad_links,
    permute,
    permute_symmetric,
    possible_matches,
    qr_symmetric,
    scale_axis,
    split_symmetric,
    svd_symmetric,
    sym_subtensor_assign,
    sym_subtensor_read,
)

from test_dense import reference_tensor

SQ2 = 1.0 / np.sqrt(2.0)
SQ23 = np.sqrt(2.0 / 3.0)
SQ13 = np.sqrt(1.0 / 3.0)


def reference_symmetric():
    """Z2 tensor whose dense image is the reference tensor of test_dense."""
    l1 = SymmetricLink.make(Z2, {0: 2, 1: 1})
    l23 = SymmetricLink.make(Z2, {0: 1, 1: 1})
    t = SymmetricTensor.zeros([l1, l23, l23], [IN, OUT, OUT])
    t.blocks[(0, 0, 0)] = np.array([SQ2, 0.0], dtype=np.complex128).reshape(
        (2, 1, 1), order="F"
    )
    t.blocks[(0, 1, 1)] = np.array([-SQ2, 1.0], dtype=np.complex128).reshape(
        (2, 1, 1), order="F"
    )
    t.blocks[(1, 1, 0)] = np.array([SQ23], dtype=np.complex128).reshape(
        (1, 1, 1), order="F"
    )
    t.blocks[(1, 0, 1)] = np.array([SQ13], dtype=np.complex128).reshape(
        (1, 1, 1), order="F"
    )
    return t


def random_symmetric(links, dirs, seed=0):
    rng = np.random.default_rng(seed)
    return SymmetricTensor.random(links, dirs, rng)


# ---------------------------------------------------------------------------
# links and groups


def test_link_basics():
    l = SymmetricLink.make(Z2, {0: 2, 1: 1})
    assert l.dim == 3
    assert l.n_sectors == 2
    assert l.deg_of(0) == 2 and l.deg_of(1) == 1
    assert l.offset_of(1) == 2
    assert l.has(1) and not l.has(2)


def test_link_sorted_sectors():
    l = SymmetricLink.make(U1, {1: 3, -1: 2, 0: 1})
    assert l.sectors == (-1, 0, 1)
    assert l.degs == (2, 1, 3)


def test_adjusted_direction():
    assert adjusted(Z2, 1, OUT) == 1
    assert adjusted(Z2, 1, IN) == 1
    assert adjusted(U1, 3, IN) == -3
    assert adjusted(U1, 3, OUT) == 3


def test_intersect_and_pad():
    a = SymmetricLink.make(U1, {0: 2, 1: 3})
    b = SymmetricLink.make(U1, {1: 1, 2: 4})
    both = intersect_links(a, b)
    assert both.as_dict() == {1: 1}
    assert pad_links(a, b).as_dict() == {0: 2, 1: 4, 2: 4}
    assert intersect_links(a, SymmetricLink.make(U1, {5: 1})) is None


def test_link_invert():
    l = SymmetricLink.make(U1, {-1: 2, 1: 3})
    assert l.invert().as_dict() == {-1: 3, 1: 2}
    z = SymmetricLink.make(Z2, {0: 1, 1: 2})
    assert z.invert().as_dict() == {0: 1, 1: 2}


# ---------------------------------------------------------------------------
# fuse nodes: collision tables


def test_collision_table_two_outgoing():
    # Fusing the two outgoing legs of the reference tensor, outgoing result.
    l = SymmetricLink.make(Z2, {0: 1, 1: 1})
    node = build_fuse_node([l, l], [OUT, OUT], OUT)
    rows = [(c.sectors, c.fused, c.alpha, c.delta, c.size) for c in node.collisions]
    assert rows == [
        ((0, 0), 0, 0, 0, 1),
        ((1, 0), 1, 0, 0, 1),
        ((0, 1), 1, 1, 1, 1),
        ((1, 1), 0, 1, 1, 1),
    ]
    assert node.fused_link.as_dict() == {0: 2, 1: 2}


def test_collision_enumeration_is_column_major():
    # First link's sector index must advance fastest.
    a = SymmetricLink.make(Z2, {0: 1, 1: 1})
    b = SymmetricLink.make(Z2, {0: 1, 1: 1})
    node = build_fuse_node([a, b], [OUT, OUT], OUT)
    combos = [c.sectors for c in node.collisions]
    assert combos == [(0, 0), (1, 0), (0, 1), (1, 1)]


def test_collision_degeneracy_offsets():
    a = SymmetricLink.make(U1, {0: 2, 1: 1})
    b = SymmetricLink.make(U1, {0: 3, 1: 2})
    node = build_fuse_node([a, b], [OUT, OUT], OUT)
    fused = node.fused_link.as_dict()
    assert fused == {0: 6, 1: 3 + 4, 2: 2}
    c = node.lookup((1, 0))
    assert c.fused == 1 and c.delta == 0 and c.size == 3
    c = node.lookup((0, 1))
    assert c.fused == 1 and c.delta == 3 and c.size == 4


def test_fuse_node_direction_adjustment():
    # An ingoing participant contributes its inverted sector.
    a = SymmetricLink.make(U1, {1: 1, 2: 1})
    b = SymmetricLink.make(U1, {1: 1})
    node = build_fuse_node([a, b], [IN, OUT], OUT)
    assert node.fused_link.as_dict() == {-1: 1, 0: 1}
    # Ingoing fused link inverts once more, restoring the stored labels.
    node_in = build_fuse_node([a, b], [IN, OUT], IN)
    assert node_in.fused_link.as_dict() == {0: 1, 1: 1}


# ---------------------------------------------------------------------------
# construction, validation, dense image


def test_possible_matches_and_zeros():
    t = reference_symmetric()
    assert set(t.blocks) == {(0, 0, 0), (0, 1, 1), (1, 1, 0), (1, 0, 1)}
    assert set(possible_matches(t.links, t.dirs)) == set(t.blocks)
    assert len(possible_matches(t.links, t.dirs)) == 4


def test_fusion_constraint_validation():
    l = SymmetricLink.make(Z2, {0: 1, 1: 1})
    t = SymmetricTensor.zeros([l, l], [OUT, OUT])
    bad = np.ones((1, 1), dtype=np.complex128)
    with pytest.raises(ValueError):
        SymmetricTensor([l, l], [OUT, OUT], {(0, 1): bad})  # 0 + 1 != identity
    with pytest.raises(ValueError):
        SymmetricTensor([l, l], [OUT, OUT], {(1, 1): np.ones((2, 1))})


def test_downgrade_reproduces_dense_reference():
    t = reference_symmetric()
    dense = downgrade(t)
    ref = reference_tensor()
    assert dense.dims == ref.dims
    np.testing.assert_allclose(dense.as_array(), ref.as_array(), atol=1e-15)


def test_norm_matches_dense():
    t = reference_symmetric()
    assert np.isclose(t.norm(), np.sqrt(3.0))
    assert np.isclose(t.norm(), norm(downgrade(t)))


def test_identity_tensor():
    l = SymmetricLink.make(U1, {0: 2, 1: 3})
    eye = SymmetricTensor.identity(l)
    d = downgrade(eye).as_array()
    np.testing.assert_allclose(d, np.eye(5), atol=1e-15)


def test_random_fills_all_matches():
    l1 = SymmetricLink.make(U1, {0: 1, 1: 2})
    l2 = SymmetricLink.make(U1, {0: 2, 1: 1})
    rng = np.random.default_rng(7)
    t = SymmetricTensor.random([l1, l2, l1.invert()], [IN, OUT, OUT], rng)
    assert set(t.blocks) == set(possible_matches(t.links, t.dirs))
    assert all(np.iscomplexobj(b) for b in t.blocks.values())


def test_conj_flips_directions_and_conjugates():
    t = random_symmetric(
        [SymmetricLink.make(U1, {0: 1, 1: 1}), SymmetricLink.make(U1, {0: 1, 1: 1})],
        [IN, OUT],
        seed=3,
    )
    c = t.conj()
    assert c.dirs == tuple(-d for d in t.dirs)
    for match, block in t.blocks.items():
        np.testing.assert_allclose(c.blocks[match], block.conj())


def test_vdot_and_scaled_add():
    links = [SymmetricLink.make(Z2, {0: 2, 1: 1}), SymmetricLink.make(Z2, {0: 2, 1: 1})]
    a = random_symmetric(links, [IN, OUT], seed=1)
    b = random_symmetric(links, [IN, OUT], seed=2)
    da, db = downgrade(a).as_array(), downgrade(b).as_array()
    assert np.isclose(a.vdot(b), np.vdot(da, db))
    s = a.add(b, alpha=2.5)
    np.testing.assert_allclose(downgrade(s).as_array(), da + 2.5 * db)


# ---------------------------------------------------------------------------
# permute


def test_permute_symmetric_matches_dense():
    t = reference_symmetric()
    p = permute_symmetric(t, [3, 1, 2])
    assert p.dirs == (OUT, OUT, IN)
    dense_p = permute(downgrade(t), [3, 1, 2])
    np.testing.assert_allclose(downgrade(p).as_array(), dense_p.as_array(), atol=1e-15)


# ---------------------------------------------------------------------------
# fuse and split


def test_partial_fusion_blocks():
    # Fuse outgoing legs 2-3 of the reference tensor; frozen block content.
    t = reference_symmetric()
    node = build_fuse_node([t.links[1], t.links[2]], [OUT, OUT], OUT)
    f = fuse_symmetric(t, node, 2)
    assert f.links[1].as_dict() == {0: 2, 1: 2}
    np.testing.assert_allclose(
        f.blocks[(0, 0)], np.array([[SQ2, -SQ2], [0.0, 1.0]]), atol=1e-15
    )
    np.testing.assert_allclose(
        f.blocks[(1, 1)], np.array([[SQ23, SQ13]]), atol=1e-15
    )


def test_full_fusion_vector():
    t = reference_symmetric()
    node = build_fuse_node(list(t.links), list(t.dirs), OUT)
    f = fuse_symmetric(t, node, 1)
    assert f.rank == 1
    # Sector 0 collects every block; frozen layout from the collision order.
    np.testing.assert_allclose(
        f.blocks[(0,)], np.array([SQ2, 0.0, SQ23, SQ13, -SQ2, 1.0]), atol=1e-15
    )
    assert (1,) not in f.blocks or np.allclose(f.blocks[(1,)], 0.0)


def test_fuse_split_roundtrip():
    t = reference_symmetric()
    node = build_fuse_node([t.links[1], t.links[2]], [OUT, OUT], OUT)
    f = fuse_symmetric(t, node, 2)
    back = split_symmetric(f, node, 2)
    assert back.links == t.links and back.dirs == t.dirs
    for match, block in t.blocks.items():
        np.testing.assert_allclose(back.blocks[match], block, atol=1e-15)


def test_fuse_split_roundtrip_u1():
    l1 = SymmetricLink.make(U1, {-1: 2, 0: 1, 1: 2})
    l2 = SymmetricLink.make(U1, {0: 2, 1: 1})
    l3 = SymmetricLink.make(U1, {-2: 1, -1: 2, 0: 1, 1: 1, 2: 1})
    t = random_symmetric([l1, l2, l3], [OUT, IN, IN], seed=11)
    node = build_fuse_node([l1, l2], [OUT, IN], IN)
    f = fuse_symmetric(t, node, 1)
    back = split_symmetric(f, node, 1)
    assert set(back.blocks) <= set(t.blocks)
    for match, block in back.blocks.items():
        np.testing.assert_allclose(block, t.blocks[match], atol=1e-14)
    # Fusion preserves the norm and the dense image up to index grouping.
    assert np.isclose(f.norm(), t.norm())


def test_fuse_index_map_consistency():
    # The dense image of the fused tensor equals the dense fuse of the
    # downgraded tensor after applying the sector-grouping permutation.
    t = reference_symmetric()
    node = build_fuse_node([t.links[1], t.links[2]], [OUT, OUT], OUT)
    f = fuse_symmetric(t, node, 2)
    pi = fuse_index_map(node)
    from tnkit import fuse as dense_fuse

    dense_f = dense_fuse(downgrade(t), 2, 3)
    a = downgrade(f).as_array()
    b = dense_f.as_array()
    for j_sym, j_dense in enumerate(pi):
        np.testing.assert_allclose(a[:, j_sym], b[:, j_dense], atol=1e-15)


# ---------------------------------------------------------------------------
# contraction


def test_contract_symmetric_matches_dense():
    l1 = SymmetricLink.make(Z2, {0: 2, 1: 1})
    l2 = SymmetricLink.make(Z2, {0: 1, 1: 2})
    l3 = SymmetricLink.make(Z2, {0: 2, 1: 2})
    a = random_symmetric([l1, l2, l3], [IN, OUT, OUT], seed=21)
    b = random_symmetric([l2, l3, l1], [IN, IN, OUT], seed=22)
    c = contract_symmetric(a, b, [(2, 1), (3, 2)])
    assert c.links == (l1, l1) and c.dirs == (IN, OUT)
    dense_c = contract(downgrade(a), downgrade(b), [(2, 1), (3, 2)])
    np.testing.assert_allclose(
        downgrade(c).as_array(), dense_c.as_array(), atol=1e-13
    )


def test_contract_symmetric_full():
    t = reference_symmetric()
    c = t.conj()
    s = contract_symmetric(t, c, [(1, 1), (2, 2), (3, 3)])
    assert s.rank == 0
    assert np.isclose(s.scalar(), 3.0)


def test_contract_symmetric_rejects_wrong_directions():
    l = SymmetricLink.make(Z2, {0: 1, 1: 1})
    a = random_symmetric([l, l], [OUT, OUT], seed=1)
    b = random_symmetric([l, l], [OUT, OUT], seed=2)
    with pytest.raises(ValueError):
        contract_symmetric(a, b, [(2, 1)])


def test_contract_symmetric_u1_matches_dense():
    l1 = SymmetricLink.make(U1, {-1: 1, 0: 2, 1: 1})
    l2 = SymmetricLink.make(U1, {0: 1, 1: 1})
    a = random_symmetric([l1, l2], [OUT, OUT], seed=31)
    b = random_symmetric([l2, l1], [IN, IN], seed=32)
    c = contract_symmetric(a, b, [(1, 2), (2, 1)])
    dense_c = contract(downgrade(a), downgrade(b), [(1, 2), (2, 1)])
    assert np.isclose(c.scalar(), complex(dense_c.data[0]))


# ---------------------------------------------------------------------------
# subtensor read / assign


def worked_subtensor_fixture():
    """Frozen assignment example on the reference link structure."""
    l1 = SymmetricLink.make(Z2, {0: 2, 1: 1})
    l23 = SymmetricLink.make(Z2, {0: 1, 1: 1})
    t = SymmetricTensor.zeros([l1, l23, l23], [IN, OUT, OUT])
    t.blocks[(1, 1, 0)] = np.full((1, 1, 1), 1.0, dtype=np.complex128)
    t.blocks[(1, 0, 1)] = np.full((1, 1, 1), 2.0, dtype=np.complex128)
    t.blocks[(0, 1, 1)] = np.array([3.0, 4.0], dtype=np.complex128).reshape(
        (2, 1, 1), order="F"
    )

    sl = SymmetricLink.make(Z2, {0: 1, 1: 1})
    s = SymmetricTensor.zeros([sl, sl, sl], [IN, OUT, OUT])
    s.blocks[(0, 0, 0)] = np.full((1, 1, 1), 5.0, dtype=np.complex128)
    s.blocks[(1, 1, 0)] = np.full((1, 1, 1), 6.0, dtype=np.complex128)

    maps = [{0: [1], 1: [1]}, {0: [1], 1: [1]}, {0: [1], 1: [1]}]
    return t, s, maps


def test_subtensor_assign_worked_example():
    t, s, maps = worked_subtensor_fixture()
    out = sym_subtensor_assign(t, s, maps)
    assert set(out.blocks) == {(0, 0, 0), (1, 1, 0), (0, 1, 1)}
    np.testing.assert_allclose(
        out.blocks[(0, 0, 0)].ravel(order="F"), [5.0, 0.0]
    )
    np.testing.assert_allclose(out.blocks[(1, 1, 0)].ravel(order="F"), [6.0])
    # (1,0,1) is covered by the map but absent from the source: removed.
    assert (1, 0, 1) not in out.blocks
    # (0,1,1) only has its mapped region zeroed; unmapped data survives.
    np.testing.assert_allclose(
        out.blocks[(0, 1, 1)].ravel(order="F"), [0.0, 4.0]
    )


def test_subtensor_read_roundtrip():
    t, s, maps = worked_subtensor_fixture()
    out = sym_subtensor_assign(t, s, maps)
    back = sym_subtensor_read(out, maps)
    assert set(back.blocks) == set(s.blocks)
    for match, block in s.blocks.items():
        np.testing.assert_allclose(back.blocks[match], block)


def test_subtensor_read_slices_degeneracies():
    t = reference_symmetric()
    keeps = [{0: [2, 1]}, {0: [1], 1: [1]}, {0: [1], 1: [1]}]
    r = sym_subtensor_read(t, keeps)
    assert r.links[0].as_dict() == {0: 2}
    # Sector-0 rows swapped by the read map.
    np.testing.assert_allclose(r.blocks[(0, 0, 0)].ravel(order="F"), [0.0, SQ2])
    np.testing.assert_allclose(r.blocks[(0, 1, 1)].ravel(order="F"), [1.0, -SQ2])
    assert (1, 1, 0) not in r.blocks and (1, 0, 1) not in r.blocks


def test_subtensor_assign_matches_dense():
    # Same-structure assign agrees with the dense routine elementwise.
    l = SymmetricLink.make(U1, {0: 2, 1: 2})
    t = random_symmetric([l, l], [IN, OUT], seed=41)
    sl = SymmetricLink.make(U1, {0: 1, 1: 1})
    s = random_symmetric([sl, sl], [IN, OUT], seed=42)
    maps = [{0: [2], 1: [1]}, {0: [1], 1: [2]}]
    out = sym_subtensor_assign(t, s, maps)

    dense_of = {sk: i + 1 for i, sk in enumerate(link_index_table(l))}
    dense_maps = [
        [dense_of[(q, d - 1)] for q in sorted(m) for d in m[q]] for m in maps
    ]
    from tnkit import subtensor_assign

    expected = subtensor_assign(downgrade(t), downgrade(s), dense_maps)
    np.testing.assert_allclose(
        downgrade(out).as_array(), expected.as_array(), atol=1e-15
    )


# ---------------------------------------------------------------------------
# QR / SVD


def test_qr_symmetric_reconstructs():
    t = reference_symmetric()
    v, w, klink = qr_symmetric(t, 1)
    back = contract_symmetric(v, w, [(2, 1)])
    for match, block in t.blocks.items():
        np.testing.assert_allclose(back.blocks[match], block, atol=1e-14)
    # v carries the new link outgoing, w ingoing.
    assert v.dirs[-1] == OUT and w.dirs[0] == IN


def test_qr_symmetric_isometry():
    l1 = SymmetricLink.make(U1, {0: 2, 1: 2})
    l2 = SymmetricLink.make(U1, {0: 2, 1: 1})
    l3 = SymmetricLink.make(U1, {0: 1, 1: 2})
    t = random_symmetric([l1, l2, l3], [IN, OUT, OUT], seed=51)
    v, w, klink = qr_symmetric(t, 2)
    g = contract_symmetric(v.conj(), v, [(1, 1), (2, 2)])
    eye = SymmetricTensor.identity(klink, dirs=(IN, OUT))
    diff = g.add(eye, alpha=-1.0)
    assert diff.norm() < 1e-13


def test_qr_symmetric_r_phase_convention():
    t = random_symmetric(
        [SymmetricLink.make(Z2, {0: 3, 1: 2}), SymmetricLink.make(Z2, {0: 3, 1: 2})],
        [IN, OUT],
        seed=52,
    )
    v, w, klink = qr_symmetric(t, 1)
    for match, block in w.blocks.items():
        if match[0] == match[1]:
            d = np.diagonal(block)
            assert np.all(d.real >= -1e-14)
            assert np.all(np.abs(d.imag) <= 1e-14)


def test_svd_symmetric_reconstructs():
    t = reference_symmetric()
    v, spectra, w, klink = svd_symmetric(t, 1)
    mid = scale_axis(v, v.rank, spectra.by_sector)
    back = contract_symmetric(mid, w, [(2, 1)])
    for match, block in t.blocks.items():
        np.testing.assert_allclose(back.blocks[match], block, atol=1e-14)
    assert spectra.discarded_weight == 0.0
    assert np.isclose(spectra.kept_norm, np.sqrt(3.0))


def test_svd_symmetric_global_truncation():
    # chi=1 must keep the single largest value across all sectors.
    l = SymmetricLink.make(Z2, {0: 2, 1: 2})
    t = SymmetricTensor.zeros([l, l], [IN, OUT])
    t.blocks[(0, 0)] = np.diag([3.0, 1.0]).astype(np.complex128)
    t.blocks[(1, 1)] = np.diag([2.0, 0.5]).astype(np.complex128)
    v, spectra, w, klink = svd_symmetric(t, 1, chi=1)
    vals = spectra.global_values()
    np.testing.assert_allclose(vals, [3.0])
    assert klink.as_dict() == {0: 1}
    assert np.isclose(spectra.discarded_weight, 1.0 + 4.0 + 0.25)
    assert np.isclose(spectra.truncation_error, np.sqrt(5.25))


def test_svd_symmetric_tie_keeps_equal_values():
    # Exact float ties at the cut are all kept even past chi.
    l = SymmetricLink.make(Z2, {0: 1, 1: 1})
    t = SymmetricTensor.zeros([l, l], [IN, OUT])
    t.blocks[(0, 0)] = np.array([[2.0]], dtype=np.complex128)
    t.blocks[(1, 1)] = np.array([[2.0]], dtype=np.complex128)
    v, spectra, w, klink = svd_symmetric(t, 1, chi=1)
    assert len(spectra.global_values()) == 2
    assert klink.as_dict() == {0: 1, 1: 1}


def test_svd_symmetric_matches_dense_spectrum():
    l1 = SymmetricLink.make(U1, {0: 2, 1: 2})
    l2 = SymmetricLink.make(U1, {0: 1, 1: 1})
    l3 = SymmetricLink.make(U1, {0: 2, 1: 2, 2: 1})
    t = random_symmetric([l1, l2, l3], [IN, IN, OUT], seed=61)
    from tnkit import svd as dense_svd

    v, spectra, w, klink = svd_symmetric(t, 2)
    _, dense_spec, _ = dense_svd(downgrade(t), 2)
    sym_vals = np.sort(spectra.global_values())[::-1]
    dense_vals = np.sort(dense_spec.values)[::-1]
    np.testing.assert_allclose(
        sym_vals, dense_vals[: len(sym_vals)], atol=1e-12
    )
    # Values beyond the symmetric count are numerically zero.
    assert np.all(dense_vals[len(sym_vals):] < 1e-12)


def test_svd_dropped_sector_removed_from_link():
    l = SymmetricLink.make(Z2, {0: 2, 1: 1})
    t = SymmetricTensor.zeros([l, l], [IN, OUT])
    t.blocks[(0, 0)] = np.diag([5.0, 4.0]).astype(np.complex128)
    t.blocks[(1, 1)] = np.array([[1e-3]], dtype=np.complex128)
    v, spectra, w, klink = svd_symmetric(t, 1, chi=2)
    assert klink.as_dict() == {0: 2}
    assert set(spectra.by_sector) == {0}


# ---------------------------------------------------------------------------
# axis scaling, exponentials


def test_scale_axis():
    t = reference_symmetric()
    weights = {0: np.array([2.0, 5.0]), 1: np.array([3.0])}
    s = scale_axis(t, 1, weights)
    np.testing.assert_allclose(
        s.blocks[(0, 0, 0)].ravel(order="F"), [2.0 * SQ2, 0.0]
    )
    np.testing.assert_allclose(
        s.blocks[(0, 1, 1)].ravel(order="F"), [-2.0 * SQ2, 5.0]
    )
    np.testing.assert_allclose(
        s.blocks[(1, 1, 0)].ravel(order="F"), [3.0 * SQ23]
    )


def test_expm_symmetric_diagonal():
    l = SymmetricLink.make(Z2, {0: 1, 1: 1})
    t = SymmetricTensor.zeros([l, l], [OUT, IN])
    t.blocks[(0, 0)] = np.array([[1.0]], dtype=np.complex128)
    t.blocks[(1, 1)] = np.array([[-1.0]], dtype=np.complex128)
    e = expm_symmetric(t)
    assert np.isclose(e.blocks[(0, 0)][0, 0], np.e)
    assert np.isclose(e.blocks[(1, 1)][0, 0], 1.0 / np.e)


def test_expm_symmetric_inserts_identity():
    # Absent diagonal matches exponentiate to identity blocks.
    l = SymmetricLink.make(Z2, {0: 2, 1: 1})
    t = SymmetricTensor.zeros([l, l], [OUT, IN])
    t.blocks[(1, 1)] = np.array([[0.5]], dtype=np.complex128)
    e = expm_symmetric(t)
    np.testing.assert_allclose(e.blocks[(0, 0)], np.eye(2), atol=1e-15)
    assert np.isclose(e.blocks[(1, 1)][0, 0], np.exp(0.5))


def test_expm_symmetric_matches_dense():
    l = SymmetricLink.make(U1, {0: 2, 1: 2})
    rng = np.random.default_rng(71)
    t = SymmetricTensor.random([l, l], [OUT, IN], rng)
    h = t.add(permute_symmetric(t.conj(), [2, 1]), alpha=1.0).scaled(0.5)
    e = expm_symmetric(h)
    from scipy.linalg import expm as scipy_expm

    dense_e = scipy_expm(downgrade(h).as_array())
    np.testing.assert_allclose(downgrade(e).as_array(), dense_e, atol=1e-12)


# ---------------------------------------------------------------------------
# trivial group: dense embedding


def test_trivial_group_tensor_is_dense():
    l2 = SymmetricLink.make(TRIVIAL, {0: 2})
    l3 = SymmetricLink.make(TRIVIAL, {0: 3})
    rng = np.random.default_rng(81)
    t = SymmetricTensor.random([l3, l2], [IN, OUT], rng)
    assert set(t.blocks) == {(0, 0)}
    assert downgrade(t).dims == (3, 2)
    v, spectra, w, klink = svd_symmetric(t, 1)
    assert set(spectra.by_sector) == {0}


# ---------------------------------------------------------------------------
# property tests


link_st = st.builds(
    lambda degs: SymmetricLink.make(Z2, {q: d for q, d in enumerate(degs) if d > 0}),
    st.lists(st.integers(min_value=0, max_value=2), min_size=2, max_size=2).filter(
        lambda degs: sum(degs) > 0
    ),
)


@settings(max_examples=40, deadline=None)
@given(st.lists(link_st, min_size=2, max_size=3), st.integers(0, 2 ** 16))
def test_fuse_split_roundtrip_property(links, seed):
    rng = np.random.default_rng(seed)
    dirs = [OUT if rng.integers(2) else IN for _ in links]
    if not possible_matches(links, dirs):
        return
    t = SymmetricTensor.random(links, dirs, rng)
    node = build_fuse_node(links, dirs, OUT)
    f = fuse_symmetric(t, node, 1)
    back = split_symmetric(f, node, 1)
    for match, block in back.blocks.items():
        np.testing.assert_allclose(block, t.blocks[match], atol=1e-14)
    assert np.isclose(f.norm(), t.norm())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 16))
def test_contract_property_z2(seed):
    rng = np.random.default_rng(seed)
    l1 = SymmetricLink.make(Z2, {0: int(rng.integers(1, 3)), 1: int(rng.integers(1, 3))})
    l2 = SymmetricLink.make(Z2, {0: int(rng.integers(1, 3)), 1: int(rng.integers(1, 3))})
    a = SymmetricTensor.random([l1, l2], [IN, OUT], rng)
    b = SymmetricTensor.random([l2, l1], [IN, OUT], rng)
    c = contract_symmetric(a, b, [(2, 1)])
    dense_c = contract(downgrade(a), downgrade(b), [(2, 1)])
    np.testing.assert_allclose(
        downgrade(c).as_array(), dense_c.as_array(), atol=1e-13
    )
