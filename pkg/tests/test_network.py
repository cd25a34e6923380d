"""Tree-network tests: geometry, randomized ansatz, gauges, observables.

The exhaustive-amplitudes contraction serves as the oracle throughout:
gauge manipulations must leave the amplitudes invariant up to a global
phase, canonical link weights must reproduce exact dense bipartition
spectra, and every observable must match the same quantity computed
directly on the amplitudes tensor.
"""

import numpy as np
import pytest

from tnkit import (
    IN,
    OUT,
    SELECTOR_LINK,
    GaugeState,
    SymmetricLink,
    SymmetricTensor,
    TRIVIAL,
    U1,
    Z2,
    contract_symmetric,
    contract_to_amplitudes,
    correlate,
    expect_local,
    install_canonical_gauge,
    install_unitary_gauge,
    make_binary_tree,
    move_center,
    product_state_network,
    random_symmetric_ansatz,
    scalar_product,
    scale_axis,
    schmidt_truncate,
)

TOL = 1e-12
GAUGE_TOL = 1e-10
SEEDS = [7, 23, 101, 555, 4096, 31337]


def z2_phys(n):
    return {s: SymmetricLink.make(Z2, {0: 1, 1: 1}) for s in range(1, n + 1)}


def trivial_phys(n, d=2):
    return {s: SymmetricLink.make(TRIVIAL, {0: d}) for s in range(1, n + 1)}


def random_net(group, seed, n=8, D=4, sector=0, normalized=True):
    geom = make_binary_tree(n)
    phys = z2_phys(n) if group is Z2 else trivial_phys(n)
    net = random_symmetric_ansatz(geom, group, phys, sector, D=D, seed=seed)
    if normalized:
        c = geom.selector_node()
        install_unitary_gauge(net, c)
        net.nodes[c] = net.nodes[c].scaled(1.0 / net.norm(c))
    return net


def amps(net):
    return contract_to_amplitudes(net).as_array()


def aligned(a, b):
    """Remove the global phase of ``a`` relative to ``b``."""
    k = np.argmax(np.abs(b))
    phase = a.flat[k] / b.flat[k]
    phase /= abs(phase)
    return a / phase


def isometry_defect(net, q, link_id):
    """Frobenius distance of node q from an exact isometry toward a link."""
    t = net.nodes[q]
    j = net.leg(q, link_id)
    pairs = [(p, p) for p in range(1, t.rank + 1) if p != j]
    g = contract_symmetric(t.conj(), t, pairs)
    eye = SymmetricTensor.identity(t.links[j - 1], dirs=(-t.dirs[j - 1], t.dirs[j - 1]))
    return g.add(eye, -1.0).norm()


def subtree_sites(net, link_id):
    """Sites on the child side of a virtual link."""
    a, b = net.links[link_id].ends
    child = a if net.dir_at(a, link_id) == IN else b
    seen = {child}
    stack = [child]
    sites = []
    while stack:
        u = stack.pop()
        for l in net.node_links[u]:
            info = net.links[l]
            if l == link_id:
                continue
            if info.kind == "phys":
                sites.append(info.site)
            elif len(info.ends) == 2:
                v = net.other_end(l, u)
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
    return sorted(sites)


def bipartition_values(arr, sites):
    """Singular values of the amplitudes across (sites | rest)."""
    mat = np.moveaxis(arr, [s - 1 for s in sites], range(len(sites)))
    rows = int(np.prod([arr.shape[s - 1] for s in sites]))
    return np.linalg.svd(mat.reshape(rows, -1), compute_uv=False)


def merged_weights(weights):
    return np.sort(np.concatenate([np.asarray(v) for v in weights.values()]))[::-1]


def apply_dense_op(arr, op, s):
    """Apply a (d_out, d_in) matrix to site s of the amplitudes array."""
    out = np.tensordot(op, arr, axes=([1], [s - 1]))
    return np.moveaxis(out, 0, s - 1)


SZ = np.diag([1.0, -1.0]).astype(complex)
SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


def sz_op(link):
    return SymmetricTensor(
        (link, link),
        (OUT, IN),
        {(0, 0): np.array([[1.0]]), (1, 1): np.array([[-1.0]])},
    )


def sx_pair(link):
    """Spin-flip as two covariant factors joined by a transfer link."""
    tlink = SymmetricLink.make(Z2, {1: 1})
    one = np.ones((1, 1, 1), dtype=complex)
    a = SymmetricTensor(
        (link, link, tlink), (OUT, IN, OUT), {(0, 1, 1): one, (1, 0, 1): one}
    )
    b = SymmetricTensor(
        (link, link, tlink), (OUT, IN, IN), {(0, 1, 1): one, (1, 0, 1): one}
    )
    return a, b


# -- geometry ------------------------------------------------------------------


def test_binary_tree_structure():
    geom = make_binary_tree(8)
    assert geom.nodes() == [1, 2, 3, 4, 5, 6]  # N - 2 nodes
    assert geom.node_links[1] == [1, 2, 9]
    assert geom.leg_dirs[1] == [OUT, OUT, IN]
    assert geom.node_links[5] == [9, 10, 13, SELECTOR_LINK]
    assert geom.leg_dirs[5] == [OUT, OUT, OUT, IN]
    assert geom.node_links[6] == [11, 12, 13]
    assert geom.leg_dirs[6] == [OUT, OUT, IN]
    assert geom.selector_node() == 5
    assert geom.links[13].ends == (5, 6)
    assert geom.links[3].kind == "phys" and geom.links[3].site == 3
    assert geom.site_node(7) == 4
    assert geom.link_between(5, 6) == 13


def test_binary_tree_sizes():
    for bad in (2, 3, 6, 12):
        with pytest.raises(ValueError):
            make_binary_tree(bad)
    geom = make_binary_tree(4)
    assert geom.nodes() == [1, 2]
    assert geom.node_links[1] == [1, 2, 5, SELECTOR_LINK]
    geom16 = make_binary_tree(16)
    assert len(geom16.nodes()) == 14


def test_paths_levels_distances():
    net = random_net(Z2, 7)
    assert net.path(1, 2) == [1, 5, 2]
    assert net.path(1, 4) == [1, 5, 6, 4]
    assert net.distance(3, 4) == 2
    levels = net.levels(5)
    assert levels[0] == [5] and sorted(levels[1]) == [1, 2, 6]
    assert sorted(levels[2]) == [3, 4]


# -- randomized ansatz ------------------------------------------------------------


@pytest.mark.parametrize("group", [Z2, TRIVIAL], ids=["z2", "dense"])
def test_ansatz_capped_and_deterministic(group):
    net = random_net(group, 42, normalized=False)
    net.validate()
    for l, info in net.links.items():
        if info.kind == "virt":
            assert net.link_rep(l).dim <= 4
    again = random_net(group, 42, normalized=False)
    assert np.array_equal(amps(net), amps(again))
    other = random_net(group, 43, normalized=False)
    assert not np.allclose(amps(net), amps(other))


def test_ansatz_u1_charge_selection():
    geom = make_binary_tree(8)
    phys = {s: SymmetricLink.make(U1, {0: 1, 1: 1, 2: 1}) for s in range(1, 9)}
    net = random_symmetric_ansatz(geom, U1, phys, 4, D=6, seed=5)
    net.validate()
    arr = amps(net)
    nz = np.argwhere(np.abs(arr) > 0)
    assert len(nz) > 0
    assert all(idx.sum() == 4 for idx in nz)  # only total-charge-4 amplitudes


def test_ansatz_max_link_cap():
    geom = make_binary_tree(8)
    cap = SymmetricLink.make(Z2, {0: 1, 1: 7})
    net = random_symmetric_ansatz(geom, Z2, z2_phys(8), 0, D=8, seed=9, max_link=cap)
    net.validate()
    for l, info in net.links.items():
        if info.kind == "virt":
            rep = net.link_rep(l)
            assert rep.deg_of(0) == 1  # even-parity slot pinned by the cap
            assert rep.dim <= 8


def test_ansatz_halve_mode():
    geom = make_binary_tree(8)
    net = random_symmetric_ansatz(geom, Z2, z2_phys(8), 0, D=3, seed=2, reduce="halve")
    net.validate()
    for l, info in net.links.items():
        if info.kind == "virt":
            assert net.link_rep(l).dim <= 3
    again = random_symmetric_ansatz(geom, Z2, z2_phys(8), 0, D=3, seed=2, reduce="halve")
    assert np.array_equal(amps(net), amps(again))


def test_ansatz_minimal_bond():
    geom = make_binary_tree(8)
    net = random_symmetric_ansatz(geom, Z2, z2_phys(8), 0, D=1, seed=1)
    net.validate()
    for l, info in net.links.items():
        if info.kind == "virt":
            assert 1 <= net.link_rep(l).dim <= 1


def test_ansatz_rejects_bad_arguments():
    geom = make_binary_tree(8)
    with pytest.raises(ValueError):
        random_symmetric_ansatz(geom, Z2, z2_phys(8), 0, D=0, seed=1)
    with pytest.raises(ValueError):
        random_symmetric_ansatz(geom, Z2, z2_phys(8), 0, D=2, seed=1, reduce="fast")


def test_product_state_amplitudes():
    geom = make_binary_tree(8)
    rng = np.random.default_rng(3)
    vecs = {}
    for s in range(1, 9):
        v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        vecs[s] = (0, v / np.linalg.norm(v))
    net = product_state_network(geom, TRIVIAL, vecs)
    net.validate()
    arr = amps(net)
    want = np.ones(())
    for s in range(1, 9):
        want = np.multiply.outer(want, vecs[s][1])
    assert np.max(np.abs(arr - want)) < TOL
    for l, info in net.links.items():
        if info.kind == "virt":
            assert net.link_rep(l).dim == 1


def test_product_state_selector_charge():
    geom = make_binary_tree(4)
    vecs = {s: (1, np.array([1.0])) for s in range(1, 5)}  # one boson per site
    net = product_state_network(geom, U1, vecs)
    assert net.selector_sector() == 4
    arr = amps(net)
    assert abs(arr[0, 0, 0, 0] - 1.0) < TOL


# -- gauge transformations ---------------------------------------------------------


@pytest.mark.parametrize("group", [Z2, TRIVIAL], ids=["z2", "dense"])
@pytest.mark.parametrize("seed", SEEDS)
def test_unitary_gauge_preserves_state(group, seed):
    net = random_net(group, seed, normalized=False)
    before = amps(net)
    gauge = install_unitary_gauge(net, 5)
    after = amps(net)
    assert np.max(np.abs(aligned(after, before) - before)) < TOL
    for q in net.nodes:
        if q == 5:
            continue
        eta = net.link_between(q, net.path(q, 5)[1])
        assert isometry_defect(net, q, eta) < TOL
    assert abs(net.norm(5) - np.linalg.norm(before)) < TOL * max(1, np.linalg.norm(before))
    assert gauge.mode == "unitary" and gauge.center == 5


@pytest.mark.parametrize("seed", SEEDS[:3])
def test_move_center_preserves_state(seed):
    net = random_net(Z2, seed)
    gauge = install_unitary_gauge(net, 5)
    before = amps(net)
    move_center(net, gauge, 4)
    assert gauge.center == 4
    after = amps(net)
    assert np.max(np.abs(aligned(after, before) - before)) < TOL
    for q in net.nodes:
        if q == 4:
            continue
        eta = net.link_between(q, net.path(q, 4)[1])
        assert isometry_defect(net, q, eta) < TOL


@pytest.mark.parametrize("group", [Z2, TRIVIAL], ids=["z2", "dense"])
@pytest.mark.parametrize("seed", SEEDS[:3])
def test_canonical_weights_are_bipartition_spectra(group, seed):
    net = random_net(group, seed)
    before = amps(net)
    gauge = install_canonical_gauge(net, 5)
    after = amps(net)
    assert np.max(np.abs(aligned(after, before) - before)) < TOL
    assert gauge.mode == "canonical"
    total = 0.0
    for l, w in gauge.weights.items():
        sym = merged_weights(w)
        dense = bipartition_values(before, subtree_sites(net, l))
        pad = max(len(sym), len(dense))
        sym = np.pad(sym, (0, pad - len(sym)))
        dense = np.pad(dense, (0, pad - len(dense)))
        assert np.max(np.abs(sym - dense)) < GAUGE_TOL
    top = merged_weights(gauge.weights[13])
    assert abs(np.sum(top**2) - 1.0) < GAUGE_TOL  # normalized state


def test_canonical_gauge_deep_tree():
    net = random_net(Z2, 77, n=16, D=5)
    before = amps(net)
    gauge = install_canonical_gauge(net)
    assert gauge.center == net.geometry.selector_node()
    after = amps(net)
    assert np.max(np.abs(aligned(after, before) - before)) < TOL
    for l, w in gauge.weights.items():
        sym = merged_weights(w)
        dense = bipartition_values(before, subtree_sites(net, l))
        pad = max(len(sym), len(dense))
        assert np.max(
            np.abs(np.pad(sym, (0, pad - len(sym))) - np.pad(dense, (0, pad - len(dense))))
        ) < GAUGE_TOL


@pytest.mark.parametrize("seed", SEEDS[:3])
def test_canonical_reisometrization(seed):
    """Scaling the isometry leg up by its weights and another virtual leg
    down by that link's weights re-targets the isometry property."""
    net = random_net(Z2, seed, n=16, D=4)
    c = net.geometry.selector_node()
    gauge = install_canonical_gauge(net, c)
    checked = 0
    for q in net.nodes:
        if q == c:
            continue
        eta_p = net.link_between(q, net.path(q, c)[1])
        for l in net.node_links[q]:
            if net.links[l].kind != "virt" or l == eta_p:
                continue
            t = scale_axis(net.nodes[q], net.leg(q, eta_p), gauge.weights[eta_p])
            inv = {
                s: np.where(v > 0, 1.0 / np.where(v > 0, v, 1.0), 0.0)
                for s, v in gauge.weights[l].items()
            }
            t = scale_axis(t, net.leg(q, l), inv)
            probe = net.copy()
            probe.nodes[q] = t
            assert isometry_defect(probe, q, l) < GAUGE_TOL
            checked += 1
    assert checked >= 4


@pytest.mark.parametrize("seed", SEEDS[:3])
def test_canonical_move_center_matches_qr_move(seed):
    net = random_net(Z2, seed)
    gauge = install_canonical_gauge(net, 5)
    twin = net.copy()
    twin_gauge = GaugeState(mode="unitary", center=5)
    move_center(net, gauge, 3)
    move_center(twin, twin_gauge, 3)
    a = amps(net)
    b = amps(twin)
    assert np.max(np.abs(aligned(a, b) - b)) < GAUGE_TOL
    assert gauge.mode == "canonical"  # weights stay valid
    for q in net.nodes:
        if q != 3:
            eta = net.link_between(q, net.path(q, 3)[1])
            assert isometry_defect(net, q, eta) < GAUGE_TOL


@pytest.mark.parametrize("group", [Z2, TRIVIAL], ids=["z2", "dense"])
def test_schmidt_truncate_top_link(group):
    net = random_net(group, 13)
    before = amps(net)
    gauge = install_canonical_gauge(net, 5)
    lam = merged_weights(gauge.weights[13])
    chi = 2
    _, err = schmidt_truncate(net, gauge, 13, chi)
    assert abs(err - np.sqrt(np.sum(lam[chi:] ** 2))) < GAUGE_TOL
    assert net.link_rep(13).dim == chi
    assert gauge.mode == "unitary"
    after = amps(net)
    assert abs(np.linalg.norm(after) - 1.0) < GAUGE_TOL
    nkept = np.sqrt(np.sum(lam[:chi] ** 2))
    fidelity = abs(np.vdot(after, before))
    assert abs(fidelity - nkept) < GAUGE_TOL
    for q in net.nodes:
        if q != 5:
            eta = net.link_between(q, net.path(q, 5)[1])
            assert isometry_defect(net, q, eta) < GAUGE_TOL


def test_schmidt_truncate_requires_canonical():
    net = random_net(Z2, 3)
    gauge = install_unitary_gauge(net, 5)
    with pytest.raises(ValueError):
        schmidt_truncate(net, gauge, 13, 2)


def test_schmidt_truncate_noop_keeps_canonical():
    net = random_net(Z2, 3)
    gauge = install_canonical_gauge(net, 5)
    dim = net.link_rep(13).dim
    _, err = schmidt_truncate(net, gauge, 13, dim + 5)
    assert err == 0.0
    assert gauge.mode == "canonical"


# -- scalar products and observables ----------------------------------------------


@pytest.mark.parametrize("group", [Z2, TRIVIAL], ids=["z2", "dense"])
def test_scalar_product_matches_dense(group):
    a = random_net(group, 31)
    b = random_net(group, 32)
    got = scalar_product(a, b)
    want = np.vdot(amps(a), amps(b))
    assert abs(got - want) < TOL
    assert abs(scalar_product(a, a) - 1.0) < TOL


def test_scalar_product_orthogonal_sectors():
    a = random_net(Z2, 31, sector=0)
    b = random_net(Z2, 31, sector=1)
    assert scalar_product(a, b) == 0j


def test_scalar_product_rejects_mismatched_geometry():
    a = random_net(Z2, 31)
    b = random_net(Z2, 31, n=16)
    with pytest.raises(ValueError):
        scalar_product(a, b)


@pytest.mark.parametrize("site", [1, 4, 8])
def test_expect_local_sigma_z(site):
    net = random_net(Z2, 17)
    gauge = install_unitary_gauge(net, 5)
    arr = amps(net)
    op = sz_op(net.link_rep(site))
    got = expect_local(net, gauge, op, site)
    want = np.vdot(arr, apply_dense_op(arr, SZ, site))
    assert abs(got - want) < TOL
    eye = SymmetricTensor.identity(net.link_rep(site))
    assert abs(expect_local(net, gauge, eye, site) - 1.0) < TOL


def test_expect_local_dense_mode_sigma_x():
    # the trivial group puts no constraint on operators, so a plain flip works
    net = random_net(TRIVIAL, 19)
    gauge = install_unitary_gauge(net, 5)
    arr = amps(net)
    link = net.link_rep(3)
    op = SymmetricTensor((link, link), (OUT, IN), {(0, 0): SX})
    got = expect_local(net, gauge, op, 3)
    want = np.vdot(arr, apply_dense_op(arr, SX, 3))
    assert abs(got - want) < TOL


@pytest.mark.parametrize("pair", [(2, 7), (1, 2), (5, 6), (8, 3), (4, 4)])
def test_correlate_sigma_z(pair):
    s1, s2 = pair
    net = random_net(Z2, 29)
    gauge = install_unitary_gauge(net, 5)
    arr = amps(net)
    op1 = sz_op(net.link_rep(s1))
    op2 = sz_op(net.link_rep(s2))
    got = correlate(net, gauge, op1, op2, s1, s2)
    want = np.vdot(arr, apply_dense_op(apply_dense_op(arr, SZ, s2), SZ, s1))
    assert abs(got - want) < TOL


@pytest.mark.parametrize("pair", [(2, 7), (1, 2), (3, 4), (6, 1), (5, 5)])
def test_correlate_covariant_flip_pair(pair):
    s1, s2 = pair
    net = random_net(Z2, 37)
    gauge = install_unitary_gauge(net, 5)
    arr = amps(net)
    op1, op2 = sx_pair(net.link_rep(s1))
    got = correlate(net, gauge, op1, op2, s1, s2)
    want = np.vdot(arr, apply_dense_op(apply_dense_op(arr, SX, s2), SX, s1))
    assert abs(got - want) < TOL


def test_correlate_rejects_mixed_pair():
    net = random_net(Z2, 41)
    gauge = install_unitary_gauge(net, 5)
    op_inv = sz_op(net.link_rep(1))
    op_cov, _ = sx_pair(net.link_rep(2))
    with pytest.raises(ValueError):
        correlate(net, gauge, op_cov, op_inv, 2, 1)


def test_amplitudes_cap():
    net = random_net(Z2, 1)
    with pytest.raises(ValueError):
        contract_to_amplitudes(net, cap=255)  # 2^8 amplitudes exceed this


def test_validate_catches_direction_mismatch():
    net = random_net(Z2, 2)
    q = 6
    net.nodes[q] = net.nodes[q].invert_link(net.leg(q, 13))
    with pytest.raises(ValueError):
        net.validate()
