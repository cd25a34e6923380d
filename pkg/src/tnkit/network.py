"""Loop-free tensor networks: tree topology, gauges, observables.

A network is a tree of symmetric tensors. Dangling links are physical
(one per lattice site) or the unique selector link fixing the global
symmetry sector; internal links are virtual. Symmetry-off networks use
the same machinery over the trivial group.

Link directions follow a parent/child convention: every internal link
points from the parent node to the child node (OUT at the parent end, IN
at the child end); physical links are OUT, the selector leg is IN. Gauge
operations preserve these directions.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .dense import DEFAULT_SVD_TAU, DenseTensor
from .links import IN, OUT, SymmetricLink, adjusted, fused_support, intersect_links
from .symmetric import (
    SymmetricTensor,
    contract_symmetric,
    downgrade,
    permute_symmetric,
    possible_matches,
    qr_symmetric,
    scale_axis,
    svd_symmetric,
    sym_subtensor_read,
)

__all__ = [
    "SELECTOR_LINK",
    "AMPLITUDES_CAP",
    "LinkInfo",
    "TreeGeometry",
    "LoopFreeNetwork",
    "GaugeState",
    "make_binary_tree",
    "random_symmetric_ansatz",
    "product_state_network",
    "qr_toward",
    "svd_toward",
    "absorb_factor",
    "install_unitary_gauge",
    "install_canonical_gauge",
    "move_center",
    "schmidt_truncate",
    "scalar_product",
    "expect_local",
    "correlate",
    "contract_to_amplitudes",
    "support_at",
]

SELECTOR_LINK = -1
AMPLITUDES_CAP = 2**20

# relative threshold below which Schmidt weights are not inverted
WEIGHT_INVERSION_GUARD = 1e-12


@dataclass(frozen=True)
class LinkInfo:
    """Registry entry: what a link is and which nodes it touches."""

    kind: str  # "phys" | "virt" | "sel"
    ends: tuple  # one node id (dangling) or two
    site: int | None = None  # lattice site for physical links


@dataclass(frozen=True)
class TreeGeometry:
    """Tree topology with link kinds and a fixed direction convention.

    ``node_links[q]`` lists link ids in tensor leg order; ``leg_dirs[q]``
    carries the matching directions. Tensors are attached separately.
    """

    node_links: dict
    leg_dirs: dict
    links: dict  # link id -> LinkInfo

    def nodes(self):
        return sorted(self.node_links)

    def neighbors(self, q):
        out = []
        for l in self.node_links[q]:
            ends = self.links[l].ends
            if len(ends) == 2:
                a, b = ends
                out.append(b if a == q else a)
        return out

    def leg(self, q, link_id):
        """1-based leg position of ``link_id`` at node ``q``."""
        return self.node_links[q].index(link_id) + 1

    def dir_at(self, q, link_id):
        return self.leg_dirs[q][self.node_links[q].index(link_id)]

    def link_between(self, q, q2):
        for l in self.node_links[q]:
            ends = self.links[l].ends
            if len(ends) == 2 and set(ends) == {q, q2}:
                return l
        raise KeyError(f"no link between {q} and {q2}")

    def site_node(self, s):
        for info in self.links.values():
            if info.kind == "phys" and info.site == s:
                return info.ends[0]
        raise KeyError(f"no physical link for site {s}")

    def selector_node(self):
        for info in self.links.values():
            if info.kind == "sel":
                return info.ends[0]
        return None


def make_binary_tree(n_sites, selector_node=None):
    """Binary-tree geometry over ``n_sites`` = 2^k >= 4 lattice sites.

    Leaf q holds sites 2q-1 and 2q; layers are numbered bottom-up and
    left-to-right, ending in two top nodes joined by the top link (the
    half-system bond). The selector attaches to the top-left node unless
    overridden. Physical link ids equal their site index, virtual ids
    start at n_sites+1, the selector id is SELECTOR_LINK.
    """
    n = n_sites
    if n < 4 or n & (n - 1):
        raise ValueError(f"binary tree needs a power-of-two site count >= 4, got {n}")
    node_links = {}
    leg_dirs = {}
    links = {}
    for s in range(1, n + 1):
        links[s] = LinkInfo("phys", ((s + 1) // 2,), site=s)
    for leaf in range(1, n // 2 + 1):
        node_links[leaf] = [2 * leaf - 1, 2 * leaf]
        leg_dirs[leaf] = [OUT, OUT]

    next_link = n + 1
    next_node = n // 2 + 1
    prev_layer = list(range(1, n // 2 + 1))
    while len(prev_layer) > 2:
        layer = []
        for i in range(0, len(prev_layer), 2):
            q = next_node
            next_node += 1
            for child in (prev_layer[i], prev_layer[i + 1]):
                l = next_link
                next_link += 1
                links[l] = LinkInfo("virt", (q, child))
                node_links[child].append(l)
                leg_dirs[child].append(IN)
                node_links.setdefault(q, []).append(l)
                leg_dirs.setdefault(q, []).append(OUT)
            layer.append(q)
        prev_layer = layer
    top_left, top_right = prev_layer
    top = next_link
    links[top] = LinkInfo("virt", (top_left, top_right))
    node_links[top_left].append(top)
    leg_dirs[top_left].append(OUT)
    node_links[top_right].append(top)
    leg_dirs[top_right].append(IN)

    sel_node = top_left if selector_node is None else selector_node
    links[SELECTOR_LINK] = LinkInfo("sel", (sel_node,))
    node_links[sel_node].append(SELECTOR_LINK)
    leg_dirs[sel_node].append(IN)
    return TreeGeometry(node_links, leg_dirs, links)


@dataclass
class LoopFreeNetwork:
    """Tree of symmetric tensors over a shared link registry."""

    group: object
    geometry: TreeGeometry
    nodes: dict  # node id -> SymmetricTensor

    @property
    def node_links(self):
        return self.geometry.node_links

    @property
    def links(self):
        return self.geometry.links

    def leg(self, q, link_id):
        return self.geometry.leg(q, link_id)

    def dir_at(self, q, link_id):
        return self.nodes[q].dirs[self.leg(q, link_id) - 1]

    def link_rep(self, link_id):
        q = self.links[link_id].ends[0]
        return self.nodes[q].links[self.leg(q, link_id) - 1]

    def neighbors(self, q):
        return self.geometry.neighbors(q)

    def other_end(self, link_id, q):
        a, b = self.links[link_id].ends
        return b if a == q else a

    def link_between(self, q, q2):
        return self.geometry.link_between(q, q2)

    def site_node(self, s):
        return self.geometry.site_node(s)

    def n_sites(self):
        return sum(1 for info in self.links.values() if info.kind == "phys")

    def selector_sector(self):
        if SELECTOR_LINK not in self.links:
            return None
        return self.link_rep(SELECTOR_LINK).sectors[0]

    def copy(self):
        return LoopFreeNetwork(
            self.group, self.geometry, {q: t.copy() for q, t in self.nodes.items()}
        )

    def norm(self, center):
        """State norm in a unitary gauge centered at ``center``."""
        return self.nodes[center].norm()

    def path(self, q, q2):
        """Node sequence of the unique path from q to q2, inclusive."""
        if q == q2:
            return [q]
        prev = {q: None}
        queue = deque([q])
        while queue and q2 not in prev:
            u = queue.popleft()
            for v in self.neighbors(u):
                if v not in prev:
                    prev[v] = u
                    queue.append(v)
        if q2 not in prev:
            raise KeyError(f"no path from {q} to {q2}")
        out = [q2]
        while prev[out[-1]] is not None:
            out.append(prev[out[-1]])
        return out[::-1]

    def distance(self, q, q2):
        return len(self.path(q, q2)) - 1

    def levels(self, c):
        """Nodes grouped by distance from c: levels[d] = node list."""
        dist = {c: 0}
        queue = deque([c])
        out = [[c]]
        while queue:
            u = queue.popleft()
            for v in self.neighbors(u):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    if dist[v] == len(out):
                        out.append([])
                    out[dist[v]].append(v)
                    queue.append(v)
        return out

    def validate(self):
        """Check connectivity, link counts, and end-to-end link agreement."""
        for l, info in self.links.items():
            if len(info.ends) != 2:
                continue
            a, b = info.ends
            ra = self.nodes[a].links[self.leg(a, l) - 1]
            rb = self.nodes[b].links[self.leg(b, l) - 1]
            if ra != rb:
                raise ValueError(f"link {l}: ends disagree on sectors")
            if self.dir_at(a, l) != -self.dir_at(b, l):
                raise ValueError(f"link {l}: directions not opposite")
        n_nodes = len(self.nodes)
        n_internal = sum(1 for i in self.links.values() if len(i.ends) == 2)
        if n_internal != n_nodes - 1:
            raise ValueError("link count does not match a tree")
        if sum(len(lv) for lv in self.levels(next(iter(self.nodes)))) != n_nodes:
            raise ValueError("network is not connected")


@dataclass
class GaugeState:
    """Which gauge holds, where its center sits, and per-link weights."""

    mode: str  # "unitary" | "canonical"
    center: int
    weights: dict = field(default_factory=dict)  # link id -> {sector: values}

    def copy(self):
        return GaugeState(
            self.mode,
            self.center,
            {
                l: {s: np.asarray(v).copy() for s, v in w.items()}
                for l, w in self.weights.items()
            },
        )


# -- link supports and cleanup --------------------------------------------------


def support_at(node_reps, node_dirs, missing_dir):
    """Representation the given legs admit on one extra leg of direction
    ``missing_dir``, expressed in that leg's stored-label convention."""
    return fused_support(node_reps, node_dirs, -missing_dir)


def _node_support(reps, geom, q, link_id):
    others = []
    dirs = []
    for l, d in zip(geom.node_links[q], geom.leg_dirs[q]):
        if l != link_id:
            others.append(reps[l])
            dirs.append(d)
    return support_at(others, dirs, geom.dir_at(q, link_id))


def cleanup_link(reps, geom, link_id):
    """Intersect a virtual link with both of its end-node environments."""
    a, b = geom.links[link_id].ends
    new = intersect_links(reps[link_id], _node_support(reps, geom, a, link_id))
    if new is not None:
        new = intersect_links(new, _node_support(reps, geom, b, link_id))
    if new is None:
        raise ValueError(f"cleanup emptied link {link_id}")
    return new


# -- randomized ansatz -----------------------------------------------------------


def _geom_distances(geom, c):
    dist = {c: 0}
    queue = deque([c])
    while queue:
        u = queue.popleft()
        for v in geom.neighbors(u):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def _toward(geom, dist, q):
    for v in geom.neighbors(q):
        if dist[v] == dist[q] - 1:
            return v
    raise ValueError(f"node {q} has no neighbor toward the center")


def _remove_indices(link, slots):
    """Drop the given 0-based flat positions from a link."""
    table = dict(zip(link.sectors, link.degs))
    for j in slots:
        run = 0
        for sec, d in zip(link.sectors, link.degs):
            if j < run + d:
                table[sec] -= 1
                break
            run += d
    return SymmetricLink.make(link.group, {s: d for s, d in table.items() if d > 0})


def random_symmetric_ansatz(
    geom,
    group,
    phys_reps,
    selector_sector,
    D,
    seed,
    max_link=None,
    reduce="single",
):
    """Random covariant state on a tree, built by fusion plus cleanup.

    Virtual links first receive the full fused representation of their far
    side (optionally intersected with ``max_link``), are cleaned up from
    the selector node outwards, then randomly thinned one index at a time
    (``reduce="halve"`` removes half the excess per step) until every
    virtual dimension is at most D. After each removal the other links are
    re-cleaned nearest first, stopping along branches that no longer
    change. Tensors carry all admissible matches with complex Gaussian
    entries. Deterministic for fixed arguments.

    ``phys_reps``: {site: SymmetricLink}. ``max_link``: None, a single
    SymmetricLink, or {link id: SymmetricLink}.
    """
    if D < 1:
        raise ValueError("bond dimension must be at least 1")
    if reduce not in ("single", "halve"):
        raise ValueError(f"unknown reduction mode {reduce!r}")
    rng = np.random.default_rng(seed)
    c = geom.selector_node()
    if c is None:
        c = geom.nodes()[0]
    dist = _geom_distances(geom, c)

    def cap_for(link_id):
        if isinstance(max_link, dict):
            return max_link.get(link_id)
        return max_link

    reps = {}
    for l, info in geom.links.items():
        if info.kind == "phys":
            reps[l] = phys_reps[info.site]
        elif info.kind == "sel":
            reps[l] = SymmetricLink.make(group, {selector_sector: 1})

    # outward-in fusion: each toward-center link from the already-defined rest
    for q in sorted((q for q in geom.nodes() if q != c), key=lambda q: -dist[q]):
        eta = geom.link_between(q, _toward(geom, dist, q))
        rep = _node_support(reps, geom, q, eta)
        cap = cap_for(eta)
        if cap is not None:
            rep = intersect_links(rep, cap)
            if rep is None:
                raise ValueError(f"maximal link empties virtual link {eta}")
        reps[eta] = rep

    virt = [l for l, info in geom.links.items() if info.kind == "virt"]
    link_dist = {l: min(dist[e] for e in geom.links[l].ends) for l in virt}

    # cleanup pass, center outwards
    for l in sorted(virt, key=lambda l: (link_dist[l], l)):
        reps[l] = cleanup_link(reps, geom, l)

    def propagate_cleanup(start_link):
        """Re-clean outwards from a changed link; stop where nothing moves."""
        seen = {start_link}
        queue = deque(geom.links[start_link].ends)
        enqueued = set(geom.links[start_link].ends)
        while queue:
            q = queue.popleft()
            for l in geom.node_links[q]:
                if geom.links[l].kind != "virt" or l in seen:
                    continue
                seen.add(l)
                new = cleanup_link(reps, geom, l)
                if new != reps[l]:
                    reps[l] = new
                    ends = geom.links[l].ends
                    far = ends[0] if ends[1] == q else ends[1]
                    if far not in enqueued:
                        enqueued.add(far)
                        queue.append(far)

    while True:
        over = sorted(l for l in virt if reps[l].dim > D)
        if not over:
            break
        l = over[int(rng.integers(len(over)))]
        dim = reps[l].dim
        k = max(1, (dim - D + 1) // 2) if reduce == "halve" else 1
        slots = rng.choice(dim, size=k, replace=False)
        reps[l] = _remove_indices(reps[l], [int(j) for j in slots])
        propagate_cleanup(l)

    nodes = {}
    for q in geom.nodes():
        links = [reps[l] for l in geom.node_links[q]]
        dirs = list(geom.leg_dirs[q])
        if not possible_matches(links, dirs):
            raise ValueError(f"node {q} admits no matches; selector unreachable")
        nodes[q] = SymmetricTensor.random(links, dirs, rng)
    return LoopFreeNetwork(group, geom, nodes)


def product_state_network(geom, group, site_vectors):
    """Network encoding a product state, one local vector per site.

    ``site_vectors``: {site: (sector, 1-d array)}; each local vector lives
    in a single symmetry sector. All virtual links are one-dimensional and
    the selector sector is the fused total charge.
    """
    c = geom.selector_node()
    if c is None:
        raise ValueError("product states need a selector node")
    dist = _geom_distances(geom, c)
    reps = {}
    charges = {}
    for l, info in geom.links.items():
        if info.kind == "phys":
            sec, vec = site_vectors[info.site]
            reps[l] = SymmetricLink.make(group, {sec: len(vec)})
            charges[l] = sec

    def closing_label(q, eta):
        """Stored label on ``eta`` that closes the fusion constraint at q."""
        total = group.identity()
        for l, d in zip(geom.node_links[q], geom.leg_dirs[q]):
            if l != eta:
                total = group.fuse(total, adjusted(group, charges[l], d))
        return total if geom.dir_at(q, eta) == IN else group.invert(total)

    for q in sorted((q for q in geom.nodes() if q != c), key=lambda q: -dist[q]):
        eta = geom.link_between(q, _toward(geom, dist, q))
        charges[eta] = closing_label(q, eta)
        reps[eta] = SymmetricLink.make(group, {charges[eta]: 1})

    charges[SELECTOR_LINK] = closing_label(c, SELECTOR_LINK)
    reps[SELECTOR_LINK] = SymmetricLink.make(group, {charges[SELECTOR_LINK]: 1})

    nodes = {}
    for q in geom.nodes():
        links = [reps[l] for l in geom.node_links[q]]
        dirs = list(geom.leg_dirs[q])
        match = tuple(charges[l] for l in geom.node_links[q])
        blk = np.ones((), dtype=np.complex128)
        for l in geom.node_links[q]:
            info = geom.links[l]
            if info.kind == "phys":
                blk = np.multiply.outer(
                    blk, np.asarray(site_vectors[info.site][1], dtype=np.complex128)
                )
            else:
                blk = np.multiply.outer(blk, np.ones(1, dtype=np.complex128))
        nodes[q] = SymmetricTensor(links, dirs, {match: blk})
    return LoopFreeNetwork(group, geom, nodes)


# -- gauge transformations ---------------------------------------------------------


def _permute_leg_last(t, i):
    """Move 1-based leg i to the last position, others in order."""
    n = t.rank
    sigma = []
    pos = 1
    for l in range(1, n + 1):
        if l == i:
            sigma.append(n)
        else:
            sigma.append(pos)
            pos += 1
    return permute_symmetric(t, sigma)


def _permute_last_to(t, i):
    """Inverse of _permute_leg_last: move the last leg back to position i."""
    n = t.rank
    sigma = [l if l < i else l + 1 for l in range(1, n)]
    sigma.append(i)
    return permute_symmetric(t, sigma)


def qr_toward(net, q, link_id):
    """Split node q by QR across ``link_id``; q keeps the isometry.

    The new intermediate link inherits the old link's direction at q. The
    returned factor has legs (new link, neighbor-side leg) and is meant to
    be absorbed into the other end.
    """
    t = net.nodes[q]
    i = net.leg(q, link_id)
    d = t.dirs[i - 1]
    v, w, _klink = qr_symmetric(_permute_leg_last(t, i), t.rank - 1)
    if d == IN:
        v = v.invert_link(v.rank)
        w = w.invert_link(1)
    net.nodes[q] = _permute_last_to(v, i)
    return w


def absorb_factor(net, w, q2, link_id):
    """Contract a 2-leg gauge factor into node q2 across ``link_id``."""
    t = net.nodes[q2]
    j = net.leg(q2, link_id)
    out = contract_symmetric(w, t, [(2, j)])
    # the factor's open leg lands first; rotate it back to position j
    sigma = [j] + [(p if p < j else p + 1) for p in range(1, out.rank)]
    net.nodes[q2] = permute_symmetric(out, sigma)


def install_unitary_gauge(net, c):
    """QR-sweep all tensors into isometries toward center ``c``."""
    levels = net.levels(c)
    dist = {q: d for d, qs in enumerate(levels) for q in qs}
    for d in range(len(levels) - 1, 0, -1):
        for q in levels[d]:
            parent = next(v for v in net.neighbors(q) if dist[v] == d - 1)
            eta = net.link_between(q, parent)
            absorb_factor(net, qr_toward(net, q, eta), parent, eta)
    return GaugeState(mode="unitary", center=c)


def _guarded_invert(weights):
    """Reciprocal Schmidt weights; entries under the guard map to zero."""
    cut = WEIGHT_INVERSION_GUARD * max(
        (float(np.max(v)) if len(v) else 0.0 for v in weights.values()), default=0.0
    )
    out = {}
    for s, v in weights.items():
        v = np.asarray(v, dtype=float)
        r = np.zeros_like(v)
        good = v > cut
        r[good] = 1.0 / v[good]
        out[s] = r
    return out


def move_center(net, gauge, c2):
    """Relocate the gauge center to ``c2``.

    Unitary mode moves by QR decompositions along the path. Canonical mode
    only rescales with the stored link weights (fast re-isometrization);
    the weights remain valid since the state is unchanged.
    """
    if gauge.center == c2:
        return gauge
    path = net.path(gauge.center, c2)
    for q, nxt in zip(path, path[1:]):
        eta = net.link_between(q, nxt)
        if gauge.mode == "canonical":
            lam = gauge.weights[eta]
            net.nodes[q] = scale_axis(net.nodes[q], net.leg(q, eta), _guarded_invert(lam))
            net.nodes[nxt] = scale_axis(net.nodes[nxt], net.leg(nxt, eta), lam)
        else:
            absorb_factor(net, qr_toward(net, q, eta), nxt, eta)
    gauge.center = c2
    return gauge


def svd_toward(net, q, link_id, chi=None, tau=DEFAULT_SVD_TAU):
    """SVD node q across ``link_id``; q keeps the row isometry.

    SVD counterpart of qr_toward, with optional truncation to the ``chi``
    largest singular values across all sectors. Returns (weights,
    w_factor, truncation_error): Schmidt weights keyed by the stored
    sector labels of the direction-normalized new link, the column factor
    still missing the weights (absorb scale_axis(w, 1, weights) into the
    neighbor to move the center), and the root of the discarded weight.
    """
    t = net.nodes[q]
    i = net.leg(q, link_id)
    d = t.dirs[i - 1]
    v, spectra, w, klink = svd_symmetric(
        _permute_leg_last(t, i), t.rank - 1, chi=chi, tau=tau
    )
    weights = {
        s: np.asarray(vals, dtype=float).copy()
        for s, vals in spectra.by_sector.items()
    }
    if d == IN:
        v = v.invert_link(v.rank)
        w = w.invert_link(1)
        weights = {klink.group.invert(s): vals for s, vals in weights.items()}
    net.nodes[q] = _permute_last_to(v, i)
    return weights, w, spectra.truncation_error


def install_canonical_gauge(net, c=None):
    """Unitary gauge toward ``c`` plus Schmidt weights on all virtual links.

    Outward SVD passes place every bond in its Schmidt basis, so each
    stored weight set is the exact Schmidt spectrum of the state across
    that link; bond dimensions drop to the Schmidt ranks. Tensors stay
    isometric toward c.
    """
    if c is None:
        c = net.geometry.selector_node()
        if c is None:
            c = net.geometry.nodes()[0]
    gauge = install_unitary_gauge(net, c)
    levels = net.levels(c)
    dist = {q: d for d, qs in enumerate(levels) for q in qs}
    weights = {}

    def outward_virtual(q, skip):
        out = []
        for l in net.node_links[q]:
            info = net.links[l]
            if info.kind == "virt" and l != skip and dist[net.other_end(l, q)] > dist[q]:
                out.append(l)
        return out

    for eta in outward_virtual(c, None):
        lam, w, _ = svd_toward(net, c, eta)
        net.nodes[c] = scale_axis(net.nodes[c], net.leg(c, eta), lam)
        absorb_factor(net, w, net.other_end(eta, c), eta)
        weights[eta] = lam

    for d in range(1, len(levels)):
        for q in levels[d]:
            parent = next(v for v in net.neighbors(q) if dist[v] == d - 1)
            eta_p = net.link_between(q, parent)
            children = outward_virtual(q, eta_p)
            if not children:
                continue
            ip = net.leg(q, eta_p)
            # parent weights turn the local SVD into the global Schmidt cut
            net.nodes[q] = scale_axis(net.nodes[q], ip, weights[eta_p])
            for eta in children:
                lam, w, _ = svd_toward(net, q, eta)
                net.nodes[q] = scale_axis(net.nodes[q], net.leg(q, eta), lam)
                absorb_factor(net, w, net.other_end(eta, q), eta)
                weights[eta] = lam
            net.nodes[q] = scale_axis(net.nodes[q], ip, _guarded_invert(weights[eta_p]))
    return GaugeState(mode="canonical", center=c, weights=weights)


def schmidt_truncate(net, gauge, link_id, chi):
    """Cut a virtual link down to its ``chi`` largest Schmidt weights.

    The state stays normalized (center rescaled by the kept norm) and the
    gauge falls back to plain unitary: truncation perturbs the spectra of
    the other links, so the stored weights are dropped.
    Returns (net, truncation_error).
    """
    if chi < 1:
        raise ValueError("target dimension must be at least 1")
    if gauge.mode != "canonical":
        raise ValueError("schmidt_truncate requires the canonical gauge")
    lam = gauge.weights[link_id]
    entries = []
    for s, vals in lam.items():
        entries.extend((float(v), s, k) for k, v in enumerate(vals))
    entries.sort(key=lambda e: (-e[0], repr(e[1]), e[2]))
    if chi >= len(entries):
        return net, 0.0
    kept = entries[:chi]
    error = float(np.sqrt(sum(v * v for v, _, _ in entries[chi:])))
    nkept = float(np.sqrt(sum(v * v for v, _, _ in kept)))
    gauge.mode = "unitary"
    gauge.weights = {}

    counts = {}
    for _, s, _ in kept:
        counts[s] = counts.get(s, 0) + 1
    for q in net.links[link_id].ends:
        t = net.nodes[q]
        i = net.leg(q, link_id)
        keeps = []
        for pos, link in enumerate(t.links, start=1):
            if pos == i:
                # weights are descending per sector, so keep leading indices
                keeps.append({s: list(range(1, k + 1)) for s, k in counts.items()})
            else:
                keeps.append(
                    {s: list(range(1, d + 1)) for s, d in zip(link.sectors, link.degs)}
                )
        net.nodes[q] = sym_subtensor_read(t, keeps)

    # restore isometries along the path to the center, then renormalize
    c = gauge.center
    a, b = net.links[link_id].ends
    start = a if net.distance(a, c) > net.distance(b, c) else b
    path = net.path(start, c)
    for q, nxt in zip(path, path[1:]):
        eta = net.link_between(q, nxt)
        absorb_factor(net, qr_toward(net, q, eta), nxt, eta)
    net.nodes[c] = net.nodes[c].scaled(1.0 / nkept)
    return net, error


# -- scalar products and observables ------------------------------------------------


def _check_same_geometry(a, b):
    if a.node_links != b.node_links:
        raise ValueError("networks differ in geometry")
    for l, info in a.links.items():
        if info.kind == "phys" and a.link_rep(l) != b.link_rep(l):
            raise ValueError(f"physical link {l} differs between the networks")


def scalar_product(neta, netb):
    """<A|B> by outermost-in contraction over the shared tree."""
    _check_same_geometry(neta, netb)
    if SELECTOR_LINK in neta.links and neta.link_rep(SELECTOR_LINK) != netb.link_rep(
        SELECTOR_LINK
    ):
        return 0j  # different global sectors are orthogonal

    root = min(neta.nodes)
    levels = neta.levels(root)
    dist = {q: d for d, qs in enumerate(levels) for q in qs}
    env = {}  # link id -> 2-leg tensor (bra-side leg, ket-side leg)
    for d in range(len(levels) - 1, -1, -1):
        for q in levels[d]:
            ta = neta.nodes[q].conj()
            x = netb.nodes[q]
            for l in neta.node_links[q]:
                if l in env:
                    j = neta.leg(q, l)
                    x = contract_symmetric(env.pop(l), x, [(2, j)])
                    sigma = [j] + [(p if p < j else p + 1) for p in range(1, x.rank)]
                    x = permute_symmetric(x, sigma)
            parent_link = None
            pairs = []
            for pos, l in enumerate(neta.node_links[q], start=1):
                info = neta.links[l]
                if len(info.ends) == 2 and dist[neta.other_end(l, q)] < d:
                    parent_link = l
                else:
                    pairs.append((pos, pos))
            out = contract_symmetric(ta, x, pairs)
            if parent_link is None:
                return complex(out.scalar())
            env[parent_link] = out
    raise AssertionError("contraction did not terminate at the root")


def expect_local(net, gauge, op, s):
    """<Psi| (op at site s) |Psi>, centering the gauge at the site's node.

    ``op``: 2-leg tensor (output OUT, input IN) on the site's physical
    link; in symmetric mode it must be invariant (sector-diagonal).
    """
    q = net.site_node(s)
    move_center(net, gauge, q)
    t = net.nodes[q]
    x = _apply_site_op(t, op, net.leg(q, s))
    return complex(t.vdot(x))


def _apply_site_op(x, op, j):
    """Contract op's input leg with leg j of x; the output leg replaces it.

    A rank-3 operator appends its transfer leg after x's existing legs.
    """
    has_transfer = op.rank == 3
    out = contract_symmetric(op, x, [(2, j)])
    # out legs: (op output, [op transfer], x legs except j in order)
    shift = 2 if has_transfer else 1
    rebuilt = []  # old positions in their new order
    oi = 0
    for pos in range(1, x.rank + 1):
        if pos == j:
            rebuilt.append(1)
        else:
            rebuilt.append(shift + 1 + oi)
            oi += 1
    if has_transfer:
        rebuilt.append(2)
    sigma = [0] * out.rank
    for new_pos, old_pos in enumerate(rebuilt, start=1):
        sigma[old_pos - 1] = new_pos
    return permute_symmetric(out, sigma)


def _rotate_front_legs(x, k, j):
    """Rearrange (carried leg, extras, frame legs) so the carried leg sits
    at frame position j and the k-1 extras trail at the end."""
    n = x.rank
    frame = n - k + 1
    rebuilt = []
    oi = 0
    for pos in range(1, frame + 1):
        if pos == j:
            rebuilt.append(1)
        else:
            rebuilt.append(k + 1 + oi)
            oi += 1
    rebuilt.extend(range(2, k + 1))
    sigma = [0] * n
    for new_pos, old_pos in enumerate(rebuilt, start=1):
        sigma[old_pos - 1] = new_pos
    return permute_symmetric(x, sigma)


def _trace_last_two(x):
    """Contract the last two legs of x against each other."""
    n = x.rank
    eye = SymmetricTensor.identity(
        x.links[n - 2], dirs=(-x.dirs[n - 2], -x.dirs[n - 1])
    )
    return contract_symmetric(eye, x, [(1, n - 1), (2, n)])


def _close_node(net, q, x, toward):
    """Sandwich x between node q's bra and ket sides, leaving the link
    toward ``toward`` open. Trailing extra legs of x stay open too.
    Returns legs (bra toward-leg, ket toward-leg, extras...)."""
    t = net.nodes[q].conj()
    j = net.leg(q, net.link_between(q, toward))
    pairs = [(pos, pos) for pos in range(1, t.rank + 1) if pos != j]
    return contract_symmetric(t, x, pairs)


def correlate(net, gauge, op1, op2, s1, s2):
    """Two-point function <op1(s1) op2(s2)>.

    Rank-3 operators carry a charge-transfer link as their third leg; the
    two transfer legs are contracted with each other, so covariant pairs
    (both rank 3) work alongside invariant ones (both rank 2). op2's
    contribution is renormalized along the unique path to s1's node.
    """
    if (op1.rank == 3) != (op2.rank == 3):
        raise ValueError("operator pair must be both invariant or both covariant")
    q1, q2 = net.site_node(s1), net.site_node(s2)
    move_center(net, gauge, q1)
    if q1 == q2:
        t = net.nodes[q1]
        x = _apply_site_op(t, op2, net.leg(q1, s2))
        x = _apply_site_op(x, op1, net.leg(q1, s1))
        if op1.rank == 3:
            x = _trace_last_two(x)
        return complex(t.vdot(x))

    path = net.path(q2, q1)
    x = _apply_site_op(net.nodes[q2], op2, net.leg(q2, s2))
    env = _close_node(net, q2, x, toward=path[1])
    for idx in range(1, len(path)):
        q = path[idx]
        j = net.leg(q, net.link_between(path[idx - 1], q))
        x = contract_symmetric(env, net.nodes[q], [(2, j)])
        x = _rotate_front_legs(x, env.rank - 1, j)
        if idx < len(path) - 1:
            env = _close_node(net, q, x, toward=path[idx + 1])
        else:
            x = _apply_site_op(x, op1, net.leg(q, s1))
            if op1.rank == 3:
                x = _trace_last_two(x)
            return complex(net.nodes[q].vdot(x))


# -- exhaustive amplitudes ------------------------------------------------------------


def contract_to_amplitudes(net, cap=AMPLITUDES_CAP):
    """Dense amplitudes tensor with legs in site order, selector absorbed.

    Exponentially large, so guarded by ``cap`` on the total dimension.
    """
    phys = sorted(
        (info.site, l) for l, info in net.links.items() if info.kind == "phys"
    )
    total = 1
    for _, l in phys:
        total *= net.link_rep(l).dim
        if total > cap:
            raise ValueError(f"amplitudes dimension exceeds the cap {cap}")

    root = min(net.nodes)
    levels = net.levels(root)
    dist = {q: d for d, qs in enumerate(levels) for q in qs}
    acc = {}  # toward-root link id -> (tensor, leg labels), toward-leg last
    result = None
    result_labels = None
    for d in range(len(levels) - 1, -1, -1):
        for q in levels[d]:
            x = net.nodes[q]
            labels = list(net.node_links[q])
            parent_link = None
            for l in net.node_links[q]:
                info = net.links[l]
                if len(info.ends) == 2 and dist[net.other_end(l, q)] < d:
                    parent_link = l
            for l in list(labels):
                if l in acc:
                    sub, sub_labels = acc.pop(l)
                    j = labels.index(l) + 1
                    x = contract_symmetric(sub, x, [(sub.rank, j)])
                    labels = sub_labels[:-1] + labels[: j - 1] + labels[j:]
            if parent_link is None:
                result, result_labels = x, labels
            else:
                j = labels.index(parent_link) + 1
                x = _permute_leg_last(x, j)
                acc[parent_link] = (
                    x,
                    [l for l in labels if l != parent_link] + [parent_link],
                )

    want = [l for _, l in phys]
    if SELECTOR_LINK in result_labels:
        want.append(SELECTOR_LINK)
    sigma = [0] * len(result_labels)
    for new_pos, l in enumerate(want, start=1):
        sigma[result_labels.index(l)] = new_pos
    dense = downgrade(permute_symmetric(result, sigma))
    if SELECTOR_LINK in result_labels:
        dense = DenseTensor(dense.dims[:-1], dense.data)  # drop the size-1 axis
    return dense
