"""Hamiltonians as tensor product operators, renormalized along the tree.

A Hamiltonian H = sum_p H_p enters as a list of product terms. Each term
is a set of local site operators joined by low-dimensional internal
("TPO") links; identity factors are never written down. Renormalizing a
term toward a chosen center collapses everything behind each network link
into a two-leg factor (plus any TPO legs still open); the effective
Hamiltonian at the center applies those per-link factors lazily, term by
term, in a deterministic order. Projector terms eps_p |Psi_p><Psi_p| ride
along as renormalized overlap environments with a cached center vector.

Operator legs follow one convention throughout: leg 1 is the output (row)
index, leg 2 the input (column) index, TPO legs trail. On a link eta whose
factor is consumed at node q, the output leg carries q's direction for eta
and the input leg its opposite, so outputs contract with the conjugate
node tensor and inputs with the node tensor itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .network import SELECTOR_LINK
from .symmetric import (
    SymmetricTensor,
    contract_symmetric,
    permute_symmetric,
    possible_matches,
)

__all__ = [
    "TPO_LEG_BUDGET",
    "TPO_CUT_BUDGET",
    "MATERIALIZE_CAP",
    "IDENTITY",
    "SiteOperator",
    "TPOTerm",
    "TPO",
    "RenormalizedOperator",
    "EffectiveHamiltonian",
    "ProjectorTerm",
    "check_compatibility",
    "renormalize_step",
    "build_all_renormalized",
    "update_path",
    "effective_hamiltonian",
    "apply_effective",
    "apply_effective_over",
    "effective_energy",
    "effective_matrix",
    "renormalize_projector",
    "describe_tpo",
    "match_layout",
    "pack_tensor",
    "unpack_tensor",
]

#: most TPO legs a single local operator may carry
TPO_LEG_BUDGET = 2
#: most TPO links of one term that any network bipartition may cut
TPO_CUT_BUDGET = 2
#: largest center-space dimension effective_matrix will materialize
MATERIALIZE_CAP = 4096


class _IdentityFlag:
    """Marker for an implicit identity factor; never materialized."""

    __slots__ = ()

    def __repr__(self):
        return "IDENTITY"


IDENTITY = _IdentityFlag()


# -- tensor product operators ----------------------------------------------


@dataclass(frozen=True)
class SiteOperator:
    """One local factor of a term, acting on a physical site.

    ``tensor`` legs: (output OUT, input IN, then one leg per TPO id).
    """

    site: int
    tensor: SymmetricTensor
    tpo_ids: tuple = ()


@dataclass(frozen=True)
class TPOTerm:
    """A product of local operators joined by internal TPO links.

    Every TPO id must appear on exactly two operators with matching link
    representations and opposite directions, and the operators must form
    a single TPO-connected component.
    """

    ops: tuple

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        if not self.ops:
            raise ValueError("a term needs at least one local operator")
        sites = [op.site for op in self.ops]
        if len(set(sites)) != len(sites):
            raise ValueError(f"duplicate sites in term: {sorted(sites)}")
        usage = {}
        for op in self.ops:
            ids = tuple(op.tpo_ids)
            if len(set(ids)) != len(ids):
                raise ValueError(f"operator at site {op.site} repeats a TPO id")
            if len(ids) > TPO_LEG_BUDGET:
                raise ValueError(
                    f"operator at site {op.site} carries {len(ids)} TPO links; "
                    f"at most {TPO_LEG_BUDGET} are supported"
                )
            t = op.tensor
            if t.rank != 2 + len(ids):
                raise ValueError(
                    f"operator at site {op.site}: rank {t.rank} does not match "
                    f"2 + {len(ids)} TPO legs"
                )
            if t.links[0] != t.links[1]:
                raise ValueError(
                    f"operator at site {op.site}: output and input legs differ"
                )
            if t.dirs[0] != -t.dirs[1]:
                raise ValueError(
                    f"operator at site {op.site}: output and input directions "
                    "must be opposite"
                )
            for k, tid in enumerate(ids):
                usage.setdefault(tid, []).append(
                    (op.site, t.dirs[2 + k], t.links[2 + k])
                )
        for tid, ends in usage.items():
            if len(ends) != 2:
                raise ValueError(f"TPO id {tid} must appear on exactly two operators")
            (sa, da, la), (sb, db, lb) = ends
            if sa == sb:
                raise ValueError(f"TPO id {tid} links site {sa} to itself")
            if da != -db:
                raise ValueError(f"TPO id {tid}: leg directions must be opposite")
            if la != lb:
                raise ValueError(f"TPO id {tid}: leg representations differ")
        # connectivity over shared TPO ids; disconnected products are ambiguous
        adj = {op.site: set() for op in self.ops}
        for ends in usage.values():
            (sa, _, _), (sb, _, _) = ends
            adj[sa].add(sb)
            adj[sb].add(sa)
        seen = {self.ops[0].site}
        stack = [self.ops[0].site]
        while stack:
            for v in adj[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        if len(seen) != len(self.ops):
            raise ValueError(
                "term factors are TPO-disconnected; join independent factors "
                "with a dimension-1 TPO link"
            )

    @cached_property
    def by_site(self):
        return {op.site: op for op in self.ops}

    @cached_property
    def sites(self):
        return frozenset(op.site for op in self.ops)

    @cached_property
    def tpo_reps(self):
        """TPO id -> link representation."""
        out = {}
        for op in self.ops:
            for k, tid in enumerate(op.tpo_ids):
                out[tid] = op.tensor.links[2 + k]
        return out

    @cached_property
    def tpo_ends(self):
        """TPO id -> (site, site) holding its two legs."""
        out = {}
        for op in self.ops:
            for tid in op.tpo_ids:
                out.setdefault(tid, []).append(op.site)
        return {tid: tuple(ss) for tid, ss in out.items()}

    def op_at(self, site):
        return self.by_site.get(site)


@dataclass(frozen=True)
class TPO:
    """A Hamiltonian H = sum_p H_p given as a tuple of product terms."""

    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def support(self, p):
        return self.terms[p].sites

    @cached_property
    def sites(self):
        out = set()
        for term in self.terms:
            out |= term.sites
        return frozenset(out)


def _component_sites(geom, cut_link, start):
    """Physical sites reachable from ``start`` without crossing ``cut_link``."""
    sites = set()
    seen = {start}
    stack = [start]
    while stack:
        q = stack.pop()
        for lid in geom.node_links[q]:
            if lid == cut_link:
                continue
            info = geom.links[lid]
            if info.kind == "phys":
                sites.add(info.site)
            elif info.kind == "virt":
                a, b = info.ends
                v = b if a == q else a
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
    return frozenset(sites)


def check_compatibility(tpo, net, budget=TPO_CUT_BUDGET):
    """Build-time compatibility of a TPO with the network geometry.

    Verifies that each local operator sits on an existing physical link
    with a matching representation, and that no tree bipartition cuts more
    than ``budget`` TPO links of any single term.
    """
    phys = {i.site: l for l, i in net.links.items() if i.kind == "phys"}
    for p, term in enumerate(tpo.terms):
        for op in term.ops:
            lid = phys.get(op.site)
            if lid is None:
                raise ValueError(f"term {p}: no physical link for site {op.site}")
            if op.tensor.links[0] != net.link_rep(lid):
                raise ValueError(
                    f"term {p}: operator at site {op.site} does not match the "
                    "physical link representation"
                )
    for lid, info in net.links.items():
        if info.kind != "virt":
            continue
        side = _component_sites(net.geometry, lid, info.ends[0])
        for p, term in enumerate(tpo.terms):
            cut = [
                tid
                for tid, (sa, sb) in term.tpo_ends.items()
                if (sa in side) != (sb in side)
            ]
            if len(cut) > budget:
                raise ValueError(
                    f"term {p} cuts {len(cut)} TPO links {sorted(cut)} across "
                    f"link {lid}; the budget is {budget}"
                )


def describe_tpo(tpo, net=None):
    """Structured text dump: terms, supports, TPO dims, per-link cut counts."""
    lines = [f"TPO: {len(tpo.terms)} terms over sites {sorted(tpo.sites)}"]
    for p, term in enumerate(tpo.terms):
        bits = []
        for op in sorted(term.ops, key=lambda o: o.site):
            ids = ",".join(
                f"{tid}(dim {sum(term.tpo_reps[tid].degs)})" for tid in op.tpo_ids
            )
            bits.append(f"site {op.site}" + (f" [{ids}]" if ids else ""))
        lines.append(f"  term {p}: " + " * ".join(bits))
    if net is not None:
        lines.append("per-link TPO cuts (max over terms):")
        for lid, info in sorted(net.links.items()):
            if info.kind != "virt":
                continue
            side = _component_sites(net.geometry, lid, info.ends[0])
            worst = 0
            for term in tpo.terms:
                cut = sum(
                    1
                    for sa, sb in term.tpo_ends.values()
                    if (sa in side) != (sb in side)
                )
                worst = max(worst, cut)
            lines.append(f"  link {lid}: {worst}")
    return "\n".join(lines)


# -- renormalized factors ----------------------------------------------------


@dataclass
class LinkFactors:
    """Renormalized content of one link, oriented toward the center.

    ``plain`` sums every term whose support lies fully behind the link;
    ``open_terms`` maps term index -> (tensor, open TPO ids) for terms
    still reaching across. Terms absent from both act as identities.
    """

    plain: object = None
    open_terms: dict = field(default_factory=dict)
    closed: frozenset = frozenset()


@dataclass
class RenormalizedOperator:
    """Per-link cache of renormalized Hamiltonian factors toward ``center``.

    Entries are keyed by link id. Identity factors are never stored; the
    ``factor`` accessor reports them as the IDENTITY marker.
    """

    tpo: TPO
    center: int
    entries: dict = field(default_factory=dict)
    identity_shortcut: bool = True

    def factor(self, link_id, p):
        """(tensor, open TPO ids) of term p on a link, or IDENTITY."""
        if link_id == SELECTOR_LINK:
            return IDENTITY
        entry = self.entries.get(link_id)
        if entry is None:
            raise ValueError(f"no renormalized factors on link {link_id}")
        if p in entry.open_terms:
            return entry.open_terms[p]
        if p in entry.closed:
            raise ValueError(
                f"term {p} on link {link_id} was folded into the summed channel"
            )
        return IDENTITY


def _absorb(x, extras, frame, op, tpo_ids, j):
    """Contract ``op``'s input leg with frame leg ``j`` of ``x``.

    The output leg returns to position j. TPO legs whose partner already
    dangles behind the frame are contracted away; fresh ones append at the
    end. Returns (tensor, updated extra-leg ids).
    """
    pairs = [(2, j)]
    hit = set()
    for k, tid in enumerate(tpo_ids):
        if tid in extras:
            pairs.append((3 + k, frame + 1 + extras.index(tid)))
            hit.add(k)
    out = contract_symmetric(op, x, pairs)
    kept_op = [k for k in range(len(tpo_ids)) if k not in hit]
    hit_ids = {tpo_ids[k] for k in hit}
    kept_extras = [tid for tid in extras if tid not in hit_ids]
    # out legs: (output, kept op TPO legs, frame legs except j, kept extras)
    rebuilt = []
    oi = 0
    for pos in range(1, frame + 1):
        if pos == j:
            rebuilt.append(1)
        else:
            rebuilt.append(2 + len(kept_op) + oi)
            oi += 1
    base = 1 + len(kept_op) + (frame - 1)
    rebuilt.extend(range(base + 1, base + 1 + len(kept_extras)))
    rebuilt.extend(range(2, 2 + len(kept_op)))
    sigma = [0] * out.rank
    for new_pos, old_pos in enumerate(rebuilt, start=1):
        sigma[old_pos - 1] = new_pos
    return permute_symmetric(out, sigma), kept_extras + [tpo_ids[k] for k in kept_op]


def _close(net, q, x, j):
    """Sandwich x with the conjugate node tensor over every frame leg but j.

    Result legs: (output on link j, input on link j, extras...).
    """
    t = net.nodes[q].conj()
    pairs = [(pos, pos) for pos in range(1, t.rank + 1) if pos != j]
    return contract_symmetric(t, x, pairs)


def _sort_extras(t, extras, nfront):
    """Permute the trailing TPO legs into ascending id order."""
    order = sorted(range(len(extras)), key=lambda i: extras[i])
    if order != list(range(len(extras))):
        sigma = list(range(1, nfront + 1)) + [0] * len(extras)
        for new_rank, i in enumerate(order):
            sigma[nfront + i] = nfront + 1 + new_rank
        t = permute_symmetric(t, sigma)
    return t, tuple(extras[i] for i in order)


def renormalize_step(net, renops, p, q, toward, identity_shortcut=None):
    """Renormalize term ``p`` at node ``q`` into a factor on link ``toward``.

    Inputs are the factors on q's other links; they are absorbed into the
    node tensor one by one (pairing TPO legs as their partners appear),
    and the result is closed with the conjugate tensor. Returns
    (tensor, open TPO ids), or (IDENTITY, ()) when every input is an
    identity and the gauge isometry makes the output one as well.
    """
    if identity_shortcut is None:
        identity_shortcut = renops.identity_shortcut
    term = renops.tpo.terms[p]
    t = net.nodes[q]
    frame = t.rank
    jt = net.leg(q, toward)
    facs = []
    for j, lid in enumerate(net.node_links[q], start=1):
        if lid == toward or lid == SELECTOR_LINK:
            continue
        info = net.links[lid]
        if info.kind == "phys":
            op = term.op_at(info.site)
            if op is not None:
                facs.append((j, op.tensor, op.tpo_ids))
        else:
            got = renops.factor(lid, p)
            if got is not IDENTITY:
                facs.append((j, got[0], got[1]))
    if not facs and identity_shortcut:
        return IDENTITY, ()
    x = t
    extras = []
    for j, tf, ids in facs:
        x, extras = _absorb(x, extras, frame, tf, ids, j)
    out = _close(net, q, x, jt)
    out, ids = _sort_extras(out, extras, 2)
    return out, ids


def _plain_factor(net, renops, q, toward):
    """Renormalize the per-link non-interacting sums through node ``q``."""
    t = net.nodes[q]
    frame = t.rank
    jt = net.leg(q, toward)
    acc = None
    for j, lid in enumerate(net.node_links[q], start=1):
        if lid == toward or lid == SELECTOR_LINK:
            continue
        entry = renops.entries.get(lid)
        if entry is None or entry.plain is None:
            continue
        x, _ = _absorb(t, [], frame, entry.plain, (), j)
        res = _close(net, q, x, jt)
        acc = res if acc is None else acc.add(res)
    return acc


def _link_entry(net, renops, q, toward, side_sites):
    """All renormalized factors on link ``toward``, produced at node ``q``."""
    tpo = renops.tpo
    plain = _plain_factor(net, renops, q, toward)
    open_terms = {}
    closed = set()
    for p in range(len(tpo.terms)):
        supp = tpo.support(p)
        if supp <= side_sites and _folded_below(net, renops, q, toward, p):
            closed.add(p)
            continue
        res, ids = renormalize_step(net, renops, p, q, toward)
        if res is IDENTITY:
            continue
        if supp <= side_sites:
            # term completed behind this link; fold into the summed channel
            plain = res if plain is None else plain.add(res)
            closed.add(p)
        else:
            open_terms[p] = (res, ids)
    return LinkFactors(plain, open_terms, frozenset(closed))


def _folded_below(net, renops, q, toward, p):
    for lid in net.node_links[q]:
        if lid == toward or lid == SELECTOR_LINK:
            continue
        entry = renops.entries.get(lid)
        if entry is not None and p in entry.closed:
            return True
    return False


def _distances(net, c):
    return {q: d for d, qs in enumerate(net.levels(c)) for q in qs}


def _side_map(net, dist):
    """Link id -> sites separated from the center by that link."""
    sides = {}
    for lid, info in net.links.items():
        if info.kind == "virt":
            a, b = info.ends
            far = a if dist[a] > dist[b] else b
            sides[lid] = _component_sites(net.geometry, lid, far)
        elif info.kind == "phys":
            sides[lid] = frozenset((info.site,))
    return sides


def build_all_renormalized(net, tpo, c, identity_shortcut=True):
    """Renormalized factors on every link, oriented toward center ``c``.

    Expects the network in unitary gauge at ``c``; the identity shortcut
    relies on the node isometries. Walks the tree bottom-up, so each step
    finds its inputs already renormalized.
    """
    check_compatibility(tpo, net)
    renops = RenormalizedOperator(tpo, c, {}, identity_shortcut)
    for lid, info in net.links.items():
        if info.kind != "phys":
            continue
        plain = None
        open_terms = {}
        closed = set()
        for p, term in enumerate(tpo.terms):
            op = term.op_at(info.site)
            if op is None:
                continue
            if op.tpo_ids:
                open_terms[p] = (op.tensor, tuple(op.tpo_ids))
            else:
                plain = op.tensor if plain is None else plain.add(op.tensor)
                closed.add(p)
        renops.entries[lid] = LinkFactors(plain, open_terms, frozenset(closed))
    dist = _distances(net, c)
    sides = _side_map(net, dist)
    for level in reversed(net.levels(c)):
        for q in level:
            if q == c:
                continue
            parent = next(v for v in net.neighbors(q) if dist[v] == dist[q] - 1)
            zeta = net.link_between(q, parent)
            renops.entries[zeta] = _link_entry(net, renops, q, zeta, sides[zeta])
    return renops


def update_path(net, renops, c2):
    """Re-point the cache after a gauge move from the stored center to c2.

    Only entries on the connecting path are rebuilt; every other entry is
    left untouched (same stored objects).
    """
    if c2 == renops.center:
        return renops
    path = net.path(renops.center, c2)
    renops.center = c2
    dist = _distances(net, c2)
    sides = _side_map(net, dist)
    for i in range(len(path) - 1):
        q = path[i]
        zeta = net.link_between(q, path[i + 1])
        renops.entries[zeta] = _link_entry(net, renops, q, zeta, sides[zeta])
    return renops


def refresh_link(net, renops, link_id):
    """Recompute one link's factors after its far-side node tensor changed.

    The entry keeps its orientation toward the stored center; all other
    entries stay untouched. Physical links never go stale (their factors
    come from the bare operators), so they are left alone.
    """
    if net.links[link_id].kind != "virt":
        return renops
    dist = _distances(net, renops.center)
    a, b = net.links[link_id].ends
    q = a if dist[a] > dist[b] else b
    sides = _side_map(net, dist)
    renops.entries[link_id] = _link_entry(net, renops, q, link_id, sides[link_id])
    return renops


# -- projector terms ---------------------------------------------------------


@dataclass
class ProjectorTerm:
    """Penalty term eps_p |Psi_p><Psi_p| over a superposition of states.

    ``envs[i]`` maps each link to a two-leg overlap environment with legs
    (projector side, state side), oriented toward the center; a None entry
    marks a state in a different selector sector (zero contribution).
    ``tvec`` is the weighted center vector in the state's center space.
    """

    penalty: float
    nets: tuple
    weights: tuple
    center: int
    envs: list
    tvec: object = None

    def contribution(self, t):
        """eps_p * tvec * <tvec|t>, or None for a dead projector."""
        if self.tvec is None:
            return None
        return self.tvec.scaled(self.penalty * self.tvec.vdot(t))

    def overlap(self, t):
        """<Psi_p|Psi> for the center tensor t, 0 for a dead projector."""
        if self.tvec is None:
            return 0j
        return complex(self.tvec.vdot(t))

    def update_path(self, net, c2):
        if c2 == self.center:
            return self
        path = net.path(self.center, c2)
        for pnet, envs in zip(self.nets, self.envs):
            if envs is None:
                continue
            for i in range(len(path) - 1):
                q = path[i]
                zeta = net.link_between(q, path[i + 1])
                envs[zeta] = _env_step(net, pnet, envs, q, zeta)
        self.center = c2
        self._rebuild_center(net)
        return self

    def refresh_link(self, net, link_id):
        """Recompute one link's environments after its far-side node tensor
        changed, then the center vector. Only meaningful for virtual links."""
        if net.links[link_id].kind != "virt":
            return self
        dist = _distances(net, self.center)
        a, b = net.links[link_id].ends
        q = a if dist[a] > dist[b] else b
        for pnet, envs in zip(self.nets, self.envs):
            if envs is None:
                continue
            envs[link_id] = _env_step(net, pnet, envs, q, link_id)
        self._rebuild_center(net)
        return self

    def pair_vector(self, net, a, b):
        """Weighted center vector on the contracted pair of adjacent nodes.

        Legs follow a's remaining links then b's remaining links, matching
        the pair tensor built by contracting the two node tensors over the
        shared link. The stored center must sit on one of the two nodes.
        None for an all-dead projector.
        """
        if self.center not in (a, b):
            raise ValueError("projector center must lie on the pair")
        eta = net.link_between(a, b)
        ia, ib = net.leg(a, eta), net.leg(b, eta)
        frame_ids = [l for l in net.node_links[a] if l != eta]
        frame_ids += [l for l in net.node_links[b] if l != eta]
        out = None
        for pnet, envs, w in zip(self.nets, self.envs, self.weights):
            if envs is None:
                continue
            pair = contract_symmetric(pnet.nodes[a], pnet.nodes[b], [(ia, ib)])
            y = pair.conj()
            frame = y.rank
            for j, lid in enumerate(frame_ids, start=1):
                if net.links[lid].kind != "virt":
                    continue
                flip = permute_symmetric(envs[lid], (2, 1))
                y, _ = _absorb(y, [], frame, flip, (), j)
            y = y.conj()
            out = y.scaled(w) if out is None else out.add(y, alpha=w)
        return out

    def _rebuild_center(self, net):
        tvec = None
        for pnet, envs, w in zip(self.nets, self.envs, self.weights):
            if envs is None:
                continue
            y = _center_vector(net, pnet, envs, self.center)
            tvec = y.scaled(w) if tvec is None else tvec.add(y, alpha=w)
        self.tvec = tvec


def _env_step(net, pnet, envs, q, toward):
    """Overlap environment on link ``toward``: state node tensor with the
    child environments absorbed, closed against the conjugate projector
    tensor. Result legs: (projector side, state side)."""
    x = net.nodes[q]
    frame = x.rank
    jt = net.leg(q, toward)
    for j, lid in enumerate(net.node_links[q], start=1):
        if lid == toward or net.links[lid].kind != "virt":
            continue
        x, _ = _absorb(x, [], frame, envs[lid], (), j)
    t = pnet.nodes[q].conj()
    pairs = [(pos, pos) for pos in range(1, frame + 1) if pos != jt]
    return contract_symmetric(t, x, pairs)


def _center_vector(net, pnet, envs, c):
    """Ket-space center vector of one projector state: all environments
    contracted into the conjugate projector tensor, then conjugated back
    into the state's center space."""
    y = pnet.nodes[c].conj()
    frame = y.rank
    for j, lid in enumerate(net.node_links[c], start=1):
        if net.links[lid].kind != "virt":
            continue
        flip = permute_symmetric(envs[lid], (2, 1))
        y, _ = _absorb(y, [], frame, flip, (), j)
    return y.conj()


def renormalize_projector(net, pnets, weights=None, c=None, penalty=1.0):
    """Build a ProjectorTerm for eps_p |Psi_p><Psi_p| toward center ``c``.

    ``pnets`` lists the superposition states Psi_{p,i} (same geometry and
    group as ``net``; virtual dimensions may differ), combined with
    ``weights`` (default all ones). States in a different selector sector
    contribute zero and are kept as dead entries.
    """
    if c is None:
        raise ValueError("renormalize_projector needs a center node")
    pnets = tuple(pnets)
    weights = tuple(1.0 for _ in pnets) if weights is None else tuple(weights)
    if len(weights) != len(pnets):
        raise ValueError("one weight per projector state required")
    envs_all = []
    for pnet in pnets:
        if pnet.geometry != net.geometry:
            raise ValueError("projector state has a different geometry")
        if pnet.group != net.group:
            raise ValueError("projector state has a different symmetry group")
        if pnet.selector_sector() != net.selector_sector():
            envs_all.append(None)
            continue
        dist = _distances(net, c)
        envs = {}
        for level in reversed(net.levels(c)):
            for q in level:
                if q == c:
                    continue
                parent = next(v for v in net.neighbors(q) if dist[v] == dist[q] - 1)
                zeta = net.link_between(q, parent)
                envs[zeta] = _env_step(net, pnet, envs, q, zeta)
        envs_all.append(envs)
    term = ProjectorTerm(float(penalty), pnets, weights, c, envs_all)
    term._rebuild_center(net)
    return term


# -- effective Hamiltonian ---------------------------------------------------


@dataclass
class EffectiveHamiltonian:
    """Lazy sum of renormalized factors around a center node.

    Holds the Hamiltonian cache and any projector terms; application is
    matrix-free and term-by-term with a deterministic reduction order.
    """

    net: object
    renops: RenormalizedOperator
    projectors: list = field(default_factory=list)

    @property
    def center(self):
        return self.renops.center

    def move_to(self, c2):
        """Follow a gauge move; call after the network center has moved."""
        update_path(self.net, self.renops, c2)
        for pt in self.projectors:
            pt.update_path(self.net, c2)
        return self

    def refresh_link(self, link_id):
        """Recompute one link's cached factors and environments in place.

        Needed when a node tensor away from the center changes without a
        gauge move, e.g. after padding a link's representation.
        """
        refresh_link(self.net, self.renops, link_id)
        for pt in self.projectors:
            pt.refresh_link(self.net, link_id)
        return self


def effective_hamiltonian(net, tpo, c, projectors=(), identity_shortcut=True):
    """Build the effective Hamiltonian at center ``c`` (unitary gauge)."""
    renops = build_all_renormalized(net, tpo, c, identity_shortcut)
    return EffectiveHamiltonian(net, renops, list(projectors))


def apply_effective_over(heff, t, link_ids, projector_vectors=None):
    """Apply the effective operator to ``t`` whose legs follow ``link_ids``.

    ``link_ids[j-1]`` names the link carried by leg j of ``t``; selector
    legs pass through untouched. Projector contributions use the cached
    center vectors unless ``projector_vectors`` supplies (penalty, vector)
    pairs in t's own leg frame, as needed for two-node updates.
    """
    frame = t.rank
    if len(link_ids) != frame:
        raise ValueError("one link id per tensor leg required")
    entries = heff.renops.entries
    acc = None
    for j, lid in enumerate(link_ids, start=1):
        if lid == SELECTOR_LINK:
            continue
        entry = entries.get(lid)
        if entry is None:
            raise ValueError(f"no renormalized factors on link {lid}")
        if entry.plain is None:
            continue
        x, _ = _absorb(t, [], frame, entry.plain, (), j)
        acc = x if acc is None else acc.add(x)
    active = {}
    for j, lid in enumerate(link_ids, start=1):
        if lid == SELECTOR_LINK:
            continue
        for p, (tf, ids) in entries[lid].open_terms.items():
            active.setdefault(p, []).append((j, tf, ids))
    for p in sorted(active):
        x = t
        extras = []
        for j, tf, ids in active[p]:
            x, extras = _absorb(x, extras, frame, tf, ids, j)
        if extras:
            raise ValueError(f"term {p} leaves TPO links {extras} open at the center")
        acc = x if acc is None else acc.add(x)
    if projector_vectors is None:
        projector_vectors = [(pt.penalty, pt.tvec) for pt in heff.projectors]
    for penalty, vec in projector_vectors:
        if vec is None:
            continue
        y = vec.scaled(penalty * vec.vdot(t))
        acc = y if acc is None else acc.add(y)
    return SymmetricTensor.zeros(t.links, t.dirs) if acc is None else acc


def apply_effective(heff, t):
    """H_eff |t> at the cached center, term by term, never materialized."""
    c = heff.center
    node = heff.net.nodes[c]
    if t.links != node.links or t.dirs != node.dirs:
        raise ValueError("center tensor does not match the effective operator")
    return apply_effective_over(heff, t, heff.net.node_links[c])


def effective_energy(heff, t):
    """<t|H_eff|t> as a real number."""
    return complex(t.vdot(apply_effective(heff, t))).real


# -- dense materialization (tests only) --------------------------------------


def match_layout(links, dirs):
    """Flat coordinate layout over all admissible matches.

    Returns ([(match, block shape, offset)], total dimension) in canonical
    match order with column-major order inside each block.
    """
    entries = []
    off = 0
    for m in possible_matches(links, dirs):
        shape = tuple(l.deg_of(s) for l, s in zip(links, m))
        n = int(np.prod(shape)) if shape else 1
        entries.append((m, shape, off))
        off += n
    return entries, off


def pack_tensor(t, layout):
    """Flatten a tensor's blocks into one complex vector."""
    entries, total = layout
    v = np.zeros(total, dtype=np.complex128)
    for m, shape, off in entries:
        b = t.block(m)
        if b is not None:
            n = int(np.prod(shape)) if shape else 1
            v[off : off + n] = b.reshape(n, order="F")
    return v


def unpack_tensor(links, dirs, layout, v):
    """Inverse of pack_tensor over the same layout."""
    entries, _ = layout
    blocks = {}
    for m, shape, off in entries:
        n = int(np.prod(shape)) if shape else 1
        blocks[m] = np.asarray(v[off : off + n], dtype=np.complex128).reshape(
            shape, order="F"
        )
    return SymmetricTensor(links, dirs, blocks, validate=False)


def effective_matrix(heff, cap=MATERIALIZE_CAP):
    """Dense matrix of the effective operator, for small test problems."""
    node = heff.net.nodes[heff.center]
    layout = match_layout(node.links, node.dirs)
    total = layout[1]
    if total > cap:
        raise ValueError(f"center space dimension {total} exceeds the cap {cap}")
    mat = np.zeros((total, total), dtype=np.complex128)
    for k in range(total):
        v = np.zeros(total, dtype=np.complex128)
        v[k] = 1.0
        x = unpack_tensor(node.links, node.dirs, layout, v)
        mat[:, k] = pack_tensor(apply_effective(heff, x), layout)
    return mat
