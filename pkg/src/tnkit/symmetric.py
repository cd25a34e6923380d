"""Block-sparse tensors covariant under an Abelian symmetry.

A symmetric tensor carries one SymmetricLink and one direction per leg plus
a dict of degeneracy blocks keyed by sector tuples ("matches"). Only
matches whose direction-adjusted sectors fuse to the group identity are
admissible; absent matches are implicit zeros and are always skipped.

The dense correspondence used throughout (and by the homomorphism tests):
downgrading places each sector's degeneracy range contiguously in canonical
sector order, so every operation here mirrors its dense counterpart under
that sector-ordered index map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .dense import (
    DenseTensor,
    SingularSpectrum,
    ZERO_CUTOFF,
    _fix_qr_phases,
    truncation_cut,
    DEFAULT_SVD_TAU,
)
from .links import (
    IN,
    OUT,
    FuseNode,
    SymmetricLink,
    adjusted,
    build_fuse_node,
    intersect_links,
)

__all__ = [
    "SymmetricTensor",
    "possible_matches",
    "permute_symmetric",
    "fuse_symmetric",
    "split_symmetric",
    "contract_symmetric",
    "sym_subtensor_read",
    "sym_subtensor_assign",
    "downgrade",
    "link_index_table",
    "fuse_index_map",
    "qr_symmetric",
    "svd_symmetric",
    "expm_symmetric",
    "scale_axis",
    "SectorSpectra",
]

#: validate match admissibility and block shapes on construction
VALIDATE = True


def _match_valid(links, dirs, match):
    group = links[0].group
    total = group.identity()
    for link, d, s in zip(links, dirs, match):
        total = group.fuse(total, adjusted(group, s, d))
    return total == group.identity()


class SymmetricTensor:
    """Invariant block-sparse tensor (see module docstring)."""

    __slots__ = ("links", "dirs", "blocks")

    def __init__(self, links, dirs, blocks, validate=None):
        links = tuple(links)
        dirs = tuple(dirs)
        if len(links) != len(dirs):
            raise ValueError("links / directions count mismatch")
        if any(d not in (OUT, IN) for d in dirs):
            raise ValueError("directions must be OUT or IN")
        norm_blocks = {}
        for match, arr in blocks.items():
            match = tuple(match)
            arr = np.asarray(arr, dtype=np.complex128)
            norm_blocks[match] = arr
        if validate is None:
            validate = VALIDATE
        if validate:
            if links:
                group = links[0].group
                if any(l.group != group for l in links):
                    raise ValueError("links from different groups")
            for match, arr in norm_blocks.items():
                if len(match) != len(links):
                    raise ValueError(f"match {match} has wrong rank")
                shape = []
                for link, s in zip(links, match):
                    d = link.deg_of(s)
                    if d == 0:
                        raise ValueError(f"match {match}: sector {s!r} not on link")
                    shape.append(d)
                if arr.shape != tuple(shape):
                    raise ValueError(
                        f"match {match}: block shape {arr.shape} != {tuple(shape)}"
                    )
                if links and not _match_valid(links, dirs, match):
                    raise ValueError(f"match {match} violates the fusion constraint")
        self.links = links
        self.dirs = dirs
        self.blocks = norm_blocks

    # -- construction ------------------------------------------------------

    @classmethod
    def zeros(cls, links, dirs):
        """No matches: every block an implicit zero."""
        return cls(links, dirs, {})

    @classmethod
    def random(cls, links, dirs, rng, scale=1.0):
        """All admissible matches, i.i.d. complex Gaussian entries."""
        blocks = {}
        for match in possible_matches(links, dirs):
            shape = tuple(l.deg_of(s) for l, s in zip(links, match))
            blocks[match] = scale * (
                rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            )
        return cls(links, dirs, blocks)

    @classmethod
    def identity(cls, link, dirs=(OUT, IN)):
        """Identity operator on ``link``: two duplicate legs, opposite dirs."""
        if dirs[0] == dirs[1]:
            raise ValueError("identity needs opposite directions")
        blocks = {
            (s, s): np.eye(d, dtype=np.complex128)
            for s, d in zip(link.sectors, link.degs)
        }
        return cls((link, link), dirs, blocks)

    @property
    def group(self):
        return self.links[0].group if self.links else None

    @property
    def rank(self):
        return len(self.links)

    @property
    def size(self):
        return sum(b.size for b in self.blocks.values())

    def block(self, match):
        return self.blocks.get(tuple(match))

    def scalar(self):
        if self.rank != 0:
            raise ValueError("not a scalar tensor")
        if not self.blocks:
            return 0j
        return complex(self.blocks[()].reshape(()))

    def copy(self):
        return SymmetricTensor(
            self.links,
            self.dirs,
            {m: b.copy() for m, b in self.blocks.items()},
            validate=False,
        )

    # -- elementwise vector-space helpers ----------------------------------

    def scaled(self, c):
        return SymmetricTensor(
            self.links,
            self.dirs,
            {m: c * b for m, b in self.blocks.items()},
            validate=False,
        )

    def add(self, other, alpha=1.0):
        """self + alpha * other; links and directions must agree."""
        if self.links != other.links or self.dirs != other.dirs:
            raise ValueError("tensor addition needs identical link structure")
        blocks = {m: b.copy() for m, b in self.blocks.items()}
        for m, b in other.blocks.items():
            if m in blocks:
                blocks[m] = blocks[m] + alpha * b
            else:
                blocks[m] = alpha * b
        return SymmetricTensor(self.links, self.dirs, blocks, validate=False)

    def vdot(self, other):
        """<self|other> = sum over common matches of conj(self).other."""
        if self.links != other.links or self.dirs != other.dirs:
            raise ValueError("inner product needs identical link structure")
        acc = 0j
        for m, b in self.blocks.items():
            ob = other.blocks.get(m)
            if ob is not None:
                acc += np.vdot(b, ob)
        return complex(acc)

    def norm(self):
        return float(np.sqrt(sum(np.vdot(b, b).real for b in self.blocks.values())))

    def prune(self, cutoff=ZERO_CUTOFF):
        """Drop blocks whose largest magnitude is below ``cutoff``."""
        blocks = {
            m: b for m, b in self.blocks.items() if b.size and np.max(np.abs(b)) >= cutoff
        }
        return SymmetricTensor(self.links, self.dirs, blocks, validate=False)

    # -- conjugation and link inversion -------------------------------------

    def conj(self):
        """Hermitian conjugate: conjugate blocks, flip all directions."""
        return SymmetricTensor(
            self.links,
            tuple(-d for d in self.dirs),
            {m: b.conj() for m, b in self.blocks.items()},
            validate=False,
        )

    def invert_link(self, pos):
        """Relabel link ``pos`` (1-based) with inverted sectors, flip its dir.

        A pure relabeling: applied to both ends of a shared link it leaves
        any contraction invariant.
        """
        i = pos - 1
        group = self.group
        links = list(self.links)
        links[i] = self.links[i].invert()
        dirs = list(self.dirs)
        dirs[i] = -dirs[i]
        blocks = {}
        for m, b in self.blocks.items():
            mm = list(m)
            mm[i] = group.invert(m[i])
            blocks[tuple(mm)] = b
        return SymmetricTensor(tuple(links), tuple(dirs), blocks, validate=False)

    def __repr__(self):
        dims = tuple(l.dim for l in self.links)
        return (
            f"SymmetricTensor(dims={dims}, dirs={self.dirs}, "
            f"matches={len(self.blocks)})"
        )


def possible_matches(links, dirs):
    """All admissible sector combinations, in canonical (sorted) order."""
    if not links:
        return [()]
    out = []
    for combo in product(*(l.sectors for l in links)):
        if _match_valid(links, dirs, combo):
            out.append(combo)
    return out


# -- structural ops ----------------------------------------------------------


def permute_symmetric(t, sigma):
    """Reorder legs: old leg l moves to position sigma[l-1] (1-based)."""
    n = t.rank
    sig = tuple(int(s) for s in sigma)
    if sorted(sig) != list(range(1, n + 1)):
        raise ValueError(f"{sigma} is not a permutation of 1..{n}")
    if sig == tuple(range(1, n + 1)):
        return t
    axes = [0] * n
    for old, new in enumerate(sig):
        axes[new - 1] = old
    links = tuple(t.links[a] for a in axes)
    dirs = tuple(t.dirs[a] for a in axes)
    blocks = {}
    for m, b in t.blocks.items():
        mm = tuple(m[a] for a in axes)
        blocks[mm] = np.ascontiguousarray(np.transpose(b, axes))
    return SymmetricTensor(links, dirs, blocks, validate=False)


def fuse_symmetric(t, node, pos):
    """Fuse legs pos..pos+len(node.links)-1 into node's fused link.

    Each member block is column-major flattened over the fused axes and
    inscribed at its collision's degeneracy interval.
    """
    nf = len(node.links)
    i = pos - 1
    if t.links[i : i + nf] != node.links or t.dirs[i : i + nf] != node.dirs:
        raise ValueError("fuse-node does not match the tensor legs")
    new_links = t.links[:i] + (node.fused_link,) + t.links[i + nf :]
    new_dirs = t.dirs[:i] + (node.fused_dir,) + t.dirs[i + nf :]
    blocks = {}
    for m, b in t.blocks.items():
        col = node.lookup(m[i : i + nf])
        new_m = m[:i] + (col.fused,) + m[i + nf :]
        tgt = blocks.get(new_m)
        if tgt is None:
            shape = tuple(
                l.deg_of(s) for l, s in zip(new_links, new_m)
            )
            tgt = np.zeros(shape, dtype=np.complex128)
            blocks[new_m] = tgt
        # column-major flatten of the fused axes
        moved = np.moveaxis(b, range(i, i + nf), range(nf))
        flat = moved.reshape((col.size,) + moved.shape[nf:], order="F")
        flat = np.moveaxis(flat, 0, i)
        sl = [slice(None)] * tgt.ndim
        sl[i] = slice(col.delta, col.delta + col.size)
        tgt[tuple(sl)] = flat
    return SymmetricTensor(new_links, new_dirs, blocks, validate=False)


def split_symmetric(t, node, pos):
    """Inverse of :func:`fuse_symmetric` using the same fuse-node."""
    i = pos - 1
    if t.links[i] != node.fused_link or t.dirs[i] != node.fused_dir:
        raise ValueError("fuse-node does not match the fused leg")
    nf = len(node.links)
    new_links = t.links[:i] + node.links + t.links[i + 1 :]
    new_dirs = t.dirs[:i] + node.dirs + t.dirs[i + 1 :]
    blocks = {}
    for m, b in t.blocks.items():
        for col in node.of_sector(m[i]):
            sl = [slice(None)] * b.ndim
            sl[i] = slice(col.delta, col.delta + col.size)
            part = b[tuple(sl)]
            if part.size == 0 or np.max(np.abs(part)) < ZERO_CUTOFF:
                continue
            member_shape = tuple(
                l.deg_of(s) for l, s in zip(node.links, col.sectors)
            )
            moved = np.moveaxis(part, i, 0)
            unflat = moved.reshape(member_shape + moved.shape[1:], order="F")
            unflat = np.moveaxis(unflat, range(nf), range(i, i + nf))
            new_m = m[:i] + col.sectors + m[i + 1 :]
            blocks[new_m] = np.ascontiguousarray(unflat)
    return SymmetricTensor(new_links, new_dirs, blocks, validate=False)


def contract_symmetric(a, b, pairs):
    """Contract over (a_leg, b_leg) pairs; paired legs must share the same
    link representation and carry opposite directions.

    Result legs: a's remaining then b's remaining. Implicitly absent
    matches are skipped; duplicate result matches are reduced by summation
    in canonical match order, then zero blocks are pruned.
    """
    apos = [int(p) - 1 for p, _ in pairs]
    bpos = [int(q) - 1 for _, q in pairs]
    if len(set(apos)) != len(apos) or len(set(bpos)) != len(bpos):
        raise ValueError("contraction pairs must use distinct legs")
    for p, q in zip(apos, bpos):
        if a.links[p] != b.links[q]:
            raise ValueError(
                f"paired legs ({p + 1},{q + 1}) carry different link representations"
            )
        if a.dirs[p] != -b.dirs[q]:
            raise ValueError(
                f"paired legs ({p + 1},{q + 1}) must have opposite directions"
            )
    arem = [i for i in range(a.rank) if i not in apos]
    brem = [i for i in range(b.rank) if i not in bpos]
    links = tuple(a.links[i] for i in arem) + tuple(b.links[i] for i in brem)
    dirs = tuple(a.dirs[i] for i in arem) + tuple(b.dirs[i] for i in brem)

    groups_a = {}
    for m, blk in a.blocks.items():
        key = tuple(m[p] for p in apos)
        groups_a.setdefault(key, []).append((m, blk))
    groups_b = {}
    for m, blk in b.blocks.items():
        key = tuple(m[q] for q in bpos)
        groups_b.setdefault(key, []).append((m, blk))

    out = {}
    for key in sorted(set(groups_a) & set(groups_b), key=repr):
        for ma, blka in groups_a[key]:
            for mb, blkb in groups_b[key]:
                new_m = tuple(ma[i] for i in arem) + tuple(mb[i] for i in brem)
                res = np.tensordot(blka, blkb, axes=(apos, bpos))
                if new_m in out:
                    out[new_m] = out[new_m] + res
                else:
                    out[new_m] = res
    t = SymmetricTensor(links, dirs, out, validate=False)
    return t.prune()


def scale_axis(t, pos, weights):
    """Scale leg ``pos`` with per-sector diagonal weights.

    ``weights``: {sector: 1-d array of length = degeneracy}. Sectors absent
    from the mapping are left untouched.
    """
    i = pos - 1
    blocks = {}
    for m, b in t.blocks.items():
        w = weights.get(m[i])
        if w is None:
            blocks[m] = b
        else:
            w = np.asarray(w)
            shape = [1] * b.ndim
            shape[i] = w.size
            blocks[m] = b * w.reshape(shape)
    return SymmetricTensor(t.links, t.dirs, blocks, validate=False)


# -- subtensors ---------------------------------------------------------------


def _norm_keep(link, table, what):
    """{sector: 1-based index list} -> validated {sector: 0-based indices}."""
    out = {}
    for s, idx in table.items():
        s = link.group.normalize(s)
        d = link.deg_of(s)
        if d == 0:
            raise ValueError(f"{what}: sector {s!r} absent from link")
        idx = [int(i) for i in idx]
        if len(set(idx)) != len(idx):
            raise ValueError(f"{what}: indices {idx} not distinct")
        if any(not 1 <= i <= d for i in idx):
            raise ValueError(f"{what}: indices {idx} out of range 1..{d}")
        if idx:
            out[s] = [i - 1 for i in idx]
    return out


def sym_subtensor_read(t, keeps):
    """Extract per-sector index subsets; one {sector: 1-based indices} per leg.

    Sectors not mentioned (or given empty lists) are dropped from the
    result link.
    """
    if len(keeps) != t.rank:
        raise ValueError("one reduction per leg required")
    tables = [
        _norm_keep(link, table, f"leg {r + 1}")
        for r, (link, table) in enumerate(zip(t.links, keeps))
    ]
    new_links = tuple(
        link.restrict({s: len(ix) for s, ix in tab.items()})
        for link, tab in zip(t.links, tables)
    )
    blocks = {}
    for m, b in t.blocks.items():
        sel = []
        ok = True
        for s, tab in zip(m, tables):
            if s not in tab:
                ok = False
                break
            sel.append(tab[s])
        if ok:
            blocks[m] = np.ascontiguousarray(b[np.ix_(*sel)]) if sel else b
    return SymmetricTensor(new_links, t.dirs, blocks, validate=False).prune()


def sym_subtensor_assign(t, s, maps):
    """Assign ``s`` into ``t`` under per-leg {sector: 1-based target indices}.

    Every sector of s's legs must appear in the map and exist on t's legs.
    Target regions of matches covered by the maps but absent from ``s`` are
    zeroed (all-zero blocks are then pruned), regions outside the maps are
    untouched, and matches present only in ``s`` are created.
    """
    if len(maps) != t.rank or s.rank != t.rank:
        raise ValueError("rank mismatch in subtensor assignment")
    tables = []
    for r, (tl, sl, table) in enumerate(zip(t.links, s.links, maps)):
        tab = _norm_keep(tl, table, f"leg {r + 1}")
        for sec in sl.sectors:
            if sec not in tab:
                raise ValueError(f"leg {r + 1}: sector {sec!r} of source not mapped")
            if len(tab[sec]) != sl.deg_of(sec):
                raise ValueError(
                    f"leg {r + 1}: sector {sec!r} map covers {len(tab[sec])} "
                    f"indices, source has {sl.deg_of(sec)}"
                )
        tables.append(tab)

    blocks = {m: b.copy() for m, b in t.blocks.items()}
    # zero mapped regions of affected matches
    for m in list(blocks):
        if all(sec in tab for sec, tab in zip(m, tables)):
            sel = [tab[sec] for sec, tab in zip(m, tables)]
            blocks[m][np.ix_(*sel)] = 0.0
    # inscribe source blocks
    for m, b in s.blocks.items():
        sel = [tab[sec] for sec, tab in zip(m, tables)]
        if m not in blocks:
            shape = tuple(l.deg_of(sec) for l, sec in zip(t.links, m))
            blocks[m] = np.zeros(shape, dtype=np.complex128)
        blocks[m][np.ix_(*sel)] = b
    out = SymmetricTensor(t.links, t.dirs, blocks, validate=False)
    return out.prune()


# -- dense correspondence ------------------------------------------------------


def link_index_table(link):
    """Dense index (0-based) -> (sector, within-sector index), dense order."""
    table = []
    for sec, d in zip(link.sectors, link.degs):
        table.extend((sec, k) for k in range(d))
    return table


def downgrade(t):
    """Dense tensor with sectors contiguous in canonical order per leg."""
    dims = tuple(l.dim for l in t.links)
    arr = np.zeros(dims, dtype=np.complex128)
    for m, b in t.blocks.items():
        sl = tuple(
            slice(l.offset_of(sec), l.offset_of(sec) + l.deg_of(sec))
            for l, sec in zip(t.links, m)
        )
        arr[sl] = b
    return DenseTensor.from_array(arr) if t.rank else DenseTensor(
        (), np.array([t.scalar()])
    )


def fuse_index_map(node):
    """Permutation relating dense fusion to symmetric fusion.

    Returns integer array pi with pi[j_sym] = j_dense: taking the dense
    column-major fuse of the downgraded member legs and reindexing its fused
    axis by pi yields the downgrade of the symmetric fuse.
    """
    dims = [l.dim for l in node.links]
    strides = [1] * len(dims)
    for r in range(1, len(dims)):
        strides[r] = strides[r - 1] * dims[r - 1]
    pi = np.empty(node.fused_link.dim, dtype=np.int64)
    for col in node.collisions:
        base_sym = node.fused_link.offset_of(col.fused) + col.delta
        offs = [l.offset_of(s) for l, s in zip(node.links, col.sectors)]
        degs = [l.deg_of(s) for l, s in zip(node.links, col.sectors)]
        within = 0
        for multi in product(*(range(d) for d in reversed(degs))):
            ks = multi[::-1]  # first leg fastest
            dense = sum((o + k) * st for o, k, st in zip(offs, ks, strides))
            pi[base_sym + within] = dense
            within += 1
    return pi


# -- decompositions -------------------------------------------------------------


@dataclass
class SectorSpectra:
    """Per-sector kept singular values plus global truncation bookkeeping."""

    by_sector: dict
    discarded_weight: float

    @property
    def kept_norm(self):
        tot = sum(float(np.sum(v**2)) for v in self.by_sector.values())
        return float(np.sqrt(tot))

    @property
    def truncation_error(self):
        return float(np.sqrt(self.discarded_weight))

    def global_values(self):
        """All kept values merged, descending."""
        if not self.by_sector:
            return np.zeros(0)
        return np.sort(np.concatenate(list(self.by_sector.values())))[::-1]

    def as_spectrum(self):
        return SingularSpectrum(
            values=self.global_values(), discarded_weight=self.discarded_weight
        )


def _matricize_symmetric(t, split_pos):
    if not 1 <= split_pos < t.rank:
        raise ValueError(
            f"split_pos {split_pos} invalid: need 1 <= split_pos < rank {t.rank}"
        )
    rownode = build_fuse_node(t.links[:split_pos], t.dirs[:split_pos], IN)
    colnode = build_fuse_node(t.links[split_pos:], t.dirs[split_pos:], OUT)
    m = fuse_symmetric(t, rownode, 1)
    m = fuse_symmetric(m, colnode, 2)
    for match in m.blocks:
        if match[0] != match[1]:
            raise AssertionError("fused matrix not block-diagonal")
    return rownode, colnode, m


def _rebuild_vw(t, split_pos, rownode, colnode, kept):
    """Assemble V and W from per-sector (q, w) factor blocks."""
    klink = SymmetricLink.make(
        t.links[0].group, {s: q.shape[1] for s, (q, w) in kept.items()}
    )
    vb = {(s, s): q for s, (q, w) in kept.items()}
    wb = {(s, s): w for s, (q, w) in kept.items()}
    v2 = SymmetricTensor(
        (rownode.fused_link, klink), (IN, OUT), vb, validate=False
    )
    w2 = SymmetricTensor(
        (klink, colnode.fused_link), (IN, OUT), wb, validate=False
    )
    v = split_symmetric(v2, rownode, 1)
    w = split_symmetric(w2, colnode, 2)
    return v, w, klink


def qr_symmetric(t, split_pos):
    """Blockwise QR over (legs 1..split_pos | rest).

    The intermediate link collects the sectors of present diagonal blocks
    with degeneracy min(row, col); it is directed from Q toward R. R
    diagonals are non-negative real (phases absorbed into Q).
    """
    rownode, colnode, m = _matricize_symmetric(t, split_pos)
    if not m.blocks:
        raise ValueError("decomposition of a tensor without matches")
    kept = {}
    for (s, _s2), blk in sorted(m.blocks.items(), key=lambda kv: repr(kv[0])):
        q, r = np.linalg.qr(blk, mode="reduced")
        q, r = _fix_qr_phases(q, r)
        kept[s] = (q, r)
    return _rebuild_vw(t, split_pos, rownode, colnode, kept)


def svd_symmetric(t, split_pos, chi=None, tau=DEFAULT_SVD_TAU):
    """Blockwise SVD with global truncation across sectors.

    Keeps the overall largest values up to ``chi`` (values exactly tied at
    the cut are all kept, so the kept count may exceed chi), drops values
    below ``tau`` relative to the global maximum, removes emptied sectors.
    Returns (V, SectorSpectra, W, intermediate_link).
    """
    rownode, colnode, m = _matricize_symmetric(t, split_pos)
    if not m.blocks:
        raise ValueError("decomposition of a tensor without matches")
    facs = {}
    entries = []  # (value, sector, index within sector)
    for (s, _s2), blk in sorted(m.blocks.items(), key=lambda kv: repr(kv[0])):
        u, vals, wh = np.linalg.svd(blk, full_matrices=False)
        facs[s] = (u, vals, wh)
        entries.extend((v, s, i) for i, v in enumerate(vals))
    entries.sort(key=lambda e: (-e[0], repr(e[1]), e[2]))
    allvals = np.array([e[0] for e in entries])
    keep = truncation_cut(allvals, chi=chi, tau=tau, tie_tolerant=True)
    if keep == 0:
        keep = 1  # keep one value so the factors stay non-empty
    disc = float(np.sum(allvals[keep:] ** 2))
    counts = {}
    for v, s, i in entries[:keep]:
        counts[s] = counts.get(s, 0) + 1
    kept = {}
    spectra = {}
    for s, n in counts.items():
        u, vals, wh = facs[s]
        kept[s] = (np.ascontiguousarray(u[:, :n]), np.ascontiguousarray(wh[:n, :]))
        spectra[s] = vals[:n].copy()
    v, w, klink = _rebuild_vw(t, split_pos, rownode, colnode, kept)
    return v, SectorSpectra(by_sector=spectra, discarded_weight=disc), w, klink


def expm_symmetric(t):
    """Exponential of a square operator tensor.

    Legs (1..n/2) are rows, (n/2+1..n) columns; row and column legs must
    carry the same links with pairwise opposite directions. Diagonal matches
    missing from the tensor are treated as zero blocks, i.e. their
    exponential contributes an identity block.
    """
    if t.rank % 2 != 0 or t.rank == 0:
        raise ValueError("square operator needs even rank")
    h = t.rank // 2
    if t.links[:h] != t.links[h:]:
        raise ValueError("row and column legs carry different links")
    if any(t.dirs[i] != -t.dirs[h + i] for i in range(h)):
        raise ValueError("row and column legs need opposite directions")
    from scipy.linalg import expm as dense_expm

    rownode, colnode, m = _matricize_symmetric(t, h)
    blocks = {}
    for s, d in zip(rownode.fused_link.sectors, rownode.fused_link.degs):
        blk = m.blocks.get((s, s))
        if blk is None:
            blocks[(s, s)] = np.eye(d, dtype=np.complex128)
        else:
            blocks[(s, s)] = dense_expm(blk)
    m2 = SymmetricTensor(m.links, m.dirs, blocks, validate=False)
    out = split_symmetric(m2, rownode, 1)
    out = split_symmetric(out, colnode, h + 1)
    return out
