"""Symmetric links (sector lists) and fuse-nodes.

A link of a symmetric tensor is a list of distinct irrep labels (sectors),
canonically sorted, each with a positive degeneracy. Directions are stored
per tensor, not on the link: OUT (+1) means the link's label enters fusion
constraints as-is, IN (-1) means inverted.

A FuseNode is the reusable bookkeeping object that maps a group of links
onto one fused link: for every combination of sectors (a "collision") it
records the fused sector, the collision index alpha within that sector and
the degeneracy offset delta where the combination's block lands. Collisions
are enumerated column-major, first link fastest, matching the dense
column-major fuse up to the documented sector-ordered index map.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
import math

from .groups import AbelianGroup

__all__ = [
    "OUT",
    "IN",
    "SymmetricLink",
    "adjusted",
    "intersect_links",
    "pad_links",
    "FuseNode",
    "build_fuse_node",
    "fused_support",
]

OUT = +1
IN = -1


def adjusted(group, label, direction):
    """Label as it enters a fusion constraint: inverted on incoming links."""
    return label if direction == OUT else group.invert(label)


@dataclass(frozen=True)
class SymmetricLink:
    """Canonically sorted distinct sectors with positive degeneracies."""

    group: AbelianGroup
    sectors: tuple
    degs: tuple

    def __post_init__(self):
        if len(self.sectors) != len(self.degs):
            raise ValueError("sector / degeneracy count mismatch")
        if len(self.sectors) == 0:
            raise ValueError("link needs at least one sector")
        norm = tuple(self.group.normalize(s) for s in self.sectors)
        if list(norm) != sorted(set(norm)):
            raise ValueError(f"sectors {self.sectors} not canonically sorted/distinct")
        object.__setattr__(self, "sectors", norm)
        degs = tuple(int(d) for d in self.degs)
        if any(d < 1 for d in degs):
            raise ValueError(f"degeneracies must be positive, got {degs}")
        object.__setattr__(self, "degs", degs)

    @classmethod
    def make(cls, group, table):
        """Build from a {sector: degeneracy} mapping."""
        items = sorted((group.normalize(s), int(d)) for s, d in dict(table).items())
        return cls(group, tuple(s for s, _ in items), tuple(d for _, d in items))

    @property
    def dim(self):
        return sum(self.degs)

    @property
    def n_sectors(self):
        return len(self.sectors)

    def deg_of(self, sector):
        try:
            return self.degs[self.sectors.index(sector)]
        except ValueError:
            return 0

    def has(self, sector):
        return sector in self.sectors

    def offset_of(self, sector):
        """Dense-embedding offset: degeneracies of smaller sectors first."""
        i = self.sectors.index(sector)
        return sum(self.degs[:i])

    def as_dict(self):
        return dict(zip(self.sectors, self.degs))

    def invert(self):
        """Link carrying the inverted labels (sorted anew)."""
        return SymmetricLink.make(
            self.group,
            {self.group.invert(s): d for s, d in zip(self.sectors, self.degs)},
        )

    def restrict(self, table):
        """Sub-link with the given {sector: degeneracy}; must fit inside."""
        for s, d in table.items():
            if d > self.deg_of(s):
                raise ValueError(
                    f"sector {s!r}: requested degeneracy {d} exceeds {self.deg_of(s)}"
                )
        return SymmetricLink.make(self.group, {s: d for s, d in table.items() if d > 0})


def intersect_links(a, b):
    """Sector-wise minimum; sectors present in both links only.

    Returns None when the intersection is empty.
    """
    if a.group != b.group:
        raise ValueError("links from different groups")
    table = {}
    for s, d in zip(a.sectors, a.degs):
        db = b.deg_of(s)
        if db:
            table[s] = min(d, db)
    if not table:
        return None
    return SymmetricLink.make(a.group, table)


def pad_links(a, b):
    """Union of sectors with summed degeneracies (direct-sum link)."""
    if a.group != b.group:
        raise ValueError("links from different groups")
    table = a.as_dict()
    for s, d in zip(b.sectors, b.degs):
        table[s] = table.get(s, 0) + d
    return SymmetricLink.make(a.group, table)


@dataclass(frozen=True)
class Collision:
    """One sector combination of the fused links."""

    sectors: tuple  # one label per fused link, in link order
    fused: object  # label on the fused link
    alpha: int  # collision index within the fused sector
    delta: int  # degeneracy offset within the fused sector
    size: int  # product of member degeneracies


@dataclass(frozen=True)
class FuseNode:
    """Collision table mapping links (with directions) to one fused link."""

    links: tuple
    dirs: tuple
    fused_dir: int
    fused_link: SymmetricLink
    collisions: tuple

    def lookup(self, sectors):
        return self._by_sectors[tuple(sectors)]

    def of_sector(self, fused):
        """Collisions landing in the given fused sector, in alpha order."""
        return self._by_fused.get(fused, ())


def build_fuse_node(links, dirs, fused_dir):
    """Enumerate collisions column-major (first link fastest).

    The fused label of a combination is the direction-adjusted fusion of the
    member labels, inverted once more when the fused link itself is incoming,
    so replacing the member links by the fused link preserves every fusion
    constraint.
    """
    links = tuple(links)
    dirs = tuple(dirs)
    if len(links) != len(dirs) or not links:
        raise ValueError("need matching non-empty links and directions")
    group = links[0].group
    if any(l.group != group for l in links):
        raise ValueError("links from different groups")
    if fused_dir not in (OUT, IN) or any(d not in (OUT, IN) for d in dirs):
        raise ValueError("directions must be OUT or IN")

    counts = {}
    offsets = {}
    rows = []
    # column-major: first link fastest -> iterate product over reversed links
    for combo_rev in product(*(range(l.n_sectors) for l in reversed(links))):
        combo = combo_rev[::-1]
        sectors = tuple(l.sectors[i] for l, i in zip(links, combo))
        raw = group.fuse_many(
            adjusted(group, s, d) for s, d in zip(sectors, dirs)
        )
        fused = raw if fused_dir == OUT else group.invert(raw)
        size = math.prod(l.degs[i] for l, i in zip(links, combo))
        alpha = counts.get(fused, 0)
        delta = offsets.get(fused, 0)
        counts[fused] = alpha + 1
        offsets[fused] = delta + size
        rows.append(Collision(sectors, fused, alpha, delta, size))

    fused_link = SymmetricLink.make(group, offsets)
    node = FuseNode(links, dirs, fused_dir, fused_link, tuple(rows))
    by_sectors = {c.sectors: c for c in rows}
    by_fused = {}
    for c in rows:
        by_fused.setdefault(c.fused, []).append(c)
    object.__setattr__(node, "_by_sectors", by_sectors)
    object.__setattr__(node, "_by_fused", {k: tuple(v) for k, v in by_fused.items()})
    return node


def fused_support(links, dirs, fused_dir):
    """Fused link only (no collision table kept)."""
    return build_fuse_node(links, dirs, fused_dir).fused_link
