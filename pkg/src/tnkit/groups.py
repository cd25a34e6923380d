"""Abelian symmetry groups and their irrep labels.

Irrep labels (quantum numbers) are plain hashable Python values: ints for
cyclic and U(1) groups, exact rationals for the angle group, tuples for
product groups. Group elements and representation phases are never
materialized; only the label algebra (fusion, inversion, identity) is
implemented.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction


class AbelianGroup:
    """Label algebra of an Abelian symmetry group.

    Subclasses implement ``fuse``, ``invert``, ``identity`` and
    ``normalize``; labels must be totally ordered within one group so that
    links can keep their sectors canonically sorted.
    """

    def fuse(self, a, b):
        raise NotImplementedError

    def invert(self, a):
        raise NotImplementedError

    def identity(self):
        raise NotImplementedError

    def normalize(self, a):
        """Validate ``a`` and return its canonical form.

        Raises ValueError for labels outside the group's domain.
        """
        raise NotImplementedError

    def fuse_many(self, labels):
        out = self.identity()
        for a in labels:
            out = self.fuse(out, a)
        return out


@dataclass(frozen=True)
class ZGroup(AbelianGroup):
    """Cyclic group Z_n with labels 0..n-1 fused by addition mod n.

    ``ZGroup(1)`` is the trivial group used for symmetry-off tensors.
    """

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"Z_n needs n >= 1, got {self.n}")

    def fuse(self, a, b):
        return (a + b) % self.n

    def invert(self, a):
        return (-a) % self.n

    def identity(self):
        return 0

    def normalize(self, a):
        a = int(a)
        if not 0 <= a < self.n:
            raise ValueError(f"label {a} outside Z_{self.n}")
        return a


@dataclass(frozen=True)
class U1Group(AbelianGroup):
    """U(1) with integer charge labels fused by addition."""

    def fuse(self, a, b):
        return a + b

    def invert(self, a):
        return -a

    def identity(self):
        return 0

    def normalize(self, a):
        return int(a)


@dataclass(frozen=True)
class AngleGroup(AbelianGroup):
    """Z embedded as rational angles: labels are fractions of a full turn.

    A label p/q stands for the angle 2*pi*p/q; fusion adds angles mod one
    turn. Only rational angles are representable, which covers every label
    reachable by fusing finitely many rational seeds. Limited support:
    irrational angles cannot be encoded.
    """

    def fuse(self, a, b):
        return (a + b) % 1

    def invert(self, a):
        return (-a) % 1

    def identity(self):
        return Fraction(0)

    def normalize(self, a):
        a = Fraction(a)
        return a % 1


@dataclass(frozen=True)
class ProductGroup(AbelianGroup):
    """Direct product of Abelian groups; labels are tuples, one per factor."""

    factors: tuple[AbelianGroup, ...]

    def __post_init__(self):
        if not self.factors:
            raise ValueError("product group needs at least one factor")

    def fuse(self, a, b):
        return tuple(g.fuse(x, y) for g, x, y in zip(self.factors, a, b))

    def invert(self, a):
        return tuple(g.invert(x) for g, x in zip(self.factors, a))

    def identity(self):
        return tuple(g.identity() for g in self.factors)

    def normalize(self, a):
        a = tuple(a)
        if len(a) != len(self.factors):
            raise ValueError(
                f"label {a!r} has {len(a)} components, expected {len(self.factors)}"
            )
        return tuple(g.normalize(x) for g, x in zip(self.factors, a))


#: Trivial group for symmetry-off ("dense mode") tensors.
TRIVIAL = ZGroup(1)
Z2 = ZGroup(2)
U1 = U1Group()
