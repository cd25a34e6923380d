"""Binary records for tensors and network checkpoints.

Three little-endian, versioned record kinds, each opened by a 4-byte
magic tag:

* ``TNK1`` dense tensor: u8 rank, u64 dims[rank], then one complex128
  (re, im float64 pair) per element in column-major order.
* ``TNS1`` symmetric tensor: group descriptor, u8 rank, per link the
  sector list (u64 count, then label + u64 degeneracy each) and a
  direction bit (1 = outgoing), u64 match count, then per match the
  quantum-number tuple followed by its block as a ``TNK1`` record.
  Matches are written in canonical (sorted) order.
* ``TNN1`` network checkpoint: group descriptor, geometry (per-node leg
  lists with directions, link registry with kind and site), gauge tag
  and center, per-node ``TNS1`` records, and per-link Schmidt weights
  when the canonical gauge is saved.

Group labels are written according to the group descriptor: one i64 for
cyclic and U(1) labels, an i64 numerator/denominator pair for angle
labels, and the concatenation of the factors' encodings for product
groups.
"""

from __future__ import annotations

import struct
from fractions import Fraction

import numpy as np

from .dense import DenseTensor
from .groups import AngleGroup, ProductGroup, U1Group, ZGroup
from .links import IN, OUT, SymmetricLink
from .network import GaugeState, LinkInfo, LoopFreeNetwork, TreeGeometry
from .symmetric import SymmetricTensor

__all__ = [
    "pack_group",
    "unpack_group",
    "pack_dense",
    "unpack_dense",
    "pack_symmetric",
    "unpack_symmetric",
    "pack_network",
    "unpack_network",
    "save_network",
    "load_network",
]

DENSE_MAGIC = b"TNK1"
SYMMETRIC_MAGIC = b"TNS1"
NETWORK_MAGIC = b"TNN1"

_GROUP_CYCLIC = 0
_GROUP_U1 = 1
_GROUP_ANGLE = 2
_GROUP_PRODUCT = 3

_KIND_CODE = {"phys": 0, "virt": 1, "sel": 2}
_KIND_NAME = {v: k for k, v in _KIND_CODE.items()}


class _Cursor:
    """Read head over a bytes buffer with struct-format helpers."""

    __slots__ = ("buf", "pos")

    def __init__(self, buf, pos=0):
        self.buf = buf
        self.pos = pos

    def take(self, fmt):
        out = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += struct.calcsize(fmt)
        return out if len(out) > 1 else out[0]

    def raw(self, n):
        out = self.buf[self.pos : self.pos + n]
        if len(out) != n:
            raise ValueError("truncated record")
        self.pos += n
        return out

    def magic(self, expected):
        got = self.raw(4)
        if got != expected:
            raise ValueError(f"bad magic {got!r}, expected {expected!r}")


# -- group descriptors and labels -----------------------------------------


def pack_group(group):
    if isinstance(group, ZGroup):
        return struct.pack("<BQ", _GROUP_CYCLIC, group.n)
    if isinstance(group, U1Group):
        return struct.pack("<B", _GROUP_U1)
    if isinstance(group, AngleGroup):
        return struct.pack("<B", _GROUP_ANGLE)
    if isinstance(group, ProductGroup):
        out = [struct.pack("<BQ", _GROUP_PRODUCT, len(group.factors))]
        out.extend(pack_group(g) for g in group.factors)
        return b"".join(out)
    raise TypeError(f"cannot serialize group {group!r}")


def _read_group(cur):
    tag = cur.take("<B")
    if tag == _GROUP_CYCLIC:
        return ZGroup(cur.take("<Q"))
    if tag == _GROUP_U1:
        return U1Group()
    if tag == _GROUP_ANGLE:
        return AngleGroup()
    if tag == _GROUP_PRODUCT:
        n = cur.take("<Q")
        return ProductGroup(tuple(_read_group(cur) for _ in range(n)))
    raise ValueError(f"unknown group tag {tag}")


def unpack_group(buf, offset=0):
    cur = _Cursor(buf, offset)
    return _read_group(cur), cur.pos


def _pack_label(group, label):
    if isinstance(group, ProductGroup):
        return b"".join(_pack_label(g, x) for g, x in zip(group.factors, label))
    if isinstance(group, AngleGroup):
        fr = Fraction(label)
        return struct.pack("<qq", fr.numerator, fr.denominator)
    return struct.pack("<q", int(label))


def _read_label(group, cur):
    if isinstance(group, ProductGroup):
        return tuple(_read_label(g, cur) for g in group.factors)
    if isinstance(group, AngleGroup):
        num, den = cur.take("<qq")
        return Fraction(num, den)
    return cur.take("<q")


# -- dense tensor record ----------------------------------------------------


def pack_dense(t):
    parts = [DENSE_MAGIC, struct.pack("<B", t.rank)]
    parts.append(struct.pack(f"<{t.rank}Q", *t.dims) if t.rank else b"")
    parts.append(t.data.astype("<c16").tobytes())
    return b"".join(parts)


def unpack_dense(buf, offset=0):
    cur = _Cursor(buf, offset)
    cur.magic(DENSE_MAGIC)
    rank = cur.take("<B")
    dims = tuple(cur.take(f"<{rank}Q")) if rank > 1 else ((cur.take("<Q"),) if rank else ())
    n = int(np.prod(dims, dtype=np.int64)) if dims else 1
    data = np.frombuffer(cur.raw(16 * n), dtype="<c16").astype(np.complex128)
    return DenseTensor(dims, data), cur.pos


# -- symmetric tensor record -------------------------------------------------


def pack_symmetric(t):
    group = t.group
    parts = [SYMMETRIC_MAGIC, pack_group(group), struct.pack("<B", t.rank)]
    for link, direction in zip(t.links, t.dirs):
        parts.append(struct.pack("<Q", len(link.sectors)))
        for s, d in zip(link.sectors, link.degs):
            parts.append(_pack_label(group, s))
            parts.append(struct.pack("<Q", d))
        parts.append(struct.pack("<B", 1 if direction == OUT else 0))
    keys = sorted(t.blocks)
    parts.append(struct.pack("<Q", len(keys)))
    for key in keys:
        for s in key:
            parts.append(_pack_label(group, s))
        parts.append(pack_dense(DenseTensor.from_array(np.asarray(t.blocks[key]))))
    return b"".join(parts)


def unpack_symmetric(buf, offset=0):
    cur = _Cursor(buf, offset)
    cur.magic(SYMMETRIC_MAGIC)
    group = _read_group(cur)
    rank = cur.take("<B")
    links = []
    dirs = []
    for _ in range(rank):
        n_sec = cur.take("<Q")
        reps = {}
        for _ in range(n_sec):
            s = _read_label(group, cur)
            reps[s] = cur.take("<Q")
        links.append(SymmetricLink.make(group, reps))
        dirs.append(OUT if cur.take("<B") else IN)
    n_match = cur.take("<Q")
    blocks = {}
    for _ in range(n_match):
        key = tuple(_read_label(group, cur) for _ in range(rank))
        block, cur.pos = unpack_dense(buf, cur.pos)
        blocks[key] = block.as_array()
    return SymmetricTensor(tuple(links), tuple(dirs), blocks), cur.pos


# -- network checkpoint -------------------------------------------------------


def pack_network(net, gauge=None):
    group = net.group
    parts = [NETWORK_MAGIC, pack_group(group)]
    node_ids = sorted(net.nodes)
    parts.append(struct.pack("<Q", len(node_ids)))
    for q in node_ids:
        legs = net.node_links[q]
        parts.append(struct.pack("<qB", q, len(legs)))
        for lid, d in zip(legs, net.geometry.leg_dirs[q]):
            parts.append(struct.pack("<qb", lid, d))
    link_ids = sorted(net.links)
    parts.append(struct.pack("<Q", len(link_ids)))
    for lid in link_ids:
        info = net.links[lid]
        parts.append(struct.pack("<qBB", lid, _KIND_CODE[info.kind], len(info.ends)))
        for q in info.ends:
            parts.append(struct.pack("<q", q))
        parts.append(struct.pack("<q", info.site if info.site is not None else 0))
    if gauge is None:
        parts.append(struct.pack("<Bq", 0, 0))
    else:
        tag = {"unitary": 1, "canonical": 2}[gauge.mode]
        parts.append(struct.pack("<Bq", tag, gauge.center))
    for q in node_ids:
        parts.append(pack_symmetric(net.nodes[q]))
    if gauge is not None and gauge.mode == "canonical":
        parts.append(struct.pack("<Q", len(gauge.weights)))
        for lid in sorted(gauge.weights):
            by_sector = gauge.weights[lid]
            parts.append(struct.pack("<qQ", lid, len(by_sector)))
            for s in sorted(by_sector):
                vals = np.asarray(by_sector[s], dtype=np.float64)
                parts.append(_pack_label(group, s))
                parts.append(struct.pack("<Q", vals.size))
                parts.append(vals.astype("<f8").tobytes())
    return b"".join(parts)


def unpack_network(buf, offset=0):
    cur = _Cursor(buf, offset)
    cur.magic(NETWORK_MAGIC)
    group = _read_group(cur)
    n_nodes = cur.take("<Q")
    node_links = {}
    leg_dirs = {}
    node_ids = []
    for _ in range(n_nodes):
        q, n_legs = cur.take("<qB")
        node_ids.append(q)
        ids = []
        ds = []
        for _ in range(n_legs):
            lid, d = cur.take("<qb")
            ids.append(lid)
            ds.append(d)
        node_links[q] = ids
        leg_dirs[q] = ds
    n_links = cur.take("<Q")
    links = {}
    for _ in range(n_links):
        lid, kind, n_ends = cur.take("<qBB")
        ends = tuple(cur.take("<q") for _ in range(n_ends))
        site = cur.take("<q")
        links[lid] = LinkInfo(_KIND_NAME[kind], ends, site if site else None)
    tag, center = cur.take("<Bq")
    nodes = {}
    for q in node_ids:
        nodes[q], cur.pos = unpack_symmetric(buf, cur.pos)
    gauge = None
    if tag:
        mode = {1: "unitary", 2: "canonical"}[tag]
        weights = {}
        if mode == "canonical":
            n_weighted = cur.take("<Q")
            for _ in range(n_weighted):
                lid, n_sec = cur.take("<qQ")
                by_sector = {}
                for _ in range(n_sec):
                    s = _read_label(group, cur)
                    n_vals = cur.take("<Q")
                    by_sector[s] = np.frombuffer(
                        cur.raw(8 * n_vals), dtype="<f8"
                    ).astype(np.float64)
                weights[lid] = by_sector
        gauge = GaugeState(mode, center, weights)
    geom = TreeGeometry(node_links, leg_dirs, links)
    return LoopFreeNetwork(group, geom, nodes), gauge, cur.pos


def save_network(path, net, gauge=None):
    with open(path, "wb") as f:
        f.write(pack_network(net, gauge))


def load_network(path):
    with open(path, "rb") as f:
        buf = f.read()
    net, gauge, pos = unpack_network(buf)
    if pos != len(buf):
        raise ValueError(f"trailing bytes after checkpoint record in {path}")
    return net, gauge
