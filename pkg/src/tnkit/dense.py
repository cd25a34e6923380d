"""Dense complex tensors with column-major index semantics.

A rank-n tensor stores its elements in a flat complex128 buffer ordered
column-major: the multi-index (i_1 .. i_n), 1-based, sits at offset
sum_r (i_r - 1) * prod_{k<r} d_k. Fusing adjacent links and splitting a
link are therefore pure metadata operations on the dims tuple.

Matrix multiply, QR, SVD and eigen work is delegated to numpy/scipy;
everything above the matrix level (permute/fuse/split pipelines,
truncation policy, pair exponentials) is implemented here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DenseTensor",
    "SingularSpectrum",
    "offset",
    "indices_from_offset",
    "permute",
    "fuse",
    "split",
    "subtensor_read",
    "subtensor_assign",
    "contract",
    "contract_diagonal",
    "partial_trace",
    "norm",
    "qr",
    "svd",
    "expm_pair",
    "random_dense",
]

ZERO_CUTOFF = 1e-300
DEFAULT_SVD_TAU = 1e-14


class DenseTensor:
    """Flat column-major complex tensor.

    ``data`` is a 1-d complex128 array of length prod(dims); ``dims`` is a
    tuple of positive ints (the empty tuple is a scalar). Instances are
    treated as immutable: operations return new tensors.
    """

    __slots__ = ("dims", "data")

    def __init__(self, dims, data):
        dims = tuple(int(d) for d in dims)
        if any(d < 1 for d in dims):
            raise ValueError(f"link dimensions must be positive, got {dims}")
        data = np.ascontiguousarray(data, dtype=np.complex128).reshape(-1)
        if data.size != math.prod(dims):
            raise ValueError(
                f"buffer has {data.size} elements, dims {dims} need {math.prod(dims)}"
            )
        self.dims = dims
        self.data = data

    # -- construction -----------------------------------------------------

    @classmethod
    def zeros(cls, dims):
        return cls(dims, np.zeros(math.prod(tuple(dims)), dtype=np.complex128))

    @classmethod
    def from_array(cls, arr):
        """Wrap an ndarray; axis r of ``arr`` becomes link r+1."""
        arr = np.asarray(arr, dtype=np.complex128)
        return cls(arr.shape, arr.reshape(-1, order="F"))

    def as_array(self):
        """ndarray view with axis r = link r+1 (no copy when possible)."""
        return self.data.reshape(self.dims, order="F")

    # -- element access (1-based, for tests and small jobs) ---------------

    def value(self, indices):
        return complex(self.data[offset(self.dims, indices)])

    @property
    def rank(self):
        return len(self.dims)

    @property
    def size(self):
        return self.data.size

    def copy(self):
        return DenseTensor(self.dims, self.data.copy())

    def __repr__(self):
        return f"DenseTensor(dims={self.dims})"


def offset(dims, indices):
    """Column-major offset of a 1-based multi-index."""
    if len(indices) != len(dims):
        raise ValueError(f"index {indices} has wrong rank for dims {dims}")
    off = 0
    stride = 1
    for i, d in zip(indices, dims):
        if not 1 <= i <= d:
            raise IndexError(f"index {indices} out of range for dims {dims}")
        off += (i - 1) * stride
        stride *= d
    return off


def indices_from_offset(dims, off):
    """Inverse of :func:`offset`; returns the 1-based multi-index."""
    if not 0 <= off < math.prod(dims):
        raise IndexError(f"offset {off} out of range for dims {dims}")
    idx = []
    for d in dims:
        idx.append(off % d + 1)
        off //= d
    return tuple(idx)


def random_dense(dims, rng, scale=1.0):
    """Standard complex Gaussian entries scaled by ``scale``."""
    n = math.prod(tuple(dims))
    data = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return DenseTensor(dims, scale * data)


# -- reshaping ops ---------------------------------------------------------


def permute(t, sigma):
    """Reorder links: old link l moves to position sigma[l-1] (1-based)."""
    n = t.rank
    sig = tuple(int(s) for s in sigma)
    if sorted(sig) != list(range(1, n + 1)):
        raise ValueError(f"{sigma} is not a permutation of 1..{n}")
    if sig == tuple(range(1, n + 1)):
        return t
    axes = [0] * n
    for old, new in enumerate(sig):
        axes[new - 1] = old
    return DenseTensor.from_array(np.transpose(t.as_array(), axes))


def fuse(t, k, m):
    """Fuse adjacent links k..m (1-based, inclusive) into one link.

    Column-major layout makes this a metadata change; the buffer is shared.
    """
    if not 1 <= k <= m <= t.rank:
        raise ValueError(f"fuse range {k}..{m} invalid for rank {t.rank}")
    dims = t.dims
    fused = math.prod(dims[k - 1 : m])
    return DenseTensor(dims[: k - 1] + (fused,) + dims[m:], t.data)


def split(t, pos, new_dims):
    """Split link ``pos`` into links with dims ``new_dims`` (inverse of fuse)."""
    new_dims = tuple(int(d) for d in new_dims)
    if not 1 <= pos <= t.rank:
        raise ValueError(f"split position {pos} invalid for rank {t.rank}")
    if math.prod(new_dims) != t.dims[pos - 1]:
        raise ValueError(
            f"cannot split dim {t.dims[pos - 1]} into {new_dims}"
        )
    return DenseTensor(t.dims[: pos - 1] + new_dims + t.dims[pos:], t.data)


# -- subtensors ------------------------------------------------------------


def _check_index_list(idx, d, what):
    idx = [int(i) for i in idx]
    if len(set(idx)) != len(idx):
        raise ValueError(f"{what} indices {idx} are not distinct")
    if any(not 1 <= i <= d for i in idx):
        raise ValueError(f"{what} indices {idx} out of range 1..{d}")
    return idx


def subtensor_read(t, keeps):
    """Extract the subtensor with kept 1-based indices per link.

    ``keeps[r]`` lists the indices retained from link r+1, in the order they
    appear in the result.
    """
    if len(keeps) != t.rank:
        raise ValueError("one kept-index list per link required")
    ix = []
    for r, (kept, d) in enumerate(zip(keeps, t.dims)):
        kept = _check_index_list(kept, d, f"link {r + 1}")
        ix.append([i - 1 for i in kept])
    return DenseTensor.from_array(t.as_array()[np.ix_(*ix)])


def subtensor_assign(t, s, maps):
    """Write ``s`` into ``t`` at the 1-based target indices per link.

    ``maps[r]`` lists, for each index of s's link r+1, the target index in
    t's link r+1 (injective). Returns a new tensor.
    """
    if len(maps) != t.rank or s.rank != t.rank:
        raise ValueError("rank mismatch in subtensor assignment")
    ix = []
    for r, (m, dt, ds) in enumerate(zip(maps, t.dims, s.dims)):
        m = _check_index_list(m, dt, f"link {r + 1}")
        if len(m) != ds:
            raise ValueError(
                f"link {r + 1}: map covers {len(m)} indices, source has {ds}"
            )
        ix.append([i - 1 for i in m])
    out = t.as_array().copy()
    out[np.ix_(*ix)] = s.as_array()
    return DenseTensor.from_array(out)


# -- contraction -----------------------------------------------------------


def contract(a, b, pairs):
    """Contract ``a`` with ``b`` over (a_link, b_link) pairs (1-based).

    Result links: a's remaining links in order, then b's. Empty ``pairs``
    yields the direct (Kronecker) product. Realized as the
    permute-fuse-matmul-split pipeline; the permutes are lazy transposes, so
    the copy cost lands where the fused matrix is materialized.
    """
    apos = [int(p) for p, _ in pairs]
    bpos = [int(q) for _, q in pairs]
    if len(set(apos)) != len(apos) or len(set(bpos)) != len(bpos):
        raise ValueError("contraction pairs must use distinct links")
    for p, q in zip(apos, bpos):
        if not 1 <= p <= a.rank or not 1 <= q <= b.rank:
            raise ValueError(f"pair ({p},{q}) out of range")
        if a.dims[p - 1] != b.dims[q - 1]:
            raise ValueError(
                f"link dims differ: a[{p}]={a.dims[p - 1]} vs b[{q}]={b.dims[q - 1]}"
            )
    arem = [i for i in range(1, a.rank + 1) if i not in apos]
    brem = [i for i in range(1, b.rank + 1) if i not in bpos]
    da = math.prod(a.dims[i - 1] for i in arem)
    ds = math.prod(a.dims[i - 1] for i in apos)
    db = math.prod(b.dims[i - 1] for i in brem)
    ma = (
        np.transpose(a.as_array(), [i - 1 for i in arem + apos])
        .reshape((da, ds), order="F")
    )
    mb = (
        np.transpose(b.as_array(), [i - 1 for i in bpos + brem])
        .reshape((ds, db), order="F")
    )
    out = ma @ mb
    dims = tuple(a.dims[i - 1] for i in arem) + tuple(b.dims[i - 1] for i in brem)
    return DenseTensor(dims, out.reshape(-1, order="F"))


def contract_diagonal(t, weights, pos):
    """Scale link ``pos`` by per-index diagonal weights."""
    w = np.asarray(weights, dtype=np.complex128).reshape(-1)
    if w.size != t.dims[pos - 1]:
        raise ValueError(
            f"weight vector length {w.size} != link dim {t.dims[pos - 1]}"
        )
    shape = [1] * t.rank
    shape[pos - 1] = w.size
    return DenseTensor.from_array(t.as_array() * w.reshape(shape))


def partial_trace(t, pairs):
    """Trace over (link, link) pairs of equal dimension."""
    flat = [p for pq in pairs for p in pq]
    if len(set(flat)) != len(flat):
        raise ValueError("trace pairs must use distinct links")
    import string

    letters = string.ascii_letters
    if t.rank > len(letters):
        raise ValueError("rank too large for trace")
    sub = [""] * t.rank
    for n, (p, q) in enumerate(pairs):
        if t.dims[p - 1] != t.dims[q - 1]:
            raise ValueError(f"trace pair ({p},{q}) has unequal dims")
        sub[p - 1] = sub[q - 1] = letters[n]
    rest = letters[len(pairs) :]
    out_sub = []
    for r in range(t.rank):
        if not sub[r]:
            sub[r] = rest[0]
            out_sub.append(rest[0])
            rest = rest[1:]
    res = np.einsum(f"{''.join(sub)}->{''.join(out_sub)}", t.as_array())
    return DenseTensor.from_array(np.asarray(res))


def norm(t):
    """Frobenius norm."""
    return float(np.linalg.norm(t.data))


# -- decompositions --------------------------------------------------------


@dataclass
class SingularSpectrum:
    """Kept singular values (descending) plus truncation bookkeeping."""

    values: np.ndarray
    discarded_weight: float

    @property
    def kept_norm(self):
        return float(np.sqrt(np.sum(self.values**2)))

    @property
    def truncation_error(self):
        return float(np.sqrt(self.discarded_weight))


def _matricize(t, split_pos):
    if not 1 <= split_pos < t.rank:
        raise ValueError(
            f"split_pos {split_pos} invalid: need 1 <= split_pos < rank {t.rank}"
        )
    rows = t.dims[:split_pos]
    cols = t.dims[split_pos:]
    m = t.as_array().reshape((math.prod(rows), math.prod(cols)), order="F")
    return rows, cols, m


def _fix_qr_phases(q, r):
    # deterministic gauge: R keeps a non-negative real diagonal
    d = np.diagonal(r)
    ph = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1.0), 1.0)
    return q * ph[None, :], ph.conj()[:, None] * r


def qr(t, split_pos):
    """QR over the bipartition (links 1..split_pos | rest).

    Returns (Q, R): Q semi-unitary with a new link of dim
    min(prod rows, prod cols) appended, R upper-trapezoidal with the new
    link first. R's diagonal is made non-negative real (phases absorbed
    into Q) so the factorization is deterministic.
    """
    rows, cols, m = _matricize(t, split_pos)
    q, r = np.linalg.qr(m, mode="reduced")
    q, r = _fix_qr_phases(q, r)
    k = q.shape[1]
    qt = DenseTensor(rows + (k,), q.reshape(-1, order="F"))
    rt = DenseTensor((k,) + cols, r.reshape(-1, order="F"))
    return qt, rt


def truncation_cut(values, chi=None, tau=DEFAULT_SVD_TAU, tie_tolerant=False):
    """Number of values kept from a descending spectrum.

    Keeps at most ``chi`` values, drops values below ``tau`` relative to the
    largest and below the absolute zero cutoff. With ``tie_tolerant`` the
    chi cut is widened to include values exactly equal to the last kept one.
    """
    values = np.asarray(values)
    n = values.size
    if n == 0:
        return 0
    vmax = values[0]
    keep = n
    if tau is not None and vmax > 0:
        keep = int(np.searchsorted(-values, -(tau * vmax), side="right"))
    keep = min(keep, int(np.searchsorted(-values, -ZERO_CUTOFF, side="right")))
    if chi is not None and chi < keep:
        cut = values[chi - 1] if chi > 0 else None
        keep2 = chi
        if tie_tolerant and chi > 0:
            while keep2 < keep and values[keep2] == cut:
                keep2 += 1
        keep = keep2
    return keep


def svd(t, split_pos, chi=None, tau=DEFAULT_SVD_TAU):
    """Truncated SVD over the bipartition (links 1..split_pos | rest).

    Returns (V, spectrum, W) with V semi-unitary (new link last), W
    row-semi-unitary (new link first), and spectrum.values descending.
    Truncation keeps at most ``chi`` values and drops anything below
    ``tau`` relative to the largest value. At least one column is kept so
    factor shapes stay valid even for zero input.
    """
    rows, cols, m = _matricize(t, split_pos)
    u, s, wh = np.linalg.svd(m, full_matrices=False)
    keep = truncation_cut(s, chi=chi, tau=tau)
    keep = max(keep, 1)
    disc = float(np.sum(s[keep:] ** 2))
    u, s, wh = u[:, :keep], s[:keep], wh[:keep, :]
    vt = DenseTensor(rows + (keep,), u.reshape(-1, order="F"))
    wt = DenseTensor((keep,) + cols, wh.reshape(-1, order="F"))
    return vt, SingularSpectrum(values=s.copy(), discarded_weight=disc), wt


# -- pair exponential -------------------------------------------------------


def _square_halves(t, name):
    if t.rank == 0 or t.rank % 2 != 0:
        raise ValueError(f"{name} must have even rank, got {t.rank}")
    h = t.rank // 2
    if t.dims[:h] != t.dims[h:]:
        raise ValueError(
            f"{name} is not square over its bipartition: dims {t.dims}"
        )
    d = math.prod(t.dims[:h])
    return h, d, t.as_array().reshape((d, d), order="F")


def expm_pair(a, b, order=None):
    """Exponential of the pair operator a (x) b.

    Both operands must be square over their own (first half | second half)
    bipartition. Result links: a-rows, b-rows, a-cols, b-cols.

    ``order=None`` computes the exact exponential: the pair is fused to one
    matrix and exponentiated densely (scaling-and-squaring). ``order=n``
    contracts inscribed scaled powers a^k/k! and b^k, k=0..n, over a shared
    link of dimension n+1; this Taylor form converges with n only for
    operator norms up to about 1.
    """
    from scipy.linalg import expm as dense_expm

    ha, da, ma = _square_halves(a, "a")
    hb, db, mb = _square_halves(b, "b")
    rows = a.dims[:ha] + b.dims[:hb]
    cols = rows
    if order is None:
        big = np.einsum("ij,kl->ikjl", ma, mb).reshape((da * db, da * db))
        out = dense_expm(big).reshape((da, db, da, db))
        return DenseTensor.from_array(out).copy()._reshape_like(rows + cols)
    n = int(order)
    if n < 0:
        raise ValueError("taylor order must be >= 0")
    pa = np.empty((da, da, n + 1), dtype=np.complex128)
    pb = np.empty((db, db, n + 1), dtype=np.complex128)
    pa[:, :, 0] = np.eye(da)
    pb[:, :, 0] = np.eye(db)
    for k in range(1, n + 1):
        pa[:, :, k] = pa[:, :, k - 1] @ ma / k
        pb[:, :, k] = pb[:, :, k - 1] @ mb
    out = np.einsum("ijk,lmk->iljm", pa, pb)
    return DenseTensor.from_array(out)._reshape_like(rows + cols)


def _reshape_like(self, dims):
    dims = tuple(int(d) for d in dims)
    if math.prod(dims) != self.size:
        raise ValueError("reshape size mismatch")
    return DenseTensor(dims, self.data)


DenseTensor._reshape_like = _reshape_like
