"""Reference models on binary-tree networks.

Two lattice models with their symmetry gradings, dense
exact-diagonalization oracles, and ansatz builders:

* transverse-field Ising chain, H = -sum sx[s] sx[s+1] + field * sum sz[s],
  graded by spin-flip parity (Z2): |up> in sector 0, |down> in sector 1,
  written in the sigma-z eigenbasis so sz is diagonal and sx flips the
  sector. At the critical point (|field| = 1, periodic) the ground energy
  per site has the closed form -(2/N) / sin(pi/(2N)).
* Bose-Hubbard ring with flux, H = -t sum (e^{-i 2 pi flux/N} bdag[s] b[s+1]
  + h.c.) + (U/2) sum n(n-1) + barrier * n[barrier_site], graded by total
  occupation (U(1)): basis state |n> carries charge n.

Symmetry-off ("dense mode") variants grade every basis state with the
trivial group so the same block machinery runs unrestricted. The
grand-canonical chemical-potential term is not built; fixed particle
number is handled by the symmetry sector.

Dense basis convention used throughout: the amplitude index encodes site
s as digit s in base d with site 1 least significant, matching the
column-major flattening of per-site amplitude arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .groups import TRIVIAL, U1, Z2
from .links import IN, OUT, SymmetricLink, adjusted
from .network import make_binary_tree, random_symmetric_ansatz
from .operators import TPO, SiteOperator, TPOTerm, _component_sites
from .symmetric import SymmetricTensor, downgrade

__all__ = [
    "ORACLE_DIM_CAP",
    "IsingSpec",
    "BoseHubbardSpec",
    "spin_basis",
    "boson_basis",
    "graded_operator",
    "build_ising_tpo",
    "build_bose_hubbard_tpo",
    "ising_exact_energy_per_site",
    "ising_dense_matrix",
    "bose_hubbard_dense_block",
    "tpo_dense_matrix",
    "parity_indices",
    "fixed_charge_states",
    "exact_diag_oracle",
    "model_network",
    "tpo_cut_counts",
]

ORACLE_DIM_CAP = 4096

SECTOR_OF_PARITY = {"even": 0, "odd": 1}

_SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


# -- model specifications ------------------------------------------------------


@dataclass(frozen=True)
class IsingSpec:
    """Transverse-field Ising chain parameters.

    ``sector`` picks the spin-flip parity block ("even" | "odd"); None
    runs symmetry-off over the trivial group.
    """

    n_sites: int
    field: float
    boundary: str = "periodic"
    sector: str | None = "even"

    def __post_init__(self):
        if self.n_sites < 4:
            raise ValueError(f"need at least 4 sites, got {self.n_sites}")
        if self.boundary not in ("periodic", "open"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.sector not in (None, "even", "odd"):
            raise ValueError(f"unknown parity sector {self.sector!r}")


@dataclass(frozen=True)
class BoseHubbardSpec:
    """Bose-Hubbard ring parameters; ``flux`` twists the hopping phase."""

    n_sites: int
    n_bosons: int
    local_dim: int = 2
    hopping: float = 1.0
    interaction: float = 0.0
    barrier: float = 0.0
    barrier_site: int = 1
    flux: float = 0.0
    boundary: str = "periodic"
    symmetric: bool = True

    def __post_init__(self):
        if self.n_sites < 4:
            raise ValueError(f"need at least 4 sites, got {self.n_sites}")
        if self.local_dim < 2:
            raise ValueError(f"local dimension must be >= 2, got {self.local_dim}")
        if not 0 <= self.n_bosons <= (self.local_dim - 1) * self.n_sites:
            raise ValueError(
                f"{self.n_bosons} bosons do not fit {self.n_sites} sites "
                f"of local dimension {self.local_dim}"
            )
        if not 1 <= self.barrier_site <= self.n_sites:
            raise ValueError(f"barrier site {self.barrier_site} off the lattice")
        if self.boundary not in ("periodic", "open"):
            raise ValueError(f"unknown boundary {self.boundary!r}")


def _bonds(n, boundary):
    out = [(s, s + 1) for s in range(1, n)]
    if boundary == "periodic":
        out.append((n, 1))
    return out


# -- graded local bases and operators ------------------------------------------


def spin_basis(symmetric=True):
    """Sigma-z eigenbasis: |up>, |down>; parity-graded unless symmetry-off."""
    if symmetric:
        return SymmetricLink.make(Z2, {0: 1, 1: 1})
    return SymmetricLink.make(TRIVIAL, {0: 2})


def boson_basis(local_dim, symmetric=True):
    """Occupation basis |0> .. |local_dim - 1>, graded by particle number."""
    if symmetric:
        return SymmetricLink.make(U1, {n: 1 for n in range(local_dim)})
    return SymmetricLink.make(TRIVIAL, {0: local_dim})


def _lowering(d):
    mat = np.zeros((d, d), dtype=complex)
    for n in range(1, d):
        mat[n - 1, n] = math.sqrt(n)
    return mat


def graded_operator(link, mat, transfer=None):
    """Encode a dense one-site operator over the graded basis of ``link``.

    ``mat[i, j]`` maps basis state j to state i in the sector-ordered
    dense index convention. ``transfer=(sector, direction)`` attaches a
    third one-dimensional leg carrying that representation, used to join
    charge-changing operators across a TPO link. Entries that break the
    grading raise ValueError.
    """
    group = link.group
    mat = np.asarray(mat, dtype=complex)
    d = link.dim
    if mat.shape != (d, d):
        raise ValueError(f"operator shape {mat.shape} does not match basis dim {d}")
    sector_of = []
    offset_of = []
    for s, deg in zip(link.sectors, link.degs):
        sector_of.extend([s] * deg)
        offset_of.extend(range(deg))
    if transfer is None:
        links, dirs = (link, link), (OUT, IN)
    else:
        t_sector, t_dir = transfer
        tlink = SymmetricLink.make(group, {t_sector: 1})
        links, dirs = (link, link, tlink), (OUT, IN, t_dir)
    blocks = {}
    for i, j in zip(*np.nonzero(mat)):
        si, sj = sector_of[i], sector_of[j]
        parts = [si, group.invert(sj)]
        if transfer is not None:
            parts.append(adjusted(group, t_sector, t_dir))
        if group.fuse_many(parts) != group.identity():
            raise ValueError(f"entry ({i}, {j}) breaks the grading of the basis")
        if transfer is None:
            key = (si, sj)
            shape = (link.deg_of(si), link.deg_of(sj))
            at = (offset_of[i], offset_of[j])
        else:
            key = (si, sj, t_sector)
            shape = (link.deg_of(si), link.deg_of(sj), 1)
            at = (offset_of[i], offset_of[j], 0)
        blocks.setdefault(key, np.zeros(shape, dtype=complex))[at] = mat[i, j]
    return SymmetricTensor(links, dirs, blocks)


# -- TPO builders ----------------------------------------------------------------


def build_ising_tpo(spec):
    """Ising TPO and its graded local basis.

    Periodic chains produce 2N terms: N sx.sx bonds (including the wrap
    bond) and N field terms. The sector flip of sx rides on a Z2 transfer
    link carrying the nontrivial representation.
    """
    symmetric = spec.sector is not None
    link = spin_basis(symmetric)
    flip = 1 if symmetric else 0
    terms = []
    for s, s2 in _bonds(spec.n_sites, spec.boundary):
        a = graded_operator(link, -_SIGMA_X, transfer=(flip, OUT))
        b = graded_operator(link, _SIGMA_X, transfer=(flip, IN))
        terms.append(TPOTerm((SiteOperator(s, a, (1,)), SiteOperator(s2, b, (1,)))))
    for s in range(1, spec.n_sites + 1):
        terms.append(
            TPOTerm((SiteOperator(s, graded_operator(link, spec.field * _SIGMA_Z)),))
        )
    return TPO(tuple(terms)), link


def build_bose_hubbard_tpo(spec):
    """Bose-Hubbard ring TPO and its graded local basis.

    Hopping terms carry the +-1 charge on U(1) transfer links with the
    rotating-frame phase e^{-i 2 pi flux / N}; the interaction and
    barrier terms are diagonal.
    """
    link = boson_basis(spec.local_dim, spec.symmetric)
    lower = _lowering(spec.local_dim)
    raise_ = lower.conj().T
    charge = 1 if spec.symmetric else 0
    amp = -spec.hopping * np.exp(-2j * math.pi * spec.flux / spec.n_sites)
    terms = []
    for s, s2 in _bonds(spec.n_sites, spec.boundary):
        terms.append(
            TPOTerm(
                (
                    SiteOperator(s, graded_operator(link, amp * raise_, (charge, IN)), (1,)),
                    SiteOperator(s2, graded_operator(link, lower, (charge, OUT)), (1,)),
                )
            )
        )
        terms.append(
            TPOTerm(
                (
                    SiteOperator(s, graded_operator(link, np.conj(amp) * lower, (charge, OUT)), (1,)),
                    SiteOperator(s2, graded_operator(link, raise_, (charge, IN)), (1,)),
                )
            )
        )
    number = np.diag(np.arange(spec.local_dim, dtype=float))
    for s in range(1, spec.n_sites + 1):
        diag = 0.5 * spec.interaction * (number @ number - number)
        if s == spec.barrier_site:
            diag = diag + spec.barrier * number
        if np.any(diag):
            terms.append(TPOTerm((SiteOperator(s, graded_operator(link, diag)),)))
    return TPO(tuple(terms)), link


# -- closed forms and dense oracles ------------------------------------------------


def ising_exact_energy_per_site(n):
    """Critical periodic chain: ground energy per site, -(2/N)/sin(pi/2N)."""
    return -(2.0 / n) / math.sin(math.pi / (2 * n))


def _kron_at(mats, n, d):
    """Embed per-site matrices into the n-site space; site 1 varies fastest."""
    out = np.eye(1, dtype=complex)
    for s in range(n, 0, -1):
        out = np.kron(out, mats.get(s, np.eye(d, dtype=complex)))
    return out


def ising_dense_matrix(n, field, boundary="periodic"):
    """Textbook 2^n Ising matrix, built without the TPO machinery."""
    dim = 2**n
    h = np.zeros((dim, dim), dtype=complex)
    for s, s2 in _bonds(n, boundary):
        h -= _kron_at({s: _SIGMA_X, s2: _SIGMA_X}, n, 2)
    for s in range(1, n + 1):
        h += field * _kron_at({s: _SIGMA_Z}, n, 2)
    return h


def parity_indices(n, parity):
    """Dense basis indices with the given number-of-down-spins parity."""
    idx = np.arange(2**n)
    bits = np.zeros(2**n, dtype=int)
    for b in range(n):
        bits ^= (idx >> b) & 1
    return np.where(bits == parity)[0]


def fixed_charge_states(n, d, n_b):
    """Occupation tuples (n_1 .. n_N) with sum n_b, lexicographic order."""
    if n == 0:
        return [()] if n_b == 0 else []
    out = []
    for k in range(min(d - 1, n_b) + 1):
        out.extend((k,) + rest for rest in fixed_charge_states(n - 1, d, n_b - k))
    return out


def bose_hubbard_dense_block(spec):
    """Hamiltonian on the fixed-particle-number sector.

    Returns (matrix, states) where states lists the occupation tuples
    indexing the block. Built directly on the sector basis so the full
    d^N space is never materialized.
    """
    n, d = spec.n_sites, spec.local_dim
    states = fixed_charge_states(n, d, spec.n_bosons)
    if len(states) > ORACLE_DIM_CAP:
        raise ValueError(
            f"sector dimension {len(states)} exceeds the oracle cap {ORACLE_DIM_CAP}"
        )
    index = {st: k for k, st in enumerate(states)}
    h = np.zeros((len(states), len(states)), dtype=complex)
    amp = -spec.hopping * np.exp(-2j * math.pi * spec.flux / n)
    for k, st in enumerate(states):
        diag = 0.5 * spec.interaction * sum(m * (m - 1) for m in st)
        diag += spec.barrier * st[spec.barrier_site - 1]
        h[k, k] += diag
        for s, s2 in _bonds(n, spec.boundary):
            # bdag[s] b[s2] moves one boson from s2 to s
            if st[s - 1] < d - 1 and st[s2 - 1] > 0:
                to = list(st)
                to[s - 1] += 1
                to[s2 - 1] -= 1
                val = amp * math.sqrt((st[s - 1] + 1) * st[s2 - 1])
                h[index[tuple(to)], k] += val
            if st[s2 - 1] < d - 1 and st[s - 1] > 0:
                to = list(st)
                to[s2 - 1] += 1
                to[s - 1] -= 1
                val = np.conj(amp) * math.sqrt((st[s2 - 1] + 1) * st[s - 1])
                h[index[tuple(to)], k] += val
    return h, states


def tpo_dense_matrix(tpo, n_sites, link):
    """Assemble a TPO into its dense matrix (diagnostic and oracle path).

    Supports one- and two-site terms; the TPO link of a pair is summed as
    a shared slice index, mirroring the symmetric contraction.
    """
    d = link.dim
    dim = d**n_sites
    h = np.zeros((dim, dim), dtype=complex)
    for term in tpo.terms:
        if len(term.ops) == 1:
            op = term.ops[0]
            h += _kron_at({op.site: downgrade(op.tensor).as_array()}, n_sites, d)
        elif len(term.ops) == 2:
            a, b = term.ops
            am = downgrade(a.tensor).as_array()
            bm = downgrade(b.tensor).as_array()
            for k in range(am.shape[2]):
                h += _kron_at({a.site: am[:, :, k]}, n_sites, d) @ _kron_at(
                    {b.site: bm[:, :, k]}, n_sites, d
                )
        else:
            raise ValueError("dense downgrade supports one- and two-site terms only")
    return h


def exact_diag_oracle(spec):
    """Dense diagonalization reference: (energies, eigenvectors).

    Ising: eigenvectors live in the full 2^N basis (restricted to the
    parity block when a sector is selected, embedded back with zeros).
    Bose-Hubbard: the fixed-particle-number block is diagonalized on its
    own basis; interpret columns via ``fixed_charge_states``.
    """
    if isinstance(spec, IsingSpec):
        if 2**spec.n_sites > ORACLE_DIM_CAP:
            raise ValueError(
                f"Hilbert dimension 2^{spec.n_sites} exceeds the oracle cap"
            )
        h = ising_dense_matrix(spec.n_sites, spec.field, spec.boundary)
        if spec.sector is None:
            energies, vectors = np.linalg.eigh(h)
            return energies, vectors
        keep = parity_indices(spec.n_sites, SECTOR_OF_PARITY[spec.sector])
        energies, block_vecs = np.linalg.eigh(h[np.ix_(keep, keep)])
        vectors = np.zeros((h.shape[0], len(keep)), dtype=complex)
        vectors[keep, :] = block_vecs
        return energies, vectors
    if isinstance(spec, BoseHubbardSpec):
        h, _ = bose_hubbard_dense_block(spec)
        return np.linalg.eigh(h)
    raise TypeError(f"no oracle for {type(spec).__name__}")


# -- ansatz builders -----------------------------------------------------------------


def model_network(spec, D, seed, max_link=None):
    """Random binary-tree ansatz in the spec's symmetry sector."""
    if isinstance(spec, IsingSpec):
        symmetric = spec.sector is not None
        link = spin_basis(symmetric)
        group = Z2 if symmetric else TRIVIAL
        sector = SECTOR_OF_PARITY[spec.sector] if symmetric else 0
    elif isinstance(spec, BoseHubbardSpec):
        link = boson_basis(spec.local_dim, spec.symmetric)
        group = U1 if spec.symmetric else TRIVIAL
        sector = spec.n_bosons if spec.symmetric else 0
    else:
        raise TypeError(f"no network builder for {type(spec).__name__}")
    geom = make_binary_tree(spec.n_sites)
    phys = {s: link for s in range(1, spec.n_sites + 1)}
    return random_symmetric_ansatz(
        geom, group, phys, sector, D=D, seed=seed, max_link=max_link
    )


# -- diagnostics ------------------------------------------------------------------------


def tpo_cut_counts(net_or_geom, tpo):
    """Per virtual link: how many TPO transfer links cross its bipartition.

    Counts total crossings over all terms (the efficiency figure for the
    operator as a whole); the per-term worst case is reported by
    ``describe_tpo``.
    """
    geom = getattr(net_or_geom, "geometry", net_or_geom)
    counts = {}
    for lid, info in geom.links.items():
        if info.kind != "virt":
            continue
        side = _component_sites(geom, lid, info.ends[0])
        crossings = 0
        for term in tpo.terms:
            for sa, sb in term.tpo_ends.values():
                if (sa in side) != (sb in side):
                    crossings += 1
        counts[lid] = crossings
    return counts
