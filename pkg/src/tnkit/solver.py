"""Variational optimization on gauged loop-free networks.

Ground-state search sweeps a gauge center through the tree, replacing
one tensor (or one contracted pair) at a time by the lowest eigenvector
of the effective operator on that center space. The same sweep driver,
fed with projector penalties instead of a Hamiltonian, performs state
compression, orthogonalization and excited-state targeting; the local
eigenproblems then have a closed-form solution and no iterative solver
runs at all.

Update schemes:

* ``single``: one tensor at a time; link representations stay fixed.
* ``double``: two adjacent tensors contracted, optimized and split by a
  truncated SVD; the shared link representation adapts.
* ``expanded``: single-tensor cost with a temporarily padded link, so
  sector representations can grow without ever forming a pair tensor.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .links import IN, SymmetricLink, intersect_links, pad_links
from .network import (
    LoopFreeNetwork,
    absorb_factor,
    install_canonical_gauge,
    install_unitary_gauge,
    move_center,
    qr_toward,
    random_symmetric_ansatz,
    scalar_product,
    schmidt_truncate,
    support_at,
    svd_toward,
)
from .operators import (
    TPO,
    apply_effective,
    apply_effective_over,
    check_compatibility,
    effective_hamiltonian,
    match_layout,
    pack_tensor,
    renormalize_projector,
    unpack_tensor,
)
from .symmetric import (
    SymmetricTensor,
    contract_symmetric,
    permute_symmetric,
    scale_axis,
    svd_symmetric,
    sym_subtensor_assign,
    sym_subtensor_read,
)

__all__ = [
    "SweepPlan",
    "OptimizerConfig",
    "ConvergenceReport",
    "LanczosResult",
    "make_sweep_plan",
    "lanczos_lowest",
    "optimize_single",
    "optimize_double",
    "optimize_expanded",
    "ground_state",
    "excited_state",
    "default_penalty",
    "compress",
    "exact_sum",
    "orthogonalize",
]

# breakdown threshold for Lanczos residual norms, relative to the matrix scale
BREAKDOWN_GUARD = 1e-13

# numerical rank cutoff when orthonormalizing projector center vectors
SPAN_CUTOFF = 1e-12


# -- sweep planning -----------------------------------------------------------


@dataclass(frozen=True)
class SweepPlan:
    """One optimization pass: center order plus the tree edges it crosses.

    ``centers`` visits every node once, nodes adjacent to physical sites
    first; ``pairs`` lists every tree edge once, ordered by first
    traversal, for two-node updates.
    """

    centers: tuple
    pairs: tuple


def make_sweep_plan(net):
    """Order the optimization centers for one sweep.

    Precedence of a node is its distance to the nearest physical site;
    lower precedence goes first. Within one precedence class the walk
    greedily picks the closest unvisited node, ties broken by node id.
    """
    geom = net.geometry
    nodes = list(geom.nodes())
    sites = [info.site for info in geom.links.values() if info.kind == "phys"]
    if not sites:
        raise ValueError("network has no physical links")
    prec = {
        q: min(net.distance(q, geom.site_node(s)) for s in sites) for q in nodes
    }
    order = []
    pos = None
    for level in sorted(set(prec.values())):
        group = sorted(q for q in nodes if prec[q] == level)
        if pos is None:
            pos = group[0]
        while group:
            group.sort(key=lambda q: (net.distance(pos, q), q))
            pos = group.pop(0)
            order.append(pos)
    pairs = []
    seen = set()
    for a, b in zip(order, order[1:]):
        path = net.path(a, b)
        for u, v in zip(path, path[1:]):
            edge = frozenset((u, v))
            if edge not in seen:
                seen.add(edge)
                pairs.append((u, v))
    return SweepPlan(tuple(order), tuple(pairs))


# -- configuration and reporting ----------------------------------------------


@dataclass
class OptimizerConfig:
    """Knobs for the sweep drivers.

    ``chi`` caps the bond dimension wherever a link is re-split (None
    keeps the current dimension). ``threshold`` is the relative
    energy-difference convergence criterion; ``threshold_params``
    switches to the bond-dimension ansatz a + b * D^-c * exp(-D / d).
    """

    scheme: str = "single"
    chi: int | None = None
    tau: float = 1e-14
    d_pad: int = 0
    n_inner: int = 2
    krylov_dim: int = 16
    max_eig_restarts: int = 200
    eig_tol: float = 1e-10
    threshold: float = 1e-10
    threshold_params: tuple | None = None
    max_sweeps: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in ("single", "double", "expanded"):
            raise ValueError(f"unknown update scheme {self.scheme!r}")
        if self.chi is not None and self.chi < 1:
            raise ValueError("bond dimension cap must be at least 1")
        if self.d_pad < 0:
            raise ValueError("d_pad must be non-negative")
        if self.n_inner < 1:
            raise ValueError("need at least one inner alternation")
        if self.max_sweeps < 1:
            raise ValueError("need at least one sweep")

    def epsilon(self, D, energy_scale):
        """Convergence threshold for the energy decrease per sweep."""
        if self.threshold_params is not None:
            a, b, c, d = self.threshold_params
            return float(a + b * float(D) ** (-c) * math.exp(-float(D) / d))
        return self.threshold * max(1.0, abs(energy_scale))


@dataclass
class ConvergenceReport:
    """Per-sweep trace of a sweep driver run; plot-ready via rows()."""

    energies: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    max_truncation_errors: list = field(default_factory=list)
    n_applications: list = field(default_factory=list)
    sector_summaries: list = field(default_factory=list)
    converged: bool = False
    eig_failures: int = 0
    overlaps: list = field(default_factory=list)

    @property
    def sweeps(self):
        return len(self.energies)

    @property
    def energy(self):
        return self.energies[-1] if self.energies else float("nan")

    def rows(self):
        """Log rows (sweep, E, dE, max_trunc_err, n_app, seconds)."""
        prev = None
        for s, e in enumerate(self.energies, start=1):
            de = float("nan") if prev is None else prev - e
            yield (
                s,
                e,
                de,
                self.max_truncation_errors[s - 1],
                self.n_applications[s - 1],
                self.seconds[s - 1],
            )
            prev = e


@dataclass
class LanczosResult:
    """Eigenpairs plus operator-application count; iterates as a 3-tuple."""

    values: np.ndarray
    vectors: np.ndarray
    n_app: int
    converged: bool = True

    def __iter__(self):
        return iter((self.values, self.vectors, self.n_app))


# -- Lanczos ------------------------------------------------------------------


def lanczos_lowest(
    apply, dim, guess=None, k=1, tol=1e-10, krylov_dim=16, max_restarts=200, rng=None
):
    """Lowest ``k`` eigenpairs of a hermitian map by restarted Lanczos.

    ``apply`` maps a complex vector of length ``dim`` to another; the
    Krylov basis is fully reorthogonalized, converged pairs are locked
    and deflated out, and each restart continues from the best Ritz
    vector. A pair is accepted when its residual bound drops below
    tol * max(1, |theta|). ``guess`` warm-starts the first pair.
    """
    if dim < 1:
        raise ValueError("operator dimension must be positive")
    if k < 1:
        raise ValueError("need at least one eigenpair")
    k = min(k, dim)
    rng = np.random.default_rng(0) if rng is None else rng

    def fresh():
        return rng.standard_normal(dim) + 1j * rng.standard_normal(dim)

    locked_vals = []
    locked_vecs = []

    def deflate(w):
        for u in locked_vecs:
            w = w - np.vdot(u, w) * u
        return w

    def prep(v):
        v = np.asarray(v, dtype=np.complex128).ravel()
        for _ in range(20):
            v = deflate(v)
            n = float(np.linalg.norm(v))
            if n > 1e-12:
                return v / n
            v = fresh()
        raise ValueError("could not build a start vector outside the locked span")

    current = prep(guess if guess is not None else fresh())
    n_app = 0
    restarts = 0
    converged = True
    while len(locked_vals) < k:
        m = min(krylov_dim, dim - len(locked_vals))
        V = np.zeros((dim, m), dtype=np.complex128)
        V[:, 0] = current
        alphas, betas = [], []
        j = 0
        while True:
            w = np.asarray(apply(V[:, j]), dtype=np.complex128).ravel()
            n_app += 1
            a = float(np.real(np.vdot(V[:, j], w)))
            alphas.append(a)
            w = w - a * V[:, j]
            if j > 0:
                w = w - betas[j - 1] * V[:, j - 1]
            w = deflate(w)
            w = w - V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
            bnext = float(np.linalg.norm(w))
            scale = max([1.0] + [abs(x) for x in alphas] + betas)
            if j + 1 >= m or bnext <= BREAKDOWN_GUARD * scale:
                break
            betas.append(bnext)
            V[:, j + 1] = w / bnext
            j += 1
        T = np.diag(alphas)
        for i, b in enumerate(betas):
            T[i, i + 1] = b
            T[i + 1, i] = b
        theta, S = np.linalg.eigh(T)
        x = V[:, : j + 1] @ S[:, 0]
        x = x / float(np.linalg.norm(x))
        residual = abs(bnext * S[j, 0])
        if residual <= tol * max(1.0, abs(theta[0])):
            locked_vals.append(float(theta[0]))
            locked_vecs.append(x)
            if len(locked_vals) >= k:
                break
            current = prep(V[:, : j + 1] @ S[:, 1] if j > 0 else fresh())
        elif restarts + 1 >= max_restarts:
            converged = False
            locked_vals.append(float(theta[0]))
            locked_vecs.append(x)
            col = 1
            while len(locked_vals) < k:
                if col <= j:
                    y = prep(V[:, : j + 1] @ S[:, col])
                    val = float(theta[col])
                else:
                    y = prep(fresh())
                    val = float(np.real(np.vdot(y, apply(y))))
                    n_app += 1
                locked_vals.append(val)
                locked_vecs.append(y)
                col += 1
            break
        else:
            restarts += 1
            current = x
    order = np.argsort(locked_vals)
    values = np.asarray(locked_vals, dtype=float)[order]
    vectors = np.stack([locked_vecs[i] for i in order], axis=1)
    return LanczosResult(values, vectors, n_app, converged)


# -- local updates ------------------------------------------------------------


def _last_to(t, i):
    """Move the last leg to position i, keeping the rest in order."""
    sigma = [p if p < i else p + 1 for p in range(1, t.rank)] + [i]
    return permute_symmetric(t, sigma)


def _first_to(t, i):
    """Move the first leg to position i, keeping the rest in order."""
    sigma = [i] + [p - 1 if p - 1 < i else p for p in range(2, t.rank + 1)]
    return permute_symmetric(t, sigma)


def _closed_form_lowest(terms, current):
    """Lowest eigenpair of sum_p eps_p |u_p><u_p| on the center space.

    ``terms`` lists (penalty, vector) with dead vectors as None. The
    operator has rank at most len(terms), so the problem reduces to a
    small hermitian matrix over the orthonormalized span. A positive
    infinite penalty acts as a hard orthogonality constraint. Returns
    (normalized tensor, energy).
    """
    live = [(p, v) for p, v in terms if v is not None]
    for p, _ in live:
        if math.isinf(p) and p < 0:
            raise ValueError("negative infinite penalty is unbounded below")
    ortho = []

    def orthonormalize(v, record_from):
        w = v
        cs = []
        for idx, u in enumerate(ortho):
            c = complex(u.vdot(w))
            w = w.add(u, alpha=-c)
            if idx >= record_from:
                cs.append(c)
        nw = w.norm()
        if nw > SPAN_CUTOFF * max(1.0, v.norm()):
            ortho.append(w.scaled(1.0 / nw))
            cs.append(complex(nw))
        return cs

    for p, v in live:
        if math.isinf(p):
            orthonormalize(v, record_from=len(ortho) + 1)
    nhard = len(ortho)
    coords = []
    for p, v in live:
        if not math.isinf(p):
            coords.append((p, orthonormalize(v, record_from=nhard)))
    basis = ortho[nhard:]
    r = len(basis)
    if r:
        M = np.zeros((r, r), dtype=np.complex128)
        for p, cs in coords:
            u = np.zeros(r, dtype=np.complex128)
            u[: len(cs)] = cs
            M += p * np.outer(u, np.conj(u))
        vals, vecs = np.linalg.eigh(M)
        if float(vals[0]) < 0.0:
            acc = None
            for coef, u in zip(vecs[:, 0], basis):
                acc = u.scaled(coef) if acc is None else acc.add(u, alpha=complex(coef))
            return acc, float(vals[0])
    # every penalty pushes upward: any vector orthogonal to all terms is optimal
    w = current
    for u in ortho:
        w = w.add(u, alpha=-complex(u.vdot(w)))
    nw = w.norm()
    if nw <= SPAN_CUTOFF:
        raise ValueError("center space is fully constrained by the projectors")
    return w.scaled(1.0 / nw), 0.0


def _pure_projector(heff):
    return not heff.renops.tpo.terms


def _record(stats, n_app, ok):
    if stats is not None:
        stats["n_app"] = stats.get("n_app", 0) + n_app
        if not ok:
            stats["eig_failures"] = stats.get("eig_failures", 0) + 1


def optimize_single(net, gauge, heff, c, cfg, rng=None, stats=None):
    """Replace T at node c by the lowest eigenvector of the effective
    operator on its center space; link representations stay fixed.

    Moves the gauge center and the caches to c first. With an empty TPO
    the projector sum is optimized in closed form (no iterations).
    Returns the optimized energy; the new tensor has unit norm.
    """
    move_center(net, gauge, c)
    heff.move_to(c)
    node = net.nodes[c]
    if _pure_projector(heff):
        terms = [(pt.penalty, pt.tvec) for pt in heff.projectors]
        new, energy = _closed_form_lowest(terms, node)
        _record(stats, 0, True)
    else:
        if any(math.isinf(pt.penalty) for pt in heff.projectors):
            raise ValueError("infinite penalties require a pure projector objective")
        layout = match_layout(node.links, node.dirs)
        if layout[1] < 1:
            raise ValueError("center space is empty")

        def op(v):
            x = unpack_tensor(node.links, node.dirs, layout, v)
            return pack_tensor(apply_effective(heff, x), layout)

        res = lanczos_lowest(
            op,
            layout[1],
            guess=pack_tensor(node, layout),
            k=1,
            tol=cfg.eig_tol,
            krylov_dim=cfg.krylov_dim,
            max_restarts=cfg.max_eig_restarts,
            rng=rng,
        )
        energy = float(res.values[0])
        new = unpack_tensor(node.links, node.dirs, layout, res.vectors[:, 0]).prune()
        _record(stats, res.n_app, res.converged)
    net.nodes[c] = new
    return energy


def _split_pair(net, gauge, pair, c, c2, eta, chi, tau):
    """Split an optimized pair tensor back into nodes c and c2.

    c keeps the isometry, c2 absorbs the singular values (center lands
    on c2); the shared link takes the kept singular vectors' sectors.
    Returns the truncation error.
    """
    ia, ib = net.leg(c, eta), net.leg(c2, eta)
    v, spectra, w, klink = svd_symmetric(
        pair, len(net.node_links[c]) - 1, chi=chi, tau=tau
    )
    lam = {
        s: np.asarray(vals, dtype=float).copy()
        for s, vals in spectra.by_sector.items()
    }
    if net.geometry.dir_at(c, eta) == IN:
        v = v.invert_link(v.rank)
        w = w.invert_link(1)
        lam = {klink.group.invert(s): vals for s, vals in lam.items()}
    kept = spectra.kept_norm
    if kept <= 0:
        raise ValueError("pair tensor vanished under truncation")
    w = scale_axis(w, 1, lam)
    net.nodes[c] = _last_to(v, ia)
    net.nodes[c2] = _first_to(w, ib).scaled(1.0 / kept)
    gauge.center = c2
    return spectra.truncation_error


def optimize_double(net, gauge, heff, c, c2, cfg, rng=None, stats=None):
    """Optimize the contracted pair of adjacent nodes (c, c2) at once.

    The pair tensor is optimized like a single center, then split by an
    SVD truncated to the cfg.chi largest singular values across all
    sectors, so the shared link's representation can grow or shrink.
    Ends with the gauge center on c2. Returns (energy, truncation
    error); the energy is the pair optimum before truncation.
    """
    eta = net.link_between(c, c2)
    move_center(net, gauge, c)
    heff.move_to(c)
    ia, ib = net.leg(c, eta), net.leg(c2, eta)
    pair = contract_symmetric(net.nodes[c], net.nodes[c2], [(ia, ib)])
    frame_ids = [l for l in net.node_links[c] if l != eta]
    frame_ids += [l for l in net.node_links[c2] if l != eta]
    pvecs = [(pt.penalty, pt.pair_vector(net, c, c2)) for pt in heff.projectors]
    if _pure_projector(heff):
        new, energy = _closed_form_lowest(pvecs, pair)
        _record(stats, 0, True)
    else:
        if any(math.isinf(p) for p, _ in pvecs):
            raise ValueError("infinite penalties require a pure projector objective")
        layout = match_layout(pair.links, pair.dirs)

        def op(v):
            x = unpack_tensor(pair.links, pair.dirs, layout, v)
            y = apply_effective_over(heff, x, frame_ids, projector_vectors=pvecs)
            return pack_tensor(y, layout)

        res = lanczos_lowest(
            op,
            layout[1],
            guess=pack_tensor(pair, layout),
            k=1,
            tol=cfg.eig_tol,
            krylov_dim=cfg.krylov_dim,
            max_restarts=cfg.max_eig_restarts,
            rng=rng,
        )
        energy = float(res.values[0])
        new = unpack_tensor(pair.links, pair.dirs, layout, res.vectors[:, 0]).prune()
        _record(stats, res.n_app, res.converged)
    error = _split_pair(net, gauge, new, c, c2, eta, cfg.chi, cfg.tau)
    heff.move_to(c2)
    return energy, error


def _support_through(net, q, eta):
    """Representation node q's other legs admit on its ``eta`` leg."""
    t = net.nodes[q]
    i = net.leg(q, eta)
    reps = [l for p, l in enumerate(t.links, start=1) if p != i]
    dirs = [d for p, d in enumerate(t.dirs, start=1) if p != i]
    return support_at(reps, dirs, t.dirs[i - 1])


def _expand_leg(t, i, enew, rng):
    """Replace leg i's link by ``enew``, keeping the old entries at the
    leading indices per sector and filling new elements with a small
    complex Gaussian perturbation (scale 1e-3 * |T| / sqrt(#new))."""
    old = t.links[i - 1]
    links = tuple(enew if p == i else l for p, l in enumerate(t.links, start=1))
    keeps = []
    for p, link in enumerate(t.links, start=1):
        if p == i:
            keeps.append(
                {
                    s: list(range(1, min(d, enew.deg_of(s)) + 1))
                    for s, d in zip(old.sectors, old.degs)
                    if min(d, enew.deg_of(s)) > 0
                }
            )
        else:
            keeps.append(
                {s: list(range(1, d + 1)) for s, d in zip(link.sectors, link.degs)}
            )
    cut = sym_subtensor_read(t, keeps)
    total = match_layout(links, t.dirs)[1]
    kept = match_layout(cut.links, cut.dirs)[1]
    scale = 1e-3 * t.norm() / math.sqrt(max(1, total - kept))
    base = SymmetricTensor.random(links, t.dirs, rng, scale=scale)
    maps = [
        {s: list(range(1, d + 1)) for s, d in zip(l.sectors, l.degs)}
        for l in cut.links
    ]
    return sym_subtensor_assign(base, cut, maps)


def optimize_expanded(net, gauge, heff, c, eta, cfg, rng=None, stats=None):
    """Single-tensor update of node c with link ``eta`` temporarily padded.

    The link grows by d_pad per sector within the largest representation
    a double update could reach (the intersection of the fused supports
    of the two sides); new tensor elements start as a small random
    perturbation. The two adjacent tensors are then optimized alternately
    n_inner times at single-update cost, and a final SVD restores the
    bond cap. d_pad = 0 reduces exactly to optimize_single. Ends with
    the center on c. Returns (energy, truncation error).
    """
    if cfg.d_pad == 0:
        return optimize_single(net, gauge, heff, c, cfg, rng, stats), 0.0
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    c2 = net.other_end(eta, c)
    move_center(net, gauge, c)
    heff.move_to(c)
    old = net.link_rep(eta)
    chi = cfg.chi if cfg.chi is not None else old.dim
    emax = intersect_links(_support_through(net, c, eta), _support_through(net, c2, eta))
    if emax is not None:
        epad = SymmetricLink.make(net.group, {s: cfg.d_pad for s in emax.sectors})
        enew = intersect_links(pad_links(old, epad), emax)
    else:
        enew = old
    if enew != old:
        for q in (c, c2):
            net.nodes[q] = _expand_leg(net.nodes[q], net.leg(q, eta), enew, rng)
        # re-isometrize the far end, then rebuild the stale cached factors
        absorb_factor(net, qr_toward(net, c2, eta), c, eta)
        heff.refresh_link(eta)
    energy = 0.0
    for _ in range(cfg.n_inner):
        energy = optimize_single(net, gauge, heff, c, cfg, rng, stats)
        energy = optimize_single(net, gauge, heff, c2, cfg, rng, stats)
    # restore the bond cap; the center crosses back to c with the weights
    lam, w, error = svd_toward(net, c2, eta, chi=chi, tau=cfg.tau)
    absorb_factor(net, scale_axis(w, 1, lam), c, eta)
    gauge.center = c
    kept = math.sqrt(sum(float(np.sum(v**2)) for v in lam.values()))
    if kept <= 0:
        raise ValueError("state vanished under truncation")
    net.nodes[c] = net.nodes[c].scaled(1.0 / kept)
    heff.move_to(c)
    return energy, error


# -- sweep drivers ------------------------------------------------------------


def _sector_summary(net):
    return {
        lid: net.link_rep(lid).as_dict()
        for lid, info in net.links.items()
        if info.kind == "virt"
    }


def _max_virtual_dim(net):
    dims = [
        net.link_rep(lid).dim for lid, info in net.links.items() if info.kind == "virt"
    ]
    return max(dims) if dims else 1


def _monitor_energy(net, heff, c):
    """<t|H_eff|t> at center c with infinite penalties masked to zero.

    A satisfied hard constraint contributes nothing to the energy, but
    evaluating inf * <u|t> at float precision would poison the trace.
    """
    t = net.nodes[c]
    pvecs = [
        (0.0 if math.isinf(pt.penalty) else pt.penalty, pt.tvec)
        for pt in heff.projectors
    ]
    y = apply_effective_over(heff, t, net.node_links[c], projector_vectors=pvecs)
    return complex(t.vdot(y)).real


def _run_sweeps(net, tpo, cfg, projector_specs, rng):
    """Shared sweep loop: gauge install, per-sweep updates, convergence."""
    if tpo.terms:
        check_compatibility(tpo, net)
    plan = make_sweep_plan(net)
    c0 = plan.pairs[0][0] if cfg.scheme == "double" else plan.centers[0]
    gauge = install_unitary_gauge(net, c0)
    nrm = net.norm(c0)
    if nrm <= 0:
        raise ValueError("initial state has zero norm")
    net.nodes[c0] = net.nodes[c0].scaled(1.0 / nrm)
    projectors = [
        renormalize_projector(net, pnets, weights, c0, penalty=pen)
        for pen, pnets, weights in projector_specs
    ]
    heff = effective_hamiltonian(net, tpo, c0, projectors)
    report = ConvergenceReport()
    prev = _monitor_energy(net, heff, c0)
    for _ in range(cfg.max_sweeps):
        tick = time.perf_counter()
        stats = {}
        max_err = 0.0
        if cfg.scheme == "single":
            for c in plan.centers:
                optimize_single(net, gauge, heff, c, cfg, rng, stats)
        elif cfg.scheme == "double":
            for a, b in plan.pairs:
                _, err = optimize_double(net, gauge, heff, a, b, cfg, rng, stats)
                max_err = max(max_err, err)
        else:
            centers = plan.centers
            for i, c in enumerate(centers):
                nxt = centers[(i + 1) % len(centers)]
                if nxt == c:
                    optimize_single(net, gauge, heff, c, cfg, rng, stats)
                    continue
                eta = net.link_between(c, net.path(c, nxt)[1])
                _, err = optimize_expanded(net, gauge, heff, c, eta, cfg, rng, stats)
                max_err = max(max_err, err)
        energy = _monitor_energy(net, heff, gauge.center)
        report.energies.append(energy)
        report.seconds.append(time.perf_counter() - tick)
        report.max_truncation_errors.append(max_err)
        report.n_applications.append(stats.get("n_app", 0))
        report.eig_failures += stats.get("eig_failures", 0)
        report.sector_summaries.append(_sector_summary(net))
        D = cfg.chi if cfg.chi is not None else _max_virtual_dim(net)
        if prev - energy < cfg.epsilon(D, energy):
            report.converged = True
            break
        prev = energy
    return net, gauge, heff, report


def ground_state(net, tpo, cfg=None, projectors=()):
    """Sweep the variational optimizer to the lowest-energy state.

    Mutates ``net`` in place and returns (net, ConvergenceReport).
    Convergence: the energy decrease over one full sweep falls below the
    configured threshold (relative by default). ``projectors`` adds
    penalty terms (penalty, states tuple, weights or None) on top of the
    TPO, as used for excited states.
    """
    cfg = OptimizerConfig() if cfg is None else cfg
    rng = np.random.default_rng(cfg.seed)
    net, _, _, report = _run_sweeps(net, tpo, cfg, list(projectors), rng)
    return net, report


def default_penalty(tpo, n_sites):
    """Excited-state penalty scale: an order above N * max |coupling|."""
    cmax = 0.0
    for term in tpo.terms:
        for op in term.ops:
            for b in op.tensor.blocks.values():
                if b.size:
                    cmax = max(cmax, float(np.max(np.abs(b))))
    if cmax == 0.0:
        cmax = 1.0
    return 10.0 * max(1, n_sites) * cmax


def excited_state(net, tpo, lower, penalties=None, cfg=None):
    """Next eigenstate above ``lower`` via projector penalties.

    Each lower state enters as penalty * |Psi_p><Psi_p|, shifting it out
    of the low end of the spectrum; the penalty default is
    default_penalty(tpo, N). Returns (net, report); report.overlaps
    holds |<lower_p|Psi>| for a converged-orthogonality check.
    """
    lower = list(lower)
    if not lower:
        raise ValueError("need at least one lower state")
    if penalties is None:
        penalties = [default_penalty(tpo, net.n_sites())] * len(lower)
    penalties = [float(p) for p in penalties]
    if len(penalties) != len(lower):
        raise ValueError("one penalty per lower state required")
    specs = [(p, (lw,), None) for p, lw in zip(penalties, lower)]
    net, report = ground_state(net, tpo, cfg, projectors=specs)
    report.overlaps = [abs(complex(scalar_product(lw, net))) for lw in lower]
    return net, report


# -- state algebra: addition, compression, orthogonalization -------------------


def exact_sum(nets, weights=None):
    """Network encoding sum_i w_i |Psi_i> exactly, bond dims D' = sum D_i.

    All inputs must share geometry, group, physical links and selector
    sector. Each virtual link takes the sector-wise concatenation of the
    input representations; node tensors are inscribed block-diagonally
    into disjoint index ranges, so amplitudes add exactly.
    """
    nets = list(nets)
    if not nets:
        raise ValueError("need at least one network")
    weights = [1.0] * len(nets) if weights is None else list(weights)
    if len(weights) != len(nets):
        raise ValueError("one weight per network required")
    first = nets[0]
    for nt in nets[1:]:
        if nt.geometry != first.geometry:
            raise ValueError("networks differ in geometry")
        if nt.group != first.group:
            raise ValueError("networks differ in symmetry group")
        if nt.selector_sector() != first.selector_sector():
            raise ValueError("networks differ in selector sector")
        for lid, info in first.links.items():
            if info.kind == "phys" and nt.link_rep(lid) != first.link_rep(lid):
                raise ValueError(f"physical link {lid} differs between networks")
    geom = first.geometry
    offsets = {}
    sum_reps = {}
    for lid, info in geom.links.items():
        if info.kind != "virt":
            continue
        run = {}
        offs = []
        for nt in nets:
            offs.append(dict(run))
            for s, d in nt.link_rep(lid).as_dict().items():
                run[s] = run.get(s, 0) + d
        offsets[lid] = offs
        sum_reps[lid] = SymmetricLink.make(first.group, run)
    q0 = geom.selector_node()
    if q0 is None:
        q0 = geom.nodes()[0]
    new_nodes = {}
    for q in geom.nodes():
        t0 = first.nodes[q]
        links = tuple(
            sum_reps.get(lid, t0.links[pos])
            for pos, lid in enumerate(geom.node_links[q])
        )
        acc = SymmetricTensor.zeros(links, t0.dirs)
        for i, nt in enumerate(nets):
            src = nt.nodes[q]
            if q == q0:
                src = src.scaled(weights[i])
            maps = []
            for pos, lid in enumerate(geom.node_links[q]):
                rep = src.links[pos]
                if lid in offsets:
                    base = offsets[lid][i]
                    maps.append(
                        {
                            s: list(range(base.get(s, 0) + 1, base.get(s, 0) + 1 + d))
                            for s, d in rep.as_dict().items()
                        }
                    )
                else:
                    maps.append(
                        {s: list(range(1, d + 1)) for s, d in rep.as_dict().items()}
                    )
            acc = sym_subtensor_assign(acc, src, maps)
        new_nodes[q] = acc
    return LoopFreeNetwork(first.group, geom, new_nodes)


def compress(targets, weights=None, D=None, cfg=None, prepass=True):
    """Best approximation of sum_i w_i |Psi_i> at bond dimension D.

    With ``prepass`` the start is the exact sum with every virtual link
    Schmidt-truncated to D; otherwise a random ansatz at D. The sweeps
    then minimize -|<Psi|Psi'>|^2 via a projector onto the target
    superposition; every center update is closed form. Returns (net,
    fidelity) with fidelity = |<Psi|Psi'>| / (norms), 1 for an exact fit.
    """
    targets = list(targets)
    if not targets:
        raise ValueError("need at least one target state")
    weights = [1.0] * len(targets) if weights is None else list(weights)
    if len(weights) != len(targets):
        raise ValueError("one weight per target required")
    cfg = OptimizerConfig() if cfg is None else cfg
    w = np.asarray(weights, dtype=np.complex128)
    gram = np.array(
        [[complex(scalar_product(a, b)) for b in targets] for a in targets]
    )
    pnorm2 = float(np.real(np.conj(w) @ gram @ w))
    if pnorm2 <= 0 or not np.isfinite(pnorm2):
        raise ValueError("target superposition has zero norm")
    if prepass or D is None:
        start = exact_sum(targets, weights)
        if D is not None:
            for lid, info in sorted(start.links.items()):
                if info.kind == "virt" and start.link_rep(lid).dim > D:
                    gauge = install_canonical_gauge(start)
                    schmidt_truncate(start, gauge, lid, D)
    else:
        t0 = targets[0]
        phys = {
            info.site: t0.link_rep(lid)
            for lid, info in t0.links.items()
            if info.kind == "phys"
        }
        start = random_symmetric_ansatz(
            t0.geometry, t0.group, phys, t0.selector_sector(), D, cfg.seed
        )
    cfg = replace(cfg, chi=D if D is not None else cfg.chi)
    specs = [(-1.0, tuple(targets), tuple(weights))]
    net, _ = ground_state(start, TPO(()), cfg, projectors=specs)
    overlap = sum(
        wi * complex(scalar_product(net, t)) for wi, t in zip(weights, targets)
    )
    return net, abs(overlap) / math.sqrt(pnorm2)


def orthogonalize(net, against, mode="subtract", penalty=None, D=None, cfg=None):
    """Remove the components of ``net`` along the ``against`` states.

    subtract: compress the explicit superposition Psi - sum_p <Psi_p|Psi>
    Psi_p (one Gram-Schmidt step; best fidelity, approximate
    orthogonality; assumes the ``against`` states are normalized).
    penalty: compression of Psi itself with penalty projectors on the
    ``against`` states; the default infinite penalty enforces exact
    orthogonality at some fidelity cost. Returns (net, fidelity).
    """
    against = list(against)
    if not against:
        raise ValueError("need at least one state to orthogonalize against")
    if D is None:
        D = _max_virtual_dim(net)
    cfg = OptimizerConfig() if cfg is None else cfg
    if mode == "subtract":
        overlaps = [complex(scalar_product(a, net)) for a in against]
        return compress(
            [net] + against, [1.0] + [-ov for ov in overlaps], D, cfg
        )
    if mode != "penalty":
        raise ValueError(f"unknown mode {mode!r}")
    pen = math.inf if penalty is None else float(penalty)
    nrm2 = float(np.real(complex(scalar_product(net, net))))
    if nrm2 <= 0:
        raise ValueError("input state has zero norm")
    specs = [(-1.0, (net.copy(),), None)]
    specs += [(pen, (a,), None) for a in against]
    out = net.copy()
    cfg = replace(cfg, chi=cfg.chi if cfg.chi is not None else D)
    out, _ = ground_state(out, TPO(()), cfg, projectors=specs)
    fidelity = abs(complex(scalar_product(out, net))) / math.sqrt(nrm2)
    return out, fidelity
