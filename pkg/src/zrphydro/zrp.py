"""Zero range process dynamics on a conductance environment.

A particle leaves site x at rate g(eta(x)) * W(x), where W(x) sums the
conductances of the open bonds at x, and picks the target bond with
probability proportional to its conductance. The simulation is exact
(rejection-free, event-driven): waiting times are exponential in the total
rate times the N^2 diffusive speedup, the jumping site is found by sum-tree
inversion in O(log n), and the two affected leaves are recomputed after
each event.

The engine runs on the full open-bond graph of the window. A configuration
supported on one cluster stays there, so the zero range process on the
giant cluster and the independent all-cluster dynamics of the trap analysis
are both special cases picked by the initial condition.

Event randomness is one counter-based (Philox) uniform stream per replica,
consumed three values per event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .environment import ConductanceField, ClusterLabeling, adjacency_csr
from .errors import ValidationError
from .fugacity import FugacityTable, JumpRateFn
from .sumtree import SumTree, tree_set, tree_sample

__all__ = [
    "ParticleConfig",
    "SimClock",
    "KMCResult",
    "sample_product_measure",
    "simulate_kmc",
    "simulate_coupled_pair",
    "build_rate_tree",
    "log_stationary_weight",
]

_UNIFORM_BATCH = 3 * 1_000_000
_MAX_OCC = 2 ** 31 - 2


@dataclass
class ParticleConfig:
    """Occupation numbers on a window, flat int32 array over all box sites.

    total is the conserved particle count; sites off the intended support
    simply hold zero.
    """

    dims: tuple
    occupancy: np.ndarray
    total: int

    @classmethod
    def from_occupancy(cls, dims, occupancy) -> "ParticleConfig":
        occ = np.asarray(occupancy, dtype=np.int32).ravel()
        return cls(dims=tuple(dims), occupancy=occ, total=int(occ.sum()))

    def copy(self) -> "ParticleConfig":
        return ParticleConfig(self.dims, self.occupancy.copy(), self.total)

    def check_total(self) -> bool:
        return int(self.occupancy.sum()) == self.total


@dataclass
class SimClock:
    """Macroscopic time under the N^2 speedup, plus the event counter."""

    macro_time: float
    speedup: float
    event_count: int


@dataclass
class KMCResult:
    times: list
    snapshots: list  # one int32 occupancy array per requested time
    clock: SimClock
    seed: int


class _EventState:
    """Flat arrays the kernel walks: neighbor CSR with per-site cumulative
    conductances, the jump-rate lookup table, and the sum tree of exit rates."""

    def __init__(self, field: ConductanceField, rate_fn: JumpRateFn, occupancy):
        occ = np.asarray(occupancy, dtype=np.int32)
        total = int(occ.sum())
        if total > _MAX_OCC:
            raise ValidationError(f"{total} particles overflow the int32 occupancy type")
        indptr, neighbors, weights = adjacency_csr(field)
        cumw = np.empty_like(weights)
        W = np.zeros(field.n_sites, dtype=np.float64)
        # per-site cumulative weights; W is the final cumulative so the
        # direction draw and the tree leaf share one total, exactly
        cw = np.cumsum(weights)
        base = np.concatenate([[0.0], cw])[indptr[:-1]]
        cumw[:] = cw - np.repeat(base, np.diff(indptr))
        nonempty = np.diff(indptr) > 0
        W[nonempty] = cumw[indptr[1:][nonempty] - 1]
        self.indptr = indptr
        self.neighbors = neighbors
        self.cumw = cumw
        self.W = W
        self.gtable = rate_fn.values_up_to(total + 1)
        self.occ = occ.copy()
        leaves = self.gtable[self.occ] * W
        self.tree = SumTree(leaves)


def build_rate_tree(field: ConductanceField, rate_fn: JumpRateFn, config: ParticleConfig) -> SumTree:
    """Sum tree keyed by exit rate g(eta(x)) * W(x) (exposed for integrity tests)."""
    return _EventState(field, rate_fn, config.occupancy).tree


@njit(cache=True)
def _kmc_run(occ, tree, capacity, indptr, neighbors, cumw, W, gtable,
             uniforms, uidx, t, t_stop, rate_scale):
    """Advance the chain until t_stop. Returns (t, uidx, events, status) with
    status 0 = reached t_stop, 1 = uniform batch exhausted, 3 = zero total rate."""
    events = 0
    while True:
        total = tree[1]
        if total <= 0.0:
            return t_stop, uidx, events, 3
        if uidx + 3 > uniforms.shape[0]:
            return t, uidx, events, 1
        dt = -math.log(uniforms[uidx]) / (total * rate_scale)
        if t + dt > t_stop:
            return t_stop, uidx + 1, events, 0
        t = t + dt
        site = tree_sample(tree, capacity, uniforms[uidx + 1])
        target = uniforms[uidx + 2] * W[site]
        j = indptr[site]
        hi = indptr[site + 1]
        while j < hi - 1 and cumw[j] <= target:
            j += 1
        dest = neighbors[j]
        uidx += 3
        occ[site] -= 1
        occ[dest] += 1
        tree_set(tree, capacity, site, gtable[occ[site]] * W[site])
        tree_set(tree, capacity, dest, gtable[occ[dest]] * W[dest])
        events += 1


def simulate_kmc(field: ConductanceField, labeling, config: ParticleConfig,
                 rate_fn: JumpRateFn, N: int, t_end: float, observation_times,
                 seed: int) -> KMCResult:
    """Exact event-driven run with generator speedup N^2, emitting occupancy
    snapshots at the requested macroscopic times.

    labeling is accepted for interface symmetry with the samplers; the
    dynamics itself needs only the open-bond graph of the field.
    """
    obs = [float(s) for s in observation_times]
    if any(b < a for a, b in zip(obs, obs[1:])):
        raise ValidationError("observation times must be sorted")
    if obs and (obs[0] < 0.0 or obs[-1] > t_end):
        raise ValidationError("observation times must lie in [0, t_end]")
    if t_end < 0.0:
        raise ValidationError("t_end must be nonnegative")

    state = _EventState(field, rate_fn, config.occupancy)
    rate_scale = float(N) ** 2
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    uniforms = rng.random(_UNIFORM_BATCH)
    uidx = 0
    t = 0.0
    events_total = 0
    times, snaps = [], []

    def snapshot(at):
        times.append(at)
        snaps.append(state.occ.copy())

    targets = obs + ([t_end] if (not obs or obs[-1] < t_end) else [])
    k = 0
    while k < len(targets) and targets[k] <= 0.0:
        snapshot(targets[k])
        k += 1
    for target in targets[k:]:
        while True:
            t, uidx, ev, status = _kmc_run(
                state.occ, state.tree.tree, state.tree.capacity,
                state.indptr, state.neighbors, state.cumw, state.W,
                state.gtable, uniforms, uidx, t, target, rate_scale)
            events_total += ev
            if status == 1:
                uniforms = rng.random(_UNIFORM_BATCH)
                uidx = 0
                continue
            break
        if not obs or target <= obs[-1]:
            snapshot(target)

    clock = SimClock(macro_time=t, speedup=rate_scale, event_count=events_total)
    if int(state.occ.sum()) != config.total:
        raise ValidationError("particle count was not conserved (internal error)")
    return KMCResult(times=times, snapshots=snaps, clock=clock, seed=int(seed))


def sample_product_measure(rate_fn: JumpRateFn, profile, labeling: ClusterLabeling,
                           N: int, seed: int, m_hat=None, support="giant") -> ParticleConfig:
    """Independent occupancies with the slowly varying profile: the marginal
    at site x is the product measure at density profile(x/N) / m_hat.

    profile is a scalar (constant mode) or a callable on (n, d) arrays of
    macroscopic points. support picks the giant cluster (hydrodynamic runs)
    or every box site (full-window trap runs, where m_hat defaults to 1).
    """
    dims = labeling.dims
    n = int(np.prod(dims))
    if support == "giant":
        mask = labeling.giant_mask()
        if m_hat is None:
            m_hat = labeling.giant_fraction
    elif support == "all":
        mask = np.ones(n, dtype=bool)
        if m_hat is None:
            m_hat = 1.0
    else:
        raise ValidationError(f"support must be 'giant' or 'all', got {support!r}")
    if m_hat <= 0.0:
        raise ValidationError(f"m_hat={m_hat} must be positive (empty cluster?)")

    sites = np.nonzero(mask)[0]
    coords = np.column_stack(np.unravel_index(sites, dims)).astype(np.float64) / N
    if np.isscalar(profile):
        rho = np.full(len(sites), float(profile))
    else:
        rho = np.asarray(profile(coords), dtype=np.float64)
    if np.any(rho < 0):
        bad = sites[int(np.argmax(rho < 0))]
        raise ValidationError(f"profile negative at site {bad}")
    rho = rho / m_hat

    table = FugacityTable(rate_fn)
    try:
        phis = table.fugacity_of_density_vec(rho)
    except ValidationError as exc:
        bad = sites[int(np.argmax(rho))]
        raise ValidationError(
            f"site {bad} (coords {np.unravel_index(bad, dims)}): {exc}") from exc
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    occ = np.zeros(n, dtype=np.int32)
    occ[sites] = table.sample_occupancies(phis, rng).astype(np.int32)
    return ParticleConfig(dims=tuple(dims), occupancy=occ, total=int(occ.sum()))


def log_stationary_weight(occ, rate_fn: JumpRateFn, phi: float) -> float:
    """log of the unnormalized product weight prod_z phi^eta(z) / g(eta(z))!."""
    occ = np.asarray(occ)
    kmax = int(occ.max()) if occ.size else 0
    g = rate_fn.values_up_to(kmax + 1)
    log_gfact = np.concatenate([[0.0], np.cumsum(np.log(g[1:]))]) if kmax >= 1 \
        else np.zeros(1)
    if phi == 0.0:
        return 0.0 if kmax == 0 else -math.inf
    return float(np.sum(occ * math.log(phi) - log_gfact[occ]))


def simulate_coupled_pair(field: ConductanceField, rate_fn: JumpRateFn,
                          occ_lower, occ_upper, t_end: float, seed: int):
    """Basic coupling of two zero range processes sharing jump events.

    Along each directed open bond, both copies move a particle together at
    rate min(g(lower), g(upper)) * w and each copy alone at the excess rate.
    For nondecreasing g this preserves the coordinatewise order of the two
    configurations. Rates are re-enumerated per event: small windows only.
    """
    lo = np.asarray(occ_lower, dtype=np.int64).copy().ravel()
    hi = np.asarray(occ_upper, dtype=np.int64).copy().ravel()
    indptr, neighbors, weights = adjacency_csr(field)
    src = np.repeat(np.arange(field.n_sites), np.diff(indptr))
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    t = 0.0
    while True:
        g_lo = np.asarray(rate_fn(lo[src]))
        g_hi = np.asarray(rate_fn(hi[src]))
        both = np.minimum(g_lo, g_hi) * weights
        only_lo = np.maximum(g_lo - g_hi, 0.0) * weights
        only_hi = np.maximum(g_hi - g_lo, 0.0) * weights
        rates = np.concatenate([both, only_lo, only_hi])
        total = rates.sum()
        if total <= 0.0:
            break
        t += rng.exponential(1.0 / total)
        if t > t_end:
            break
        pick = np.searchsorted(np.cumsum(rates), rng.random() * total, side="right")
        pick = min(pick, len(rates) - 1)
        kind, bond = divmod(pick, len(weights))
        s, d = src[bond], neighbors[bond]
        if kind in (0, 1):
            lo[s] -= 1
            lo[d] += 1
        if kind in (0, 2):
            hi[s] -= 1
            hi[d] += 1
    return lo, hi
