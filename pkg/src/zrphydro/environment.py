"""Quenched conductance environments on finite lattice windows.

A conductance field assigns one i.i.d. value in [0, c0] to every unoriented
bond of a d-dimensional box (periodic torus by default, free boundary
optional). Bonds are stored as a (d, *dims) array: values[a][x] is the
conductance of the bond from site x to x + e_a in the positive direction a,
wrapping around on the torus. This stores each unoriented bond exactly once,
so symmetry holds structurally.

Positive-conductance bonds define a random graph; its connected components
are labeled here and the largest one (the "giant" cluster) stands in for the
infinite cluster of the supercritical regime. Sites with no positive
incident bond are excluded from the vertex set and labeled -1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ValidationError

__all__ = [
    "BondLaw",
    "ConductanceField",
    "ClusterLabeling",
    "DiameterStats",
    "generate_field",
    "threshold_field",
    "label_clusters",
    "estimate_m",
    "cluster_diameter_stats",
    "save_field",
    "load_field",
]


@dataclass(frozen=True)
class BondLaw:
    """i.i.d. law of a single bond conductance.

    kinds:
      bernoulli  -- value c with probability p, else 0
      uniform    -- uniform on [0, c0]
      twopoint   -- value a with probability p, else b (mixture of two atoms)
    """

    kind: str
    p: float = 1.0
    c: float = 1.0
    c0: float = 1.0
    a: float = 1.0
    b: float = 0.5

    def validate(self):
        if self.kind not in ("bernoulli", "uniform", "twopoint"):
            raise ValidationError(f"unknown bond law kind {self.kind!r}")
        if self.kind in ("bernoulli", "twopoint") and not 0.0 <= self.p <= 1.0:
            raise ValidationError(f"law parameter p={self.p} outside [0, 1]")
        if self.kind == "bernoulli" and not 0.0 < self.c <= self.upper_bound():
            raise ValidationError(f"bernoulli value c={self.c} not in (0, c0]")
        if self.kind == "uniform" and self.c0 <= 0.0:
            raise ValidationError(f"uniform upper bound c0={self.c0} must be positive")
        if self.kind == "twopoint" and (self.a < 0.0 or self.b < 0.0):
            raise ValidationError("twopoint atoms must be nonnegative")

    def upper_bound(self) -> float:
        """The constant c0 bounding the conductances."""
        if self.kind == "bernoulli":
            return self.c
        if self.kind == "uniform":
            return self.c0
        return max(self.a, self.b)

    def sample(self, rng, shape):
        if self.kind == "bernoulli":
            return np.where(rng.random(shape) < self.p, self.c, 0.0)
        if self.kind == "uniform":
            return rng.random(shape) * self.c0
        return np.where(rng.random(shape) < self.p, self.a, self.b)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "p": self.p, "c": self.c,
            "c0": self.c0, "a": self.a, "b": self.b,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BondLaw":
        return cls(**d)


@dataclass
class ConductanceField:
    """One realization of the bond environment on a finite window.

    values[a][x] = conductance of bond {x, x + e_a}; on a free-boundary box
    the entries that would wrap are forced to zero and are not bonds.
    """

    dims: tuple
    boundary: str
    c0: float
    law: BondLaw
    seed: int
    values: np.ndarray

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.dims))

    def bond_exists(self) -> np.ndarray:
        """Boolean (d, *dims) mask of bonds present in the window geometry."""
        mask = np.ones((self.ndim,) + self.dims, dtype=bool)
        if self.boundary == "free":
            for a in range(self.ndim):
                idx = [slice(None)] * (1 + self.ndim)
                idx[0] = a
                idx[1 + a] = self.dims[a] - 1
                mask[tuple(idx)] = False
        return mask

    def n_bonds(self) -> int:
        return int(self.bond_exists().sum())

    def conductance(self, x, y) -> float:
        """omega(x, y) for adjacent sites, symmetric by construction."""
        x = np.asarray(x)
        y = np.asarray(y)
        for a in range(self.ndim):
            L = self.dims[a]
            step = int((y[a] - x[a]) % L)
            if step == 0:
                continue
            rest_equal = all(
                (y[b] - x[b]) % self.dims[b] == 0 for b in range(self.ndim) if b != a
            )
            if not rest_equal:
                break
            if step == 1:
                return float(self.values[(a,) + tuple(np.mod(x, self.dims))])
            if step == L - 1:
                return float(self.values[(a,) + tuple(np.mod(y, self.dims))])
        raise ValidationError(f"sites {tuple(x)} and {tuple(y)} are not adjacent")

    def incident_weight(self) -> np.ndarray:
        """W(x) = sum of conductances of the bonds incident to x, flat array."""
        W = np.zeros(self.dims, dtype=np.float64)
        for a in range(self.ndim):
            vals = self.values[a]
            if self.boundary == "free":
                vals = vals * self.bond_exists()[a]
            W += vals
            W += np.roll(vals, 1, axis=a)
        return W.ravel()


def generate_field(law: BondLaw, dims, boundary="periodic", seed=0) -> ConductanceField:
    """Draw one i.i.d. conductance per unoriented bond, deterministically in seed."""
    dims = tuple(int(L) for L in dims)
    if len(dims) < 2:
        raise ValidationError(f"dimension d={len(dims)} must be >= 2")
    if any(L < 2 for L in dims):
        raise ValidationError(f"all side lengths must be >= 2, got {dims}")
    if boundary not in ("periodic", "free"):
        raise ValidationError(f"boundary must be 'periodic' or 'free', got {boundary!r}")
    law.validate()
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    values = law.sample(rng, (len(dims),) + dims).astype(np.float64)
    fld = ConductanceField(
        dims=dims, boundary=boundary, c0=law.upper_bound(),
        law=law, seed=int(seed), values=values,
    )
    if boundary == "free":
        fld.values = np.where(fld.bond_exists(), fld.values, 0.0)
    return fld


def threshold_field(field: ConductanceField, c: float) -> np.ndarray:
    """Binary bond field: 1 where omega(b) > c (strict), else 0.

    c = 0 gives the indicator of positive conductance; c above every value
    yields the all-zero field.
    """
    if c < 0.0:
        raise ValidationError(f"threshold c={c} must be nonnegative")
    out = (field.values > c).astype(np.uint8)
    if field.boundary == "free":
        out &= field.bond_exists().astype(np.uint8)
    return out


def _bond_endpoints(open_bonds: np.ndarray, boundary: str):
    """Flat (i, j, axis) arrays for every open bond, wrap handled per boundary."""
    d = open_bonds.shape[0]
    dims = open_bonds.shape[1:]
    ii, jj, aa = [], [], []
    for a in range(d):
        where = np.nonzero(open_bonds[a])
        if boundary == "free":
            keep = where[a] < dims[a] - 1
            where = tuple(w[keep] for w in where)
        i = np.ravel_multi_index(where, dims)
        nb = list(where)
        nb[a] = (nb[a] + 1) % dims[a]
        j = np.ravel_multi_index(tuple(nb), dims)
        ii.append(i)
        jj.append(j)
        aa.append(np.full(i.shape, a, dtype=np.int8))
    cat = lambda parts: np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    return cat(ii), cat(jj), cat(aa)


@dataclass
class ClusterLabeling:
    """Connected components of the positive-bond graph on a window.

    label[x] is the cluster id of flat site x, or -1 for sites touching no
    open bond. sizes[k] is the site count of cluster k. giant_id is the
    largest cluster, ties broken by smallest id.
    """

    dims: tuple
    boundary: str
    label: np.ndarray
    sizes: np.ndarray
    giant_id: int
    giant_fraction: float

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)

    def giant_mask(self) -> np.ndarray:
        """Boolean flat mask of the giant-cluster sites (all False if empty)."""
        if self.giant_id < 0:
            return np.zeros(self.n_sites, dtype=bool)
        return self.label == self.giant_id


def label_clusters(open_bonds: np.ndarray, boundary="periodic") -> ClusterLabeling:
    """Component decomposition of a binary bond field.

    Sites with no incident open bond are excluded from the vertex set
    (label -1). An empty graph yields zero clusters and giant_id -1.
    """
    d = open_bonds.shape[0]
    dims = tuple(open_bonds.shape[1:])
    n = int(np.prod(dims))
    i, j, _ = _bond_endpoints(open_bonds, boundary)
    if len(i) == 0:
        return ClusterLabeling(
            dims=dims, boundary=boundary,
            label=np.full(n, -1, dtype=np.int64),
            sizes=np.zeros(0, dtype=np.int64), giant_id=-1, giant_fraction=0.0,
        )
    adj = coo_matrix((np.ones(len(i), dtype=np.int8), (i, j)), shape=(n, n))
    _, comp = connected_components(adj, directed=False)
    touched = np.zeros(n, dtype=bool)
    touched[i] = True
    touched[j] = True
    used = np.unique(comp[touched])
    label = np.full(n, -1, dtype=np.int64)
    label[touched] = np.searchsorted(used, comp[touched])
    sizes = np.bincount(label[touched], minlength=len(used)).astype(np.int64)
    giant_id = int(np.argmax(sizes))
    return ClusterLabeling(
        dims=dims, boundary=boundary, label=label, sizes=sizes,
        giant_id=giant_id, giant_fraction=float(sizes[giant_id]) / n,
    )


def estimate_m(labeling: ClusterLabeling) -> float:
    """Giant-cluster fraction |giant ∩ box| / |box|, the finite-window
    estimator of the infinite-cluster density."""
    if labeling.n_clusters == 0:
        return 0.0
    return labeling.giant_fraction


def _circular_extent(coords: np.ndarray, L: int) -> int:
    """Max pairwise circular distance of a coordinate multiset on Z_L."""
    u = np.unique(coords)
    if len(u) == 1:
        return 0
    gaps = np.diff(u)
    wrap = u[0] + L - u[-1]
    gmax = max(int(gaps.max()), int(wrap))
    span = L - gmax
    if span <= L // 2:
        return span
    # spread-out set: brute force over unique values
    diff = np.abs(u[:, None] - u[None, :])
    return int(np.minimum(diff, L - diff).max())


@dataclass
class DiameterStats:
    """ell-infinity diameters of the finite clusters of a labeling."""

    max_diameter: int
    histogram: np.ndarray  # histogram[k] = number of clusters of diameter k
    n_clusters: int


def cluster_diameter_stats(labeling: ClusterLabeling, exclude_giant=True) -> DiameterStats:
    """Per-cluster ell-infinity diameter (torus metric on periodic windows).

    With exclude_giant the giant cluster is skipped, leaving the finite
    clusters whose diameters the logarithmic trap bound concerns.
    """
    dims = labeling.dims
    label = labeling.label
    occupied = np.nonzero(label >= 0)[0]
    if len(occupied) == 0:
        return DiameterStats(max_diameter=0, histogram=np.zeros(1, dtype=np.int64), n_clusters=0)
    order = np.argsort(label[occupied], kind="stable")
    occupied = occupied[order]
    labs = label[occupied]
    starts = np.searchsorted(labs, np.arange(labeling.n_clusters))
    ends = np.append(starts[1:], len(labs))
    coords = np.array(np.unravel_index(occupied, dims))  # (d, n_occupied)
    diams = []
    for k in range(labeling.n_clusters):
        if exclude_giant and k == labeling.giant_id:
            continue
        sl = slice(starts[k], ends[k])
        dk = 0
        for a in range(len(dims)):
            ca = coords[a, sl]
            if labeling.boundary == "periodic":
                ext = _circular_extent(ca, dims[a])
            else:
                ext = int(ca.max() - ca.min())
            dk = max(dk, ext)
        diams.append(dk)
    if not diams:
        return DiameterStats(max_diameter=0, histogram=np.zeros(1, dtype=np.int64), n_clusters=0)
    diams = np.array(diams, dtype=np.int64)
    hist = np.bincount(diams)
    return DiameterStats(max_diameter=int(diams.max()), histogram=hist, n_clusters=len(diams))


def adjacency_csr(field: ConductanceField, open_bonds=None, site_mask=None):
    """Neighbor structure over all box sites for the open-bond graph.

    Returns (indptr, neighbors, weights): for flat site s, its open-bond
    neighbors are neighbors[indptr[s]:indptr[s+1]] with conductances
    weights[...]. If site_mask is given, bonds with an endpoint outside the
    mask are dropped (used to restrict to a cluster).
    """
    if open_bonds is None:
        open_bonds = threshold_field(field, 0.0)
    i, j, axis = _bond_endpoints(open_bonds, field.boundary)
    if site_mask is not None:
        keep = site_mask[i] & site_mask[j]
        i, j, axis = i[keep], j[keep], axis[keep]
    flat_bond = axis.astype(np.int64) * field.n_sites + i
    wvals = field.values.ravel()[flat_bond]
    src = np.concatenate([i, j])
    dst = np.concatenate([j, i])
    ww = np.concatenate([wvals, wvals])
    order = np.argsort(src, kind="stable")
    src, dst, ww = src[order], dst[order], ww[order]
    indptr = np.zeros(field.n_sites + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, dst.astype(np.int64), ww.astype(np.float64)


def save_field(field: ConductanceField, path):
    """Self-describing binary snapshot; round-trips bit-exactly."""
    header = json.dumps({
        "dims": list(field.dims), "boundary": field.boundary, "c0": field.c0,
        "law": field.law.to_dict(), "seed": field.seed,
    })
    np.savez_compressed(path, header=np.frombuffer(header.encode(), dtype=np.uint8),
                        values=field.values)


def load_field(path) -> ConductanceField:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        values = data["values"]
    return ConductanceField(
        dims=tuple(header["dims"]), boundary=header["boundary"], c0=header["c0"],
        law=BondLaw.from_dict(header["law"]), seed=header["seed"], values=values,
    )
