"""Empirical measures, block densities, and the replacement statistic.

The empirical measure pairs a configuration with a macroscopic test
function: pi_N[G] = N^{-d} sum_{x in C} G(x/N) eta(x). Block densities
average occupancy over the box Lambda_{x,l} = x + [-l, l]^d intersected
with the cluster, divided by the full box volume (2l+1)^d regardless of how
many cluster sites fall inside. The replacement statistic compares the
block average of g(eta) with the homogenized rate m * phi(block density / m);
its decay in l is the micro-to-macro bridge the diagnostics probe.

Test functions live on the unit torus: trigonometric polynomials and smooth
compact bumps, both with analytic Laplacians so corrected test functions
can be assembled without numerical differentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .environment import ClusterLabeling
from .errors import ValidationError
from .fugacity import FugacityTable, JumpRateFn

__all__ = [
    "TrigPolynomial",
    "Bump",
    "builtin_test_function",
    "site_points",
    "periodic_box_sum",
    "block_density",
    "block_density_field",
    "empirical_measure",
    "EmpiricalMeasure",
    "replacement_statistic",
]


# ---------------------------------------------------------------------------
# test functions on the unit torus


class TrigPolynomial:
    """Finite combination of cos/sin modes: sum_i c_i trig(2 pi k_i . u)."""

    def __init__(self, modes):
        # modes: list of (coef, wavevector tuple, "cos" | "sin")
        self.modes = [(float(c), tuple(int(x) for x in k), kind) for c, k, kind in modes]

    def value(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        out = np.zeros(points.shape[0])
        for c, k, kind in self.modes:
            phase = 2.0 * math.pi * (points @ np.asarray(k, dtype=np.float64))
            out += c * (np.cos(phase) if kind == "cos" else np.sin(phase))
        return out

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        out = np.zeros(points.shape[0])
        for c, k, kind in self.modes:
            k = np.asarray(k, dtype=np.float64)
            phase = 2.0 * math.pi * (points @ k)
            lam = -4.0 * math.pi ** 2 * float(k @ k)
            out += c * lam * (np.cos(phase) if kind == "cos" else np.sin(phase))
        return out

    def decayed(self, factor_fn) -> "TrigPolynomial":
        """New polynomial with each coefficient scaled by factor_fn(|k|^2)."""
        return TrigPolynomial(
            [(c * factor_fn(sum(x * x for x in k)), k, kind) for c, k, kind in self.modes])

    def lip_bound(self) -> float:
        """sup-norm bound on the gradient: sum |c| 2 pi |k|_1 per coordinate,
        summed as an l-infinity Lipschitz constant."""
        return sum(abs(c) * 2.0 * math.pi * sum(abs(x) for x in k)
                   for c, k, kind in self.modes)

    def abs_integral(self) -> float:
        """integral of |G| over the torus, by midpoint quadrature."""
        n = 256
        d = len(self.modes[0][1])
        axes = [np.arange(n) / n + 0.5 / n] * d
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        return float(np.abs(self.value(pts)).mean())


class Bump:
    """Smooth bump exp(1 - 1/(1 - s)) with s = |u - center|^2 / radius^2 < 1,
    zero outside; periodic via minimum-image displacement (radius < 1/2)."""

    def __init__(self, center, radius: float, coef: float = 1.0):
        self.center = np.asarray(center, dtype=np.float64)
        if not 0.0 < radius < 0.5:
            raise ValidationError("bump radius must lie in (0, 1/2) on the torus")
        self.radius = float(radius)
        self.coef = float(coef)

    def _s(self, points):
        points = np.atleast_2d(points)
        disp = points - self.center
        disp -= np.round(disp)  # minimum image on the unit torus
        return np.sum((disp / self.radius) ** 2, axis=1), disp

    def value(self, points: np.ndarray) -> np.ndarray:
        s, _ = self._s(points)
        out = np.zeros(s.shape)
        inside = s < 1.0
        out[inside] = self.coef * np.exp(1.0 - 1.0 / (1.0 - s[inside]))
        return out

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        s, disp = self._s(points)
        out = np.zeros(s.shape)
        inside = s < 0.999999999
        si = s[inside]
        one = 1.0 - si
        psi = self.coef * np.exp(1.0 - 1.0 / one)
        dpsi = -psi / one ** 2
        d2psi = psi / one ** 4 - 2.0 * psi / one ** 3
        d = disp.shape[1]
        grad_s_sq = 4.0 * si / self.radius ** 2
        lap_s = 2.0 * d / self.radius ** 2
        out[inside] = d2psi * grad_s_sq + dpsi * lap_s
        return out

    def lip_bound(self) -> float:
        # sampled gradient bound with a safety margin
        r = np.linspace(0.0, 0.999, 4000)
        one = 1.0 - r ** 2
        dpsi = np.abs(-np.exp(1.0 - 1.0 / one) / one ** 2) * 2.0 * r / self.radius
        return float(abs(self.coef) * dpsi.max() * 1.05)

    def abs_integral(self) -> float:
        n = 256
        d = len(self.center)
        axes = [np.arange(n) / n + 0.5 / n] * d
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        return float(np.abs(self.value(pts)).mean())


def builtin_test_function(name: str, d: int = 2):
    """Builtin macroscopic test functions used by the experiment harness."""
    if name == "one":
        return TrigPolynomial([(1.0, (0,) * d, "cos")])
    if name == "cosx":
        return TrigPolynomial([(1.0, (1,) + (0,) * (d - 1), "cos")])
    if name == "sinx":
        return TrigPolynomial([(1.0, (1,) + (0,) * (d - 1), "sin")])
    if name == "sin3x":
        return TrigPolynomial([(1.0, (3,) + (0,) * (d - 1), "sin")])
    if name == "sincos":
        if d < 2:
            raise ValidationError("sincos needs d >= 2")
        return TrigPolynomial([(1.0, (1, 1) + (0,) * (d - 2), "sin")])
    if name == "cos2x":
        return TrigPolynomial([(1.0, (2,) + (0,) * (d - 1), "cos")])
    if name == "bump":
        return Bump(center=(0.5,) * d, radius=0.3)
    raise ValidationError(f"unknown test function {name!r}")


def site_points(dims, N: int) -> np.ndarray:
    """Macroscopic coordinates x/N of every box site, flat order, shape (n, d)."""
    idx = np.indices(dims).reshape(len(dims), -1).T
    return idx.astype(np.float64) / float(N)


# ---------------------------------------------------------------------------
# block sums


def periodic_box_sum(arr: np.ndarray, ell: int) -> np.ndarray:
    """Sum of arr over the cube x + [-ell, ell]^d for every x, periodic wrap.

    Separable exact prefix sums per axis; int64 input stays exact. Requires
    2*ell + 1 <= side along every axis so no site is counted twice.
    """
    if ell < 0:
        raise ValidationError("block radius must be nonnegative")
    out = arr
    for axis, side in enumerate(arr.shape):
        if 2 * ell + 1 > side:
            raise ValidationError(
                f"block of side {2 * ell + 1} exceeds window side {side}")
        padded = np.concatenate(
            [np.take(out, range(side - ell, side), axis=axis), out,
             np.take(out, range(0, ell), axis=axis)], axis=axis)
        csum = np.cumsum(padded, axis=axis)
        lead = np.take(csum, range(2 * ell, 2 * ell + side), axis=axis)
        lag = np.concatenate(
            [np.take(csum, [0], axis=axis) * 0,
             np.take(csum, range(0, side - 1), axis=axis)], axis=axis)
        out = lead - lag
    return out


def block_density_field(occupancy, dims, ell: int, mask=None) -> np.ndarray:
    """eta^ell(x) for every box site x: block sum / (2 ell + 1)^d.

    mask restricts the summed sites (the cluster, per the paper convention);
    the divisor stays the full box volume.
    """
    occ = np.asarray(occupancy, dtype=np.int64).reshape(dims)
    if mask is not None:
        occ = occ * np.asarray(mask, dtype=np.int64).reshape(dims)
    vol = (2 * ell + 1) ** len(dims)
    return periodic_box_sum(occ, ell) / float(vol)


def block_density(config_occupancy, labeling: ClusterLabeling, x, ell: int) -> float:
    """eta^ell(x) at one site, over the giant cluster of the labeling."""
    fld = block_density_field(config_occupancy, labeling.dims, ell,
                              mask=labeling.giant_mask())
    return float(fld[tuple(np.asarray(x) % np.array(labeling.dims))])


# ---------------------------------------------------------------------------
# empirical measure


def empirical_measure(occupancy, G_values, N: int, d: int, mask=None) -> float:
    """pi_N[G] = N^{-d} sum_x G(x/N) eta(x) over the masked sites.

    G_values are the test function values at the flat box sites (same order
    as occupancy); mask defaults to all sites.
    """
    occ = np.asarray(occupancy, dtype=np.float64).ravel()
    g = np.asarray(G_values, dtype=np.float64).ravel()
    if mask is not None:
        occ = occ * np.asarray(mask, dtype=np.float64).ravel()
    return float(np.dot(occ, g) / float(N) ** d)


class EmpiricalMeasure:
    """pi_N for one (configuration, labeling, N) triple, with block smoothing."""

    def __init__(self, occupancy, labeling: ClusterLabeling, N: int,
                 cluster_only: bool = True):
        self.occupancy = np.asarray(occupancy, dtype=np.int32).ravel()
        self.labeling = labeling
        self.N = int(N)
        self.dims = labeling.dims
        self.mask = labeling.giant_mask() if cluster_only else None
        self._points = None

    def points(self) -> np.ndarray:
        if self._points is None:
            self._points = site_points(self.dims, self.N)
        return self._points

    def of(self, G) -> float:
        """pi_N[G] for a test function object or an array of site values."""
        vals = G if isinstance(G, np.ndarray) else G.value(self.points())
        occ = self.occupancy * (self.mask if self.mask is not None else 1)
        return float(occ @ vals / float(self.N) ** len(self.dims))

    def block_density(self, x, ell: int) -> float:
        return block_density(self.occupancy, self.labeling, x, ell)

    def smoothed(self, ell: int) -> np.ndarray:
        return block_density_field(self.occupancy, self.dims, ell, mask=self.mask)


# ---------------------------------------------------------------------------
# replacement statistic


def replacement_statistic(occupancy, labeling: ClusterLabeling, rate_fn: JumpRateFn,
                          ell: int, m_hat: float, phi_interp=None):
    """Spatial average over the window of

        V_ell(x) = | Av_{y in Lambda_{x,ell} cap C} g(eta(y))
                     - m * phi(eta^ell(x) / m) |

    with the block average of g over the full box volume. Block densities
    whose rescaled value falls outside the interpolator range are clamped;
    the clamp count is returned alongside the mean.
    """
    if ell < 1:
        raise ValidationError("block radius ell must be >= 1")
    if m_hat <= 0:
        raise ValidationError("m_hat must be positive")
    dims = labeling.dims
    mask = labeling.giant_mask().reshape(dims)
    occ = np.asarray(occupancy, dtype=np.int64).reshape(dims)
    vol = float((2 * ell + 1) ** len(dims))

    g_vals = np.asarray(rate_fn(occ), dtype=np.float64) * mask
    g_block = periodic_box_sum(g_vals, ell) / vol
    eta_block = periodic_box_sum(occ * mask, ell) / vol

    rho = eta_block / m_hat
    if phi_interp is None:
        table = FugacityTable(rate_fn)
        phi_interp = table.phi_of_density_interpolator(max(float(rho.max()), 1e-6) * 1.1)
    lo, hi = phi_interp.x[0], phi_interp.x[-1]
    clamped = int(np.count_nonzero((rho < lo) | (rho > hi)))
    rho_c = np.clip(rho, lo, hi)
    v = np.abs(g_block - m_hat * phi_interp(rho_c))
    return float(v.mean()), clamped
