"""Distances between empirical measures and empirical moment summaries.

Three Wasserstein estimators cover the desk-scale needs:

* ``wasserstein_1d``        -- exact in one dimension via order statistics;
* ``wasserstein_exact_small`` -- exact in any dimension for clouds of up to
  64 points, via the optimal assignment problem;
* ``sliced_wasserstein``    -- seeded random-projection surrogate for larger
  clouds in higher dimension.

``rho_distance_cloud`` solves the same assignment problem under the
contraction semimetric rho (built from the comparison function h and the
Lyapunov functional), which is how the distance of an initial law from a
long-run law is estimated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigurationError
from .rng import derive_stream
from .theory import ContractionConstants, LyapunovParams, h_profile


@dataclass(frozen=True)
class SampleCloud:
    """A finite, equally weighted set of points representing a measure."""

    points: np.ndarray  # (n, k)

    def __post_init__(self):
        arr = np.asarray(self.points, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ConfigurationError("a sample cloud needs at least one point")
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("sample cloud contains non-finite points")
        object.__setattr__(self, "points", arr)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _as_cloud(a) -> SampleCloud:
    return a if isinstance(a, SampleCloud) else SampleCloud(points=np.asarray(a, dtype=float))


def wasserstein_1d(a, b, p: float = 2.0, resample_seed: int = 0) -> float:
    """Exact order-p Wasserstein distance between 1-D clouds.

    Sorting both clouds realizes the optimal coupling in one dimension.
    Unequal sizes are handled by resampling the smaller cloud with
    replacement up to the larger size (deterministic in ``resample_seed``);
    the serialization helper flags when that happened.
    """
    a, b = _as_cloud(a), _as_cloud(b)
    if a.dim != 1 or b.dim != 1:
        raise ConfigurationError("wasserstein_1d requires dimension 1")
    if p < 1:
        raise ConfigurationError("order p must be >= 1")
    xa = a.points[:, 0]
    xb = b.points[:, 0]
    if xa.size != xb.size:
        rng = derive_stream(resample_seed, "wasserstein:resample")
        n = max(xa.size, xb.size)
        if xa.size < n:
            xa = xa[rng.integers(0, xa.size, size=n)]
        else:
            xb = xb[rng.integers(0, xb.size, size=n)]
    diff = np.abs(np.sort(xa) - np.sort(xb))
    return float(np.mean(diff**p) ** (1.0 / p))


def wasserstein_exact_small(a, b, p: float = 2.0) -> float:
    """Exact W_p between equal-size clouds (n <= 64) via optimal assignment.

    For equally weighted clouds of the same size the transport problem is an
    assignment problem on the cost matrix |a_i - b_j|^p.
    """
    a, b = _as_cloud(a), _as_cloud(b)
    if a.n != b.n:
        raise ConfigurationError("exact solver needs equal cloud sizes")
    if a.n > 64:
        raise ConfigurationError("exact solver is capped at 64 points")
    if a.dim != b.dim:
        raise ConfigurationError("clouds must share the dimension")
    if p < 1:
        raise ConfigurationError("order p must be >= 1")
    diff = a.points[:, None, :] - b.points[None, :, :]
    cost = np.linalg.norm(diff, axis=2) ** p
    rows, cols = linear_sum_assignment(cost)
    return float(np.mean(cost[rows, cols]) ** (1.0 / p))


def sliced_wasserstein(a, b, p: float = 2.0, n_projections: int = 128, seed: int = 0) -> float:
    """Sliced W_p: average of 1-D p-th power distances over random directions.

    Directions are uniform on the sphere (normalized Gaussian draws) from a
    stream derived from ``seed``; the estimate is deterministic given the
    seed.
    """
    a, b = _as_cloud(a), _as_cloud(b)
    if a.dim != b.dim:
        raise ConfigurationError("clouds must share the dimension")
    if p < 1:
        raise ConfigurationError("order p must be >= 1")
    rng = derive_stream(seed, "sliced:directions")
    dirs = rng.standard_normal((n_projections, a.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pa = a.points @ dirs.T  # (n, n_proj)
    pb = b.points @ dirs.T
    if pa.shape[0] != pb.shape[0]:
        # projectwise resampling would decouple the directions; resample once
        rng2 = derive_stream(seed, "sliced:resample")
        n = max(pa.shape[0], pb.shape[0])
        if pa.shape[0] < n:
            pa = pa[rng2.integers(0, pa.shape[0], size=n)]
        else:
            pb = pb[rng2.integers(0, pb.shape[0], size=n)]
    pa = np.sort(pa, axis=0)
    pb = np.sort(pb, axis=0)
    powers = np.mean(np.abs(pa - pb) ** p, axis=0)  # per-direction W_p^p
    return float(np.mean(powers) ** (1.0 / p))


def rho_distance_cloud(a, b, cc: ContractionConstants, lyap: LyapunovParams,
                       nodes: int = 4096) -> float:
    """Empirical rho-transport distance between clouds in phase space.

    Points live in R^{2d} as (x, v) concatenations. The assignment problem is
    solved exactly on the cost rho((x_i, v_i), (x_j, v_j)); the result is the
    minimum over assignments of the average rho.
    """
    a, b = _as_cloud(a), _as_cloud(b)
    if a.n != b.n:
        raise ConfigurationError("rho distance needs equal cloud sizes")
    if a.n > 64:
        raise ConfigurationError("rho distance is capped at 64 points")
    if a.dim != b.dim or a.dim % 2:
        raise ConfigurationError("phase-space clouds need even, equal dimension")
    d = a.dim // 2
    gamma = lyap.gamma
    Xa, Va = a.points[:, :d], a.points[:, d:]
    Xb, Vb = b.points[:, :d], b.points[:, d:]
    DX = Xa[:, None, :] - Xb[None, :, :]
    DXV = DX + (Va[:, None, :] - Vb[None, :, :]) / gamma
    r = cc.alpha_c * np.linalg.norm(DX, axis=2) + np.linalg.norm(DXV, axis=2)
    r_eff = np.minimum(r, cc.R_1)
    r_max = float(r_eff.max())
    if r_max <= 0.0:
        h_r = np.zeros_like(r)
    else:
        grid, h_vals = h_profile(cc, lyap.beta, gamma, r_max=r_max, nodes=nodes)
        h_r = np.interp(r_eff, grid, h_vals)
    va = lyap.value_rows(Xa, Va)
    vb = lyap.value_rows(Xb, Vb)
    cost = h_r * (1.0 + cc.epsilon_c * (va[:, None] + vb[None, :]))
    rows, cols = linear_sum_assignment(cost)
    return float(np.mean(cost[rows, cols]))


@dataclass(frozen=True)
class MomentReport:
    mean: np.ndarray
    variance: np.ndarray  # per coordinate
    radial_moment: float
    order: int


def empirical_moments(a, order: int) -> MomentReport:
    """Per-coordinate mean and variance, plus the radial moment (1/n) sum |w|^order."""
    a = _as_cloud(a)
    if order < 1:
        raise ConfigurationError("moment order must be a positive integer")
    pts = a.points
    radial = float(np.mean(np.linalg.norm(pts, axis=1) ** order))
    return MomentReport(
        mean=pts.mean(axis=0),
        variance=pts.var(axis=0),
        radial_moment=radial,
        order=order,
    )


def quad_growth_continuity_check(
    G: Callable[[np.ndarray], np.ndarray],
    grad_bound: Tuple[float, float],
    a,
    b,
    p: float,
    q: float,
):
    """Mean-difference vs transport bound for a function of linear gradient growth.

    With |grad G(w)| <= c1 |w| + c2 and Hoelder exponents 1/p + 1/q = 1,

        lhs = |mean_a G - mean_b G|,
        rhs = (c1 sigma + c2) W_p(a, b),
        sigma = (1/2) max of the q-th radial moments of the two clouds.

    The inequality lhs <= rhs is the property under test; this op only
    evaluates the two sides.
    """
    if p <= 1:
        raise ConfigurationError("p must be > 1")
    if abs(1.0 / p + 1.0 / q - 1.0) > 1e-9:
        raise ConfigurationError(f"(p, q) = ({p}, {q}) violates 1/p + 1/q = 1")
    a, b = _as_cloud(a), _as_cloud(b)
    c1, c2 = grad_bound
    ga = np.asarray(G(a.points), dtype=float)
    gb = np.asarray(G(b.points), dtype=float)
    if not (np.all(np.isfinite(ga)) and np.all(np.isfinite(gb))):
        raise ConfigurationError("G produced non-finite values")
    lhs = abs(float(ga.mean()) - float(gb.mean()))
    mo_a = np.mean(np.linalg.norm(a.points, axis=1) ** q) ** (1.0 / q)
    mo_b = np.mean(np.linalg.norm(b.points, axis=1) ** q) ** (1.0 / q)
    if not (math.isfinite(mo_a) and math.isfinite(mo_b)):
        raise ConfigurationError("clouds have non-finite q-th moments")
    sigma = 0.5 * max(mo_a, mo_b)
    rhs = (c1 * sigma + c2) * wasserstein_exact_small(a, b, p)
    return lhs, rhs


def distance_report(metric: str, value: float, p: float, n: int, method: str,
                    flags=(), indent: int = 2) -> str:
    """Serialize a distance measurement to the common JSON shape."""
    return json.dumps(
        {
            "metric": metric,
            "p": p,
            "n": n,
            "value": value,
            "method": method,
            "flags": list(flags),
        },
        indent=indent,
    )


def measure(metric: str, a, b, p: float = 2.0, seed: int = 0,
            n_projections: int = 128) -> dict:
    """Compute a distance and its report dict in one step.

    ``metric`` is one of ``w1d``, ``exact``, ``sliced``. Unequal cloud sizes
    (where the estimator resamples with replacement) are flagged.
    """
    a, b = _as_cloud(a), _as_cloud(b)
    flags = []
    if a.n != b.n:
        flags.append("resampled")
    if metric == "w1d":
        value = wasserstein_1d(a, b, p, resample_seed=seed)
        method = "order-statistics"
    elif metric == "exact":
        value = wasserstein_exact_small(a, b, p)
        method = "assignment"
    elif metric == "sliced":
        value = sliced_wasserstein(a, b, p, n_projections=n_projections, seed=seed)
        method = f"sliced-{n_projections}"
    else:
        raise ConfigurationError(f"unknown metric {metric!r}; use w1d, exact or sliced")
    return {
        "metric": metric,
        "p": p,
        "n": max(a.n, b.n),
        "value": value,
        "method": method,
        "flags": flags,
    }
