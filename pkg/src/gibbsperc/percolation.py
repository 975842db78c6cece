"""Boolean model Z_R, cluster labelling, window-crossing percolation proxies
and critical-activity estimation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import Configuration, GridIndex, Window, as_rng
from .models import GibbsModel, PoissonModel
from .sampler import BirthDeathChain, cftp_sample, default_burn_in, sample_poisson


class BracketError(RuntimeError):
    """Stochastic bisection could not bracket the 0.5-crossing level."""


def _seed_seq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


@dataclass(frozen=True)
class BooleanModel:
    """Union of open radius-R balls around the points of a configuration."""

    config: Configuration
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("Boolean-model radius must be > 0")


class UnionFind:
    """Array union-find with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)
        self.merges = 0

    def find(self, a: int) -> int:
        parent = self.parent
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.merges += 1
        return True


@dataclass(frozen=True)
class ClusterLabels:
    """Union-find partition of points under the 2R-overlap relation."""

    labels: np.ndarray
    n_clusters: int
    sizes: np.ndarray
    merges: int
    crossing_axes: tuple[bool, ...]


def label_clusters(bm: BooleanModel) -> ClusterLabels:
    """Connected components of the ball union: open balls intersect iff the
    centre distance is strictly below 2R. Neighbour search runs on a uniform
    grid of cell side 2R, O(n * mean occupancy)."""
    pts = bm.config.points
    n = len(pts)
    window = bm.config.window
    d = window.dim
    if n == 0:
        return ClusterLabels(np.empty(0, dtype=np.int64), 0, np.empty(0, np.int64), 0, (False,) * d)
    two_r = 2.0 * bm.radius
    uf = UnionFind(n)
    grid = GridIndex(pts, two_r)
    for i in range(n):
        cand = grid.neighborhood(pts[i])
        cand = cand[cand > i]
        if cand.size == 0:
            continue
        close = cand[np.linalg.norm(pts[cand] - pts[i], axis=1) < two_r]
        for j in close:
            uf.union(i, int(j))
    roots = np.array([uf.find(i) for i in range(n)])
    uniq, labels = np.unique(roots, return_inverse=True)
    sizes = np.bincount(labels)

    crossing = []
    lo = np.asarray(window.lower)
    hi = np.asarray(window.upper)
    for axis in range(d):
        touch_lo = np.zeros(len(uniq), dtype=bool)
        touch_hi = np.zeros(len(uniq), dtype=bool)
        near_lo = pts[:, axis] - lo[axis] < bm.radius
        near_hi = hi[axis] - pts[:, axis] < bm.radius
        np.logical_or.at(touch_lo, labels, near_lo)
        np.logical_or.at(touch_hi, labels, near_hi)
        crossing.append(bool(np.any(touch_lo & touch_hi)))
    return ClusterLabels(labels, len(uniq), sizes, uf.merges, tuple(crossing))


def crossing(bm: BooleanModel, axis: int = 0) -> bool:
    """True iff some cluster's ball union touches both opposite window faces
    along ``axis`` (a point within R of each face)."""
    return label_clusters(bm).crossing_axes[axis]


def brute_force_labels(bm: BooleanModel) -> np.ndarray:
    """O(n^2) transitive closure of the overlap relation (test oracle)."""
    pts = bm.config.points
    n = len(pts)
    uf = UnionFind(n)
    two_r = 2.0 * bm.radius
    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(pts[i] - pts[j]) < two_r:
                uf.union(i, j)
    roots = np.array([uf.find(i) for i in range(n)])
    return np.unique(roots, return_inverse=True)[1]


def _draw(model: GibbsModel, window: Window, omega, sampler: str, seed, mcmc_steps=None):
    if sampler == "exact":
        if not isinstance(model, PoissonModel):
            raise ValueError("sampler='exact' is only available for the Poisson model")
        return sample_poisson(model.beta, window, seed)
    if sampler == "mcmc":
        steps = mcmc_steps if mcmc_steps is not None else default_burn_in(model, window)
        return BirthDeathChain(model, window, omega, seed).run(steps).state()
    if sampler == "cftp":
        run = cftp_sample(model, window, omega, seed)
        if not run.coalesced:
            raise RuntimeError("cftp did not coalesce; increase max_epochs or use mcmc")
        return run.retained
    raise ValueError(f"unknown sampler {sampler!r} (use exact | mcmc | cftp)")


def perc_probability(
    model: GibbsModel,
    R: float,
    L: float,
    n_reps: int,
    sampler: str = "exact",
    seed=0,
    d: int = 2,
    omega=None,
    axis: int = 0,
    mcmc_steps: int | None = None,
) -> tuple[float, float]:
    """Fraction of independent samples on [0, L]^d whose Boolean model
    crosses the window along ``axis``, with a 95% normal CI half-width."""
    if L < 4.0 * R:
        warnings.warn(f"window side L={L} below the recommended 4R={4 * R}", stacklevel=2)
    window = Window.cube(L, d)
    seeds = _seed_seq(seed).spawn(n_reps)
    hits = 0
    for s in seeds:
        config = _draw(model, window, omega, sampler, s, mcmc_steps)
        if crossing(BooleanModel(config, R), axis):
            hits += 1
    frac = hits / n_reps
    ci = 1.96 * math.sqrt(frac * (1.0 - frac) / n_reps)
    return frac, ci


def poisson_coupled_fractions(
    beta_grid,
    R: float,
    L: float,
    n_reps: int,
    seed=0,
    d: int = 2,
    axis: int = 0,
    return_indicators: bool = False,
):
    """Crossing fractions over a beta grid with a shared coupled thinning.

    Every replication draws one Poisson(beta_max) pattern plus iid uniform
    marks and keeps the points with mark < beta/beta_max. Each thinned
    pattern is labelled independently, so per-replication monotonicity of
    the indicators is a geometric fact, not a code shortcut; set
    ``return_indicators`` to inspect it.
    """
    betas = np.sort(np.asarray(beta_grid, dtype=float))
    beta_max = betas[-1]
    window = Window.cube(L, d)
    indicators = np.zeros((n_reps, len(betas)), dtype=bool)
    seeds = _seed_seq(seed).spawn(n_reps)
    for rep, s in enumerate(seeds):
        rng = as_rng(s)
        n = rng.poisson(beta_max * window.volume)
        pts = window.sample_uniform(n, rng)
        marks = rng.random(n)
        for bi, beta in enumerate(betas):
            sub = pts[marks < beta / beta_max]
            config = Configuration(sub, window)
            indicators[rep, bi] = crossing(BooleanModel(config, R), axis)
    fractions = indicators.mean(axis=0)
    if return_indicators:
        return fractions, indicators
    return fractions


def wilson_ci(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return centre - half, centre + half


@dataclass(frozen=True)
class BetaCEstimate:
    """Per-window threshold estimates beta_hat(L) and the finite-size trend.

    ``estimate`` is the value at the largest window; no convergence rate is
    claimed.
    """

    per_L: dict
    estimate: float


def _crossing_fraction(make_model, beta, R, L, n_reps, sampler, seed, d, axis, mcmc_steps):
    frac, _ = perc_probability(
        make_model(beta), R, L, n_reps, sampler=sampler, seed=seed, d=d, axis=axis,
        mcmc_steps=mcmc_steps,
    )
    return frac


def estimate_beta_c(
    make_model: Callable[[float], GibbsModel],
    R: float,
    L_list,
    tol: float = 0.05,
    seed=0,
    n_reps: int = 200,
    sampler: str = "exact",
    d: int = 2,
    axis: int = 0,
    beta_bracket: tuple[float, float] | None = None,
    max_probes: int = 40,
    mcmc_steps: int | None = None,
    bracket_rtol: float = 0.01,
) -> BetaCEstimate:
    """Stochastic bisection of the 0.5 crossing level per window size.

    Probes use fixed n_reps and Wilson intervals; a probe moves the bracket
    when its CI excludes 0.5 and is accepted as beta_hat once the CI
    straddles 0.5 with width below ``tol``. A flat response curve raises
    BracketError.
    """
    L_list = sorted(float(L) for L in L_list)
    if tol <= 0:
        raise ValueError("tol must be > 0")
    root = _seed_seq(seed)
    per_L: dict[float, dict] = {}
    for L in L_list:
        sub = root.spawn(1)[0]
        probe_seeds = iter(sub.spawn(max_probes + 64))

        def frac_at(beta):
            s = next(probe_seeds)
            f = _crossing_fraction(
                make_model, beta, R, L, n_reps, sampler, s, d, axis, mcmc_steps
            )
            return f, wilson_ci(round(f * n_reps), n_reps)

        if beta_bracket is not None:
            lo, hi = beta_bracket
        else:
            lo, hi = 0.25 / (R**d), 4.0 / (R**d)
        f_lo, ci_lo = frac_at(lo)
        scans = 0
        while ci_lo[1] >= 0.5 and scans < 8:
            lo /= 2.0
            f_lo, ci_lo = frac_at(lo)
            scans += 1
        f_hi, ci_hi = frac_at(hi)
        scans = 0
        while ci_hi[0] <= 0.5 and scans < 8:
            hi *= 2.0
            f_hi, ci_hi = frac_at(hi)
            scans += 1
        if ci_lo[1] >= 0.5 or ci_hi[0] <= 0.5:
            raise BracketError(
                f"could not bracket the 0.5 crossing level for L={L}: "
                f"fraction at beta={lo:.4g} has CI {ci_lo}, at beta={hi:.4g} CI {ci_hi}"
            )
        beta_hat = None
        for _ in range(max_probes):
            mid = 0.5 * (lo + hi)
            f, ci = frac_at(mid)
            if ci[0] > 0.5:
                hi = mid
            elif ci[1] < 0.5:
                lo = mid
            elif ci[1] - ci[0] < tol or (hi - lo) / mid < bracket_rtol:
                beta_hat = mid
                break
            else:
                # CI straddles 0.5 but is too wide: tighten by halving toward
                # the side the point estimate favours.
                if f >= 0.5:
                    hi = mid
                else:
                    lo = mid
        if beta_hat is None:
            beta_hat = 0.5 * (lo + hi)
        per_L[L] = {"beta_hat": beta_hat, "bracket": (lo, hi), "L": L}
    return BetaCEstimate(per_L, per_L[L_list[-1]]["beta_hat"])


def slice_crossing(config: Configuration, R: float, axes: tuple[int, int] = (0, 1), offset: float = 0.0) -> bool:
    """2-D slice diagnostic for d >= 3: intersect Z_R with a coordinate
    plane and test crossing of the resulting variable-radius disc traces.
    Diagnostic only; O(n^2)."""
    pts = config.points
    d = config.dim
    if d < 3:
        raise ValueError("slice_crossing is a d >= 3 diagnostic; use crossing for d = 2")
    other = [i for i in range(d) if i not in axes]
    arg = R**2 - np.sum((pts[:, other] - offset) ** 2, axis=1)
    keep = arg > 0
    centers = pts[keep][:, list(axes)]
    radii = np.sqrt(arg[keep])
    n = len(centers)
    if n == 0:
        return False
    uf = UnionFind(n)
    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(centers[i] - centers[j]) < radii[i] + radii[j]:
                uf.union(i, j)
    roots = np.array([uf.find(i) for i in range(n)])
    lo = config.window.lower[axes[0]]
    hi = config.window.upper[axes[0]]
    for root in np.unique(roots):
        mask = roots == root
        if np.any(centers[mask, 0] - lo < radii[mask]) and np.any(
            hi - centers[mask, 0] < radii[mask]
        ):
            return True
    return False
