"""Gibbs model catalog: conditional intensities, condition (P), stability.

Every model exposes the activity split lambda(x|xi) = beta * lambda_tilde,
evaluated through ``log_lambda_tilde``. Model objects are immutable and
their evaluations are pure, so they can be shared across parallel samplers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import as_rng, unit_ball_volume, uncovered_disc_area, Window

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29)


class UnsupportedModelError(ValueError):
    """Raised when an operation has no certified constants for the model."""


class NotLocallyStableError(ValueError):
    """Raised when a locally stable model is required but none is available."""


@dataclass(frozen=True)
class ConditionP:
    """Constants (r, delta) of the isolated-insertion lower bound."""

    r: float
    delta: float


@dataclass(frozen=True)
class RadialStep:
    """Right-continuous radial step function.

    ``phi(t) = values[i]`` for t in [breaks[i], breaks[i+1]), with the last
    value holding beyond the final break. ``breaks[0]`` must be 0.
    """

    breaks: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        breaks = tuple(float(b) for b in self.breaks)
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "values", values)
        if len(breaks) != len(values) or not breaks:
            raise ValueError("breaks and values must be nonempty and equal length")
        if breaks[0] != 0.0:
            raise ValueError("the first break must be 0")
        if any(a >= b for a, b in zip(breaks, breaks[1:])):
            raise ValueError("breaks must be strictly increasing")
        if any(v < 0 for v in values):
            raise ValueError("phi must be nonnegative")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breaks, t, side="right") - 1
        return np.asarray(self.values, dtype=float)[idx]

    @property
    def sup(self) -> float:
        return max(self.values)

    @property
    def hard_core_radius(self) -> float:
        """Largest t0 with phi = 0 on [0, t0); 0 if there is no hard core."""
        r = 0.0
        for b, v, nxt in zip(self.breaks, self.values, self.breaks[1:] + (math.inf,)):
            if v == 0.0 and b == r:
                r = nxt
            else:
                break
        return 0.0 if math.isinf(r) else r

    @property
    def interaction_range(self) -> float:
        """Distance beyond which phi is identically 1; inf if it never is."""
        if self.values[-1] != 1.0:
            return math.inf
        rng = self.breaks[-1]
        for b, v in zip(reversed(self.breaks), reversed(self.values)):
            if v == 1.0:
                rng = b
            else:
                break
        return rng


class GibbsModel:
    """Base class; subclasses define log lambda_tilde(x | xi)."""

    beta: float
    kind: str = "gibbs"

    def log_lambda_tilde(self, x, others: np.ndarray) -> float:
        raise NotImplementedError

    def lambda_tilde(self, x, others: np.ndarray) -> float:
        return math.exp(self.log_lambda_tilde(x, others))

    def conditional_intensity(self, x, others: np.ndarray) -> float:
        """lambda(x | xi) = beta * lambda_tilde(x | xi); requires x not in xi."""
        others = _as_points(others, x)
        if len(others) and np.any(np.all(others == np.asarray(x, dtype=float), axis=1)):
            raise ValueError("conditional intensity requires x not already in xi")
        return self.beta * math.exp(self.log_lambda_tilde(x, others))

    @property
    def reach(self) -> float:
        """Interaction range: points farther from the window never matter."""
        return math.inf

    @property
    def monotonicity(self) -> str:
        """'decreasing', 'increasing' or 'none': effect of adding points."""
        return "none"

    def params(self) -> dict:
        return {"kind": self.kind, "beta": self.beta}


def _as_points(pts, like) -> np.ndarray:
    d = np.asarray(like, dtype=float).reshape(-1).shape[0]
    if pts is None:
        return np.empty((0, d))
    arr = np.asarray(pts, dtype=float)
    if arr.size == 0:
        return np.empty((0, d))
    return np.atleast_2d(arr)


@dataclass(frozen=True)
class PoissonModel(GibbsModel):
    """No interaction: lambda(x | xi) = beta."""

    beta: float
    kind: str = "poisson"

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("activity beta must be >= 0")

    def log_lambda_tilde(self, x, others) -> float:
        return 0.0

    @property
    def reach(self) -> float:
        return 0.0

    @property
    def monotonicity(self) -> str:
        return "decreasing"  # constant, either funnel direction is valid


@dataclass(frozen=True)
class PairwiseModel(GibbsModel):
    """Pairwise interaction: lambda(x | xi) = beta * prod_y phi(|x - y|).

    ``interaction_class`` declares the structure used for condition (P):
    'i'  -- phi >= 1 beyond r,
    'ii' -- hard core below r, phi >= delta_tilde on [r, r_max), 1 beyond.
    """

    beta: float
    phi: RadialStep
    interaction_class: str | None = None
    kind: str = "pairwise"

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("activity beta must be > 0")
        if self.interaction_class not in (None, "i", "ii"):
            raise ValueError("interaction_class must be 'i', 'ii' or None")

    def log_lambda_tilde(self, x, others) -> float:
        others = _as_points(others, x)
        if len(others) == 0:
            return 0.0
        dists = np.linalg.norm(others - np.asarray(x, dtype=float), axis=1)
        vals = self.phi(dists)
        if np.any(vals == 0.0):
            return -math.inf
        return float(np.sum(np.log(vals)))

    @property
    def reach(self) -> float:
        return self.phi.interaction_range

    @property
    def monotonicity(self) -> str:
        if self.phi.sup <= 1.0:
            return "decreasing"
        return "none"

    def params(self) -> dict:
        return {
            "kind": self.kind,
            "beta": self.beta,
            "breaks": list(self.phi.breaks),
            "values": list(self.phi.values),
            "interaction_class": self.interaction_class,
        }


@dataclass(frozen=True)
class AreaModel(GibbsModel):
    """Area-interaction: lambda(x | xi) = beta * gamma^(-U) with U the area of
    B_r0(x) left uncovered by the discs around xi.

    In d = 2 the uncovered area is computed exactly from circle-boundary
    arcs, which makes intensity/weight identities hold to float precision.
    In d >= 3 a fixed low-discrepancy node pattern inside the ball is used;
    the identities then hold only to the pattern's integration error.
    """

    beta: float
    gamma: float
    r0: float
    qmc_nodes: int = 4096
    kind: str = "area"

    def __post_init__(self):
        if self.beta <= 0 or self.gamma <= 0 or self.r0 <= 0:
            raise ValueError("area-interaction requires beta, gamma, r0 > 0")

    def uncovered(self, x, others) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        others = _as_points(others, x)
        d = x.shape[0]
        if d == 2:
            return uncovered_disc_area(x, others, self.r0)
        full = unit_ball_volume(d) * self.r0**d
        if len(others) == 0:
            return full
        near = others[np.linalg.norm(others - x, axis=1) < 2.0 * self.r0]
        if len(near) == 0:
            return full
        nodes = x + self.r0 * _ball_pattern(d, self.qmc_nodes)
        dist = np.min(
            np.linalg.norm(nodes[:, None, :] - near[None, :, :], axis=2), axis=1
        )
        return full * float(np.mean(dist >= self.r0))

    def log_lambda_tilde(self, x, others) -> float:
        return -math.log(self.gamma) * self.uncovered(x, others)

    @property
    def reach(self) -> float:
        return 2.0 * self.r0

    @property
    def monotonicity(self) -> str:
        return "decreasing" if self.gamma <= 1.0 else "increasing"

    def lambda_tilde_range(self, d: int = 2) -> tuple[float, float]:
        """Bounds on lambda_tilde: {1, gamma^(-alpha_d r0^d)} ordered by gamma."""
        span = self.gamma ** -(unit_ball_volume(d) * self.r0**d)
        return (min(1.0, span), max(1.0, span))

    def params(self) -> dict:
        return {"kind": self.kind, "beta": self.beta, "gamma": self.gamma, "r0": self.r0}


def _radical_inverse(index: int, base: int) -> float:
    inv = 0.0
    denom = 1.0
    while index > 0:
        index, digit = divmod(index, base)
        denom *= base
        inv += digit / denom
    return inv


@lru_cache(maxsize=8)
def _ball_pattern(d: int, n: int) -> np.ndarray:
    """First n Halton points of [-1, 1]^d falling inside the unit ball."""
    pts = []
    idx = 1
    while len(pts) < n:
        p = np.array([2.0 * _radical_inverse(idx, _PRIMES[j]) - 1.0 for j in range(d)])
        if np.dot(p, p) < 1.0:
            pts.append(p)
        idx += 1
    out = np.asarray(pts)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------

def poisson(beta: float) -> PoissonModel:
    return PoissonModel(beta)


def hard_core(beta: float, r: float) -> PairwiseModel:
    """phi = 1{|x - y| >= r}; inhibitory, satisfies class (i) with delta = 1."""
    if r <= 0:
        raise ValueError("hard-core radius must be > 0")
    return PairwiseModel(beta, RadialStep((0.0, r), (0.0, 1.0)), interaction_class="i")


def strauss_hard_core(beta: float, r: float, r_max: float, level: float) -> PairwiseModel:
    """Hard core below r, phi = level on [r, r_max), phi = 1 beyond (class ii)."""
    if not 0 < r < r_max:
        raise ValueError("require 0 < r < r_max")
    if not 0 < level:
        raise ValueError("step level delta_tilde must be > 0")
    return PairwiseModel(
        beta, RadialStep((0.0, r, r_max), (0.0, level, 1.0)), interaction_class="ii"
    )


def attractive_tail(beta: float, r: float, table: RadialStep | None = None) -> PairwiseModel:
    """phi >= 1 at distances >= r (class i); default has a mild bump after r."""
    if table is None:
        table = RadialStep((0.0, r, 2.0 * r), (0.5, 1.5, 1.0))
    t = np.asarray(table.breaks)
    v = np.asarray(table.values)
    if np.any(v[t >= r] < 1.0) or (table(r) < 1.0):
        raise ValueError("attractive-tail table must have phi >= 1 beyond r")
    return PairwiseModel(beta, table, interaction_class="i")


def area_interaction(beta: float, gamma: float, r0: float, qmc_nodes: int = 4096) -> AreaModel:
    return AreaModel(beta, gamma, r0, qmc_nodes)


# ---------------------------------------------------------------------------
# weights and identities
# ---------------------------------------------------------------------------

def conditional_intensity(model: GibbsModel, x, xi) -> float:
    """lambda(x | xi) = beta * lambda_tilde(x | xi) for any catalog model."""
    return model.conditional_intensity(x, xi)


def log_weight(model: GibbsModel, xi, omega=None) -> float:
    """log of the unnormalized weight u_{Lambda,omega}(xi).

    Built multiplicatively: u(empty) = 1 and u(xi + x) = u(xi) * lambda(x |
    xi + omega), inserting the points of xi in lexicographic order. The
    value is order-independent (a tested property); hard-core violations
    give -inf.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.size == 0:
        return 0.0
    xi = np.atleast_2d(xi)
    omega = np.empty((0, xi.shape[1])) if omega is None else np.atleast_2d(
        np.asarray(omega, dtype=float)
    )
    if omega.size == 0:
        omega = np.empty((0, xi.shape[1]))
    order = np.lexsort(xi.T[::-1])
    xi = xi[order]
    total = 0.0
    for i in range(len(xi)):
        others = np.vstack([xi[:i], omega]) if len(omega) else xi[:i]
        lam_t = model.log_lambda_tilde(xi[i], others)
        if math.isinf(lam_t) and lam_t < 0:
            return -math.inf
        total += math.log(model.beta) + lam_t
    return total


def weight(model: GibbsModel, xi, omega=None) -> float:
    lw = log_weight(model, xi, omega)
    return 0.0 if lw == -math.inf else math.exp(lw)


# ---------------------------------------------------------------------------
# condition (P)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionPReport:
    passed: bool
    min_lambda_tilde: float
    witness: tuple | None
    analytic: ConditionP | None
    trials_used: int


def packing_bound(d: int, r: float, r_max: float) -> int:
    """Volume-ratio upper bound on the number of r/2-balls packable in a
    ball of radius r_max + r/2: floor(((r_max + r) / (r/2))^d)."""
    if not 0 < r <= r_max:
        raise ValueError("require 0 < r <= r_max")
    return int(math.floor(((r_max + r) / (r / 2.0)) ** d + 1e-12))


def derive_condition_p(model: GibbsModel, d: int = 2) -> ConditionP:
    """Analytic (r, delta) for the built-in families.

    Pairwise class (i): (r, 1). Class (ii): (r, delta_tilde^m) with the
    volume-ratio packing bound m (conservative: any upper bound on the
    packing number yields a valid, smaller delta). Area-interaction: holds
    for every r > 0 with delta = min(1, gamma^(-alpha_d r0^d)); r0 is
    returned as the conventional radius.
    """
    if isinstance(model, PoissonModel):
        return ConditionP(r=0.0, delta=1.0)
    if isinstance(model, AreaModel):
        span = model.gamma ** -(unit_ball_volume(d) * model.r0**d)
        return ConditionP(r=model.r0, delta=min(1.0, span))
    if isinstance(model, PairwiseModel):
        if model.interaction_class == "i":
            # smallest separation beyond which phi >= 1 everywhere
            r = 0.0
            for v, nxt in zip(model.phi.values, model.phi.breaks[1:] + (math.inf,)):
                if v < 1.0:
                    r = nxt
            if math.isinf(r):
                raise UnsupportedModelError("phi < 1 on an unbounded tail; class (i) fails")
            return ConditionP(r=r, delta=1.0)
        if model.interaction_class == "ii":
            r = model.phi.hard_core_radius
            if r <= 0:
                raise UnsupportedModelError("class (ii) requires a hard core")
            r_max = model.phi.interaction_range
            if math.isinf(r_max):
                raise UnsupportedModelError("class (ii) requires finite range")
            vals = [
                v
                for b, v in zip(model.phi.breaks, model.phi.values)
                if r <= b < r_max and v > 0
            ]
            delta_tilde = min(vals) if vals else 1.0
            if delta_tilde >= 1.0:
                return ConditionP(r=r, delta=1.0)
            m = packing_bound(d, r, r_max)
            return ConditionP(r=r, delta=delta_tilde**m)
    raise UnsupportedModelError(f"no condition (P) constants for {model!r}")


def _admissible_sample(model: GibbsModel, window: Window, rate: float, rng) -> np.ndarray:
    """A configuration with positive weight (hard-core pairs removed)."""
    n = rng.poisson(rate * window.volume)
    pts = window.sample_uniform(n, rng)
    hc = 0.0
    if isinstance(model, PairwiseModel):
        hc = model.phi.hard_core_radius
    if hc > 0 and len(pts) > 1:
        kept: list[np.ndarray] = []
        for p in pts:
            if all(np.linalg.norm(p - q) >= hc for q in kept):
                kept.append(p)
        pts = np.asarray(kept) if kept else np.empty((0, window.dim))
    return pts


def check_condition_p(
    model: GibbsModel,
    r: float,
    delta: float,
    trials: int,
    seed,
    d: int = 2,
    window: Window | None = None,
) -> ConditionPReport:
    """Randomized falsification of lambda_tilde >= delta at separation r.

    Samples admissible configurations and probe points at distance >= r
    from them; a failure is a certified counterexample and the witness
    (x, xi) is returned. For built-in families the analytic constants are
    attached for comparison.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = as_rng(seed)
    if window is None:
        side = max(1.0, 4.0 * r, 2.0 * (0.0 if math.isinf(model.reach) else model.reach))
        window = Window.cube(side, d)
    try:
        analytic = derive_condition_p(model, d=d)
    except UnsupportedModelError:
        analytic = None
    rate = 8.0 / max(window.volume, 1e-12)
    worst = math.inf
    witness = None
    used = 0
    for _ in range(trials):
        xi = _admissible_sample(model, window, rate, rng)
        x = None
        for _ in range(64):
            cand = window.sample_uniform(1, rng)[0]
            if len(xi) == 0 or np.min(np.linalg.norm(xi - cand, axis=1)) >= r:
                x = cand
                break
        if x is None:
            continue
        used += 1
        val = math.exp(model.log_lambda_tilde(x, xi))
        if val < worst:
            worst = val
            if val < delta * (1.0 - 1e-9):
                witness = (x.copy(), xi.copy())
    passed = witness is None
    return ConditionPReport(passed, worst, witness, analytic, used)


# ---------------------------------------------------------------------------
# stability constants and activity bounds
# ---------------------------------------------------------------------------

def local_stability_constant(model: GibbsModel, d: int = 2) -> float | None:
    """Uniform bound c* on lambda(x | xi), or None if not locally stable.

    Inhibitory pairwise models (phi <= 1) give beta. A bounded phi > 1
    needs a hard core: then c* = beta * sup(phi)^m with the packing bound
    m on the number of core-separated points in the interaction range.
    Area-interaction gives beta * max(1, gamma^(-alpha_d r0^d)).
    """
    if isinstance(model, PoissonModel):
        return model.beta
    if isinstance(model, AreaModel):
        return model.beta * max(1.0, model.gamma ** -(unit_ball_volume(d) * model.r0**d))
    if isinstance(model, PairwiseModel):
        sup = model.phi.sup
        if sup <= 1.0:
            return model.beta
        if math.isinf(sup):
            return None
        hc = model.phi.hard_core_radius
        r_max = model.phi.interaction_range
        if hc <= 0 or math.isinf(r_max):
            return None
        m = packing_bound(d, hc, r_max)
        return model.beta * sup**m
    return None


@dataclass(frozen=True)
class BetaPlus:
    """High-activity percolation bound; kept in log2 form because the plain
    value overflows a double for realistic Lemma 5.1 constants."""

    c: float
    log2_beta_plus: float
    beta_plus: float | None
    astronomical: bool


def lemma_constant_c(d: int, r: float, m: int) -> float:
    """Greedy-separation constant c = 1 / (2 alpha_d (r + 3 sqrt(d)/(2m))^d m^d)."""
    if r <= 0 or m < 1:
        raise ValueError("require r > 0 and m >= 1")
    alpha = unit_ball_volume(d)
    return 1.0 / (2.0 * alpha * (r + 3.0 * math.sqrt(d) / (2.0 * m)) ** d * m**d)


def compute_beta_plus(d: int, m: int, r: float, delta: float) -> BetaPlus:
    """beta_+ = (2^(1/c) m)^d / delta with c from the greedy-separation lemma.

    log2(beta_+) = d * (1/c + log2 m) - log2 delta is always finite; the
    plain float is returned only when it fits, with an ``astronomical``
    flag above 1e300.
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    c = lemma_constant_c(d, r, m)
    log2_bp = d * (1.0 / c + math.log2(m)) - math.log2(delta)
    astronomical = log2_bp > math.log2(1e300)
    beta_plus = None if astronomical else 2.0**log2_bp
    return BetaPlus(c=c, log2_beta_plus=log2_bp, beta_plus=beta_plus, astronomical=astronomical)


def compute_beta_minus(model: GibbsModel, poisson_critical: float, d: int = 2) -> float:
    """Largest beta with c*(beta) below the Poisson critical intensity.

    For all built-ins c* = beta * K with a model constant K, so the answer
    is poisson_critical / K. The Poisson critical estimate must come from
    the percolation module at the same ball radius R.
    """
    if poisson_critical <= 0:
        raise ValueError("poisson_critical must be > 0")
    cstar = local_stability_constant(model, d=d)
    if cstar is None:
        raise NotLocallyStableError(f"{model.kind} model is not locally stable")
    k_const = cstar / model.beta
    return poisson_critical / k_const
