"""Samplers for local specifications: exact Poisson, birth-death MH, and
dominated coupling-from-the-past, plus a partition-function oracle.

Every operation is a deterministic function of (inputs, seed); chains never
share mutable state, so replications parallelize over seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Configuration, Window, as_rng, dist_to_box
from .models import (
    GibbsModel,
    NotLocallyStableError,
    PairwiseModel,
    PoissonModel,
    local_stability_constant,
    log_weight,
)


class TruncationError(RuntimeError):
    """Partition-function ladder not converged at the requested k_max."""


def integrated_autocorr_time(series, max_lag: int | None = None) -> float:
    """Integrated autocorrelation time of a chain diagnostic series.

    Sums empirical autocorrelations until they drop below 0.05; used to
    deflate sample counts of correlated chain output into effective ones.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 10:
        return 1.0
    if max_lag is None:
        max_lag = min(1000, n // 4)
    mean = x.mean()
    var = x.var()
    if var < 1e-12:
        return 1.0
    tau = 1.0
    for lag in range(1, max_lag):
        rho = float(np.mean((x[:-lag] - mean) * (x[lag:] - mean)) / var)
        if rho < 0.05:
            break
        tau += 2.0 * rho
    return max(1.0, tau)


def effective_sample_size(series) -> float:
    x = np.asarray(series, dtype=float)
    return len(x) / integrated_autocorr_time(x)


def sample_poisson(beta: float, window: Window, seed) -> Configuration:
    """Homogeneous Poisson sample: N ~ Poisson(beta |window|), iid uniform."""
    if beta < 0:
        raise ValueError("intensity beta must be >= 0")
    rng = as_rng(seed)
    n = rng.poisson(beta * window.volume)
    return Configuration(window.sample_uniform(n, rng), window)


def prune_boundary(model: GibbsModel, window: Window, omega) -> np.ndarray:
    """Drop boundary points beyond the model's interaction reach."""
    if omega is None:
        return np.empty((0, window.dim))
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    if omega.size == 0:
        return np.empty((0, window.dim))
    reach = model.reach
    if math.isinf(reach):
        return omega
    keep = [dist_to_box(p, window.lower, window.upper) <= reach for p in omega]
    return omega[np.asarray(keep, dtype=bool)]


def default_burn_in(model: GibbsModel, window: Window) -> int:
    """Heuristic burn-in: 1e4 * |window| * max(beta, 1) steps."""
    return int(1e4 * window.volume * max(model.beta, 1.0))


class BirthDeathChain:
    """Birth-death Metropolis-Hastings targeting mu_{Lambda,omega}.

    With probability 1/2 a birth at a uniform x in the window is proposed
    and accepted with min(1, lambda(x|xi+omega) |window| / (n+1)); otherwise
    the death of a uniform existing point y, accepted with
    min(1, n / (lambda(y|xi-y+omega) |window|)). Moves into weight-0 states
    are always rejected, so hard-core models never hold a violating pair.
    """

    def __init__(self, model, window, omega=None, seed=0, balance_check=False):
        self.model = model
        self.window = window
        self.rng = as_rng(seed)
        self.omega = prune_boundary(model, window, omega)
        d = window.dim
        self._pts = np.empty((64, d))
        self.n = 0
        self.step_count = 0
        self.volume = window.volume
        self.balance_check = balance_check
        self.max_balance_dev = 0.0

    @property
    def points(self) -> np.ndarray:
        return self._pts[: self.n]

    def state(self) -> Configuration:
        return Configuration(self.points.copy(), self.window)

    def _others(self, exclude: int | None = None) -> np.ndarray:
        pts = self.points
        if exclude is not None:
            pts = np.vstack([pts[:exclude], pts[exclude + 1 :]])
        if len(self.omega):
            return np.vstack([pts, self.omega]) if len(pts) else self.omega
        return pts

    def _grow(self):
        cap = len(self._pts)
        if self.n >= cap:
            new = np.empty((2 * cap, self._pts.shape[1]))
            new[:cap] = self._pts
            self._pts = new

    def _record_balance(self, x, others_xi):
        # Eq.-(6) ratio audit: u(xi+x) must equal u(xi) * lambda(x|xi+omega)
        lam = self.model.beta * math.exp(self.model.log_lambda_tilde(x, others_xi))
        xi = self.points.copy()
        lw0 = log_weight(self.model, xi, self.omega)
        lw1 = log_weight(self.model, np.vstack([xi, x[None, :]]) if len(xi) else x[None, :], self.omega)
        if lam > 0 and not math.isinf(lw0):
            dev = abs(math.exp(lw1 - lw0) - lam) / lam
            self.max_balance_dev = max(self.max_balance_dev, dev)

    def step(self):
        rng = self.rng
        self.step_count += 1
        if rng.random() < 0.5:
            x = self.window.sample_uniform(1, rng)[0]
            others = self._others()
            log_lam_t = self.model.log_lambda_tilde(x, others)
            if self.balance_check:
                self._record_balance(x, others)
            if log_lam_t == -math.inf:
                return
            lam = self.model.beta * math.exp(log_lam_t)
            if rng.random() * (self.n + 1) < lam * self.volume:
                self._grow()
                self._pts[self.n] = x
                self.n += 1
        else:
            if self.n == 0:
                return
            idx = int(rng.integers(self.n))
            y = self._pts[idx].copy()
            lam = self.model.beta * math.exp(
                self.model.log_lambda_tilde(y, self._others(exclude=idx))
            )
            accept = lam * self.volume <= 0 or rng.random() * lam * self.volume < self.n
            if accept:
                self._pts[idx] = self._pts[self.n - 1]
                self.n -= 1

    def run(self, n_steps: int):
        for _ in range(n_steps):
            self.step()
        return self

    def run_counts(self, n_steps: int, record_every: int = 1) -> np.ndarray:
        """Point counts after each recorded step (for pmf diagnostics)."""
        out = np.empty(n_steps // record_every, dtype=np.int64)
        j = 0
        for i in range(n_steps):
            self.step()
            if (i + 1) % record_every == 0:
                out[j] = self.n
                j += 1
        return out[:j]


def mcmc_sample(model, window, omega, n_steps: int, seed) -> Configuration:
    """State of the birth-death chain after n_steps, started from empty."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    return BirthDeathChain(model, window, omega, seed).run(n_steps).state()


# ---------------------------------------------------------------------------
# dominated coupling from the past
# ---------------------------------------------------------------------------

class _PointSet:
    """Id-keyed coordinate buffer with O(1) insert/remove (swap-with-last)."""

    def __init__(self, d: int):
        self.coords = np.empty((64, d))
        self.ids: list[int] = []
        self.pos: dict[int, int] = {}

    def __len__(self):
        return len(self.ids)

    def __contains__(self, pid: int) -> bool:
        return pid in self.pos

    def insert(self, pid: int, x: np.ndarray):
        row = len(self.ids)
        if row >= len(self.coords):
            new = np.empty((2 * len(self.coords), self.coords.shape[1]))
            new[:row] = self.coords[:row]
            self.coords = new
        self.coords[row] = x
        self.ids.append(pid)
        self.pos[pid] = row

    def remove(self, pid: int):
        row = self.pos.pop(pid)
        last = len(self.ids) - 1
        if row != last:
            self.coords[row] = self.coords[last]
            moved = self.ids[last]
            self.ids[row] = moved
            self.pos[moved] = row
        self.ids.pop()

    def array(self) -> np.ndarray:
        return self.coords[: len(self.ids)]


@dataclass
class DominatedRun:
    """Outcome of a dominated-CFTP run.

    ``retained`` is an exact draw from the local specification when
    ``coalesced`` is true, and is always a pointwise subset of the
    dominating Poisson(c*) configuration.
    """

    dominating: Configuration
    retained: Configuration | None
    coalesced: bool
    start_time: int
    n_epochs: int

    def subset_ok(self) -> bool:
        if self.retained is None:
            return True
        dom = {tuple(p) for p in self.dominating.points}
        return all(tuple(p) in dom for p in self.retained.points)


class _DominatingStream:
    """Backward-generated event stream of the stationary Poisson(c*) spatial
    birth-death process, extendible epoch by epoch with cached randomness."""

    def __init__(self, cstar: float, window: Window, seed):
        self.cstar = cstar
        self.window = window
        self.seed_seq = (
            seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        )
        rng0 = np.random.default_rng(self.seed_seq.spawn(1)[0])
        n0 = rng0.poisson(cstar * window.volume)
        pts0 = window.sample_uniform(n0, rng0)
        self.state: dict[int, np.ndarray] = {i: pts0[i] for i in range(n0)}
        self.state_at_zero = dict(self.state)
        self.next_id = n0
        self.events: list[tuple[float, int, int, tuple | None, float]] = []
        self.generated_until = 0.0  # backward horizon reached so far
        self._segment = 0

    def extend_to(self, horizon: float):
        """Generate backward events until backward time ``horizon``."""
        if horizon <= self.generated_until:
            return
        self._segment += 1
        rng = np.random.default_rng(self.seed_seq.spawn(1)[0])
        t = self.generated_until
        birth_rate = self.cstar * self.window.volume
        while True:
            n = len(self.state)
            total = birth_rate + n
            t += rng.exponential(1.0 / total)
            if t >= horizon:
                break
            if rng.random() * total < birth_rate:
                # backward birth = forward death of a fresh point
                pid = self.next_id
                self.next_id += 1
                x = self.window.sample_uniform(1, rng)[0]
                self.state[pid] = x
                self.events.append((-t, 1, pid, tuple(x), 0.0))
            else:
                # backward death = forward birth, mark drawn now
                keys = list(self.state)
                pid = keys[int(rng.integers(n))]
                x = self.state.pop(pid)
                self.events.append((-t, 0, pid, tuple(x), rng.random()))
        self.generated_until = horizon


def cftp_sample(
    model: GibbsModel,
    window: Window,
    omega=None,
    seed=0,
    max_epochs: int = 18,
) -> DominatedRun:
    """Exact draw from mu_{Lambda,omega} by dominated CFTP.

    Upper/lower sandwich processes are replayed forward from epochs -1, -2,
    -4, ... over a shared dominating Poisson(c*) birth-death stream until
    they coalesce at time 0. Inhibitory models use the standard monotone
    funnel, attractive bounded models (area-interaction with gamma > 1) the
    crossed one. Without coalescence within ``max_epochs`` the run is
    returned explicitly as not coalesced, never as a biased sample.
    """
    cstar = local_stability_constant(model, d=window.dim)
    if cstar is None:
        raise NotLocallyStableError(f"{model.kind} model has no finite c*")
    omega_arr = prune_boundary(model, window, omega)
    mono = model.monotonicity
    stream = _DominatingStream(cstar, window, seed)
    d = window.dim
    dominating = Configuration(
        np.asarray([stream.state_at_zero[k] for k in sorted(stream.state_at_zero)]).reshape(
            -1, d
        ),
        window,
    )

    epoch = 0
    while epoch < max_epochs:
        horizon = float(2**epoch)
        stream.extend_to(horizon)

        upper = _PointSet(d)
        lower = _PointSet(d)
        for pid, x in stream.state.items():  # dominating state at -horizon
            upper.insert(pid, x)
        merged = len(upper) == 0

        def lam(x, pset: _PointSet) -> float:
            pts = pset.array()
            others = np.vstack([pts, omega_arr]) if len(omega_arr) else pts
            llt = model.log_lambda_tilde(x, others)
            return 0.0 if llt == -math.inf else model.beta * math.exp(llt)

        for ev in reversed(stream.events):
            _t, kind, pid, xt, mark = ev
            if kind == 1:  # forward death
                if pid in upper:
                    upper.remove(pid)
                if not merged and pid in lower:
                    lower.remove(pid)
            else:  # forward birth with threshold mark
                x = np.asarray(xt)
                if merged:
                    if mark * cstar < lam(x, upper):
                        upper.insert(pid, x)
                    continue
                if mono == "increasing":
                    p_hi, p_lo = lam(x, upper), lam(x, lower)
                elif mono == "decreasing":
                    p_hi, p_lo = lam(x, lower), lam(x, upper)
                else:
                    p_hi, p_lo = cstar, 0.0
                if mark * cstar < p_hi:
                    upper.insert(pid, x)
                if mark * cstar < p_lo:
                    lower.insert(pid, x)
            if not merged and len(upper) == len(lower):
                merged = True
                lower = upper

        if merged:
            retained = Configuration(upper.array().copy(), window)
            return DominatedRun(dominating, retained, True, -int(horizon), epoch + 1)
        epoch += 1

    return DominatedRun(dominating, None, False, -int(2 ** (max_epochs - 1)), max_epochs)


# ---------------------------------------------------------------------------
# partition function
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartitionTerm:
    k: int
    value: float
    se: float


@dataclass(frozen=True)
class PartitionEstimate:
    """Truncated Eq.-(3) ladder: c = 1 + sum_k (1/k!) int u dx^k."""

    c_hat: float
    terms: tuple[PartitionTerm, ...]
    analytic: float | None
    converged: bool

    def pmf(self) -> np.ndarray:
        """P(N = k) for k = 0..k_max under the truncated local specification."""
        vals = np.array([1.0] + [t.value for t in self.terms])
        return vals / self.c_hat

    def pmf_se(self) -> np.ndarray:
        ses = np.array([0.0] + [t.se for t in self.terms])
        return ses / self.c_hat


def _pairwise_batch_log_u(model: PairwiseModel, tuples: np.ndarray, omega: np.ndarray):
    n, k, _ = tuples.shape
    logu = np.full(n, k * math.log(model.beta))
    alive = np.ones(n, dtype=bool)

    def accumulate(vals):
        nonlocal logu, alive
        dead = np.any(vals == 0.0, axis=1)
        alive &= ~dead
        safe = np.where(vals > 0.0, vals, 1.0)
        logu += np.sum(np.log(safe), axis=1)

    if k >= 2:
        iu, ju = np.triu_indices(k, 1)
        diff = tuples[:, iu, :] - tuples[:, ju, :]
        accumulate(model.phi(np.linalg.norm(diff, axis=2)))
    if len(omega):
        diff = tuples[:, :, None, :] - omega[None, None, :, :]
        accumulate(model.phi(np.linalg.norm(diff, axis=3).reshape(n, -1)))
    return logu, alive


def estimate_partition(
    model: GibbsModel,
    window: Window,
    omega=None,
    k_max: int = 8,
    n_nodes: int = 100_000,
    seed=0,
    tail_tol: float = 1e-6,
) -> PartitionEstimate:
    """Monte Carlo estimate of the partition function and its term ladder.

    Each k-term is (|window|^k / k!) E[u(X_1..X_k)] over iid uniform
    tuples. Poisson is returned on the analytic path (c = e^(beta |window|),
    exact terms). The ladder must have its last term below ``tail_tol`` of
    the running sum, otherwise a TruncationError advises a larger k_max.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    vol = window.volume
    omega_arr = prune_boundary(model, window, omega)

    if isinstance(model, PoissonModel) and len(omega_arr) == 0:
        mean = model.beta * vol
        terms = []
        t = 1.0
        for k in range(1, k_max + 1):
            t *= mean / k
            terms.append(PartitionTerm(k, t, 0.0))
        return PartitionEstimate(math.exp(mean), tuple(terms), math.exp(mean), True)

    rng = as_rng(seed)
    terms: list[PartitionTerm] = []
    log_kfact = 0.0
    for k in range(1, k_max + 1):
        log_kfact += math.log(k)
        scale = math.exp(k * math.log(vol) - log_kfact)
        if isinstance(model, PairwiseModel):
            vals = np.empty(n_nodes)
            chunk = max(1, int(2e6 // max(1, k * k)))
            for start in range(0, n_nodes, chunk):
                stop = min(n_nodes, start + chunk)
                tuples = window.sample_uniform((stop - start) * k, rng).reshape(
                    stop - start, k, window.dim
                )
                logu, alive = _pairwise_batch_log_u(model, tuples, omega_arr)
                vals[start:stop] = np.where(alive, np.exp(logu), 0.0)
        else:
            vals = np.empty(n_nodes)
            for i in range(n_nodes):
                pts = window.sample_uniform(k, rng)
                lw = log_weight(model, pts, omega_arr)
                vals[i] = 0.0 if lw == -math.inf else math.exp(lw)
        est = scale * float(np.mean(vals))
        se = scale * float(np.std(vals)) / math.sqrt(n_nodes)
        terms.append(PartitionTerm(k, est, se))

    c_hat = 1.0 + sum(t.value for t in terms)
    last_ratio = terms[-1].value / c_hat
    if last_ratio > tail_tol:
        raise TruncationError(
            f"k_max={k_max} not converged: last term is {last_ratio:.2e} of the "
            f"running sum (> {tail_tol:.0e}); increase k_max"
        )
    return PartitionEstimate(c_hat, tuple(terms), None, True)
