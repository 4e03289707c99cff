"""
Sequential risk measurement with the ALPHA test supermartingale.

The test tracks the hypothesis that the mean of a population of N bounded
values is <= 1/2, sampling without replacement.  For comparison audits the
values are overstatement-assorter values B in [0, u_B]; for polling audits
they are raw assorter values in [0, u].  The martingale is

    T_j = T_{j-1} * (x_j * eta'/mu_j + (u_B - x_j)(u_B - eta')/(u_B - mu_j)) / u_B

where mu_j is the mean of the remaining population if the null is true, and
eta' is the alternative estimate clamped into (mu_j, u_B].  1/max_j T_j is a
p-value valid under optional stopping.

Everything here is deterministic: identical inputs give bit-identical
trajectories.  The scalar single-draw step and the vectorized trajectory are
the same arithmetic in the same order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .models import ErrorModel, RiskFunction

ETA_CLEARANCE = 2.0 ** -20  # keep eta strictly above the conditional null mean
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class AlphaState:
    """
    State of one assertion's sequential test: draws consumed, their running
    sum, the current martingale value T (may be +inf once the null is
    logically impossible) and its running maximum.
    """

    N: int
    u_B: float
    eta: float
    mode: str = "comparison"
    j: int = 0
    running_sum: float = 0.0
    T: float = 1.0
    T_max: float = 1.0

    @property
    def null_mean(self) -> float:
        """Mean of the unsampled population if the null (mean <= 1/2) is tight."""
        return (self.N / 2 - self.running_sum) / (self.N - self.j)


def fresh_state(N: int, u_B: float, eta: float, mode: str = "comparison") -> AlphaState:
    if not 0.5 < eta <= u_B:
        raise ValueError(f"eta {eta} outside (1/2, {u_B}]")
    return AlphaState(N=N, u_B=u_B, eta=eta, mode=mode)


def alpha_step(state: AlphaState, x: float) -> AlphaState:
    """
    Consume one draw.

    Edge rules: mu_j < 0 means even an all-zero remainder leaves the
    population mean above 1/2, so the null is impossible and T becomes +inf;
    mu_j = 0 means the null survives only if every remaining value is zero,
    so a positive draw refutes it and a zero draw leaves T unchanged;
    mu_j >= u_B means the null can never be falsified and T freezes at 0.
    """
    if state.j >= state.N:
        raise ValueError("all draws already consumed")
    if not 0 <= x <= state.u_B * (1 + 1e-12):
        raise ValueError(f"draw {x} outside [0, {state.u_B}]")
    u_B = state.u_B
    mu = state.null_mean
    if mu < 0 or (mu == 0 and x > 0):
        T = math.inf
    elif mu == 0:
        T = state.T
    elif mu >= u_B:
        T = 0.0
    else:
        eta = min(max(state.eta, mu + ETA_CLEARANCE), u_B)
        T = state.T * ((x * eta / mu + (u_B - x) * (u_B - eta) / (u_B - mu)) / u_B)
    return replace(
        state,
        j=state.j + 1,
        running_sum=state.running_sum + x,
        T=T,
        T_max=max(state.T_max, T),
    )


def p_value(state: AlphaState) -> float:
    """min(1, 1/T_max); 0 once the null has been logically refuted."""
    if state.T_max == math.inf:
        return 0.0
    return min(1.0, 1.0 / state.T_max)


def alpha_trajectory(
    x: np.ndarray,
    N: int,
    u_B: float,
    eta: float,
    j0: int = 0,
    sum0: float = 0.0,
    T0: float = 1.0,
) -> np.ndarray:
    """
    Martingale values after each draw of `x`, starting from a state that has
    already consumed j0 draws summing to sum0.  Matches repeated alpha_step
    exactly.

    Returns the array of T values (not p-values); the caller takes the
    running max / reciprocal as needed.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if j0 + n > N:
        raise ValueError("more draws than the population holds")
    if n and (x.min() < 0 or x.max() > u_B * (1 + 1e-12)):
        raise ValueError(f"draws outside [0, {u_B}]")
    j = j0 + np.arange(n)
    S = sum0 + np.concatenate(([0.0], np.cumsum(x)[:-1]))
    mu = (N / 2 - S) / (N - j)
    normal = (mu > 0) & (mu < u_B)
    etap = np.minimum(np.maximum(eta, mu + ETA_CLEARANCE), u_B)
    with np.errstate(divide="ignore", invalid="ignore"):
        mult = (x * etap / mu + (u_B - x) * (u_B - etap) / (u_B - mu)) / u_B
    mult[~normal] = 1.0
    T = T0 * np.cumprod(mult)
    dead = np.nonzero(mu >= u_B)[0]
    if dead.size:
        T[dead[0]:] = 0.0
    refuted = np.nonzero((mu < 0) | ((mu == 0) & (x > 0)))[0]
    if refuted.size:
        T[refuted[0]:] = math.inf
    return T


def trajectory_p_values(T: np.ndarray, T0_max: float = 1.0) -> np.ndarray:
    """Running p-values min(1, 1/max T) for a martingale trajectory."""
    with np.errstate(divide="ignore"):
        p = 1.0 / np.maximum.accumulate(np.maximum(T, T0_max))
    return np.minimum(1.0, p)


def overstatement_assorter_values(v: float, u: float) -> tuple[float, float, float]:
    """B(0), B(u/2), B(u): error-free, one-vote, and two-vote overstatement."""
    b0 = 1.0 / (2.0 - v / u)
    return b0, 0.5 / (2.0 - v / u), 0.0


def optimal_eta(v: float, u: float, p1: float, p2: float) -> float:
    """
    Alternative estimate for comparison audits: the eta maximizing the
    expected log growth of the ALPHA martingale when overstatement-assorter
    draws are B(0), B(u/2), or 0 with probabilities (1-p1-p2, p1, p2) and the
    conditional null mean stays at 1/2.

    Concave in eta, so golden-section search on (1/2, u_B] converges; the
    upper endpoint is checked explicitly since the maximizer sits on the
    boundary whenever no two-vote overstatements are assumed.
    """
    u_B = 2 * u / (2 * u - v)
    if v <= 0:
        return u_B
    mu = 0.5
    b = overstatement_assorter_values(v, u)
    q = (1.0 - p1 - p2, p1, p2)

    def growth(eta: float) -> float:
        g = 0.0
        for bk, qk in zip(b, q):
            if qk == 0.0:
                continue
            term = (bk * eta / mu + (u_B - bk) * (u_B - eta) / (u_B - mu)) / u_B
            if term <= 0.0:
                return -math.inf
            g += qk * math.log(term)
        return g

    lo, hi = mu + ETA_CLEARANCE, u_B
    c = hi - GOLDEN * (hi - lo)
    d = lo + GOLDEN * (hi - lo)
    gc, gd = growth(c), growth(d)
    while hi - lo > 1e-9:
        if gc > gd:
            hi, d, gd = d, c, gc
            c = hi - GOLDEN * (hi - lo)
            gc = growth(c)
        else:
            lo, c, gc = c, d, gd
            d = lo + GOLDEN * (hi - lo)
            gd = growth(d)
    eta = (lo + hi) / 2
    if growth(u_B) >= growth(eta):
        return u_B
    return eta


def resolve_eta(risk_function: RiskFunction, v: float, u: float, u_B: float) -> float:
    if risk_function.kind == "alpha_fixed_eta":
        eta = float(risk_function.eta)  # validated nonnull in RiskFunction
        return min(max(eta, 0.5 + ETA_CLEARANCE), u_B)
    return optimal_eta(v, u, risk_function.p1, risk_function.p2)


def _error_positions_value(
    k: np.ndarray, b: tuple[float, float, float], error_model: ErrorModel
) -> np.ndarray:
    """
    Deterministic draw values at 1-based positions `k`: the first sampled CVR
    carries an error and later errors are equispaced, one per 1/rate cards.
    Two-vote overstatements take precedence where the two grids collide.
    """
    x = np.full(len(k), b[0])
    if error_model.placement == "none":
        return x
    if error_model.p1 > 0:
        spacing = math.floor(1 / error_model.p1)
        x[(k - 1) % spacing == 0] = b[1]
    if error_model.p2 > 0:
        spacing = math.floor(1 / error_model.p2)
        x[(k - 1) % spacing == 0] = b[2]
    return x


def _first_crossing(
    N: int,
    u_B: float,
    eta: float,
    alpha: float,
    values_at,
    j0: int = 0,
    sum0: float = 0.0,
    T0: float = 1.0,
    T0_max: float = 1.0,
) -> int:
    """
    Number of additional draws until p <= alpha, feeding values_at(positions)
    (1-based future positions); N - j0 if the trajectory never crosses.
    Evaluates in doubling chunks so early stops do minimal work.
    """
    remaining = N - j0
    if T0_max >= 1.0 / alpha:
        return 0
    chunk = 1024
    done = 0
    j, S, T = j0, sum0, T0
    while done < remaining:
        n = min(chunk, remaining - done)
        k = np.arange(done + 1, done + n + 1)
        x = values_at(k)
        T_traj = alpha_trajectory(x, N, u_B, eta, j0=j, sum0=S, T0=T)
        crossed = np.nonzero(np.maximum.accumulate(np.maximum(T_traj, T0_max)) >= 1.0 / alpha)[0]
        if crossed.size:
            return done + int(crossed[0]) + 1
        done += n
        j += n
        S += float(np.sum(x))
        T = float(T_traj[-1])
        if T == 0.0:  # frozen: can never cross
            return remaining
        chunk = min(chunk * 8, 1 << 22)
    return remaining


def estimate_sample_size(
    N: int,
    v: float,
    u: float = 1.0,
    alpha: float = 0.05,
    error_model: ErrorModel | None = None,
    risk_function: RiskFunction | None = None,
) -> int:
    """
    Deterministic sample size for one comparison-audited assertion: the
    number of draws until p <= alpha when the draws follow the injected
    error model (all error-free if none).  A zero or negative margin returns
    N: only a full count can resolve the contest.
    """
    if N < 1:
        raise ValueError("population must be nonempty")
    if not 0 < alpha < 1:
        raise ValueError("risk limit must be in (0,1)")
    if v <= 0:
        return N
    error_model = error_model or ErrorModel()
    risk_function = risk_function or RiskFunction()
    u_B = 2 * u / (2 * u - v)
    eta = resolve_eta(risk_function, v, u, u_B)
    b = overstatement_assorter_values(v, u)
    return _first_crossing(
        N, u_B, eta, alpha, lambda k: _error_positions_value(k, b, error_model)
    )


def estimate_polling_sample_size(
    N: int,
    v: float,
    u: float = 1.0,
    alpha: float = 0.05,
    eta: float | None = None,
) -> int:
    """
    Deterministic polling-mode estimate: draws valued at the reported
    assorter mean (the mean-field sequence) until p <= alpha.
    """
    if v <= 0:
        return N
    xbar = min((1 + v) / 2, u)
    if eta is None:
        eta = min(max(xbar, 0.5 + ETA_CLEARANCE), u)
    return _first_crossing(N, u, eta, alpha, lambda k: np.full(len(k), xbar))


def project_additional_draws(
    state: AlphaState,
    v: float,
    u: float,
    alpha: float,
    error_model: ErrorModel,
) -> int:
    """
    Draws still needed from the current test state if future draws follow the
    given error model, deterministically placed.  Used for round planning.
    Polling-mode states project the reported mean instead (the injected
    overstatement model has no polling analogue).
    """
    if v <= 0:
        return state.N - state.j
    if state.mode == "polling":
        xbar = min((1 + v) / 2, state.u_B)
        values = lambda k: np.full(len(k), xbar)
    else:
        b = overstatement_assorter_values(v, u)
        values = lambda k: _error_positions_value(k, b, error_model)
    return _first_crossing(
        state.N,
        state.u_B,
        state.eta,
        alpha,
        values,
        j0=state.j,
        sum0=state.running_sum,
        T0=state.T,
        T0_max=state.T_max,
    )


def simulate_additional_draws(
    state: AlphaState,
    v: float,
    u: float,
    alpha: float,
    error_model: ErrorModel,
    quantile: float,
    replications: int,
    seed: int,
) -> int:
    """
    Quantile of the draws-to-confirmation distribution over random error
    placements: draws are iid B(0)/B(u/2)/B(u) with the model's rates.
    """
    if v <= 0:
        return state.N - state.j
    b = overstatement_assorter_values(v, u)
    rng = np.random.default_rng(seed)
    remaining = state.N - state.j
    needs = np.empty(replications)
    probs = np.array([1 - error_model.p1 - error_model.p2, error_model.p1, error_model.p2])
    for r in range(replications):
        x = rng.choice(np.array(b), size=remaining, p=probs)
        T = alpha_trajectory(
            x, state.N, state.u_B, state.eta, j0=state.j, sum0=state.running_sum, T0=state.T
        )
        crossed = np.nonzero(
            np.maximum.accumulate(np.maximum(T, state.T_max)) >= 1.0 / alpha
        )[0]
        needs[r] = crossed[0] + 1 if crossed.size else remaining
    return int(np.quantile(needs, quantile))


def measure_risk(
    assertion,
    pairs,
    alpha: float,
    risk_function: RiskFunction | None = None,
    mode: str = "comparison",
) -> list[float]:
    """
    Feed an ordered stream of (cvr, mvr) pairs — ascending sample number,
    restricted to cards whose style contains the contest — into the
    assertion's test and return the p-value after each draw.  The assertion's
    tracker, p_value, and status are updated in place; it becomes confirmed
    as soon as p <= alpha.
    """
    from .assertions import assort, overstatement, overstatement_assorter

    risk_function = risk_function or RiskFunction()
    u = assertion.spec.upper_bound
    if assertion.margin is None:
        raise ValueError("assertion margin not set")
    state = assertion.tracker
    if state is None:
        if mode == "comparison":
            u_B = assertion.overstatement_bound
            eta = resolve_eta(risk_function, assertion.margin, u, u_B)
        else:
            # polling: test raw assorter values; the natural fixed alternative
            # is the reported mean
            u_B = u
            if risk_function.kind == "alpha_fixed_eta":
                eta = min(max(float(risk_function.eta), 0.5 + ETA_CLEARANCE), u)
            else:
                eta = min(max(assertion.reported_mean, 0.5 + ETA_CLEARANCE), u)
        state = fresh_state(N=pairs.N, u_B=u_B, eta=eta, mode=mode)
    seen: set[str] = set()
    trajectory: list[float] = []
    for cvr, mvr in pairs:
        if cvr.card_id in seen:
            raise ValueError(f"duplicate card {cvr.card_id} in risk stream")
        seen.add(cvr.card_id)
        if mode == "comparison":
            omega = overstatement(assertion.spec, cvr, mvr)
            if omega.style_discrepancy:
                assertion.style_discrepancies += 1
            x = overstatement_assorter(assertion, omega.value)
        else:
            x = 0.0 if (mvr is None or mvr.not_found) else assort(assertion.spec, mvr)
        state = alpha_step(state, x)
        trajectory.append(p_value(state))
    assertion.tracker = state
    assertion.p_value = p_value(state)
    if assertion.status == "open" and assertion.p_value <= alpha:
        assertion.status = "confirmed"
    return trajectory


class PairStream:
    """An iterable of (cvr, mvr) pairs that knows its population size."""

    def __init__(self, pairs, N: int):
        self.pairs = list(pairs)
        self.N = N

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)
