"""Posted-price mechanism execution, welfare estimation, offline optimum.

The sequential mechanism posts the price of the next unsold unit to each
arriving buyer; a buyer purchases iff utility v - p is non-negative (accept
at exact equality). Expected welfare is estimated over independent trials;
trial t draws from a dedicated substream spawned from (master_seed, t), so
results are reproducible and order-independent.

Two documented baseline surrogates accompany the randomized mechanism:
a deterministic variant with every seed pinned to one value, and a
static-random variant that draws a single price from the aggregate price
distribution and posts it to everyone. Both are labeled as surrogates in
every output; they stand in for external baseline designs whose exact
constructions are not reproduced here.
"""

import math
from dataclasses import dataclass

import numpy as np

from .cost_model import CostModel
from .errors import ValidationError
from .instances import Instance
from .pricing import PriceVector, PricingScheme, price_at, prices_for_seeds


@dataclass(frozen=True)
class BuyerDecision:
    posted_price: float | None  # None once all units are sold
    accepted: bool


@dataclass(frozen=True)
class RunOutcome:
    decisions: tuple[BuyerDecision, ...]
    units_sold: int
    welfare: float
    revenue: float


@dataclass(frozen=True)
class WelfareEstimate:
    mean: float
    std_error: float
    trials: int
    ratio_to_opt: float


@dataclass(frozen=True)
class Mechanism:
    """Handle tying a pricing scheme to a seeding policy."""

    name: str
    kind: str  # "r-dynamic" | "pinned" | "static"
    scheme: PricingScheme
    surrogate: bool
    sigma: float | None = None


def run_posted_price(
    price_vector: PriceVector, instance: Instance, model: CostModel
) -> RunOutcome:
    """Execute one pass of the sequential mechanism over the arrivals."""
    prices = price_vector.prices
    if len(prices) != model.k:
        raise ValidationError(
            f"price vector has {len(prices)} entries, model capacity is {model.k}"
        )
    for t, v in enumerate(instance.valuations, start=1):
        if not (model.L <= v <= model.U) or not math.isfinite(v):
            raise ValidationError(
                f"arrival {t}: valuation {v} outside [{model.L}, {model.U}]"
            )
    decisions = []
    kappa = 1
    sum_v = 0.0
    sum_p = 0.0
    for v in instance.valuations:
        if kappa > model.k:
            decisions.append(BuyerDecision(posted_price=None, accepted=False))
            continue
        p = prices[kappa - 1]
        accepted = v >= p
        decisions.append(BuyerDecision(posted_price=p, accepted=accepted))
        if accepted:
            sum_v += v
            sum_p += p
            kappa += 1
    units = kappa - 1
    cost = model.cumulative[units]
    return RunOutcome(
        decisions=tuple(decisions),
        units_sold=units,
        welfare=sum_v - cost,
        revenue=sum_p - cost,
    )


def offline_opt(instance: Instance, model: CostModel) -> tuple[float, int]:
    """Best achievable welfare with full foresight, and its unit count.

    Serving the j highest-valued buyers dominates any other choice of j
    buyers, so the search is over j alone; ties resolve to the smallest j.
    """
    vals = sorted(instance.valuations, reverse=True)
    best, best_j = 0.0, 0
    acc = 0.0
    for j in range(1, min(model.k, len(vals)) + 1):
        acc += vals[j - 1]
        w = acc - model.cumulative[j]
        if w > best:
            best, best_j = w, j
    return best, best_j


# ---------------------------------------------------------------------------
# seeding policies


def make_pinned_deterministic(scheme: PricingScheme, sigma: float) -> Mechanism:
    """Deterministic variant: every unit's seed pinned to sigma."""
    if not 0.0 <= sigma <= 1.0:
        raise ValidationError(f"sigma {sigma} outside [0, 1]")
    return Mechanism(
        name=f"d-dynamic-surrogate(sigma={sigma:g})",
        kind="pinned",
        scheme=scheme,
        surrogate=True,
        sigma=sigma,
    )


def make_static_random(scheme: PricingScheme) -> Mechanism:
    """Single-price variant: one draw from the aggregate price distribution."""
    return Mechanism(
        name="r-static-surrogate",
        kind="static",
        scheme=scheme,
        surrogate=True,
    )


def _as_mechanism(target) -> Mechanism:
    if isinstance(target, Mechanism):
        return target
    if isinstance(target, PricingScheme):
        return Mechanism(name="r-dynamic", kind="r-dynamic", scheme=target, surrogate=False)
    raise ValidationError(f"expected a PricingScheme or Mechanism, got {type(target)!r}")


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    """Substream for one trial: spawn key (trial_index,) under master_seed."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(trial_index,))
    return np.random.default_rng(ss)


# ---------------------------------------------------------------------------
# aggregate price distribution of the static surrogate


def _seed_for_values(scheme: PricingScheme, i: int, v: np.ndarray) -> np.ndarray:
    """Vectorized sup{s: phi_i(s) <= v} over an array of valuations."""
    s_lo, s_hi, cost, v_lo, v_hi, rate = scheme._unit_tables[i - 1]
    idx = np.searchsorted(v_lo, v, side="right") - 1
    below = idx < 0
    idx = np.maximum(idx, 0)
    safe_rate = np.where(rate[idx] > 0.0, rate[idx], 1.0)
    arg = (v - cost[idx]) / np.maximum(v_lo[idx] - cost[idx], 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        ramp = s_lo[idx] + np.log(np.maximum(arg, 1e-300)) / safe_rate
    out = np.where((rate[idx] == 0.0) | (v >= v_hi[idx]), s_hi[idx], ramp)
    out = np.clip(out, 0.0, 1.0)
    return np.where(below, 0.0, out)


def _aggregate_seed(scheme: PricingScheme, v: np.ndarray) -> np.ndarray:
    """Mean of the per-unit seed suprema: the aggregate price CDF at v."""
    total = np.zeros_like(v)
    for i in range(1, scheme.model.k + 1):
        total += _seed_for_values(scheme, i, v)
    return total / scheme.model.k


def static_prices_for_quantiles(scheme: PricingScheme, q: np.ndarray) -> np.ndarray:
    """Invert the aggregate price CDF at each quantile by bisection.

    The CDF has an atom at L of mass F(L) (the constant floors), so any
    quantile at or below F(L) prices at exactly L; above it the CDF is
    continuous and strictly increasing up to F(U) = 1.
    """
    q = np.asarray(q, dtype=float)
    if q.size and (q.min() < 0.0 or q.max() > 1.0):
        raise ValidationError("quantiles outside [0, 1]")
    model = scheme.model
    lo = np.full(q.shape, model.L)
    hi = np.full(q.shape, model.U)
    floor_mass = float(_aggregate_seed(scheme, np.array([model.L]))[0])
    at_floor = q <= floor_mass
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        too_low = _aggregate_seed(scheme, mid) < q
        lo = np.where(too_low, mid, lo)
        hi = np.where(too_low, hi, mid)
    return np.where(at_floor, model.L, hi)


# ---------------------------------------------------------------------------
# Monte-Carlo welfare estimation


def _price_matrix(mech: Mechanism, trials: int, master_seed: int) -> np.ndarray:
    k = mech.scheme.model.k
    if mech.kind == "pinned":
        row = [price_at(mech.scheme, i, mech.sigma) for i in range(1, k + 1)]
        return np.tile(np.array(row), (trials, 1))
    if mech.kind == "r-dynamic":
        seeds = np.stack(
            [trial_rng(master_seed, t).random(k) for t in range(trials)]
        )
        return prices_for_seeds(mech.scheme, seeds)
    if mech.kind == "static":
        qs = np.array([trial_rng(master_seed, t).random() for t in range(trials)])
        p = static_prices_for_quantiles(mech.scheme, qs)
        return np.repeat(p[:, None], k, axis=1)
    raise ValidationError(f"unknown mechanism kind {mech.kind!r}")


def _welfares(P: np.ndarray, instance: Instance, model: CostModel) -> np.ndarray:
    trials, k = P.shape
    kappa = np.zeros(trials, dtype=np.int64)
    sum_v = np.zeros(trials)
    rows = np.arange(trials)
    for v in instance.valuations:
        idx = np.minimum(kappa, k - 1)
        acc = (kappa < k) & (v >= P[rows, idx])
        sum_v += np.where(acc, v, 0.0)
        kappa += acc
    cum = np.asarray(model.cumulative)
    return sum_v - cum[kappa]


def run_trial(
    target, instance: Instance, model: CostModel, master_seed: int, trial_index: int
) -> RunOutcome:
    """One fully deterministic trial: same arguments, bit-identical outcome."""
    mech = _as_mechanism(target)
    k = model.k
    if mech.kind == "pinned":
        seeds = (mech.sigma,) * k
        prices = tuple(price_at(mech.scheme, i, mech.sigma) for i in range(1, k + 1))
    elif mech.kind == "static":
        q = float(trial_rng(master_seed, trial_index).random())
        p = float(static_prices_for_quantiles(mech.scheme, np.array([q]))[0])
        seeds, prices = (q,) * k, (p,) * k
    else:
        drawn = trial_rng(master_seed, trial_index).random(k)
        seeds = tuple(float(s) for s in drawn)
        prices = tuple(price_at(mech.scheme, i, seeds[i - 1]) for i in range(1, k + 1))
    return run_posted_price(PriceVector(prices=prices, seeds=seeds), instance, model)


def expected_welfare(
    target, instance: Instance, model: CostModel, trials: int, master_seed: int
) -> WelfareEstimate:
    """Monte-Carlo estimate of expected welfare and its ratio to the optimum."""
    if not isinstance(trials, int) or isinstance(trials, bool) or trials < 1:
        raise ValidationError(f"trials must be a positive integer, got {trials}")
    mech = _as_mechanism(target)
    for t, v in enumerate(instance.valuations, start=1):
        if not (model.L <= v <= model.U):
            raise ValidationError(
                f"arrival {t}: valuation {v} outside [{model.L}, {model.U}]"
            )
    opt, _ = offline_opt(instance, model)
    if mech.kind == "pinned":
        out = run_trial(mech, instance, model, master_seed, 0)
        mean, std_error = out.welfare, 0.0
    else:
        w = _welfares(_price_matrix(mech, trials, master_seed), instance, model)
        mean = float(w.mean())
        std_error = float(w.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    if mean > 0.0:
        ratio = opt / mean
    else:
        ratio = math.inf if opt > 0.0 else 1.0
    return WelfareEstimate(mean=mean, std_error=std_error, trials=trials, ratio_to_opt=ratio)
