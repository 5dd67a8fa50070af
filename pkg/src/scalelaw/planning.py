"""Budget planning by inverting fitted bivariate scaling laws.

Everything here is closed-form except the iso-FLOP optimum, which eliminates
D through the budget constraint flops_per_unit(N) * D = C and minimizes the
resulting one-dimensional loss over log N by golden section (the objective
is a sum of two exponentials in log N, hence strictly convex and unimodal
whenever flops_per_unit is a positive power of N).

Infeasible targets are a first-class outcome: asking for a loss at or below
the fitted asymptotic floor raises InfeasibleTarget carrying the floor, so a
caller can report how far out of reach the request is.

Units: a ChinchillaFit records whether D means training samples or tokens.
FLOP-aware operations take (flops_per_unit, flops_unit) and refuse callables
whose declared unit disagrees with the fit, because 6*N*D is only meaningful
when D is counted in the unit the callable expects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import FitFailed, InfeasibleTarget, InvalidInput
from .fitting import ChinchillaFit
from .optimize import golden_section_minimize

DEFAULT_TOKENS_PER_SAMPLE = 512


def sixnd_flops_per_unit(d_unit: str, tokens_per_sample: int = DEFAULT_TOKENS_PER_SAMPLE) -> Callable[[float], float]:
    """The 6*N rule expressed per D unit: 6N per token, 6N*tokens_per_sample per sample."""
    if d_unit == "tokens":
        return lambda n: 6.0 * n
    if d_unit == "samples":
        return lambda n: 6.0 * n * tokens_per_sample
    raise InvalidInput(f"unknown D unit {d_unit!r}")


def _check_units(fit: ChinchillaFit, flops_unit: str) -> None:
    if flops_unit != fit.d_unit:
        raise InvalidInput(
            f"flops_per_unit is per {flops_unit!r} but the fit's D is in {fit.d_unit!r}; "
            "convert one side before planning"
        )


def data_needed(fit: ChinchillaFit, n: float, target_loss: float) -> float:
    """Invert the law for D at fixed N: D = (b / (target - E - a/N^alpha))^(1/beta)."""
    if n <= 0:
        raise InvalidInput(f"N must be > 0, got {n}")
    floor = fit.e + fit.a * n ** (-fit.alpha)
    if target_loss <= floor:
        raise InfeasibleTarget(
            f"target loss {target_loss} is at or below the asymptotic floor {floor} "
            f"reachable at N={n}", floor=floor,
        )
    return (fit.b / (target_loss - floor)) ** (1.0 / fit.beta)


def params_needed(fit: ChinchillaFit, d: float, target_loss: float) -> float:
    """Invert the law for N at fixed D: N = (a / (target - E - b/D^beta))^(1/alpha)."""
    if d <= 0:
        raise InvalidInput(f"D must be > 0, got {d}")
    floor = fit.e + fit.b * d ** (-fit.beta)
    if target_loss <= floor:
        raise InfeasibleTarget(
            f"target loss {target_loss} is at or below the asymptotic floor {floor} "
            f"reachable at D={d}", floor=floor,
        )
    return (fit.a / (target_loss - floor)) ** (1.0 / fit.alpha)


@dataclass(frozen=True)
class MatchResult:
    """How much data lets a small model match a big model's loss."""

    multiplier: float
    small_n: float
    big_n: float
    big_d: float
    small_d: float
    target_loss: float
    flops_small: float
    flops_big: float
    flops_ratio: float
    d_unit: str

    def to_dict(self) -> dict:
        return {
            "multiplier": self.multiplier,
            "small_N": self.small_n,
            "big_N": self.big_n,
            "big_D": self.big_d,
            "small_D": self.small_d,
            "target_loss": self.target_loss,
            "flops_small": self.flops_small,
            "flops_big": self.flops_big,
            "flops_ratio": self.flops_ratio,
            "d_unit": self.d_unit,
        }


def match_model(
    fit: ChinchillaFit,
    small_n: float,
    big_n: float,
    big_d: float,
    flops_per_unit: Callable[[float], float] | None = None,
    flops_unit: str | None = None,
) -> MatchResult:
    """Data multiplier m such that (small_N, m * big_D) matches (big_N, big_D) in loss.

    The default FLOP comparison uses the 6N rule in the fit's own D unit;
    pass a callable plus its unit for exact-mode accounting.
    """
    if flops_per_unit is None:
        flops_per_unit = sixnd_flops_per_unit(fit.d_unit)
        flops_unit = fit.d_unit
    if flops_unit is None:
        raise InvalidInput("flops_per_unit needs an explicit flops_unit declaration")
    _check_units(fit, flops_unit)

    target = float(fit.predict(big_n, big_d))
    small_d = data_needed(fit, small_n, target)  # raises InfeasibleTarget with the floor
    return MatchResult(
        multiplier=small_d / big_d,
        small_n=small_n,
        big_n=big_n,
        big_d=big_d,
        small_d=small_d,
        target_loss=target,
        flops_small=flops_per_unit(small_n) * small_d,
        flops_big=flops_per_unit(big_n) * big_d,
        flops_ratio=(flops_per_unit(small_n) * small_d) / (flops_per_unit(big_n) * big_d),
        d_unit=fit.d_unit,
    )


@dataclass(frozen=True)
class IsoflopResult:
    budget: float
    n_opt: float
    d_opt: float
    loss_opt: float
    curve: tuple[tuple[float, float, float], ...]  # (N, D, predicted loss) along the constraint
    d_unit: str

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "N_opt": self.n_opt,
            "D_opt": self.d_opt,
            "loss_opt": self.loss_opt,
            "d_unit": self.d_unit,
            "curve": [{"N": n, "D": d, "loss": l} for n, d, l in self.curve],
        }


def isoflop_optimum(
    fit: ChinchillaFit,
    budget: float,
    flops_per_unit: Callable[[float], float] | None = None,
    flops_unit: str | None = None,
    *,
    n_bounds: tuple[float, float] | None = None,
    curve_points: int = 65,
) -> IsoflopResult:
    """Minimize predicted loss subject to flops_per_unit(N) * D = budget.

    Searches log N by golden section with D eliminated via the constraint;
    also samples the loss curve along the constraint for plotting.
    """
    if budget <= 0:
        raise InvalidInput(f"budget must be > 0, got {budget}")
    if not (fit.alpha > 0 and fit.beta > 0):
        raise InvalidInput("isoflop planning needs alpha > 0 and beta > 0")
    if flops_per_unit is None:
        flops_per_unit = sixnd_flops_per_unit(fit.d_unit)
        flops_unit = fit.d_unit
    if flops_unit is None:
        raise InvalidInput("flops_per_unit needs an explicit flops_unit declaration")
    _check_units(fit, flops_unit)

    def d_of(n: float) -> float:
        fpu = flops_per_unit(n)
        if not fpu > 0:
            raise InvalidInput(f"flops_per_unit must be positive, got {fpu} at N={n}")
        return budget / fpu

    def loss_at_log_n(log_n: float) -> float:
        n = math.exp(log_n)
        d = d_of(n)
        if d <= 0:
            return float("inf")
        return float(fit.predict(n, d))

    if n_bounds is None:
        # keep D >= 1 at the upper end; generous lower end
        hi = budget / flops_per_unit(1.0)
        n_bounds = (1.0, max(hi, 2.0))
    lo, hi = n_bounds
    if not (lo > 0 and hi > lo):
        raise InvalidInput(f"bad N bounds {n_bounds}")

    log_lo, log_hi = math.log(lo), math.log(hi)
    log_n_opt, loss_opt = golden_section_minimize(loss_at_log_n, log_lo, log_hi, tol=1e-12)
    if not np.isfinite(loss_opt):
        raise FitFailed("predicted loss is non-finite along the whole budget constraint")
    n_opt = math.exp(log_n_opt)

    curve = []
    for log_n in np.linspace(log_lo, log_hi, curve_points):
        n = math.exp(log_n)
        d = d_of(n)
        curve.append((n, d, float(fit.predict(n, d))))

    return IsoflopResult(
        budget=budget,
        n_opt=n_opt,
        d_opt=d_of(n_opt),
        loss_opt=float(loss_opt),
        curve=tuple(curve),
        d_unit=fit.d_unit,
    )


@dataclass(frozen=True)
class BudgetQuery:
    """One planning request as serialized into run outputs."""

    kind: str  # "data_needed" | "params_needed" | "match" | "isoflop"
    fit: ChinchillaFit
    flop_mode: str = "sixnd"
    arch_name: str | None = None
    target_loss: float | None = None
    flop_budget: float | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "fit": self.fit.to_dict(),
            "flop_mode": self.flop_mode,
            "arch": self.arch_name,
            "target_loss": self.target_loss,
            "flop_budget": self.flop_budget,
        }
