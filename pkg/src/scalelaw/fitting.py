"""Scaling-law fitting by Huber-loss minimization with multi-start BFGS.

Two functional forms are supported:

    power law    L(N)    = alpha * N^(-p) + beta
    bivariate    L(N, D) = E + a / N^alpha + b / D^beta

Both are fitted by minimizing sum_i huber(residual_i, delta) where the
residual is log(L_hat) - log(L) by default (Linear space selectable) and
huber is the piecewise quadratic/linear robust loss with transition delta
(default 0.01). Scale parameters are optimized in log space, theta =
(log alpha, p, log beta) and (log E, log a, alpha, log b, beta), which
keeps them positive and makes the laws numerically tame over many orders of
magnitude of N and D.

The objective is multi-modal, so fits run from a deterministic multi-start
grid: exponents swept over {0, 0.5, 1, 1.5, 2}, log-scale parameters drawn
from [-1, 20] with a seeded generator, plus a few data-informed starts. The
lowest final objective wins; ties keep the earliest grid entry. Fits are
bit-for-bit reproducible given (observations, config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import FitFailed, InsufficientData, InvalidInput
from .observations import Observation, group_key, select_final_checkpoints
from .optimize import MinimizeResult, minimize_bfgs

RESIDUAL_SPACES = ("log", "linear")
EXPONENT_SWEEP = (0.0, 0.5, 1.0, 1.5, 2.0)
LOG_SCALE_BOUNDS = (-1.0, 20.0)


def huber(residual, delta: float):
    """Piecewise robust loss: r^2/2 inside |r| <= delta, delta*(|r| - delta/2) outside.

    Continuous and C1 at the transition; accepts scalars or arrays.
    """
    if not delta > 0:
        raise InvalidInput(f"huber delta must be > 0, got {delta}")
    r = np.asarray(residual, dtype=float)
    a = np.abs(r)
    out = np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))
    return float(out) if np.isscalar(residual) else out


def _huber_prime(r: np.ndarray, delta: float) -> np.ndarray:
    return np.where(np.abs(r) <= delta, r, delta * np.sign(r))


@dataclass(frozen=True)
class FitConfig:
    huber_delta: float = 0.01
    residual_space: str = "log"
    init_grid: tuple[tuple[float, ...], ...] | None = None
    max_iterations: int = 500
    gradient_tolerance: float = 1e-10
    seed: int = 0
    n_log_samples: int = 6

    def __post_init__(self):
        if not self.huber_delta > 0:
            raise InvalidInput("huber_delta must be > 0")
        if self.residual_space not in RESIDUAL_SPACES:
            raise InvalidInput(f"residual_space must be one of {RESIDUAL_SPACES}")
        if self.init_grid is not None and len(self.init_grid) == 0:
            raise InvalidInput("init_grid must be non-empty when given")


@dataclass(frozen=True)
class PowerLawFit:
    """Fitted L(N) = alpha * N^(-p) + beta."""

    alpha: float
    p: float
    beta: float
    objective: float
    converged: bool
    n_points: int
    residual_space: str = "log"
    huber_delta: float = 0.01

    def predict(self, n):
        n = np.asarray(n, dtype=float)
        out = self.alpha * np.power(n, -self.p) + self.beta
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {
            "law": "power",
            "alpha": self.alpha,
            "p": self.p,
            "beta": self.beta,
            "objective": self.objective,
            "converged": self.converged,
            "n_points": self.n_points,
            "residual_space": self.residual_space,
            "huber_delta": self.huber_delta,
        }


@dataclass(frozen=True)
class ChinchillaFit:
    """Fitted L(N, D) = E + a / N^alpha + b / D^beta.

    d_unit records whether D was measured in training samples or tokens;
    planners refuse FLOP conversions whose unit disagrees.
    """

    e: float
    a: float
    alpha: float
    b: float
    beta: float
    objective: float
    converged: bool
    n_points: int
    residual_space: str = "log"
    huber_delta: float = 0.01
    d_unit: str = "samples"

    def predict(self, n, d):
        n = np.asarray(n, dtype=float)
        d = np.asarray(d, dtype=float)
        out = self.e + self.a * np.power(n, -self.alpha) + self.b * np.power(d, -self.beta)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {
            "law": "chinchilla",
            "E": self.e,
            "a": self.a,
            "alpha": self.alpha,
            "b": self.b,
            "beta": self.beta,
            "objective": self.objective,
            "converged": self.converged,
            "n_points": self.n_points,
            "residual_space": self.residual_space,
            "huber_delta": self.huber_delta,
            "d_unit": self.d_unit,
        }


def fit_from_dict(raw: dict) -> "PowerLawFit | ChinchillaFit":
    try:
        if raw["law"] == "power":
            return PowerLawFit(
                alpha=float(raw["alpha"]),
                p=float(raw["p"]),
                beta=float(raw["beta"]),
                objective=float(raw["objective"]),
                converged=bool(raw["converged"]),
                n_points=int(raw["n_points"]),
                residual_space=str(raw.get("residual_space", "log")),
                huber_delta=float(raw.get("huber_delta", 0.01)),
            )
        if raw["law"] == "chinchilla":
            return ChinchillaFit(
                e=float(raw["E"]),
                a=float(raw["a"]),
                alpha=float(raw["alpha"]),
                b=float(raw["b"]),
                beta=float(raw["beta"]),
                objective=float(raw["objective"]),
                converged=bool(raw["converged"]),
                n_points=int(raw["n_points"]),
                residual_space=str(raw.get("residual_space", "log")),
                huber_delta=float(raw.get("huber_delta", 0.01)),
                d_unit=str(raw.get("d_unit", "samples")),
            )
        raise InvalidInput(f"unknown law {raw['law']!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"bad fit record: {exc}") from exc


def predict(fit, n, d=None):
    """Evaluate a fitted law; Chinchilla fits require D."""
    if isinstance(fit, PowerLawFit):
        return fit.predict(n)
    if isinstance(fit, ChinchillaFit):
        if d is None:
            raise InvalidInput("Chinchilla fits need D to predict")
        return fit.predict(n, d)
    raise InvalidInput(f"not a fit object: {fit!r}")


# ---------------------------------------------------------------------------
# objectives (value + analytic gradient, log-space parameterization)


def _power_value_grad(theta: np.ndarray, log_n: np.ndarray, loss: np.ndarray, log_loss: np.ndarray,
                      delta: float, space: str) -> tuple[float, np.ndarray]:
    la, p, lb = theta
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        term = np.exp(la - p * log_n)
        off = np.exp(lb)
        pred = term + off
        if not np.all(np.isfinite(pred)):
            return float("inf"), np.zeros(3)
        if space == "log":
            r = np.log(pred) - log_loss
            w = _huber_prime(r, delta) / pred
        else:
            r = pred - loss
            w = _huber_prime(r, delta)
        value = float(np.sum(huber(r, delta)))
        grad = np.array([np.sum(w * term), np.sum(w * term * -log_n), np.sum(w * off)])
    if not (np.isfinite(value) and np.all(np.isfinite(grad))):
        return float("inf"), np.zeros(3)
    return value, grad


def _chinchilla_value_grad(theta: np.ndarray, log_n: np.ndarray, log_d: np.ndarray, loss: np.ndarray,
                           log_loss: np.ndarray, delta: float, space: str) -> tuple[float, np.ndarray]:
    le, la, alpha, lb, beta = theta
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        e = np.exp(le)
        term_n = np.exp(la - alpha * log_n)
        term_d = np.exp(lb - beta * log_d)
        pred = e + term_n + term_d
        if not np.all(np.isfinite(pred)):
            return float("inf"), np.zeros(5)
        if space == "log":
            r = np.log(pred) - log_loss
            w = _huber_prime(r, delta) / pred
        else:
            r = pred - loss
            w = _huber_prime(r, delta)
        value = float(np.sum(huber(r, delta)))
        grad = np.array(
            [
                np.sum(w) * e,
                np.sum(w * term_n),
                np.sum(w * term_n * -log_n),
                np.sum(w * term_d),
                np.sum(w * term_d * -log_d),
            ]
        )
    if not (np.isfinite(value) and np.all(np.isfinite(grad))):
        return float("inf"), np.zeros(5)
    return value, grad


def power_objective(obs_n: np.ndarray, obs_loss: np.ndarray, cfg: FitConfig) -> Callable[[np.ndarray], float]:
    """Objective over theta = (log alpha, p, log beta); used by tests and oracles."""
    log_n, loss, log_loss = np.log(obs_n), obs_loss, np.log(obs_loss)

    def f(theta: np.ndarray) -> float:
        return _power_value_grad(np.asarray(theta, float), log_n, loss, log_loss, cfg.huber_delta, cfg.residual_space)[0]

    return f


def chinchilla_objective(obs_n: np.ndarray, obs_d: np.ndarray, obs_loss: np.ndarray,
                         cfg: FitConfig) -> Callable[[np.ndarray], float]:
    """Objective over theta = (log E, log a, alpha, log b, beta)."""
    log_n, log_d = np.log(obs_n), np.log(obs_d)
    loss, log_loss = obs_loss, np.log(obs_loss)

    def f(theta: np.ndarray) -> float:
        return _chinchilla_value_grad(
            np.asarray(theta, float), log_n, log_d, loss, log_loss, cfg.huber_delta, cfg.residual_space
        )[0]

    return f


# ---------------------------------------------------------------------------
# multi-start grids


def default_power_grid(cfg: FitConfig, n: np.ndarray, loss: np.ndarray) -> tuple[tuple[float, ...], ...]:
    """Exponent sweep x seeded log-scale samples, plus data-informed starts."""
    rng = np.random.default_rng(cfg.seed)
    lo, hi = LOG_SCALE_BOUNDS
    starts: list[tuple[float, ...]] = []
    for p0 in EXPONENT_SWEEP:
        draws = rng.uniform(lo, hi, size=(cfg.n_log_samples, 2))
        for la0, lb0 in draws:
            starts.append((la0, p0, lb0))
    l_min, l_max = float(np.min(loss)), float(np.max(loss))
    spread = max(l_max - l_min, 1e-3)
    lb_data = float(np.log(max(0.9 * l_min, 1e-9)))
    for p0 in (0.3, 0.5, 1.0):
        starts.append((float(np.log(spread) + p0 * np.log(np.min(n))), p0, lb_data))
    return tuple(starts)


def default_chinchilla_grid(cfg: FitConfig, n: np.ndarray, d: np.ndarray,
                            loss: np.ndarray) -> tuple[tuple[float, ...], ...]:
    rng = np.random.default_rng(cfg.seed)
    lo, hi = LOG_SCALE_BOUNDS
    l_min, l_max = float(np.min(loss)), float(np.max(loss))
    le_lo, le_hi = np.log(max(0.05 * l_min, 1e-9)), np.log(max(0.95 * l_min, 2e-9))
    starts: list[tuple[float, ...]] = []
    for a0 in EXPONENT_SWEEP:
        for b0 in EXPONENT_SWEEP:
            for _ in range(max(1, cfg.n_log_samples // 3)):
                le0 = rng.uniform(le_lo, le_hi)
                la0, lb0 = rng.uniform(lo, hi, size=2)
                starts.append((le0, la0, a0, lb0, b0))
    spread = max(l_max - l_min, 1e-3)
    for a0, b0 in ((0.3, 0.3), (0.5, 0.5)):
        starts.append(
            (
                float(np.log(max(0.8 * l_min, 1e-9))),
                float(np.log(spread / 2) + a0 * np.log(np.min(n))),
                a0,
                float(np.log(spread / 2) + b0 * np.log(np.min(d))),
                b0,
            )
        )
    return tuple(starts)


# ---------------------------------------------------------------------------
# fitting


def _run_multistart(
    value_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    starts: Sequence[tuple[float, ...]],
    cfg: FitConfig,
) -> MinimizeResult:
    def f(theta: np.ndarray) -> float:
        return value_grad(theta)[0]

    def g(theta: np.ndarray) -> np.ndarray:
        return value_grad(theta)[1]

    best: MinimizeResult | None = None
    any_finite = False
    for start in starts:
        x0 = np.asarray(start, dtype=float)
        if np.isfinite(f(x0)):
            any_finite = True
        result = minimize_bfgs(
            f, x0, grad=g, gtol=cfg.gradient_tolerance, max_iter=cfg.max_iterations
        )
        if best is None or result.fun < best.fun:
            best = result
    if not any_finite or best is None or not np.isfinite(best.fun):
        raise FitFailed("objective non-finite at every start")
    return best


def _as_arrays(observations: Sequence[Observation]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = np.array([o.n for o in observations], dtype=float)
    d = np.array([o.d for o in observations], dtype=float)
    loss = np.array([o.loss for o in observations], dtype=float)
    return n, d, loss


def fit_power_law(observations: Sequence[Observation], cfg: FitConfig | None = None) -> PowerLawFit:
    """Fit L(N) = alpha * N^(-p) + beta to (typically final-checkpoint) losses."""
    cfg = cfg or FitConfig()
    n, _, loss = _as_arrays(observations)
    if len(observations) < 3 or len(np.unique(n)) < 3:
        raise InsufficientData(f"power-law fit needs >= 3 observations at >= 3 distinct N, got {len(observations)}")

    log_n, log_loss = np.log(n), np.log(loss)

    def value_grad(theta: np.ndarray) -> tuple[float, np.ndarray]:
        return _power_value_grad(theta, log_n, loss, log_loss, cfg.huber_delta, cfg.residual_space)

    starts = cfg.init_grid or default_power_grid(cfg, n, loss)
    best = _run_multistart(value_grad, starts, cfg)
    la, p, lb = best.x
    fit = PowerLawFit(
        alpha=float(np.exp(la)),
        p=float(p),
        beta=float(np.exp(lb)),
        objective=float(best.fun),
        converged=best.converged,
        n_points=len(observations),
        residual_space=cfg.residual_space,
        huber_delta=cfg.huber_delta,
    )
    _check_finite_predictions(fit, n)
    return fit


def fit_chinchilla(observations: Sequence[Observation], cfg: FitConfig | None = None,
                   d_unit: str = "samples") -> ChinchillaFit:
    """Fit L(N, D) = E + a/N^alpha + b/D^beta on all checkpoints."""
    cfg = cfg or FitConfig()
    if d_unit not in ("samples", "tokens"):
        raise InvalidInput(f"d_unit must be 'samples' or 'tokens', got {d_unit!r}")
    n, d, loss = _as_arrays(observations)
    if len(observations) < 5 or len(np.unique(n)) < 2 or len(np.unique(d)) < 2:
        raise InsufficientData(
            "Chinchilla fit needs >= 5 observations spanning >= 2 distinct N and >= 2 distinct D"
        )

    log_n, log_d, log_loss = np.log(n), np.log(d), np.log(loss)

    def value_grad(theta: np.ndarray) -> tuple[float, np.ndarray]:
        return _chinchilla_value_grad(theta, log_n, log_d, loss, log_loss, cfg.huber_delta, cfg.residual_space)

    starts = cfg.init_grid or default_chinchilla_grid(cfg, n, d, loss)
    best = _run_multistart(value_grad, starts, cfg)
    le, la, alpha, lb, beta = best.x
    fit = ChinchillaFit(
        e=float(np.exp(le)),
        a=float(np.exp(la)),
        alpha=float(alpha),
        b=float(np.exp(lb)),
        beta=float(beta),
        objective=float(best.fun),
        converged=best.converged,
        n_points=len(observations),
        residual_space=cfg.residual_space,
        huber_delta=cfg.huber_delta,
        d_unit=d_unit,
    )
    _check_finite_predictions(fit, n, d)
    return fit


def _check_finite_predictions(fit, n: np.ndarray, d: np.ndarray | None = None) -> None:
    """Fitted predictions must stay finite and positive over [min N / 10, max N * 10]."""
    span = np.geomspace(np.min(n) / 10.0, np.max(n) * 10.0, 64)
    if d is None:
        pred = fit.predict(span)
    else:
        pred = fit.predict(span, np.geomspace(np.min(d), np.max(d), 64))
    if not (np.all(np.isfinite(pred)) and np.all(pred > 0)):
        raise FitFailed("fitted law predicts non-finite or non-positive loss near the observed range")


# ---------------------------------------------------------------------------
# grouped fits and the subset-extrapolation study


@dataclass(frozen=True)
class GroupedFitResult:
    fits: dict[str, PowerLawFit | ChinchillaFit]
    skipped: dict[str, str]

    def to_dict(self) -> dict:
        return {
            "fits": {g: f.to_dict() for g, f in self.fits.items()},
            "skipped": dict(self.skipped),
        }


def fit_grouped(observations: Sequence[Observation], key: str, cfg: FitConfig | None = None,
                law: str = "power") -> GroupedFitResult:
    """Independent fits per direction/domain group; failures reported, not fatal."""
    cfg = cfg or FitConfig()
    groups: dict[str, list[Observation]] = {}
    for obs in observations:
        groups.setdefault(group_key(obs, key), []).append(obs)

    fits: dict[str, PowerLawFit | ChinchillaFit] = {}
    skipped: dict[str, str] = {}
    for label in sorted(groups):
        members = groups[label]
        try:
            if law == "power":
                fits[label] = fit_power_law(select_final_checkpoints(members), cfg)
            elif law == "chinchilla":
                fits[label] = fit_chinchilla(members, cfg)
            else:
                raise InvalidInput(f"unknown law {law!r}")
        except (InsufficientData, FitFailed) as exc:
            skipped[label] = str(exc)
    return GroupedFitResult(fits=fits, skipped=skipped)


@dataclass(frozen=True)
class HoldoutRow:
    n_dropped: int
    fit_models: tuple[str, ...]
    held_out_model: str
    n: float
    actual: float
    predicted: float
    signed_error: float
    relative_error: float


@dataclass(frozen=True)
class SubsetFit:
    n_dropped: int
    fit_models: tuple[str, ...]
    in_sample_max_rel_residual: float
    objective: float
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class HoldoutReport:
    law: str
    ladder: tuple[str, ...]
    subsets: tuple[SubsetFit, ...]
    rows: tuple[HoldoutRow, ...]

    def to_dict(self) -> dict:
        return {
            "law": self.law,
            "ladder": list(self.ladder),
            "subsets": [
                {
                    "n_dropped": s.n_dropped,
                    "fit_models": list(s.fit_models),
                    "in_sample_max_rel_residual": s.in_sample_max_rel_residual,
                    "objective": s.objective,
                    "params": s.params,
                }
                for s in self.subsets
            ],
            "rows": [
                {
                    "n_dropped": r.n_dropped,
                    "fit_models": list(r.fit_models),
                    "held_out_model": r.held_out_model,
                    "N": r.n,
                    "actual": r.actual,
                    "predicted": r.predicted,
                    "signed_error": r.signed_error,
                    "relative_error": r.relative_error,
                }
                for r in self.rows
            ],
        }


def holdout_extrapolation(observations: Sequence[Observation], ladder: Sequence[str],
                          cfg: FitConfig | None = None, law: str = "power") -> HoldoutReport:
    """Fit on every proper prefix of the ladder and score the held-out models.

    For each k in 1..len(ladder)-3 the largest k models are held out, the law
    is fitted on the remainder, and each held-out model's final loss is
    compared against the extrapolated prediction. Large held-out errors
    relative to in-sample residuals are the signature of a scaling break.
    """
    cfg = cfg or FitConfig()
    ladder = tuple(ladder)
    if len(ladder) < 4:
        raise InsufficientData(f"holdout study needs a ladder of >= 4 models, got {len(ladder)}")
    if law not in ("power", "chinchilla"):
        raise InvalidInput(f"unknown law {law!r}")

    by_model: dict[str, list[Observation]] = {}
    for obs in observations:
        by_model.setdefault(obs.model_name, []).append(obs)
    missing = [m for m in ladder if m not in by_model]
    if missing:
        raise InvalidInput(f"ladder models absent from observations: {missing}")
    sizes = [max(o.n for o in by_model[m]) for m in ladder]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidInput("ladder must be ordered by N ascending")

    finals = {m: max(by_model[m], key=lambda o: o.d) for m in ladder}

    subsets: list[SubsetFit] = []
    rows: list[HoldoutRow] = []
    for k in range(1, len(ladder) - 2):
        fit_models = ladder[:-k]
        held_out = ladder[-k:]
        subset_obs = [o for m in fit_models for o in by_model[m]]
        if law == "power":
            fit = fit_power_law(select_final_checkpoints(subset_obs), cfg)
            in_sample = [finals[m] for m in fit_models]
            preds = np.array([fit.predict(o.n) for o in in_sample])
        else:
            fit = fit_chinchilla(subset_obs, cfg)
            in_sample = subset_obs
            preds = np.array([fit.predict(o.n, o.d) for o in in_sample])
        actual = np.array([o.loss for o in in_sample])
        in_sample_max = float(np.max(np.abs(preds - actual) / actual))
        params = fit.to_dict()
        subsets.append(
            SubsetFit(
                n_dropped=k,
                fit_models=fit_models,
                in_sample_max_rel_residual=in_sample_max,
                objective=fit.objective,
                params=params,
            )
        )
        for m in held_out:
            obs = finals[m]
            pred = fit.predict(obs.n) if law == "power" else fit.predict(obs.n, obs.d)
            rows.append(
                HoldoutRow(
                    n_dropped=k,
                    fit_models=fit_models,
                    held_out_model=m,
                    n=obs.n,
                    actual=obs.loss,
                    predicted=float(pred),
                    signed_error=float(pred - obs.loss),
                    relative_error=float((pred - obs.loss) / obs.loss),
                )
            )
    return HoldoutReport(law=law, ladder=ladder, subsets=tuple(subsets), rows=tuple(rows))
