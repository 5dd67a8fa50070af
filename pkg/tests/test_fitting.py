"""Huber objective, law fitting, grouped fits, and subset extrapolation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalelaw.errors import FitFailed, InsufficientData, InvalidInput
from scalelaw.fitting import (
    ChinchillaFit,
    FitConfig,
    PowerLawFit,
    default_power_grid,
    fit_chinchilla,
    fit_from_dict,
    fit_grouped,
    fit_power_law,
    holdout_extrapolation,
    huber,
    power_objective,
    predict,
)
from scalelaw.observations import Observation, load_observations, select_final_checkpoints


def power_obs(alpha=10.0, p=0.3, beta=1.5, n_values=None, noise=None):
    n_values = np.geomspace(1e7, 1e10, 8) if n_values is None else np.asarray(n_values, float)
    losses = alpha * n_values**-p + beta
    if noise is not None:
        losses = losses * (1.0 + noise)
    return [
        Observation(f"m{i}", n=float(n), d=1.0, loss=float(l))
        for i, (n, l) in enumerate(zip(n_values, losses))
    ]


CHIN = dict(e=1.7, a=400.0, alpha=0.34, b=1200.0, beta=0.28)


def chinchilla_obs(n_count=6, d_count=20, noise_rng=None, b=CHIN["b"]):
    ns = np.geomspace(1e7, 1e10, n_count)
    ds = np.geomspace(1e8, 1e11, d_count)
    obs = []
    for i, n in enumerate(ns):
        for d in ds:
            loss = CHIN["e"] + CHIN["a"] * n ** -CHIN["alpha"] + b * d ** -CHIN["beta"]
            if noise_rng is not None:
                loss *= 1.0 + noise_rng.normal(0, 0.01)
            obs.append(Observation(f"m{i}", n=float(n), d=float(d), loss=float(loss)))
    return obs, ns, ds


class TestHuber:
    def test_hand_values(self):
        assert huber(0.0, 0.01) == 0.0
        assert huber(0.005, 0.01) == pytest.approx(1.25e-5, rel=1e-12)
        assert huber(0.02, 0.01) == pytest.approx(1.5e-4, rel=1e-12)

    def test_vectorized(self):
        got = huber(np.array([0.0, 0.005, 0.02]), 0.01)
        assert got == pytest.approx([0.0, 1.25e-5, 1.5e-4], rel=1e-12)

    def test_invalid_delta(self):
        for delta in (0.0, -0.01):
            with pytest.raises(InvalidInput):
                huber(0.1, delta)

    @given(r=st.floats(-10, 10, allow_nan=False), delta=st.floats(1e-6, 2.0, allow_nan=False))
    @settings(max_examples=300, deadline=None)
    def test_laws(self, r, delta):
        v = float(huber(r, delta))
        assert v == float(huber(-r, delta))  # even
        assert v <= 0.5 * r * r + 1e-18  # quadratic bound
        assert v >= 0.0

    def test_c1_at_transition(self):
        delta = 0.01
        # value continuous at |r| = delta
        assert huber(delta, delta) == pytest.approx(0.5 * delta**2, rel=1e-12)
        # one-sided difference quotients agree (C1)
        h = 1e-9
        left = (huber(delta, delta) - huber(delta - h, delta)) / h
        right = (huber(delta + h, delta) - huber(delta, delta)) / h
        assert left == pytest.approx(right, rel=1e-5)
        assert left == pytest.approx(delta, rel=1e-5)


class TestObservations:
    def test_validation(self):
        with pytest.raises(InvalidInput):
            Observation("m", n=0.0, d=1.0, loss=2.0)
        with pytest.raises(InvalidInput):
            Observation("m", n=1.0, d=-1.0, loss=2.0)
        with pytest.raises(InvalidInput):
            Observation("m", n=1.0, d=1.0, loss=0.0)

    def test_load_csv(self, tmp_path):
        path = tmp_path / "obs.csv"
        path.write_text(
            "model,N,D,loss,direction,domain\n"
            "m0,1e7,2e8,3.1,ende,general\n"
            "m1,2e7,2e8,2.9,enfr,finance\n"
        )
        obs = load_observations(path)
        assert len(obs) == 2
        assert obs[0].n == 1e7 and obs[0].direction == "ende" and obs[0].domain == "general"

    def test_load_jsonl(self, tmp_path):
        path = tmp_path / "obs.jsonl"
        path.write_text('{"model": "m0", "N": 1e7, "D": 1e8, "loss": 3.0}\n')
        obs = load_observations(path)
        assert obs[0].model_name == "m0" and obs[0].d == 1e8

    def test_final_checkpoint_selection(self):
        obs = [
            Observation("m0", n=1e7, d=1e8, loss=3.0),
            Observation("m0", n=1e7, d=3e8, loss=2.8),
            Observation("m1", n=1e8, d=3e8, loss=2.5),
        ]
        finals = select_final_checkpoints(obs)
        assert [(o.model_name, o.d) for o in finals] == [("m0", 3e8), ("m1", 3e8)]


class TestPowerLawFit:
    def test_noiseless_recovery(self):
        fit = fit_power_law(power_obs())
        ns = np.geomspace(1e7, 1e10, 50)
        true = 10.0 * ns**-0.3 + 1.5
        rel = np.max(np.abs(fit.predict(ns) - true) / true)
        assert rel < 1e-4
        assert fit.alpha == pytest.approx(10.0, rel=1e-3)
        assert fit.p == pytest.approx(0.3, rel=1e-3)
        assert fit.beta == pytest.approx(1.5, rel=1e-3)
        assert fit.converged

    def test_flat_data_degenerate(self):
        obs = [Observation(f"m{i}", n=float(n), d=1.0, loss=2.0)
               for i, n in enumerate(np.geomspace(1e7, 1e10, 6))]
        fit = fit_power_law(obs)
        ns = np.geomspace(1e7, 1e10, 50)
        assert fit.beta == pytest.approx(2.0, abs=1e-6)
        assert np.max(fit.alpha * ns**-fit.p) < 1e-6

    def test_noisy_extrapolation(self):
        rng = np.random.default_rng(2024)
        noise = rng.normal(0, 0.01, size=8)
        fit = fit_power_law(power_obs(noise=noise))
        n_test = 2 * 1e10
        true = 10.0 * n_test**-0.3 + 1.5
        assert abs(fit.predict(n_test) - true) / true < 0.03

    def test_insufficient_observations(self):
        with pytest.raises(InsufficientData):
            fit_power_law(power_obs(n_values=[1e7, 1e8]))

    def test_insufficient_distinct_n(self):
        obs = [Observation(f"m{i}", n=1e7 if i < 2 else 1e8, d=1.0, loss=2.0 + i * 0.1)
               for i in range(4)]
        with pytest.raises(InsufficientData):
            fit_power_law(obs)

    def test_deterministic_bit_for_bit(self):
        obs = power_obs(noise=np.random.default_rng(7).normal(0, 0.01, size=8))
        assert fit_power_law(obs) == fit_power_law(obs)

    def test_objective_beats_every_grid_start(self):
        cfg = FitConfig()
        obs = power_obs(noise=np.random.default_rng(3).normal(0, 0.02, size=8))
        fit = fit_power_law(obs, cfg)
        n = np.array([o.n for o in obs])
        loss = np.array([o.loss for o in obs])
        f = power_objective(n, loss, cfg)
        start_values = [f(np.array(s)) for s in default_power_grid(cfg, n, loss)]
        assert fit.objective <= min(v for v in start_values if np.isfinite(v)) + 1e-12

    def test_log_vs_linear_residual(self):
        noise = np.random.default_rng(5).normal(0, 0.03, size=8)
        obs = power_obs(noise=noise)
        log_fit = fit_power_law(obs, FitConfig(residual_space="log"))
        lin_fit = fit_power_law(obs, FitConfig(residual_space="linear"))
        assert log_fit.residual_space == "log" and lin_fit.residual_space == "linear"
        assert np.isfinite(log_fit.objective) and np.isfinite(lin_fit.objective)
        assert log_fit != lin_fit

    def test_custom_init_grid(self):
        fit = fit_power_law(power_obs(), FitConfig(init_grid=((np.log(9.0), 0.25, np.log(1.4)),)))
        assert fit.p == pytest.approx(0.3, rel=1e-3)

    def test_round_trip_dict(self):
        fit = fit_power_law(power_obs())
        back = fit_from_dict(fit.to_dict())
        assert back == fit


class TestChinchillaFit:
    def test_noiseless_recovery(self):
        obs, ns, ds = chinchilla_obs()
        fit = fit_chinchilla(obs)
        nn, dd = np.meshgrid(ns, ds)
        true = CHIN["e"] + CHIN["a"] * nn.ravel() ** -CHIN["alpha"] + CHIN["b"] * dd.ravel() ** -CHIN["beta"]
        rel = np.max(np.abs(fit.predict(nn.ravel(), dd.ravel()) - true) / true)
        assert rel < 0.005
        n_held = 4 * ns.max()
        true_h = CHIN["e"] + CHIN["a"] * n_held ** -CHIN["alpha"] + CHIN["b"] * ds ** -CHIN["beta"]
        rel_h = np.max(np.abs(fit.predict(np.full_like(ds, n_held), ds) - true_h) / true_h)
        assert rel_h < 0.02

    def test_recovered_coefficients(self):
        obs, _, _ = chinchilla_obs()
        fit = fit_chinchilla(obs)
        assert fit.e == pytest.approx(CHIN["e"], rel=1e-6)
        assert fit.a == pytest.approx(CHIN["a"], rel=1e-6)
        assert fit.alpha == pytest.approx(CHIN["alpha"], rel=1e-6)
        assert fit.b == pytest.approx(CHIN["b"], rel=1e-6)
        assert fit.beta == pytest.approx(CHIN["beta"], rel=1e-6)

    def test_b_zeroed_data(self):
        obs, ns, ds = chinchilla_obs(d_count=5, b=0.0)
        fit = fit_chinchilla(obs)
        sweep = np.geomspace(ds[0], ds[-1], 40)
        assert np.max(fit.b * sweep**-fit.beta) < 1e-3 * fit.e

    def test_noisy_extrapolation(self):
        obs, ns, ds = chinchilla_obs(noise_rng=np.random.default_rng(2024))
        fit = fit_chinchilla(obs)
        n_test = 2 * ns.max()
        true = CHIN["e"] + CHIN["a"] * n_test ** -CHIN["alpha"] + CHIN["b"] * ds ** -CHIN["beta"]
        rel = np.max(np.abs(fit.predict(np.full_like(ds, n_test), ds) - true) / true)
        assert rel < 0.03

    def test_single_d_rejected(self):
        obs = [Observation(f"m{i}", n=float(n), d=1e9, loss=float(2 + 1e8 / n))
               for i, n in enumerate(np.geomspace(1e7, 1e10, 6))]
        with pytest.raises(InsufficientData):
            fit_chinchilla(obs)

    def test_too_few_rejected(self):
        obs, _, _ = chinchilla_obs(n_count=2, d_count=2)
        with pytest.raises(InsufficientData):
            fit_chinchilla(obs[:4])

    def test_d_unit_recorded(self):
        obs, _, _ = chinchilla_obs(n_count=3, d_count=4)
        assert fit_chinchilla(obs, d_unit="tokens").d_unit == "tokens"
        with pytest.raises(InvalidInput):
            fit_chinchilla(obs, d_unit="bytes")

    def test_deterministic_bit_for_bit(self):
        obs, _, _ = chinchilla_obs(noise_rng=np.random.default_rng(11), n_count=4, d_count=6)
        assert fit_chinchilla(obs) == fit_chinchilla(obs)

    def test_round_trip_dict(self):
        obs, _, _ = chinchilla_obs(n_count=3, d_count=4)
        fit = fit_chinchilla(obs, d_unit="tokens")
        back = fit_from_dict(fit.to_dict())
        assert back == fit


class TestPredict:
    def test_power_beta_floor(self):
        fit = PowerLawFit(alpha=0.0, p=0.5, beta=1.5, objective=0.0, converged=True, n_points=3)
        for n in (1e6, 1e9, 1e12):
            assert predict(fit, n) == 1.5

    def test_chinchilla_decreasing_in_d(self):
        fit = ChinchillaFit(e=1.7, a=400, alpha=0.34, b=1200, beta=0.28,
                            objective=0.0, converged=True, n_points=5)
        assert predict(fit, 1e9, 1e10) > predict(fit, 1e9, 1e11)

    def test_chinchilla_requires_d(self):
        fit = ChinchillaFit(e=1.7, a=400, alpha=0.34, b=1200, beta=0.28,
                            objective=0.0, converged=True, n_points=5)
        with pytest.raises(InvalidInput):
            predict(fit, 1e9)

    def test_matches_closed_form(self):
        obs, _, _ = chinchilla_obs()
        fit = fit_chinchilla(obs)
        want = CHIN["e"] + CHIN["a"] * 1e9 ** -CHIN["alpha"] + CHIN["b"] * 1e10 ** -CHIN["beta"]
        assert predict(fit, 1e9, 1e10) == pytest.approx(want, rel=1e-4)


class TestFitGrouped:
    def test_identical_groups_identical_fits(self):
        obs = []
        for direction in ("ende", "enfr"):
            for i, n in enumerate(np.geomspace(1e7, 1e10, 5)):
                obs.append(Observation(f"{direction}-m{i}", n=float(n), d=1.0,
                                       loss=float(10 * n**-0.3 + 1.5), direction=direction))
        res = fit_grouped(obs, "direction")
        a, b = res.fits["ende"], res.fits["enfr"]
        assert (a.alpha, a.p, a.beta) == (b.alpha, b.p, b.beta)

    def test_beta_offsets_ordered(self):
        obs = []
        for direction, beta in (("ende", 1.2), ("enfr", 1.8)):
            for i, n in enumerate(np.geomspace(1e7, 1e10, 5)):
                obs.append(Observation(f"{direction}-m{i}", n=float(n), d=1.0,
                                       loss=float(10 * n**-0.3 + beta), direction=direction))
        res = fit_grouped(obs, "direction")
        assert res.fits["ende"].beta == pytest.approx(1.2, rel=1e-3)
        assert res.fits["enfr"].beta == pytest.approx(1.8, rel=1e-3)
        assert res.fits["ende"].beta < res.fits["enfr"].beta

    def test_small_group_skipped_not_fatal(self):
        obs = [
            Observation(f"m{i}", n=float(n), d=1.0, loss=float(10 * n**-0.3 + 1.5), direction="ende")
            for i, n in enumerate(np.geomspace(1e7, 1e10, 5))
        ]
        obs.append(Observation("lonely", n=1e8, d=1.0, loss=2.0, direction="enfr"))
        res = fit_grouped(obs, "direction")
        assert "ende" in res.fits
        assert "enfr" in res.skipped

    def test_both_key_combines(self):
        obs = [
            Observation(f"m{i}", n=float(n), d=1.0, loss=float(10 * n**-0.3 + 1.5),
                        direction="ende", domain="general")
            for i, n in enumerate(np.geomspace(1e7, 1e10, 5))
        ]
        res = fit_grouped(obs, "both")
        assert list(res.fits) == ["ende/general"]

    def test_missing_tag_rejected(self):
        obs = [Observation("m", n=1e7, d=1.0, loss=2.0)]
        with pytest.raises(InvalidInput):
            fit_grouped(obs, "direction")


def ladder_obs(names, ns, gen, break_shift=0.0, noise_rng=None):
    obs = []
    for i, (name, n) in enumerate(zip(names, ns)):
        for frac in (0.25, 0.5, 1.0):
            loss = gen(n)
            if noise_rng is not None:
                loss *= 1.0 + noise_rng.normal(0, 0.005)
            if break_shift and i == len(names) - 1:
                loss += break_shift
            obs.append(Observation(name, n=float(n), d=float(1e9 * frac), loss=float(loss)))
    return obs


class TestHoldoutExtrapolation:
    names = [f"m{i}" for i in range(6)]
    ns = np.geomspace(3e7, 1e10, 6)

    @staticmethod
    def gen(n):
        return 12.0 * n**-0.28 + 1.4

    def test_exact_law_extrapolates_exactly(self):
        report = holdout_extrapolation(ladder_obs(self.names, self.ns, self.gen), self.names)
        assert {r.n_dropped for r in report.rows} == {1, 2, 3}
        assert len(report.rows) == 6  # k=1 holds out 1 model, k=2 two, k=3 three
        assert max(abs(r.relative_error) for r in report.rows) < 1e-4

    def test_injected_break_detected(self):
        rng = np.random.default_rng(0)
        obs = ladder_obs(self.names, self.ns, self.gen, break_shift=0.5, noise_rng=rng)
        report = holdout_extrapolation(obs, self.names)
        for subset in report.subsets:
            (row,) = [r for r in report.rows
                      if r.n_dropped == subset.n_dropped and r.held_out_model == "m5"]
            assert abs(row.relative_error) >= 10 * subset.in_sample_max_rel_residual

    def test_short_ladder_rejected(self):
        with pytest.raises(InsufficientData):
            holdout_extrapolation(ladder_obs(self.names[:3], self.ns[:3], self.gen), self.names[:3])

    def test_unknown_model_rejected(self):
        obs = ladder_obs(self.names, self.ns, self.gen)
        with pytest.raises(InvalidInput):
            holdout_extrapolation(obs, self.names + ["ghost"])

    def test_unsorted_ladder_rejected(self):
        obs = ladder_obs(self.names, self.ns, self.gen)
        with pytest.raises(InvalidInput):
            holdout_extrapolation(obs, self.names[::-1])

    def test_chinchilla_law_variant(self):
        rng = np.random.default_rng(1)
        obs = []
        for name, n in zip(self.names, self.ns):
            for d in np.geomspace(1e8, 1e10, 4):
                loss = 1.7 + 400 * n**-0.34 + 1200 * d**-0.28
                obs.append(Observation(name, n=float(n), d=float(d), loss=float(loss)))
        report = holdout_extrapolation(obs, self.names, law="chinchilla")
        assert max(abs(r.relative_error) for r in report.rows) < 1e-4
        assert report.law == "chinchilla"

    def test_report_serializes(self):
        report = holdout_extrapolation(ladder_obs(self.names, self.ns, self.gen), self.names)
        d = report.to_dict()
        assert d["ladder"] == list(self.names)
        assert len(d["rows"]) == len(report.rows)
        assert all("relative_error" in r for r in d["rows"])
