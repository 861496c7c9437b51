"""Preset coefficient oracles, regime validation, and the Lipschitz probe."""

import pickle

import numpy as np
import pytest

from mvfbm.measure import EmpiricalMeasure
from mvfbm.model import (
    ConstantDiffusion,
    MeasureDiffusion,
    ModelSpec,
    RegimeTag,
    RegimeViolation,
    StateMeasureDiffusion,
    lipschitz_probe,
    preset_by_name,
    preset_mean_deviation,
    preset_mean_reverting,
    preset_unstable_cubic,
    validate,
)
from mvfbm.streams import StreamKey


def _measure(*values):
    return EmpiricalMeasure(np.array(values, dtype=float).reshape(-1, 1))


class TestMeanDeviationPreset:
    def test_drift_at_point_mass(self):
        model = preset_mean_deviation()
        # b(1, delta_1) = 2*1 - 1 = 1
        out = model.drift(np.array([[1.0]]), _measure(1.0))
        assert out[0, 0] == pytest.approx(1.0)

    def test_sigma_vanishes_at_the_mean(self):
        model = preset_mean_deviation()
        sigma = model.diffusion.fn(np.array([[2.5]]), _measure(2.5))
        assert sigma.reshape(-1)[0] == 0.0

    def test_all_equal_drift_is_state(self):
        model = preset_mean_deviation()
        states = np.full((4, 1), 3.0)
        out = model.drift(states, EmpiricalMeasure(states))
        assert np.allclose(out, states)  # 2x - x = x

    def test_spread_initial_sampler(self):
        model = preset_mean_deviation(initial=1.0, initial_spread=0.5)
        states = model.initial_states(2000, StreamKey(8).generator())
        assert states.shape == (2000, 1)
        assert abs(states.mean() - 1.0) < 0.05
        assert abs(states.std() - 0.5) < 0.05

    def test_point_initial_default(self):
        states = preset_mean_deviation().initial_states(5, StreamKey(0).generator())
        assert np.array_equal(states, np.ones((5, 1)))


class TestMeanRevertingPreset:
    def test_two_particles_drift_toward_mean(self):
        model = preset_mean_reverting(xi=0.0, rate=1.0)
        states = np.array([[0.0], [2.0]])
        out = model.drift(states, EmpiricalMeasure(states))
        assert np.allclose(out, [[1.0], [-1.0]])

    def test_all_equal_drift_vanishes(self):
        model = preset_mean_reverting(xi=1.0, rate=3.0)
        states = np.full((3, 1), 1.7)
        out = model.drift(states, EmpiricalMeasure(states))
        assert np.allclose(out, 0.0)

    def test_constant_diffusion_matrix(self):
        model = preset_mean_reverting(xi=2.5, rate=1.0)
        assert isinstance(model.diffusion, ConstantDiffusion)
        assert model.diffusion.matrix[0, 0] == 2.5


class TestValidate:
    def test_smooth_regime_accepts_measure_diffusion(self):
        assert validate(preset_mean_deviation(), 0.7) == RegimeTag.SMOOTH_MEASURE

    def test_rough_regime_with_constant(self):
        assert validate(preset_mean_reverting(), 0.3) == RegimeTag.ROUGH_CONSTANT

    def test_rough_regime_rejects_measure_diffusion(self):
        with pytest.raises(RegimeViolation):
            validate(preset_mean_deviation(), 0.3)

    def test_standard_regime_accepts_both(self):
        assert validate(preset_mean_deviation(), 0.5) == RegimeTag.STANDARD_BROWNIAN
        assert validate(preset_mean_reverting(), 0.5) == RegimeTag.STANDARD_BROWNIAN

    def test_total_over_grid(self):
        # every combination yields a tag or RegimeViolation, never another error
        models = [preset_mean_deviation(), preset_mean_reverting(), preset_unstable_cubic()]
        for model in models:
            for h in (0.1, 0.3, 0.5, 0.7, 0.9):
                try:
                    tag = validate(model, h)
                    assert tag in (
                        RegimeTag.ROUGH_CONSTANT,
                        RegimeTag.SMOOTH_MEASURE,
                        RegimeTag.STANDARD_BROWNIAN,
                    )
                except RegimeViolation:
                    assert h < 0.5


def _zero_drift(states, mu):
    return np.zeros_like(states)


class TestLipschitzProbe:
    def test_zero_drift_zero_ratio(self):
        model = ModelSpec(
            name="null",
            dimension=1,
            drift=_zero_drift,
            diffusion=ConstantDiffusion(np.array([[0.0]])),
            initial=0.0,
            lipschitz_constant=1.0,
        )
        report = lipschitz_probe(model, 50, StreamKey(3))
        assert report.max_lipschitz_ratio == 0.0
        assert not report.flagged

    def test_linear_preset_never_flagged(self):
        report = lipschitz_probe(preset_mean_deviation(), 300, StreamKey(17))
        assert report.max_lipschitz_ratio <= 2.0 + 1e-9
        assert not report.flagged

    def test_quadratic_drift_flagged(self):
        model = ModelSpec(
            name="quadratic",
            dimension=1,
            drift=lambda states, mu: states**2,
            diffusion=ConstantDiffusion(np.array([[1.0]])),
            initial=0.0,
            lipschitz_constant=2.0,
        )
        report = lipschitz_probe(model, 300, StreamKey(23))
        assert report.flagged

    def test_sample_count_validated(self):
        with pytest.raises(ValueError):
            lipschitz_probe(preset_mean_deviation(), 1, StreamKey(0))


def _measure_only_sigma(mu):
    return np.array([[float(mu.mean()[0])]])


def _state_wrapped_sigma(states, mu):
    return np.repeat(_measure_only_sigma(mu)[None, :, :], states.shape[0], axis=0)


def test_state_measure_reduces_to_measure_only():
    """Ignoring the state argument reproduces the measure-only diffusion."""
    from mvfbm.simulator import ParticleEnsemble, em_step

    states = np.array([[0.5], [1.5], [-1.0]])
    increments = np.array([[0.2], [-0.3], [0.1]])
    base = dict(dimension=1, drift=_zero_drift, initial=0.0, lipschitz_constant=1.0)
    measure_model = ModelSpec(name="m", diffusion=MeasureDiffusion(_measure_only_sigma), **base)
    wrapped_model = ModelSpec(name="w", diffusion=StateMeasureDiffusion(_state_wrapped_sigma), **base)
    out_measure = em_step(ParticleEnsemble(states, 0), measure_model, 0.1, increments)
    out_wrapped = em_step(ParticleEnsemble(states, 0), wrapped_model, 0.1, increments)
    assert np.allclose(out_measure.states, out_wrapped.states, rtol=1e-15)


def test_presets_picklable():
    for name in ("mean-deviation", "mean-reverting", "unstable-cubic"):
        model = preset_by_name(name, xi=0.5, rate=2.0, initial=1.5)
        clone = pickle.loads(pickle.dumps(model))
        states = np.array([[1.0], [2.0]])
        mu = EmpiricalMeasure(states)
        assert np.allclose(clone.drift(states, mu), model.drift(states, mu))


def test_preset_by_name_unknown():
    with pytest.raises(ValueError, match="unknown model preset"):
        preset_by_name("nope")


def test_constant_diffusion_must_be_square():
    with pytest.raises(ValueError):
        ConstantDiffusion(np.zeros((2, 3)))


def test_initial_sampler_shape_checked():
    model = ModelSpec(
        name="bad-init",
        dimension=2,
        drift=_zero_drift,
        diffusion=ConstantDiffusion(np.eye(2)),
        initial=lambda rng, count: rng.normal(size=(count, 1)),
        lipschitz_constant=1.0,
    )
    with pytest.raises(ValueError, match="initial sampler"):
        model.initial_states(4, StreamKey(1).generator())
