import numpy as np
import pytest
import scipy.stats

from quditpulse import (
    DesignConfig,
    PerturbationEnsemble,
    PhysicalParams,
    TargetMap,
    UnderparameterizedError,
    ascend,
    design,
    propagate,
    random_initial_waveform,
    required_phase_count,
    sample_haar_unitary,
    sample_random_state,
    sample_subspace_target,
)
from quditpulse.targets import RngStream

TWO_PI = 2 * np.pi


def toy_config(toy_params, **kwargs):
    defaults = dict(total_time=40e-6, dt=4e-6, params=toy_params, rng_seed=5)
    defaults.update(kwargs)
    return DesignConfig(**defaults)


class TestDesignConfig:
    def test_integral_time_required(self, toy_params):
        with pytest.raises(ValueError):
            DesignConfig(total_time=10e-6, dt=4e-6, params=toy_params)

    def test_n_steps(self, cs_params):
        cfg = DesignConfig(total_time=600e-6, dt=4e-6, params=cs_params)
        assert cfg.n_steps == 150
        assert cfg.n_phases == 450

    def test_bad_values(self, toy_params):
        with pytest.raises(ValueError):
            DesignConfig(total_time=40e-6, dt=4e-6, params=toy_params, target_fidelity=0.0)
        with pytest.raises(ValueError):
            DesignConfig(total_time=40e-6, dt=4e-6, params=toy_params, n_seeds=0)
        with pytest.raises(ValueError):
            DesignConfig(total_time=40e-6, dt=4e-6, params=toy_params, method="newton")


class TestRandomInitialWaveform:
    def test_determinism(self, cs_params):
        cfg = DesignConfig(total_time=600e-6, dt=4e-6, params=cs_params, rng_seed=3)
        a = random_initial_waveform(cfg, 4)
        b = random_initial_waveform(cfg, 4)
        assert np.array_equal(a.to_vector(), b.to_vector())
        c = random_initial_waveform(cfg, 5)
        assert not np.array_equal(a.to_vector(), c.to_vector())

    def test_phase_count_paper_geometry(self, cs_params):
        cfg = DesignConfig(total_time=600e-6, dt=4e-6, params=cs_params)
        wf = random_initial_waveform(cfg, 0)
        assert wf.n_phases == 450

    def test_uniform_distribution(self, cs_params):
        # KS test against U[0, 2*pi) at the 1% level over ~1e5 draws
        cfg = DesignConfig(total_time=296e-6, dt=4e-6, params=cs_params, rng_seed=17)
        draws = np.concatenate(
            [random_initial_waveform(cfg, s).to_vector() for s in range(450)]
        )
        assert draws.size == 99_900
        stat = scipy.stats.kstest(draws / TWO_PI, "uniform")
        assert stat.pvalue > 0.01
        assert draws.min() >= 0.0 and draws.max() < TWO_PI


class TestPhaseCountGate:
    def test_required_counts_cs(self, cs_params, rng):
        d = 16
        assert required_phase_count(TargetMap.full(sample_haar_unitary(d, rng))) == 255
        assert required_phase_count(sample_subspace_target(d, 9, rng)) == 80
        assert required_phase_count(
            TargetMap.state(sample_random_state(d, rng), sample_random_state(d, rng))
        ) == 30

    @pytest.mark.parametrize("kind,p,t_ok", [
        ("full_unitary", None, None),
        ("subspace_map", 9, None),
        ("state_map", None, None),
    ])
    def test_design_refuses_underparameterized(self, cs_params, rng, kind, p, t_ok):
        if kind == "full_unitary":
            target = TargetMap.full(sample_haar_unitary(16, rng))
        elif kind == "subspace_map":
            target = sample_subspace_target(16, p, rng)
        else:
            target = TargetMap.state(sample_random_state(16, rng),
                                     sample_random_state(16, rng))
        required = required_phase_count(target)
        n_under = (required - 1) // 3
        cfg = DesignConfig(total_time=n_under * 4e-6, dt=4e-6, params=cs_params)
        assert cfg.n_phases < required
        with pytest.raises(UnderparameterizedError) as err:
            design(target, cfg)
        assert str(required) in str(err.value)

    def test_gate_can_be_disabled(self, toy_params, rng):
        target = TargetMap.full(sample_haar_unitary(8, rng))
        cfg = toy_config(toy_params, total_time=8e-6, max_iterations=2, n_seeds=1)
        report = design(target, cfg, enforce_phase_count=False)
        assert report.best_fidelity >= 0.0


class TestAscend:
    def test_immediate_return_at_target(self, toy_params, rng):
        start = random_initial_waveform(toy_config(toy_params), 0)
        target = TargetMap.full(propagate(start, toy_params).total)
        wf, rec = ascend(start, target, toy_config(toy_params))
        assert rec.reason == "target_reached"
        assert rec.iterations == 0
        assert np.array_equal(wf.to_vector(), start.to_vector())

    @pytest.mark.parametrize("method", ["lbfgs", "gradient"])
    def test_monotone_fidelity_history(self, toy_params, method):
        for seed in range(10):
            cfg = toy_config(toy_params, max_iterations=40, method=method,
                             rng_seed=seed)
            target = TargetMap.state(
                sample_random_state(8, RngStream(seed, 1)),
                sample_random_state(8, RngStream(seed, 2)),
            )
            start = random_initial_waveform(cfg, 0)
            _, rec = ascend(start, target, cfg)
            h = np.array(rec.fidelity_history)
            assert np.all(np.diff(h) >= 0)

    def test_state_map_converges_toy(self, toy_params):
        cfg = toy_config(toy_params, total_time=60e-6, max_iterations=500, rng_seed=1)
        target = TargetMap.state(sample_random_state(8, RngStream(21)),
                                 sample_random_state(8, RngStream(22)))
        start = random_initial_waveform(cfg, 0)
        _, rec = ascend(start, target, cfg)
        assert rec.fidelity >= 0.999
        assert rec.reason == "target_reached"

    def test_gradient_method_also_climbs(self, toy_params):
        cfg = toy_config(toy_params, total_time=60e-6, max_iterations=300,
                         method="gradient", rng_seed=2)
        target = TargetMap.state(sample_random_state(8, RngStream(31)),
                                 sample_random_state(8, RngStream(32)))
        start = random_initial_waveform(cfg, 0)
        _, rec = ascend(start, target, cfg)
        assert rec.fidelity > rec.fidelity_history[0] + 0.1


class TestDesign:
    def test_determinism_and_seed_order(self, toy_params):
        cfg = toy_config(toy_params, total_time=60e-6, max_iterations=60,
                         n_seeds=3, stop_on_success=False)
        target = TargetMap.state(sample_random_state(8, RngStream(41)),
                                 sample_random_state(8, RngStream(42)))
        r1 = design(target, cfg)
        r2 = design(target, cfg)
        assert r1.best_fidelity == r2.best_fidelity
        assert np.array_equal(r1.best_waveform.to_vector(), r2.best_waveform.to_vector())
        assert [r.seed for r in r1.per_seed] == [0, 1, 2]
        assert r1.best_fidelity == max(r.fidelity for r in r1.per_seed)

    def test_workers_match_sequential(self, toy_params):
        cfg = toy_config(toy_params, total_time=60e-6, max_iterations=60,
                         n_seeds=3, stop_on_success=False)
        target = TargetMap.state(sample_random_state(8, RngStream(51)),
                                 sample_random_state(8, RngStream(52)))
        seq = design(target, cfg, workers=1)
        par = design(target, cfg, workers=2)
        assert seq.best_fidelity == par.best_fidelity
        assert np.array_equal(seq.best_waveform.to_vector(),
                              par.best_waveform.to_vector())
        assert [r.fidelity for r in seq.per_seed] == [r.fidelity for r in par.per_seed]

    def test_stop_on_success_prefix(self, toy_params):
        cfg = toy_config(toy_params, total_time=60e-6, max_iterations=500,
                         n_seeds=5, stop_on_success=True, rng_seed=9)
        target = TargetMap.state(sample_random_state(8, RngStream(61)),
                                 sample_random_state(8, RngStream(62)))
        report = design(target, cfg)
        assert report.per_seed[-1].reason == "target_reached"
        seeds = [r.seed for r in report.per_seed]
        assert seeds == list(range(len(seeds)))
        assert report.best_fidelity >= 0.999

    def test_dimension_mismatch(self, toy_params, rng):
        target = TargetMap.full(sample_haar_unitary(16, rng))
        with pytest.raises(ValueError):
            design(target, toy_config(toy_params))

    @pytest.mark.slow
    def test_toy_su8_reaches_target(self, toy_params):
        # the acceptance experiment at reduced scale: d = 8, T = 200 us,
        # 150 phases >= 2 * (d^2 - 1)
        cfg = DesignConfig(total_time=200e-6, dt=4e-6, params=toy_params,
                           n_seeds=10, rng_seed=42, max_iterations=4000)
        target = TargetMap.full(sample_haar_unitary(8, RngStream(7)))
        report = design(target, cfg, workers=2)
        assert report.best_fidelity >= 0.999
