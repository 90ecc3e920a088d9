import numpy as np
import pytest

from coptraj.config import (build_constants, build_context, build_gains,
                            build_plan, config_from_dict, config_to_dict,
                            default_config, draw_target, load_config,
                            target_bounds)


class TestLoadConfig:
    def test_defaults_without_file(self):
        cfg = default_config()
        assert cfg.physical.k_f == pytest.approx(3.375e-4)
        assert cfg.physical.k_m == pytest.approx(0.016)
        assert cfg.trajectory.duration == 20.0
        assert cfg.trajectory.n_pieces == 5
        assert cfg.scalarization.rho == pytest.approx(1e-4)

    def test_overrides(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("[trajectory]\nduration = 12.5\nn_pieces = 4\n"
                     "[observability]\nrotor_speed_inputs = false\n")
        cfg = load_config(p)
        assert cfg.trajectory.duration == 12.5
        assert cfg.trajectory.n_pieces == 4
        assert cfg.observability.rotor_speed_inputs is False
        # untouched sections keep defaults
        assert cfg.physical.mass == 0.68

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("[trajectory]\nwarp_factor = 9\n")
        with pytest.raises(ValueError):
            load_config(p)

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            load_config("/no/such/file.cfg")

    def test_dict_round_trip(self):
        cfg = default_config()
        cfg.trajectory.duration = 7.0
        d = config_to_dict(cfg)
        cfg2 = config_from_dict(d)
        assert config_to_dict(cfg2) == d


class TestFactories:
    def test_constants_and_gains(self):
        cfg = default_config()
        c = build_constants(cfg)
        assert c.mass == cfg.physical.mass
        np.testing.assert_array_equal(np.diag(c.inertia),
                                      [7e-3, 7e-3, 12e-3])
        g = build_gains(cfg)
        np.testing.assert_array_equal(g.k_r, np.full(3, cfg.gains.k_r))

    def test_plan_builder(self):
        cfg = default_config()
        plan = build_plan(cfg, np.array([3.0, 4.0, 0.5]))
        assert plan.times[-1] == cfg.trajectory.duration
        np.testing.assert_array_equal(plan.boundary[-1, :, 0],
                                      [3.0, 4.0, 0.5, 0.0])
        assert plan.n_free == (cfg.trajectory.n_pieces - 1) * 4

    def test_target_draw_within_box(self):
        cfg = default_config()
        b = target_bounds(cfg)
        rng = np.random.default_rng(0)
        for _ in range(100):
            t = draw_target(cfg, rng)
            assert np.all(t[0:3] >= b[:, 0]) and np.all(t[0:3] <= b[:, 1])

    def test_context_uses_sensitivity_step(self):
        cfg = default_config()
        cfg.sensitivity.step = 0.02
        ctx = build_context(cfg, build_plan(cfg, [3.0, 3.0, 0.5]))
        assert ctx.sens_opts.fixed_step == 0.02
        assert ctx.sim_opts.fixed_step == cfg.integration.fixed_step
