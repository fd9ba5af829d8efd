"""Adam oracle, training determinism, divergence reporting, inference."""

import numpy as np
import pytest

from toacnn.errors import TrainingDiverged
from toacnn.fem import DensityField
from toacnn.neural.model import init_params
from toacnn.neural.profile import NetworkProfile
from toacnn.neural.training import AdamState, TrainConfig, adam_step, infer, train

PROFILE = NetworkProfile(
    input_size=8, encoder=((3, 3, 2), (3, 4, 2)), adaptive_units=5, decoder=((2, 3), (2, 1))
)


def samples_for(profile, count, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        x = rng.uniform(0, 1, (profile.input_size, profile.input_size, 1)).astype(np.float32)
        y = rng.uniform(0, 1, (profile.input_size, profile.input_size, 1)).astype(np.float32)
        out.append((x, y))
    return out


class TestAdam:
    def test_constant_gradient_steps_by_lr(self):
        # bias correction makes every step exactly lr for a constant unit
        # gradient (up to eps), independent of t
        p = [np.array([1.0], dtype=np.float32)]
        g = [np.array([1.0], dtype=np.float32)]
        st = AdamState.zeros_like(p)
        for k in range(1, 6):
            adam_step(st, p, g, lr=0.1)
            assert st.t == k
            assert p[0][0] == pytest.approx(1.0 - 0.1 * k, abs=1e-5)

    def test_hand_computed_two_steps(self):
        p = [np.array([2.0], dtype=np.float32)]
        st = AdamState.zeros_like(p)
        adam_step(st, p, [np.array([4.0], dtype=np.float32)], lr=0.5)
        # m=0.4, v=0.016, mhat=4, vhat=16 -> step 0.5 * 4/4 = 0.5
        assert p[0][0] == pytest.approx(1.5, abs=1e-6)
        adam_step(st, p, [np.array([-4.0], dtype=np.float32)], lr=0.5)
        m2 = 0.9 * 0.4 + 0.1 * -4.0
        v2 = 0.999 * 0.016 + 0.001 * 16.0
        mhat = m2 / (1 - 0.9**2)
        vhat = v2 / (1 - 0.999**2)
        assert p[0][0] == pytest.approx(1.5 - 0.5 * mhat / (np.sqrt(vhat) + 1e-8), abs=1e-6)

    def test_descends_quadratic(self):
        p = [np.array([3.0], dtype=np.float32)]
        st = AdamState.zeros_like(p)
        for _ in range(400):
            adam_step(st, p, [2.0 * p[0]], lr=0.05)
        assert abs(p[0][0]) < 1e-2

    def test_state_shapes_follow_params(self):
        params = init_params(PROFILE, 0)
        st = AdamState.zeros_like(params)
        assert all(m.shape == p.shape for m, p in zip(st.m, params))
        assert all(v.shape == p.shape for v, p in zip(st.v, params))
        assert st.t == 0


class TestTrain:
    def test_loss_decreases(self):
        samples = samples_for(PROFILE, 3)
        cfg = TrainConfig(epochs=60, lr=2e-3, seed=0)
        _, history = train(PROFILE, samples, cfg)
        assert len(history) == 60
        assert history[-1] < 0.5 * history[0]

    def test_deterministic(self):
        samples = samples_for(PROFILE, 3)
        cfg = TrainConfig(epochs=5, lr=1e-3, seed=11)
        ck1, h1 = train(PROFILE, samples, cfg)
        ck2, h2 = train(PROFILE, samples, cfg)
        assert h1 == h2
        assert all(a.tobytes() == b.tobytes() for a, b in zip(ck1.params, ck2.params))

    def test_checkpoint_metadata(self):
        samples = samples_for(PROFILE, 2)
        cfg = TrainConfig(epochs=12, lr=1e-3, seed=5)
        ck, history = train(PROFILE, samples, cfg)
        assert ck.seed == 5 and ck.epochs == 12
        assert ck.loss_tail == history[-10:]

    def test_batching_changes_step_count_not_determinism(self):
        samples = samples_for(PROFILE, 4)
        a, _ = train(PROFILE, samples, TrainConfig(epochs=3, lr=1e-3, seed=2, batch_size=2))
        b, _ = train(PROFILE, samples, TrainConfig(epochs=3, lr=1e-3, seed=2, batch_size=2))
        assert all(x.tobytes() == y.tobytes() for x, y in zip(a.params, b.params))

    def test_empty_samples_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            train(PROFILE, [], TrainConfig(epochs=1))

    def test_shape_mismatch_rejected(self):
        bad = [(np.zeros((4, 4, 1), np.float32), np.zeros((4, 4, 1), np.float32))]
        with pytest.raises(ValueError, match="sample 0"):
            train(PROFILE, bad, TrainConfig(epochs=1))

    def test_divergence_reported_with_location(self):
        samples = samples_for(PROFILE, 2)
        with pytest.raises(TrainingDiverged) as exc:
            train(PROFILE, samples, TrainConfig(epochs=50, lr=1e12, seed=0))
        err = exc.value
        assert err.epoch >= 0 and err.batch >= 0
        assert isinstance(err.layer, str) and err.layer

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(lr=-1.0)


class TestInfer:
    def test_output_is_density_field(self):
        ck, _ = train(PROFILE, samples_for(PROFILE, 2), TrainConfig(epochs=2, lr=1e-3))
        field = infer(ck, 0.5)
        assert isinstance(field, DensityField)
        assert field.grid.nelx == field.grid.nely == 8
        assert field.values.min() >= 0.0 and field.values.max() <= 1.0

    def test_vf_bounds_checked(self):
        ck, _ = train(PROFILE, samples_for(PROFILE, 2), TrainConfig(epochs=1, lr=1e-3))
        for bad in (0.0, 1.0, -0.2, 1.3):
            with pytest.raises(ValueError):
                infer(ck, bad)

    def test_deterministic(self):
        ck, _ = train(PROFILE, samples_for(PROFILE, 2), TrainConfig(epochs=2, lr=1e-3))
        a = infer(ck, 0.3)
        b = infer(ck, 0.3)
        assert a.values.tobytes() == b.values.tobytes()
