import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hierprot import diffusion as D
from hierprot.errors import (BadTimestep, CannotRemoveSequenceLevel, LevelMismatch, MissingCheckpoint,
                             MissingLevelData, ShapeMismatch)
from hierprot.nn.tensor import Tape
from hierprot.vae import LatentSeq

TINY = dict(latent_dim=4, hidden=8, heads=2, blocks=1, time_dim=8, steps=20, batch_size=8)


def toy_dataset(n=10, length=5, d=4, seed=0, levels=(1, 2, 3)):
    rng = np.random.default_rng(seed)
    labels = [1 + i % 3 for i in range(n)]
    lat = {lv: [rng.normal(size=(length - i % 2, d)) + lab * lv * 0.3 for i, lab in enumerate(labels)]
           for lv in levels}
    return D.LatentDataset(lat, labels)


def structured_dataset(n=10, length=6, d=4, seed=0):
    # low-noise smooth per-class patterns: learnable, unlike the generic toy draws
    rng = np.random.default_rng(seed)
    labels = [1 + i % 3 for i in range(n)]
    pos = np.arange(length)[:, None]
    lat = {lv: [np.sin(0.7 * pos + lab + lv * np.arange(d)) + 0.05 * rng.standard_normal((length, d))
                for lab in labels] for lv in (1, 2, 3)}
    return D.LatentDataset(lat, labels)


def pipeline(**kw):
    cfg = dict(TINY)
    cfg.update(kw)
    return D.HierarchicalDiffusion(D.DiffusionConfig(**cfg))


class TestSchedule:
    def test_linear_defaults(self):
        s = D.DiffusionSchedule.linear()
        assert s.T == 200 and s.betas[0] == 1e-4 and s.betas[-1] == pytest.approx(0.02)
        assert np.all(np.diff(s.alpha_bars) < 0)
        assert s.alpha_bar(0) == 1.0

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(1e-5, 0.999), min_size=1, max_size=50))
    def test_random_schedules_monotone(self, betas):
        s = D.DiffusionSchedule(betas)
        assert np.all((s.betas > 0) & (s.betas < 1))
        assert np.all(np.diff(np.concatenate([[1.0], s.alpha_bars])) < 0)

    @pytest.mark.parametrize("t", [-1, 21, 2.5])
    def test_bad_timestep(self, t):
        with pytest.raises(BadTimestep):
            D.forward_diffuse(np.ones(3), t, D.DiffusionSchedule.linear(20), np.zeros(3))

    def test_invalid_beta(self):
        with pytest.raises(ValueError):
            D.DiffusionSchedule([0.1, 1.0])


class TestForward:
    def test_t0_identity(self, rng):
        x0 = rng.normal(size=(4, 3))
        out = D.forward_diffuse(x0, 0, D.DiffusionSchedule.linear(10), rng.normal(size=(4, 3)))
        np.testing.assert_array_equal(out, x0)

    def test_constant_schedule_hand_case(self):
        s = D.DiffusionSchedule.constant(0.5, 2)
        assert s.alpha_bar(2) == 0.25
        assert D.forward_diffuse(np.array([1.0]), 2, s, np.zeros(1))[0] == 0.5

    def test_latent_seq_preserved(self, rng):
        z = LatentSeq(2, rng.normal(size=(3, 2)), [True, True, False])
        out = D.forward_diffuse(z, 5, D.DiffusionSchedule.linear(10), rng.normal(size=(3, 2)))
        assert isinstance(out, LatentSeq) and out.level == 2 and np.all(out.tokens[2] == 0)

    def test_matches_iterated_steps(self, rng):
        for _ in range(40):
            T = int(rng.integers(1, 51))
            s = D.DiffusionSchedule(rng.uniform(1e-4, 0.3, size=T))
            x0 = rng.normal(size=5)
            steps = rng.normal(size=(T, 5))
            x = x0.copy()
            coef = np.zeros(T)
            for t in range(1, T + 1):
                b = s.betas[t - 1]
                x = np.sqrt(1 - b) * x + np.sqrt(b) * steps[t - 1]
                coef = np.sqrt(1 - b) * coef
                coef[t - 1] = np.sqrt(b)
            assert np.sum(coef ** 2) == pytest.approx(1 - s.alpha_bar(T), abs=1e-12)
            eq_noise = coef @ steps / np.sqrt(np.sum(coef ** 2))
            np.testing.assert_allclose(D.forward_diffuse(x0, T, s, eq_noise), x, atol=1e-9)

    def test_monte_carlo_moments(self, rng):
        s = D.DiffusionSchedule.linear(200)
        n, t, x0 = 100_000, 80, 1.7
        xt = D.forward_diffuse(np.full(n, x0), t, s, rng.standard_normal(n))
        ab = s.alpha_bar(t)
        var = 1 - ab
        assert abs(xt.mean() - np.sqrt(ab) * x0) < 3 * np.sqrt(var / n)
        assert abs(xt.var(ddof=1) - var) < 3 * var * np.sqrt(2 / (n - 1))

    def test_noise_shape(self):
        with pytest.raises(ShapeMismatch):
            D.forward_diffuse(np.ones(3), 1, D.DiffusionSchedule.linear(5), np.zeros(4))


class TestReverse:
    def test_true_noise_recovers_posterior_mean(self, rng):
        s = D.DiffusionSchedule.linear(50)
        for t in (1, 2, 17, 50):
            x0, eps = rng.normal(size=6), rng.normal(size=6)
            xt = D.forward_diffuse(x0, t, s, eps)
            np.testing.assert_allclose(D.reverse_mean(xt, eps, t, s), D.posterior_mean(xt, x0, t, s), atol=1e-9)

    def test_zero_denoiser_single_step(self, monkeypatch):
        pipe = pipeline(steps=1, levels=(3,))
        pipe.latent_stats[3] = (np.zeros(4), np.ones(4))
        pipe.denoisers[3].fitted = True
        monkeypatch.setattr(pipe, "denoise_step", lambda *a, **k: np.zeros_like(a[1]))
        res = pipe.sample([1, 2], seed=5, lengths=[3, 2])
        z1 = np.random.default_rng(5).standard_normal((2, 3, 4))
        ab = pipe.schedule.alpha_bar(1)
        np.testing.assert_allclose(res.latents[3][0], z1[0] / np.sqrt(ab), rtol=1e-12)
        np.testing.assert_allclose(res.latents[3][1], z1[1, :2] / np.sqrt(ab), rtol=1e-12)


class TestDenoiser:
    def fitted(self, **kw):
        pipe = pipeline(**kw)
        pipe.fit(toy_dataset(), 1)
        return pipe

    def test_zero_flow_ignores_lower(self, rng):
        pipe = pipeline()
        pipe.denoisers[3].flow.assign(np.zeros((4, 4)))
        z, cond = rng.normal(size=(5, 4)), D.condition_matrix([2], 3)
        a = pipe.denoise_step(3, z, rng.normal(size=(5, 4)), cond, 7)
        b = pipe.denoise_step(3, z, rng.normal(size=(5, 4)) * 10, cond, 7)
        np.testing.assert_array_equal(a, b)
        pipe.denoisers[3].flow.assign(np.eye(4))
        c = pipe.denoise_step(3, z, rng.normal(size=(5, 4)), cond, 7)
        assert not np.allclose(a, c)

    def test_atom_level_rejects_non_zero_lower(self, rng):
        pipe = pipeline()
        cond = D.condition_matrix([1], 3)
        pipe.denoise_step(1, rng.normal(size=(3, 4)), np.zeros((3, 4)), cond, 2)
        with pytest.raises(LevelMismatch):
            pipe.denoise_step(1, rng.normal(size=(3, 4)), np.ones((3, 4)), cond, 2)

    def test_shape_mismatch(self, rng):
        pipe = pipeline()
        with pytest.raises(ShapeMismatch):
            pipe.denoise_step(2, rng.normal(size=(3, 4)), np.zeros((2, 4)), D.condition_matrix([1], 3), 2)
        with pytest.raises(ShapeMismatch):
            pipe.denoise_step(2, rng.normal(size=(3, 5)), None, D.condition_matrix([1], 3), 2)

    def test_deterministic(self, rng):
        z, low = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
        cond = D.condition_matrix([3], 3)
        a = pipeline(seed=4).denoise_step(2, z, low, cond, 11)
        b = pipeline(seed=4).denoise_step(2, z, low, cond, 11)
        assert a.tobytes() == b.tobytes()

    def test_label_sets_average(self):
        m = D.condition_matrix([2, (1, 3), [1, 2, 3]], 3)
        np.testing.assert_allclose(m, [[0, 1, 0], [0.5, 0, 0.5], [1 / 3] * 3])
        with pytest.raises(ValueError):
            D.condition_matrix([4], 3)


class TestTraining:
    def test_gradient_isolation(self):
        pipe = pipeline()
        data = pipe.prepare(toy_dataset())
        idx = np.arange(6)
        t = np.full(6, 5)
        noisy = {lv: data.z[lv][idx] * 0.5 for lv in (1, 2, 3)}
        noisy.update({("eps", lv): np.ones_like(data.z[lv][idx]) for lv in (1, 2, 3)})
        with Tape() as tape:
            pred = pipe.denoisers[3](noisy[3], noisy[2], data.cond[idx], t, data.mask[idx])
            loss = (pred * pred).sum()
        level2 = pipe.denoisers[2].parameters()
        touched = tape.backward(loss)
        assert not any(p is q for p in touched for q in level2)
        with Tape() as tape:
            pred = pipe.denoisers[3](noisy[3], noisy[2], data.cond[idx], t, data.mask[idx])
            loss = (pred * pred).sum()
        assert all(np.all(g == 0) for g in tape.backward(loss, level2))

    def test_decoupling_bit_identical(self):
        ds = toy_dataset(12)
        joint = pipeline(seed=3).fit(ds, 4)
        single = pipeline(seed=3).fit(ds, 4, train_levels=(3,))
        serial = pipeline(seed=3).fit(ds, 4, parallel=False)
        assert joint[3] == single[3] == serial[3]
        assert joint[2] == serial[2] and joint[1] == serial[1]

    def test_losses_halve_on_toy_set(self):
        pipe = pipeline(hidden=32, time_dim=32, lr=3e-3, seed=1)
        hist = pipe.fit(structured_dataset(), 200)
        for lv, losses in hist.items():
            assert losses[-1] <= 0.5 * losses[0], (lv, losses[0], losses[-1])

    def test_missing_level_data(self):
        with pytest.raises(MissingLevelData):
            pipeline().fit(toy_dataset(levels=(1, 3)), 1)

    def test_ablated_training_needs_only_active_levels(self):
        pipe = pipeline(levels=(1, 3))
        hist = pipe.fit(toy_dataset(levels=(1, 3)), 2)
        assert set(hist) == {1, 3}


class TestAblation:
    def test_cannot_remove_sequence_level(self):
        with pytest.raises(CannotRemoveSequenceLevel):
            D.ablate_levels(D.DiffusionConfig(), "amino_acid")
        with pytest.raises(CannotRemoveSequenceLevel):
            D.DiffusionConfig(levels=(1, 2))

    def test_wiring(self):
        base = D.DiffusionConfig()
        assert D.HierarchicalDiffusion(base).lower_of(3) == 2
        no_bb = D.ablate_levels(base, "backbone")
        assert no_bb.levels == (1, 3) and D.lower_level(3, no_bb.levels) == 1
        no_atom = D.ablate_levels(base, ["atom"])
        assert D.lower_level(2, no_atom.levels) is None and D.lower_level(3, no_atom.levels) == 2
        both = D.ablate_levels(base, ("atom", "backbone"))
        assert both.levels == (3,) and D.lower_level(3, both.levels) is None

    def test_remove_both_ignores_lower(self, rng):
        pipe = pipeline(levels=(3,))
        z, cond = rng.normal(size=(4, 4)), D.condition_matrix([1], 3)
        a = pipe.denoise_step(3, z, rng.normal(size=(4, 4)), cond, 3)
        b = pipe.denoise_step(3, z, None, cond, 3)
        np.testing.assert_array_equal(a, b)

    def test_remove_backbone_uses_atom_latent(self, rng, monkeypatch):
        pipe = pipeline(levels=(1, 3))
        pipe.fit(toy_dataset(levels=(1, 3)), 1)
        seen = []
        original = pipe.denoise_step

        def spy(level, z_t, lower, cond, t, key_mask=None):
            seen.append((level, None if lower is None else lower.copy()))
            return original(level, z_t, lower, cond, t, key_mask)

        monkeypatch.setattr(pipe, "denoise_step", spy)
        pipe.sample([1], seed=0, lengths=[3])
        # at the first reverse step level 3 sees the initial atom-level noise
        z0 = np.random.default_rng(0).standard_normal((1, 3, 4))
        assert [lv for lv, _ in seen[:2]] == [1, 3]
        np.testing.assert_array_equal(seen[1][1], z0)


class TestSampling:
    def test_requires_training(self):
        with pytest.raises(MissingCheckpoint):
            pipeline().sample([1])

    def test_deterministic_and_ordered(self):
        pipe = pipeline()
        pipe.fit(toy_dataset(), 2)
        a = pipe.sample([1, 2, 3], seed=9)
        b = pipe.sample([1, 2, 3], seed=9)
        for lv in (1, 2, 3):
            for x, y in zip(a.latents[lv], b.latents[lv]):
                assert x.tobytes() == y.tobytes()
        assert a.lengths == b.lengths and all(n in (4, 5) for n in a.lengths)

    def test_save_load(self, tmp_path):
        pipe = pipeline()
        pipe.fit(toy_dataset(), 2)
        pipe.save(tmp_path)
        back = D.HierarchicalDiffusion.load(tmp_path)
        a = pipe.sample([2], seed=1)
        b = back.sample([2], seed=1)
        np.testing.assert_array_equal(a.latents[3][0], b.latents[3][0])
        with pytest.raises(MissingCheckpoint):
            D.HierarchicalDiffusion.load(tmp_path / "nothing")


def test_toy_conditional_signs():
    rng = np.random.default_rng(0)
    labels = [1 + i % 2 for i in range(200)]
    lat = {3: [np.array([[(-2.0 if lab == 1 else 2.0) + 0.2 * rng.standard_normal()]]) for lab in labels]}
    pipe = D.HierarchicalDiffusion(D.DiffusionConfig(
        n_classes=2, latent_dim=1, hidden=16, heads=2, blocks=1, time_dim=16, levels=(3,),
        batch_size=50, lr=3e-3, seed=0))
    pipe.fit(D.LatentDataset(lat, labels), 150)
    for label, sign in ((1, -1), (2, 1)):
        res = pipe.sample([label] * 200, seed=label)
        values = np.array([z[0, 0] for z in res.latents[3]])
        assert np.mean(np.sign(values) == sign) >= 0.95
