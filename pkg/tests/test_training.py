import json

import numpy as np
import pytest
import torch

from wdnet import training
from wdnet.errors import ConfigError, NonFiniteLossError
from wdnet.synth import SynthesisConfig, sample_placement, synthesize_sample
from wdnet.toy import make_host, make_logo
from wdnet.training import Trainer, batch_indices, read_log, to_tensors, toy_config


def toy_arrays(n=4, size=32, seed=0):
    rng = np.random.default_rng(seed)
    logo = make_logo(rng, "l", size=24)
    cfg = SynthesisConfig(canvas=size)
    samples = [synthesize_sample(make_host(rng, size), logo, sample_placement(rng, cfg, logo, (size, size)))
               for _ in range(n)]
    return {k: np.stack([getattr(s, k) for s in samples]) for k in ("x", "y", "w", "alpha", "mask")}


@pytest.fixture(scope="module")
def data():
    return toy_arrays()


def small(**kw):
    kw.setdefault("batch_size", 2)
    kw.setdefault("total_g_steps", 3)
    return toy_config(**kw)


def params(module):
    return {k: v.detach().clone() for k, v in module.state_dict().items()}


def same(a, b):
    return all(torch.equal(a[k], b[k]) for k in a)


class TestCycle:
    def test_counters(self, data):
        t = Trainer(small())
        recs = t.train_step(to_tensors(data, [0, 1]))
        assert (t.d_step, t.g_step, t.cycle) == (1, 3, 1)
        assert [r["step"] for r in recs] == [1, 2, 3]
        assert all(r["d_step"] == 1 for r in recs)

    def test_run_stops_mid_cycle_at_exact_step_count(self, data):
        trainer, recs = training.train(data, small(total_g_steps=5))
        assert [r["step"] for r in recs] == [1, 2, 3, 4, 5]
        assert (trainer.g_step, trainer.d_step, trainer.cycle) == (5, 2, 2)

    def test_zero_learning_rate_changes_nothing(self, data):
        t = Trainer(small(lr=0.0))
        g0, d0 = params(t.generator), params(t.discriminator)
        t.train_step(to_tensors(data, [0, 1]))
        # instance norm has no running stats, so the state dicts are parameters only
        assert same(g0, params(t.generator)) and same(d0, params(t.discriminator))

    def test_update_isolation(self, data):
        t = Trainer(small())
        batch = to_tensors(data, [0, 1])
        g0, d0 = params(t.generator), params(t.discriminator)
        t.d_update(batch)
        assert same(g0, params(t.generator)) and not same(d0, params(t.discriminator))
        g1, d1 = params(t.generator), params(t.discriminator)
        t.g_update(batch)
        assert same(d1, params(t.discriminator)) and not same(g1, params(t.generator))
        assert all(p.requires_grad for p in t.discriminator.parameters())

    def test_non_finite_loss_aborts_with_record(self, data):
        t = Trainer(small())
        batch = to_tensors(data, [0, 1])
        batch["y"] = batch["y"] * float("nan")
        with pytest.raises(NonFiniteLossError) as info:
            t.train_step(batch)
        assert info.value.record["error"] == "non-finite loss"

    def test_overfits_single_sample(self):
        one = toy_arrays(1, seed=3)
        cfg = small(batch_size=1, total_g_steps=600, seed=1)
        _, recs = training.train(one, cfg)
        first, last = recs[0]["content"], np.mean([r["content"] for r in recs[-3:]])
        assert last < first


class TestBatches:
    def test_epoch_covers_every_index(self):
        seen = np.concatenate([batch_indices(10, 5, c, 0) for c in range(2)])
        assert sorted(seen) == list(range(10))

    def test_stateless_and_seeded(self):
        assert (batch_indices(7, 3, 5, 1) == batch_indices(7, 3, 5, 1)).all()
        runs = [np.concatenate([batch_indices(50, 5, c, s) for c in range(10)]) for s in (0, 1)]
        assert not (runs[0] == runs[1]).all()

    def test_wraps_across_epochs(self):
        idx = batch_indices(4, 3, 1, 0)
        assert len(idx) == 3 and set(idx) <= set(range(4))


class TestTrain:
    def test_log_and_checkpoint(self, data, tmp_path):
        t, recs = training.train(data, small(total_g_steps=6, checkpoint_every=1), tmp_path)
        logged = read_log(tmp_path / training.LOG_NAME)
        assert logged == json.loads(json.dumps(recs))
        assert [r["step"] for r in logged] == list(range(1, 7))
        assert training.finite_records(logged)
        again = Trainer.load(tmp_path / training.CHECKPOINT_NAME)
        assert (again.g_step, again.d_step, again.cycle) == (6, 2, 2)
        assert same(params(t.generator), params(again.generator))

    def test_deterministic(self, data):
        a = training.train(data, small(total_g_steps=12, seed=5))[1]
        b = training.train(data, small(total_g_steps=12, seed=5))[1]
        assert a[:10] == b[:10]

    def test_resume_matches_uninterrupted(self, data, tmp_path):
        full_t, full = training.train(data, small(total_g_steps=9, seed=2))
        training.train(data, small(total_g_steps=3, seed=2), tmp_path)
        res_t, rest = training.train(data, small(total_g_steps=9, seed=2), tmp_path,
                                     resume=tmp_path / training.CHECKPOINT_NAME)
        assert res_t.g_step == full_t.g_step == 9
        assert [r["step"] for r in rest] == list(range(4, 10))
        for r, f in zip(rest, full[3:]):
            assert r["loss_g"] == pytest.approx(f["loss_g"], rel=1e-5)
        assert len(read_log(tmp_path / training.LOG_NAME)) == 9

    def test_resume_with_other_architecture(self, data, tmp_path):
        training.train(data, small(), tmp_path)
        with pytest.raises(ConfigError):
            training.train(data, small(variant="baseline"), tmp_path, resume=tmp_path / training.CHECKPOINT_NAME)

    def test_empty_dataset(self):
        empty = {k: np.zeros((0, 32, 32, 3)) for k in ("x", "y", "w")}
        with pytest.raises(ConfigError):
            training.train(empty, small())

    @pytest.mark.parametrize("variant", ["baseline", "decompnet"])
    def test_variants_train(self, data, variant):
        t, recs = training.train(data, small(variant=variant))
        assert len(recs) == 3 and training.finite_records(recs)
        if variant == "baseline":
            assert all(r["mask"] == 0.0 for r in recs)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"lr": -1.0}, {"beta1": 1.0}, {"batch_size": 0}, {"g_steps": 0},
                                    {"variant": "gan"}, {"perceptual_mode": "x"}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            training.TrainConfig(**kw)

    def test_disabled_extractor_requires_zero_weight(self):
        with pytest.raises(ConfigError):
            training.TrainConfig(perceptual_mode="disabled")

    def test_dict_round_trip(self):
        cfg = toy_config(seed=3)
        assert training.TrainConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ConfigError, match="bogus"):
            training.TrainConfig.from_dict({"bogus": 1})

    def test_default_perceptual_needs_weights(self):
        pytest.importorskip("torchvision")
        with pytest.raises(ConfigError):
            Trainer(training.TrainConfig())
