import math

import numpy as np
import pytest

from densehar.chain import (ChainConfig, LabelSpec, TrainOptions, build_baseline,
                            build_chain, chain_loss, predict_dense, train)
from densehar.conditioning import GeneratorMode
from densehar.data import SynthConfig, generate_synthetic
from densehar.engine import SeededRng, Tape, Tensor, backward, ops
from densehar.errors import ConfigError, ContractError
from densehar.unet import UNetConfig, build_unet, parameter_count, unet_forward

TWO_LABELS = (LabelSpec("walk_sit", 2), LabelSpec("gesture", 9))


def small_config(**kw):
    defaults = dict(labels=TWO_LABELS, in_channels=6, depth=1, base_channels=4)
    defaults.update(kw)
    return ChainConfig(**defaults)


class TestStructure:
    def test_stage_channel_arithmetic(self):
        # E for a 2-class label defaults to 1, so stage 1 sees 6 + 1 channels
        model = build_chain(small_config(), SeededRng(0))
        assert model.stages[0]["unet"].config.in_channels == 6
        assert model.stages[1]["unet"].config.in_channels == 7
        x = Tensor(SeededRng(1).normal((2, 6, 16)))
        logits = model.forward(x)
        assert logits[0].data.shape == (2, 2, 16)
        assert logits[1].data.shape == (2, 9, 16)

    def test_last_stage_has_no_embedding(self):
        model = build_chain(small_config(), SeededRng(0))
        assert model.stages[0]["embed"] is not None
        assert model.stages[1]["embed"] is None

    def test_single_label_chain_is_plain_unet(self):
        config = small_config(labels=(LabelSpec("gesture", 9),))
        rng = SeededRng(7).split("init")
        model = build_chain(config, rng)
        unet = build_unet(UNetConfig(6, 9, depth=1, base_channels=4),
                          SeededRng(7).split("init"))
        x = Tensor(SeededRng(3).normal((1, 6, 8)))
        assert np.array_equal(model.forward(x)[0].data, unet_forward(unet, x).data)

    def test_parameter_namespaces(self):
        names = build_chain(small_config(), SeededRng(0)).parameters().keys()
        assert "stage.0.unet.enc.0.conv1.w" in names
        assert "stage.0.embed.W" in names
        assert not any(n.startswith("stage.1.embed") for n in names)

    def test_train_mode_deterministic(self):
        config = small_config()
        x = SeededRng(5).normal((2, 6, 16))
        def run():
            model = build_chain(config, SeededRng(9).split("init"))
            logits = model.forward(Tensor(x), mode="train",
                                   rng=SeededRng(4).split("gumbel"), tau=0.8)
            return [y.data.copy() for y in logits]
        for a, b in zip(run(), run()):
            assert a.tobytes() == b.tobytes()


class TestChainLoss:
    def test_saturated_logits(self):
        rng = SeededRng(0)
        targets = np.stack([rng.integers(2, (2, 8)), rng.integers(9, (2, 8))])
        logits = []
        for h, c in enumerate((2, 9)):
            l = np.zeros((2, c, 8))
            np.put_along_axis(l, targets[h][:, None, :], 1000.0, axis=1)
            logits.append(Tensor(l))
        assert float(chain_loss(logits, targets).data) < 1e-8

    def test_uniform_logits_forced_value(self):
        targets = np.zeros((2, 2, 8), dtype=int)
        logits = [Tensor(np.zeros((2, 2, 8))), Tensor(np.zeros((2, 9, 8)))]
        loss = float(chain_loss(logits, targets).data)
        assert abs(loss - (math.log(2) + math.log(9))) < 1e-12

    def test_equals_per_label_oracle(self):
        def nll_oracle(logits, ids):
            """Independent softmax NLL, mean over batch x time."""
            total = 0.0
            B, C, T = logits.shape
            for b in range(B):
                for t in range(T):
                    col = logits[b, :, t]
                    p = np.exp(col - col.max())
                    p /= p.sum()
                    total -= math.log(p[ids[b, t]])
            return total / (B * T)

        rng = SeededRng(12)
        for _ in range(5):
            logits = [Tensor(rng.normal((2, 2, 6))), Tensor(rng.normal((2, 9, 6)))]
            targets = np.stack([rng.integers(2, (2, 6)), rng.integers(9, (2, 6))])
            expected = sum(nll_oracle(l.data, t) for l, t in zip(logits, targets))
            assert abs(float(chain_loss(logits, targets).data) - expected) < 1e-12

    def test_label_count_mismatch(self):
        with pytest.raises(ContractError):
            chain_loss([Tensor(np.zeros((1, 2, 4)))], np.zeros((2, 1, 4), dtype=int))


class TestPredict:
    def test_saturated_constant_prediction(self):
        model = build_chain(small_config(), SeededRng(0))
        for t in model.parameters().values():
            t.data[...] = 0.0
        head = model.stages[1]["unet"].head
        head.b.data[3] = 100.0  # gesture logits saturate toward class 3
        pred = predict_dense(model, SeededRng(1).normal((2, 6, 16)))
        assert pred.shape == (2, 2, 16)
        assert np.all(pred[1] == 3)

    def test_scale_invariance(self):
        model = build_chain(small_config(), SeededRng(3))
        x = SeededRng(4).normal((1, 6, 16))
        logits = model.forward(Tensor(x))
        base = predict_dense(model, x)
        scaled = np.stack([(5.0 * y.data).argmax(axis=1) for y in logits])
        assert np.array_equal(base, scaled)


class TestGradientReach:
    def test_every_parameter_receives_gradient(self):
        config = small_config(depth=1, base_channels=2)
        model = build_chain(config, SeededRng(2))
        rng = SeededRng(3)
        x = Tensor(rng.normal((2, 6, 8)))
        targets = np.stack([rng.integers(2, (2, 8)), rng.integers(9, (2, 8))])
        with Tape() as tape:
            logits = model.forward(x, mode="train", rng=rng, tau=1.0)
            backward(chain_loss(logits, targets), tape)
        for name, t in model.parameters().items():
            assert t.grad is not None and np.abs(t.grad).max() > 0, name


class TestBaseline:
    def test_head_split_contract(self):
        model = build_baseline(small_config(), SeededRng(0))
        assert model.unet.config.out_classes == 11
        logits = model.forward(Tensor(SeededRng(1).normal((2, 6, 16))))
        assert logits[0].data.shape == (2, 2, 16)
        assert logits[1].data.shape == (2, 9, 16)
        stacked = unet_forward(model.unet, Tensor(SeededRng(1).normal((2, 6, 16))))
        assert np.array_equal(logits[0].data, stacked.data[:, :2])
        assert np.array_equal(logits[1].data, stacked.data[:, 2:])

    def test_single_label_baseline_is_plain_unet(self):
        config = small_config(labels=(LabelSpec("gesture", 9),))
        model = build_baseline(config, SeededRng(5).split("init"))
        unet = build_unet(UNetConfig(6, 9, depth=1, base_channels=4),
                          SeededRng(5).split("init"))
        x = Tensor(SeededRng(6).normal((1, 6, 8)))
        assert np.array_equal(model.forward(x)[0].data, unet_forward(unet, x).data)

    def test_parameter_count_below_chain(self):
        config = small_config(depth=2, base_channels=8)
        baseline = build_baseline(config, SeededRng(0))
        chain = build_chain(config, SeededRng(0))
        count = lambda m: sum(t.data.size for t in m.parameters().values())
        # oracle: baseline is one UNet with an 11-class head
        expected = parameter_count(UNetConfig(6, 11, depth=2, base_channels=8))
        assert count(baseline) == expected
        assert count(baseline) < count(chain)


def tiny_dataset(seed=0, n=2, duration=5.12):
    return generate_synthetic(SynthConfig(
        seed=seed, num_sequences=n, duration_s=duration, noise_std=0.05,
        gestures_per_sequence=2))


class TestTrain:
    def test_epochs_contract(self):
        with pytest.raises(ConfigError):
            TrainOptions(epochs=0).validate()
        ds = tiny_dataset()
        model = build_chain(small_config(), SeededRng(0))
        history = train(model, ds, TrainOptions(epochs=1, batch_size=2, seed=0))
        assert len(history) == 1

    def test_identical_seeds_identical_history(self):
        ds = tiny_dataset()
        def run():
            model = build_chain(small_config(), SeededRng(1).split("init"))
            return train(model, ds, TrainOptions(epochs=3, batch_size=2, seed=5))
        ha, hb = run(), run()
        assert [(r.loss, r.tau, r.accuracy, r.macro_f1) for r in ha] == \
               [(r.loss, r.tau, r.accuracy, r.macro_f1) for r in hb]

    def test_monotone_overfit(self):
        """On a 2-sequence dataset the loss collapses below 10% of start."""
        ds = tiny_dataset(seed=3)
        model = build_chain(ChainConfig(labels=ds.labels, in_channels=6,
                                        depth=2, base_channels=8), SeededRng(2))
        history = train(model, ds, TrainOptions(epochs=200, batch_size=2, seed=2,
                                                window_length=64, window_stride=64))
        assert history[-1].loss < 0.1 * history[0].loss

    def test_batch_larger_than_windows(self):
        ds = tiny_dataset()
        model = build_chain(small_config(), SeededRng(0))
        from densehar.errors import DataError
        with pytest.raises(DataError):
            train(model, ds, TrainOptions(epochs=1, batch_size=512, seed=0))

    def test_reordered_chain_trains_on_matching_targets(self):
        ds = tiny_dataset()
        order = tuple(reversed(ds.labels))
        model = build_chain(ChainConfig(labels=order, in_channels=6,
                                        depth=1, base_channels=2), SeededRng(0))
        history = train(model, ds, TrainOptions(epochs=1, batch_size=2, seed=0))
        assert set(history[0].accuracy) == {"walk_sit", "gesture"}


class TestTeacherForcing:
    def test_forward_uses_targets(self):
        config = small_config(teacher_forcing=True)
        model = build_chain(config, SeededRng(0))
        rng = SeededRng(1)
        x = Tensor(rng.normal((1, 6, 8)))
        targets = np.stack([rng.integers(2, (1, 8)), rng.integers(9, (1, 8))])
        a = model.forward(x, mode="train", targets=targets)
        flipped = targets.copy()
        flipped[0] = 1 - flipped[0]
        b = model.forward(x, mode="train", targets=flipped)
        assert not np.array_equal(a[1].data, b[1].data)
        with pytest.raises(ContractError):
            model.forward(x, mode="train")
