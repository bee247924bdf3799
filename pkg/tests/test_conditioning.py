import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from densehar.conditioning import (EmbeddingTable, TemperatureSchedule, anneal,
                                   default_embedding_dim, embed,
                                   generate_gumbel_max, generate_naive_max, merge)
from densehar.engine import SeededRng, Tape, Tensor, backward, ops, parameter
from densehar.errors import ConfigError, DimensionError


def column(vals):
    return Tensor(np.asarray(vals, dtype=np.float64).reshape(1, -1, 1))


class TestNaiveMax:
    def test_direct_argmax(self):
        out = generate_naive_max(column([0.1, 0.7, 0.2]))
        assert np.array_equal(out.data[0, :, 0], [0, 1, 0])

    def test_tie_breaks_low(self):
        out = generate_naive_max(column([0.5, 0.5]))
        assert np.array_equal(out.data[0, :, 0], [1, 0])

    def test_batch_onehot_contract(self):
        logits = Tensor(SeededRng(0).normal((2, 9, 64)))
        out = generate_naive_max(logits).data
        assert out.shape == (2, 9, 64)
        assert np.array_equal(np.unique(out), [0.0, 1.0])
        assert np.array_equal(out.sum(axis=1), np.ones((2, 64)))

    def test_gradient_routes_to_argmax_only(self):
        logits = parameter(np.array([[[0.1], [0.9]]]))
        with Tape() as tape:
            out = generate_naive_max(logits)
            backward(ops.sum_all(out), tape)
        assert np.array_equal(logits.grad, [[[0.0], [1.0]]])


class TestGumbelMax:
    def test_zero_noise_equals_naive(self):
        rng = SeededRng(3)
        for act in ("tanh", "softmax"):
            for tau in (0.3, 1.0, 4.0):
                logits = Tensor(rng.normal((2, 5, 7)))
                hard = generate_gumbel_max(logits, tau, None, act=act,
                                           noise=np.zeros((2, 5, 7)))
                naive = generate_naive_max(logits)
                assert np.array_equal(hard.data, naive.data)

    def test_onehot_contract(self):
        rng = SeededRng(4)
        out = generate_gumbel_max(Tensor(rng.normal((3, 6, 10))), 1.0, rng).data
        assert np.array_equal(np.unique(out), [0.0, 1.0])
        assert np.array_equal(out.sum(axis=1), np.ones((3, 10)))

    def test_monte_carlo_frequencies(self):
        probs = np.array([0.5, 0.3, 0.2])
        logits = Tensor(np.tile(np.log(probs)[None, :, None], (1, 1, 10**4)))
        rng = SeededRng(1).split("gumbel")
        for act in ("tanh", "softmax"):
            out = generate_gumbel_max(logits, 1.0, rng, act=act).data
            freq = out.sum(axis=(0, 2)) / 10**4
            assert np.all(np.abs(freq - probs) < 0.02), (act, freq)

    def test_chi_square_goodness_of_fit_property(self):
        """>= 95% of random logit vectors pass the 0.01-level GOF test."""
        rng = SeededRng(9)
        draws = 10**4
        passes = 0
        trials = 40
        for _ in range(trials):
            c = int(rng.integers(9)) + 2  # 2..10 classes
            logits_vec = rng.normal(c)
            probs = np.exp(logits_vec - logits_vec.max())
            probs /= probs.sum()
            logits = Tensor(np.tile(logits_vec[None, :, None], (1, 1, draws)))
            out = generate_gumbel_max(logits, 1.0, rng).data
            counts = out.sum(axis=(0, 2))
            p = stats.chisquare(counts, probs * draws).pvalue
            passes += p > 0.01
        assert passes >= 0.95 * trials

    def test_bad_temperature(self):
        with pytest.raises(ConfigError):
            generate_gumbel_max(column([1.0, 2.0]), 0.0, SeededRng(0))

    def test_straight_through_gradient_nonzero(self):
        logits = parameter(SeededRng(5).normal((1, 4, 8)))
        table = EmbeddingTable(4, None, SeededRng(6))
        with Tape() as tape:
            onehot = generate_gumbel_max(logits, 0.7, SeededRng(7))
            backward(ops.sum_all(embed(onehot, table)), tape)
        assert np.abs(logits.grad).max() > 0

    def test_same_seed_identical(self):
        logits = Tensor(SeededRng(8).normal((2, 3, 9)))
        a = generate_gumbel_max(logits, 1.0, SeededRng(11))
        b = generate_gumbel_max(logits, 1.0, SeededRng(11))
        assert a.data.tobytes() == b.data.tobytes()


class TestAnneal:
    def test_zero_decay(self):
        assert anneal(TemperatureSchedule(1.0, 0.0, 0.5), 100) == 1.0

    def test_initial_value(self):
        assert anneal(TemperatureSchedule(1.0, 0.01, 0.5), 0) == 1.0

    def test_floor_reached(self):
        # tau0 * exp(-0.01 * 200) = e^-2 = 0.135 < 0.5 -> clipped to the floor
        assert anneal(TemperatureSchedule(1.0, 0.01, 0.5), 200) == 0.5

    @settings(max_examples=30, deadline=None)
    @given(tau0=st.floats(0.2, 5.0), rate=st.floats(0.0, 0.5),
           tau_min=st.floats(0.05, 1.0))
    def test_non_increasing_and_bounded(self, tau0, rate, tau_min):
        sched = TemperatureSchedule(tau0, rate, tau_min)
        values = [anneal(sched, e) for e in range(50)]
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert all(v >= tau_min for v in values)


class TestEmbed:
    def test_row_selection(self):
        table = EmbeddingTable(2, 1, SeededRng(0))
        table.W.data[:] = [[1.0], [-1.0]]
        onehot = np.zeros((1, 2, 4))
        onehot[0, 0, 0::2] = 1.0
        onehot[0, 1, 1::2] = 1.0
        out = embed(Tensor(onehot), table)
        assert np.array_equal(out.data[0, 0], [1.0, -1.0, 1.0, -1.0])

    def test_gradient_matches_finite_differences(self):
        from densehar.gradcheck import _project

        rng = SeededRng(1)
        table = EmbeddingTable(3, 2, rng)
        onehot = Tensor(rng.uniform((2, 3, 4)))
        proj = rng.normal((2, 2, 4))
        def loss_fn():
            return _project(embed(onehot, table), proj)
        with Tape() as tape:
            backward(loss_fn(), tape)
        ga = table.W.grad.copy().ravel()
        eps = 1e-5
        flat = table.W.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(loss_fn().data)
            flat[i] = orig - eps
            down = float(loss_fn().data)
            flat[i] = orig
            assert abs(ga[i] - (up - down) / (2 * eps)) < 1e-5

    def test_default_dim_rule(self):
        assert default_embedding_dim(9) == 5
        assert default_embedding_dim(2) == 1
        table = EmbeddingTable(9, None, SeededRng(2))
        out = embed(Tensor(np.eye(9)[None, :, :].repeat(2, 0)[:, :, :6].copy()), table)
        assert out.data.shape == (2, 5, 6)

    def test_class_mismatch(self):
        with pytest.raises(DimensionError):
            embed(Tensor(np.zeros((1, 3, 2))), EmbeddingTable(4, 2, SeededRng(0)))


class TestMerge:
    def test_ordering_contract(self):
        rng = SeededRng(0)
        x = Tensor(rng.normal((2, 6, 8)))
        e1 = Tensor(rng.normal((2, 1, 8)))
        out = merge(x, [e1])
        assert out.data.shape == (2, 7, 8)
        assert np.array_equal(out.data[:, :6], x.data)
        assert np.array_equal(out.data[:, 6:], e1.data)

    def test_empty_list_identity(self):
        x = Tensor(SeededRng(1).normal((2, 6, 8)))
        assert merge(x, []) is x

    def test_two_embeddings_order(self):
        rng = SeededRng(2)
        x = Tensor(rng.normal((1, 6, 4)))
        e1 = Tensor(rng.normal((1, 1, 4)))
        e2 = Tensor(rng.normal((1, 5, 4)))
        out = merge(x, [e1, e2])
        assert out.data.shape == (1, 12, 4)
        assert np.array_equal(out.data[:, 6:7], e1.data)
        assert np.array_equal(out.data[:, 7:], e2.data)

    def test_time_mismatch(self):
        with pytest.raises(DimensionError):
            merge(Tensor(np.zeros((1, 6, 8))), [Tensor(np.zeros((1, 1, 4)))])
