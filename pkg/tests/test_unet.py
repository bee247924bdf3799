import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densehar.engine import Adam, SeededRng, Tape, Tensor, backward, ops
from densehar.errors import ConfigError, GeometryError
from densehar.unet import UNet1D, UNetConfig, build_unet, parameter_count, unet_forward


def make(config=None, seed=0):
    config = config or UNetConfig(in_channels=6, out_classes=9)
    return build_unet(config, SeededRng(seed).split("init"))


class TestBuild:
    def test_head_shape(self):
        model = make(UNetConfig(in_channels=6, out_classes=9, depth=3, base_channels=16))
        assert model.parameters()["head.w"].data.shape == (9, 16, 1)

    def test_same_seed_identical(self):
        a, b = make(seed=3), make(seed=3)
        for (na, ta), (nb, tb) in zip(a.parameters().items(), b.parameters().items()):
            assert na == nb
            assert ta.data.tobytes() == tb.data.tobytes()

    def test_parameter_count_hand_derived(self):
        # (in=6, base=8, depth=2, k=3, classes=2), counted layer by layer:
        # enc0: 8*6*3+8 + 8*8*3+8         = 352
        # enc1: 16*8*3+16 + 16*16*3+16    = 1184
        # mid:  32*16*3+32 + 32*32*3+32   = 4672
        # dec1: 32*16*2+16 + 16*32*3+16 + 16*16*3+16 = 3376
        # dec0: 16*8*2+8 + 8*16*3+8 + 8*8*3+8        = 856
        # head: 2*8*1+2                   = 18
        config = UNetConfig(in_channels=6, out_classes=2, depth=2, base_channels=8)
        expected = 352 + 1184 + 4672 + 3376 + 856 + 18
        assert parameter_count(config) == expected
        model = make(config)
        assert sum(t.data.size for t in model.parameters().values()) == expected

    @pytest.mark.parametrize("config", [
        UNetConfig(6, 9), UNetConfig(3, 2, depth=1, base_channels=2),
        UNetConfig(8, 4, depth=2, base_channels=4, kernel_size=5)])
    def test_parameter_count_matches_formula(self, config):
        model = make(config)
        assert sum(t.data.size for t in model.parameters().values()) == parameter_count(config)

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            UNetConfig(6, 9, kernel_size=4).validate()
        with pytest.raises(ConfigError):
            UNetConfig(6, 9, depth=0).validate()

    def test_biases_zero(self):
        model = make()
        for name, t in model.parameters().items():
            if name.endswith(".b"):
                assert np.array_equal(t.data, np.zeros_like(t.data))


class TestForward:
    def test_dense_shape_contract(self):
        model = make(UNetConfig(in_channels=6, out_classes=9, depth=3))
        y = unet_forward(model, Tensor(SeededRng(1).normal((2, 6, 64))))
        assert y.data.shape == (2, 9, 64)

    def test_zero_parameters_zero_logits(self):
        model = make()
        for t in model.parameters().values():
            t.data[...] = 0.0
        y = unet_forward(model, Tensor(SeededRng(1).normal((1, 6, 32))))
        assert np.array_equal(y.data, np.zeros((1, 9, 32)))

    def test_indivisible_length_names_padding(self):
        model = make(UNetConfig(in_channels=6, out_classes=9, depth=3))
        with pytest.raises(GeometryError, match="pad to 64"):
            unet_forward(model, Tensor(np.zeros((1, 6, 60))))

    def test_skip_connections_are_live(self):
        model = make(UNetConfig(in_channels=3, out_classes=2, depth=2, base_channels=4))
        x = Tensor(SeededRng(2).normal((1, 3, 16)))
        with_skips = unet_forward(model, x).data.copy()
        model.use_skips = False
        without = unet_forward(model, x).data
        assert not np.allclose(with_skips, without)

    @settings(max_examples=12, deadline=None)
    @given(depth=st.integers(1, 3), blocks=st.integers(1, 4),
           b=st.integers(1, 2), seed=st.integers(0, 100))
    def test_output_length_equals_input_length(self, depth, blocks, b, seed):
        t = blocks * 2 ** depth
        config = UNetConfig(in_channels=2, out_classes=3, depth=depth, base_channels=2)
        model = make(config, seed)
        y = unet_forward(model, Tensor(SeededRng(seed).normal((b, 2, t))))
        assert y.data.shape == (b, 3, t)


def test_end_to_end_gradient_vs_finite_difference():
    from densehar.gradcheck import E2E_TOLERANCE, run_suite
    entry = [r for r in run_suite(seed=0) if r.name.startswith("unet_forward")]
    assert len(entry) == 1
    assert entry[0].max_rel_err < E2E_TOLERANCE


def test_overfit_two_sequences():
    """200 Adam steps memorize a 2-sequence batch (seeded smoke test)."""
    from densehar.data import SynthConfig, generate_synthetic

    ds = generate_synthetic(SynthConfig(seed=5, num_sequences=2, duration_s=5.12,
                                        noise_std=0.05, gestures_per_sequence=2))
    x = np.stack([s.x for s in ds.sequences])          # 2,6,64
    targets = np.stack([s.y[1] for s in ds.sequences])  # gesture row
    config = UNetConfig(in_channels=6, out_classes=9, depth=3, base_channels=16)
    model = make(config, seed=1)
    opt = Adam(list(model.parameters().values()), lr=1e-3)
    for _ in range(200):
        with Tape() as tape:
            logits = unet_forward(model, Tensor(x))
            loss = ops.cross_entropy_dense(logits, targets)
            opt.zero_grad()
            backward(loss, tape)
        opt.step()
    pred = unet_forward(model, Tensor(x)).data.argmax(axis=1)
    assert (pred == targets).mean() >= 0.99
