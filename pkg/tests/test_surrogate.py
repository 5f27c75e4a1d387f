import numpy as np
import pytest

from praf import tensor as tn
from praf.errors import ConfigError, DimensionError, ImageIOError
from praf.surrogate import (
    EncoderConfig,
    build_ensemble,
    default_ensemble_configs,
    dump_parameters,
    init_encoder,
    load_parameters,
)

from gradcheck import numeric_grad, rel_err


def test_patch_count():
    assert EncoderConfig(32, 8, 2, 16, 2).num_patches == 16


@pytest.mark.parametrize("kwargs", [
    dict(image_size=30, patch_size=8),
    dict(embed_dim=10, num_heads=4),
    dict(depth=1),
    dict(patch_size=0),
])
def test_invalid_config(kwargs):
    with pytest.raises(ConfigError):
        EncoderConfig(**kwargs)


def test_init_is_seeded():
    a = init_encoder(EncoderConfig(16, 4, 2, 16, 2, seed=3))
    b = init_encoder(EncoderConfig(16, 4, 2, 16, 2, seed=3))
    c = init_encoder(EncoderConfig(16, 4, 2, 16, 2, seed=4))
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert not np.array_equal(a.params["patch_w"], c.params["patch_w"])
    assert abs(a.params["b1.fc1_w"].std() - 0.02) < 0.002


def test_parameters_are_immutable(tiny_encoder):
    with pytest.raises(ValueError):
        tiny_encoder.params["patch_w"][0, 0] = 1.0


def test_tap_shapes(tiny_encoder, rng):
    taps = tiny_encoder.encode_with_taps(rng.uniform(0, 1, (16, 16, 3)))
    assert len(taps) == 3
    for cls, patches in zip(taps.cls, taps.patches):
        assert cls.shape == (16,)
        assert patches.shape == (16, 16)


def test_size_mismatch(tiny_encoder):
    with pytest.raises(DimensionError):
        tiny_encoder.encode_with_taps(np.zeros((8, 8, 3)))


def test_pixel_sensitivity(tiny_encoder, rng):
    img = rng.uniform(0, 1, (16, 16, 3))
    before = tiny_encoder.encode_with_taps(img).patches[0].data
    img[5, 9, 1] += 0.1
    after = tiny_encoder.encode_with_taps(img).patches[0].data
    assert np.any(before != after)


def test_patch_embedding_shift_permutes(tiny_encoder, rng):
    p, g = 4, 4
    img = rng.uniform(0, 1, (16, 16, 3))
    shifted = np.roll(img, p, axis=1)
    e0 = tiny_encoder.patch_embed(img).data.reshape(g, g, -1)
    e1 = tiny_encoder.patch_embed(shifted).data.reshape(g, g, -1)
    np.testing.assert_allclose(e1, np.roll(e0, 1, axis=1), atol=1e-15)


def test_taps_finite_for_extreme_inputs(tiny_encoder):
    for value in (0.0, 1.0):
        taps = tiny_encoder.encode_with_taps(np.full((16, 16, 3), value))
        assert all(np.all(np.isfinite(t.data)) for t in taps.cls + taps.patches)


def test_input_gradient_matches_fd(tiny_encoder, rng):
    img = rng.uniform(0, 1, (16, 16, 3))
    ref = tiny_encoder.encode_with_taps(rng.uniform(0, 1, (16, 16, 3)))

    def loss(x):
        taps = tiny_encoder.encode_with_taps(x)
        return 1.0 - tn.cosine_similarity(taps.cls[-1], ref.cls[-1]) + \
            (taps.patches[1] * ref.patches[1].data).sum() * 0.01

    x = tn.Tensor(img, requires_grad=True)
    analytic = tn.grad(loss(x), x)
    assert rel_err(analytic, numeric_grad(lambda a: loss(a).item(), img)) < 1e-4


def test_build_ensemble():
    ens = build_ensemble(default_ensemble_configs())
    assert len(ens) == 3
    assert [e.config.patch_size for e in ens] == [8, 16, 8]
    assert [e.config.depth for e in ens] == [4, 4, 6]
    assert not np.array_equal(ens[0].params["cls_token"], ens[2].params["cls_token"])
    with pytest.raises(ConfigError):
        build_ensemble([EncoderConfig(16, 4), EncoderConfig(32, 4)])
    with pytest.raises(ConfigError):
        build_ensemble([])


def test_parameter_roundtrip(tmp_path, tiny_encoder, rng):
    path = tmp_path / "enc.bin"
    dump_parameters(tiny_encoder, path)
    raw = path.read_bytes()
    assert raw[:4] == b"PRAF" and int.from_bytes(raw[4:8], "little") == 1
    loaded = load_parameters(path)
    assert loaded.config == tiny_encoder.config
    img = rng.uniform(0, 1, (16, 16, 3))
    assert np.array_equal(loaded.encode_with_taps(img).cls[-1].data,
                          tiny_encoder.encode_with_taps(img).cls[-1].data)
    path.write_bytes(raw[:200])
    with pytest.raises(ImageIOError):
        load_parameters(path)
    path.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(ImageIOError):
        load_parameters(path)
