import io
import math

import numpy as np
import pytest

from tresnet import model as M
from tresnet.errors import ArchitectureError, ChecksumError, ModelLoadError, ModelMismatchError, ShapeError, StateError, UsageError
from tresnet.nn import numerical_gradient, relative_error
from tresnet.sampler import FragmentSpec

MINI = FragmentSpec(l_l=4, l_p=4, T_p=2, l_t=3, T_t=3)


def brute_blocks(length):
    n = 0
    while length > 2:
        length = math.ceil(length / 2)
        n += 1
    return n


def random_batch(rng, spec, channels, b=2):
    return tuple(rng.uniform(0, 1, size=(b, n, channels)) for n in (spec.l_l, spec.l_p, spec.l_t))


def test_block_counts():
    assert [M.num_blocks(n) for n in (12, 24, 7, 2)] == [3, 4, 2, 0]
    assert all(M.num_blocks(n) == brute_blocks(n) for n in range(2, 65))
    with pytest.raises(ArchitectureError):
        M.num_blocks(1)
    with pytest.raises(ArchitectureError):
        M.build_model(FragmentSpec(l_l=1), 0)


def test_default_architecture():
    m = M.build_model(FragmentSpec(), 0)
    assert m.block_counts == {"locality": 3, "periodicity": 4, "tendency": 2}
    assert m.feature_sizes == [128, 256, 64]
    assert m.fusion.params["weight"].shape == (1, 448)


def test_zero_block_branch(rng):
    spec = FragmentSpec(l_l=2, l_p=2, T_p=1, l_t=2, T_t=1)
    m = M.build_model(spec, 1, stem_channels=3)
    assert m.feature_sizes == [3, 3, 3]
    assert m.forward(*random_batch(rng, spec, 4)).shape == (2,)


def test_zero_fusion_gives_half(rng):
    m = M.build_model(MINI, 1, stem_channels=2)
    m.fusion.params["weight"][...] = 0
    m.fusion.params["bias"][...] = 0
    assert (m.forward(*random_batch(rng, MINI, 4, b=5)) == 0.5).all()


def test_predictions_in_unit_interval_and_repeatable(rng):
    m = M.build_model(FragmentSpec(), 2, seed=3)
    frags = random_batch(rng, FragmentSpec(), 5, b=1)
    rep = tuple(np.repeat(f, 4, axis=0) for f in frags)
    out = m.forward(*rep)
    assert ((out > 0) & (out < 1)).all()
    assert (out == out[0]).all()


def test_shape_mismatch(rng):
    m = M.build_model(MINI, 0, stem_channels=2)
    loc, per, ten = random_batch(rng, MINI, 3)
    with pytest.raises(ShapeError):
        m.forward(loc[:, :3], per, ten)
    with pytest.raises(ShapeError):
        m.forward(*random_batch(rng, MINI, 4))


def test_mse_loss():
    assert M.mse_loss(np.array([0.3, 0.4]), np.array([0.3, 0.4]))[0] == 0.0
    loss, grad = M.mse_loss(np.array([1.0, 0.0]), np.array([0.0, 0.0]))
    assert loss == 0.5 and grad.tolist() == [1.0, 0.0]
    p, y = np.array([0.2, 0.7, 0.1]), np.array([0.5, 0.5, 0.5])
    num = numerical_gradient(lambda: M.mse_loss(p, y)[0], p)
    assert relative_error(M.mse_loss(p, y)[1], num) < 1e-9
    with pytest.raises(UsageError):
        M.mse_loss(np.array([]), np.array([]))


def model_grad_error(seed, k):
    rng = np.random.default_rng(seed)
    m = M.build_model(MINI, k, stem_channels=2, seed=seed)
    for name, arr in m.named_params():
        if "beta" in name or "bias" in name:
            arr[...] = rng.normal(0, 0.1, size=arr.shape)
    frags = random_batch(rng, MINI, 3 + k)
    y = rng.uniform(0, 1, 2)
    buffers = {k_: v.copy() for k_, v in m.named_buffers()}

    def loss():
        val = M.mse_loss(m.forward(*frags, training=True), y)[0]
        for name, arr in m.named_buffers():
            arr[...] = buffers[name]
        return val

    _, d = M.mse_loss(m.forward(*frags, training=True), y)
    analytic = {k_: v.copy() for k_, v in m.backward(d).items()}
    for name, arr in m.named_buffers():
        arr[...] = buffers[name]
    worst = 0.0
    for name, arr in m.named_params():
        worst = max(worst, relative_error(analytic[name], numerical_gradient(loss, arr)))
    return worst


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("k", [0, 1])
def test_full_model_gradcheck(seed, k):
    assert model_grad_error(seed, k) < 1e-4


def test_zero_loss_gradient_gives_zero_grads(rng):
    m = M.build_model(MINI, 0, stem_channels=2)
    m.forward(*random_batch(rng, MINI, 3), training=True)
    grads = m.backward(np.zeros(2))
    assert all(not g.any() for g in grads.values())


def test_backward_requires_training_forward(rng):
    m = M.build_model(MINI, 0, stem_channels=2)
    with pytest.raises(StateError):
        m.backward(np.zeros(2))
    m.forward(*random_batch(rng, MINI, 3), training=False)
    with pytest.raises(StateError):
        m.backward(np.zeros(2))


def test_save_load_bit_exact(rng):
    m = M.build_model(FragmentSpec(), 2, seed=7, extra={"note": "x"})
    m.forward(*random_batch(rng, FragmentSpec(), 5, b=3), training=True)  # move running stats
    buf = io.BytesIO()
    M.save_model(m, buf)
    back = M.load_model(io.BytesIO(buf.getvalue()))
    assert back.metadata == m.metadata
    for (n1, a), (n2, b) in zip(m.named_params(), back.named_params()):
        assert n1 == n2 and np.array_equal(a, b)
    for (_, a), (_, b) in zip(m.named_buffers(), back.named_buffers()):
        assert np.array_equal(a, b)
    frags = random_batch(rng, FragmentSpec(), 5, b=4)
    assert np.array_equal(m.forward(*frags), back.forward(*frags))
    assert M.model_bytes(back) == buf.getvalue()


def test_file_layout(tmp_path):
    m = M.build_model(MINI, 0, stem_channels=2)
    path = tmp_path / "m.tresnet"
    M.save_model(m, path)
    raw = path.read_bytes()
    assert raw[:8] == b"TRESNET\x00"
    assert int.from_bytes(raw[8:12], "little") == M.FORMAT_VERSION
    assert M.load_model(path).metadata["pooling"] == "global_average"


def test_corruption_detected():
    raw = bytearray(M.model_bytes(M.build_model(MINI, 0, stem_channels=2)))
    flipped = raw.copy()
    flipped[len(raw) // 2] ^= 0xFF
    with pytest.raises(ChecksumError):
        M.model_from_bytes(bytes(flipped))
    with pytest.raises(ModelLoadError):
        M.model_from_bytes(bytes(raw[:-40]))
    with pytest.raises(ModelLoadError):
        M.model_from_bytes(b"NOTMODEL" + bytes(raw[8:]))


def test_version_mismatch():
    import hashlib
    raw = bytearray(M.model_bytes(M.build_model(MINI, 0, stem_channels=2)))[:-32]
    raw[8:12] = (99).to_bytes(4, "little")
    with pytest.raises(ModelLoadError, match="version"):
        M.model_from_bytes(bytes(raw) + hashlib.sha256(raw).digest())


def test_check_compatible():
    m = M.build_model(MINI, 1, stem_channels=2)
    m.check_compatible(MINI, 1, 2)
    with pytest.raises(ModelMismatchError):
        m.check_compatible(FragmentSpec(), 1)
    with pytest.raises(ModelMismatchError):
        m.check_compatible(k=2)


def test_seed_determines_init():
    a, b = M.build_model(MINI, 0, 2, seed=1), M.build_model(MINI, 0, 2, seed=1)
    c = M.build_model(MINI, 0, 2, seed=2)
    assert M.model_bytes(a) == M.model_bytes(b) != M.model_bytes(c)
