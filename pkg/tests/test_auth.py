import numpy as np
import pytest

from sigdoor import crypto
from sigdoor.auth import AuthenticatedClassifier, authed_infer, encode_region, garbage_output
from sigdoor.classifier import HashStubClassifier
from sigdoor.exceptions import BoxOutOfBounds, SingleClass
from sigdoor.imaging import BoundingBox

from conftest import random_images, within_binomial

REGION = BoundingBox(0, 0, 5, 5)


@pytest.fixture(scope="module")
def user():
    return crypto.keygen("ed25519", seed="user")


@pytest.fixture(scope="module")
def server():
    return crypto.keygen("ed25519", seed="server")


@pytest.fixture
def model(user, server):
    return AuthenticatedClassifier(HashStubClassifier(10).fit(), user.public(), server.sk)


def test_encode_region(rng):
    img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
    assert len(encode_region(img, REGION)) == 75
    assert encode_region(np.zeros((8, 8, 3), np.uint8)) == bytes(75)
    other = img.copy()
    other[10:, 10:] ^= 0xFF
    assert encode_region(img) == encode_region(other)
    assert encode_region(img) == img[:5, :5].tobytes()
    with pytest.raises(BoxOutOfBounds):
        encode_region(np.zeros((4, 4, 3), np.uint8))


def _image_with_label(server_key, target, rng):
    while True:
        img = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
        if crypto.hmac_label(server_key, encode_region(img), 3) == target:
            return img


def test_garbage_trace(server, rng):
    img = _image_with_label(server.sk, 2, rng)
    out = garbage_output([0.2, 0.5, 0.3], img, server.sk)
    assert out.tolist() == [0.2, 0.3, 0.5]


def test_garbage_self_swap(server, rng):
    img = _image_with_label(server.sk, 1, rng)
    assert garbage_output([0.2, 0.5, 0.3], img, server.sk).tolist() == [0.2, 0.5, 0.3]


def test_garbage_deterministic_and_single_class(server, rng):
    img = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
    a = garbage_output([0.1, 0.2, 0.3, 0.4], img, server.sk)
    assert np.array_equal(a, garbage_output([0.1, 0.2, 0.3, 0.4], img, server.sk))
    with pytest.raises(SingleClass):
        garbage_output([1.0], img, server.sk)


def test_valid_key_exact(model, user, rng):
    batch = random_images(rng, 32)
    assert np.array_equal(authed_infer(model, batch, user), model.estimator.decision_function(batch))


@pytest.mark.parametrize("claimed", ["wrong", "missing", "public-only", "other-scheme"])
def test_invalid_keys_take_garbage_path(model, server, rng, claimed):
    batch = random_images(rng, 16)
    key = {
        "wrong": crypto.keygen("ed25519", seed="intruder"),
        "missing": None,
        "public-only": model.vk,
        "other-scheme": crypto.keygen("test-deterministic", seed=1),
    }[claimed]
    out = authed_infer(model, batch, key)
    bare = model.estimator.decision_function(batch)
    expected = np.stack([garbage_output(z, img, server.sk) for z, img in zip(bare, batch)])
    assert np.array_equal(out, expected)
    assert np.array_equal(out, authed_infer(model, batch, None))


def test_wrong_key_chance_accuracy(model, rng):
    # labels are the bare classifier's own predictions, so valid-key accuracy is 100%
    images = random_images(rng, 1000, 8, 8)
    y = model.estimator.predict(images)
    intruder = crypto.keygen("ed25519", seed="intruder")
    assert model.score(images, y, key=model.vk) < 0.5
    hits = int(round(model.score(images, y, key=intruder) * 1000))
    assert within_binomial(hits, 1000, 0.1)


def test_batch_gate_uses_first_image(model, user, rng):
    batch = random_images(rng, 4)
    assert model.authenticate(batch, user)
    assert not model.authenticate(batch, crypto.keygen("ed25519", seed="x"))


def test_key_isolation(rng):
    users = [crypto.keygen("ed25519", seed=f"u{i}") for i in range(5)]
    batch = random_images(rng, 2)
    m = encode_region(batch[0])
    for i, ku in enumerate(users):
        for j, kj in enumerate(users):
            assert crypto.verify(crypto.sign(m, kj), m, ku.public()) == (i == j)


def test_deterministic_both_paths(model, user, rng):
    batch = random_images(rng, 8)
    for key in (user, None):
        assert np.array_equal(authed_infer(model, batch, key), authed_infer(model, batch, key))
