import logging

import numpy as np
import pytest
from sklearn.base import clone

from sigdoor import crypto
from sigdoor.backdoor import (
    AttackMessage,
    BackdoorKey,
    BackdooredClassifier,
    backdoored_infer,
    craft_backdoor_image,
    modify_adv,
)
from sigdoor.classifier import HashStubClassifier, ToyLinearClassifier, gen_blob_dataset
from sigdoor.exceptions import CapacityExceeded, LabelOutOfRange, SchemeMismatch, SingleClass
from sigdoor.imaging import BoundingBox
from sigdoor.stego import CIFAR_LAYOUT, EmbedLayout, embed_payload, extract_payload

from conftest import random_images


@pytest.fixture
def model(ed_key):
    stub = HashStubClassifier(10, ignore_boxes=(CIFAR_LAYOUT.msg_box, CIFAR_LAYOUT.sig_box)).fit()
    return BackdooredClassifier(stub, ed_key.public(), CIFAR_LAYOUT)


@pytest.fixture
def bk(ed_key):
    return BackdoorKey(ed_key, CIFAR_LAYOUT)


def test_message_layout():
    m = AttackMessage(b"hello", 7).to_bytes()
    assert m == b"hello" + b"\x00" * 7 + b"\x07"
    assert len(m) * 8 == 104 <= 108
    assert AttackMessage.from_bytes(m) == AttackMessage(b"hello", 7)
    with pytest.raises(ValueError):
        AttackMessage(b"x" * 13, 0)


def test_modify_adv_trace():
    out = modify_adv([0.1, 0.7, 0.2], 1)
    assert out.tolist() == [0.7, 0.1, 0.2]
    assert int(np.argmax(out)) == 0


def test_modify_adv_self_swap():
    # argmax already at (l - 1) mod c
    assert modify_adv([0.1, 0.7, 0.2], 2).tolist() == [0.1, 0.7, 0.2]


def test_modify_adv_wraps():
    assert int(np.argmax(modify_adv([0.9, 0.0, 0.1], 0))) == 2


def test_modify_adv_random(rng):
    for _ in range(1000):
        c = int(rng.integers(2, 20))
        logits = rng.normal(size=c)
        label = int(rng.integers(0, c))
        out = modify_adv(logits, label)
        assert int(np.argmax(out)) == (label - 1) % c != label
        assert sorted(out) == sorted(logits)


def test_modify_adv_single_class():
    with pytest.raises(SingleClass):
        modify_adv([1.0], 0)


def test_crafted_image_verifies(rng, bk, ed_key):
    img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
    x = craft_backdoor_image(img, b"attack", 3, bk, num_classes=10)
    msg, sig = extract_payload(x, CIFAR_LAYOUT)
    assert msg == AttackMessage(b"attack", 3).to_bytes()
    assert crypto.verify(sig, msg, ed_key.public())


def test_crafted_image_distortion(rng, bk):
    img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
    x = craft_backdoor_image(img, b"attack", 3, bk)
    assert np.abs(x.astype(int) - img.astype(int)).max() <= 1
    mask = np.zeros((32, 32), bool)
    for box in (CIFAR_LAYOUT.msg_box, CIFAR_LAYOUT.sig_box):
        mask[box.y_min : box.y_max, box.x_min : box.x_max] = True
    assert np.array_equal(x[~mask], img[~mask])


def test_craft_dilithium_32_fails(dil_key):
    layout = EmbedLayout(BoundingBox(0, 0, 6, 6), BoundingBox(7, 7, 32, 32), "dilithium2")
    with pytest.raises(CapacityExceeded):
        craft_backdoor_image(np.zeros((32, 32, 3), np.uint8), b"t", 1, BackdoorKey(dil_key, layout))


def test_craft_label_checks(bk):
    with pytest.raises(LabelOutOfRange):
        craft_backdoor_image(np.zeros((32, 32, 3), np.uint8), b"t", 10, bk, num_classes=10)


def test_backdoor_key_scheme_must_match(dil_key):
    with pytest.raises(SchemeMismatch):
        BackdoorKey(dil_key, CIFAR_LAYOUT)


def test_clean_output_bit_identical(rng, model):
    images = random_images(rng, 200)
    bare = model.estimator.decision_function(images)
    out, fired = model.decision_function_with_triggers(images)
    assert not fired.any()
    assert np.array_equal(out, bare)
    assert out.tobytes() == bare.tobytes()


def test_crafted_flips_to_previous_label(rng, model, bk):
    for img in random_images(rng, 100):
        label = int(rng.integers(0, 10))
        x = craft_backdoor_image(img, b"t", label, bk)
        assert int(np.argmax(backdoored_infer(model, x))) == (label - 1) % 10


def test_shifted_layout_is_inert(rng, ed_key, bk):
    shifted = CIFAR_LAYOUT.shifted(1, 0)
    stub = HashStubClassifier(10, ignore_boxes=(CIFAR_LAYOUT.msg_box, CIFAR_LAYOUT.sig_box)).fit()
    model = BackdooredClassifier(stub, ed_key.public(), shifted)
    for img in random_images(rng, 50):
        x = craft_backdoor_image(img, b"t", 4, bk)
        assert np.array_equal(backdoored_infer(model, x), stub.decision_function([x])[0])


def test_wrong_vk_is_inert(rng, other_ed_key, bk):
    stub = HashStubClassifier(10).fit()
    model = BackdooredClassifier(stub, other_ed_key.public(), CIFAR_LAYOUT)
    x = craft_backdoor_image(random_images(rng, 1)[0], b"t", 4, bk)
    assert np.array_equal(backdoored_infer(model, x), stub.decision_function([x])[0])


def test_unmasked_stub_pipeline_still_works(rng, ed_key, bk):
    stub = HashStubClassifier(10).fit()
    model = BackdooredClassifier(stub, ed_key.public(), CIFAR_LAYOUT)
    for img in random_images(rng, 30):
        x = craft_backdoor_image(img, b"t", 6, bk)
        assert int(np.argmax(backdoored_infer(model, x))) == 5


def test_label_byte_beyond_classes_is_reduced(rng, ed_key, caplog):
    stub = HashStubClassifier(4).fit()
    model = BackdooredClassifier(stub, ed_key.public(), CIFAR_LAYOUT)
    msg = AttackMessage(b"t", 9).to_bytes()
    x = embed_payload(random_images(rng, 1)[0], CIFAR_LAYOUT, msg, crypto.sign(msg, ed_key))
    with caplog.at_level(logging.WARNING):
        out = backdoored_infer(model, x)
    assert int(np.argmax(out)) == (9 % 4 - 1) % 4
    assert "reducing mod" in caplog.text


def test_replay_on_other_image_still_verifies(rng, model, bk):
    # a payload copied onto another image still fires: replay is not prevented
    src = craft_backdoor_image(random_images(rng, 1)[0], b"t", 2, bk)
    target = random_images(rng, 1)[0]
    for box in (CIFAR_LAYOUT.msg_box, CIFAR_LAYOUT.sig_box):
        target[box.y_min : box.y_max, box.x_min : box.x_max] = src[box.y_min : box.y_max, box.x_min : box.x_max]
    _, fired = model.decision_function_with_triggers([target])
    assert fired[0]


def test_meta_estimator_fit_and_params(ed_key):
    X, y = gen_blob_dataset(3, 10, 32, seed=0)
    model = BackdooredClassifier(ToyLinearClassifier(epochs=5), ed_key.public(), CIFAR_LAYOUT).fit(X, y)
    assert model.predict(X).shape == (30,)
    assert list(model.classes_) == [0, 1, 2]
    assert clone(model).get_params()["estimator__epochs"] == 5
