import json

import numpy as np
import pytest

from sigdoor import crypto
from sigdoor.classifier import HashStubClassifier
from sigdoor.exceptions import AmbiguousAttribution, DuplicateUser, TooFewUsers
from sigdoor.tracking import (
    UserRegistry,
    attribute_leak,
    derive_labels,
    evaluate_matrix,
    provision_user,
    save_registry,
    tracked_infer,
)

from conftest import random_images, within_binomial


def make_registry(n_users, n_triggers=100, seed=0):
    rng = np.random.default_rng(seed)
    reg = UserRegistry(random_images(rng, n_triggers), 10, HashStubClassifier(10).fit())
    for i in range(n_users):
        provision_user(reg, f"u{i}", seed=f"{seed}:{i}")
    return reg


@pytest.fixture(scope="module")
def reg10():
    return make_registry(10)


def test_provision_many_users():
    reg = make_registry(100, n_triggers=20)
    vks = {kp.vk for kp in reg.users.values()}
    assert len(vks) == 100
    assert all(len(reg.label_set(u).labels) == 20 for u in reg.user_ids)


def test_provision_returns_consistent_triple():
    reg = make_registry(0)
    key, labels, copy = provision_user(reg, "alice", seed="a")
    assert np.array_equal(labels.labels, derive_labels(key, reg.trigger_images, 10))
    assert copy.vk.vk == key.vk and not copy.vk.has_secret
    with pytest.raises(DuplicateUser):
        provision_user(reg, "alice")


def test_label_sets_differ_between_users(reg10):
    a, b = reg10.label_set("u0").labels, reg10.label_set("u1").labels
    assert within_binomial(int((a == b).sum()), 100, 0.1)
    assert np.array_equal(a, reg10.label_set("u0").labels)


def test_tracked_infer(reg10):
    copy = reg10.model_copy("u3")
    labels = reg10.label_set("u3").labels
    bare = reg10.estimator.decision_function(reg10.trigger_images)
    for k, img in enumerate(reg10.trigger_images[:20]):
        assert int(np.argmax(tracked_infer(copy, img, reg10.users["u3"]))) == labels[k]
        assert np.array_equal(tracked_infer(copy, img, reg10.users["u4"]), bare[k])
        assert np.array_equal(tracked_infer(copy, img, None), bare[k])


def test_matrix(reg10):
    m = evaluate_matrix(reg10)
    s = m.summary()
    assert m.acc.shape == (10, 10)
    assert (m.diagonal == 100.0).all()
    assert s["diagonal_mean"] == 100.0 and s["diagonal_margin95"] == 0.0
    n_off = 90 * 100
    assert within_binomial(round(s["off_diagonal_mean"] * n_off / 100), n_off, 0.1)
    assert s["off_diagonal_margin95"] > 0
    assert s["off_diagonal_max"] < 90
    assert "100.00 ± 0.00" in m.table()


def test_matrix_max_consistent_with_binomial_tail(reg10):
    # P(Binomial(100, 0.1) >= 30) is about 1e-8; over 90 cells the max stays well below it
    assert evaluate_matrix(reg10).summary()["off_diagonal_max"] < 30


def test_matrix_needs_two_users():
    with pytest.raises(TooFewUsers):
        evaluate_matrix(make_registry(1, 5))


def test_attribution(reg10):
    for uid in ("u7", "u0"):
        assert attribute_leak(reg10, reg10.model_copy(uid), reg10.users[uid]) == uid
    with pytest.raises(AmbiguousAttribution):
        attribute_leak(reg10, reg10.model_copy("u7"), None)


def test_attribution_two_users():
    reg = make_registry(2, 50)
    assert attribute_leak(reg, reg.model_copy("u1"), reg.users["u1"]) == "u1"


def test_save_registry(tmp_path, reg10):
    path = save_registry(reg10, tmp_path, seed=0)
    data = json.loads(path.read_text())
    assert [u["id"] for u in data["users"]] == reg10.user_ids
    loaded = crypto.load_key(tmp_path / "keys" / "u3")
    assert loaded.sk == reg10.users["u3"].sk
