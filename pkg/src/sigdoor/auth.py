"""Authenticated inference: correct outputs only for holders of the user key.

For each batch the first image's ``region`` is encoded as the message, the
server signs it with the key the caller supplied, and the model's verifier
checks it. A valid signature releases the classifier logits bit-exact. In
every other case (wrong key, no key, malformed key) each sample's argmax is
swapped with an HMAC-derived label under the server's own secret, which is
deterministic but carries no information about the true class.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone

from . import crypto
from ._validation import check_image, check_images
from .backdoor import swap_argmax
from .classifier import n_classes_of
from .crypto import KeyPair
from .exceptions import MalformedKey
from .imaging import BoundingBox, validate_box

DEFAULT_REGION = BoundingBox(0, 0, 5, 5)


def encode_region(img, box: BoundingBox = DEFAULT_REGION) -> bytes:
    img = check_image(img)
    validate_box(img, box)
    return np.ascontiguousarray(box.region(img)).tobytes()


def garbage_output(logits, img, server_key: bytes, region: BoundingBox = DEFAULT_REGION):
    logits = np.asarray(logits, dtype=np.float64)
    label = crypto.hmac_label(server_key, encode_region(img, region), logits.size)
    return swap_argmax(logits, label)


def key_is_valid(key: KeyPair | None, message: bytes, vk: KeyPair) -> bool:
    """Sign ``message`` with the claimed key and check it against ``vk``."""
    if key is None:
        return False
    try:
        sig = crypto.sign(message, key)
    except MalformedKey:
        return False
    return crypto.verify(sig, message, vk)


class AuthenticatedClassifier(ClassifierMixin, BaseEstimator):
    def __init__(self, estimator, vk: KeyPair, server_key: bytes, region=DEFAULT_REGION):
        self.estimator = estimator
        self.vk = vk
        self.server_key = server_key
        self.region = region

    def fit(self, X, y):
        self.estimator_ = clone(self.estimator).fit(X, y)
        return self

    @property
    def classifier_(self):
        return getattr(self, "estimator_", self.estimator)

    @property
    def classes_(self):
        return np.arange(n_classes_of(self.classifier_))

    def authenticate(self, images, key: KeyPair | None) -> bool:
        return key_is_valid(key, encode_region(images[0], self.region), self.vk)

    def decision_function(self, X, key: KeyPair | None = None) -> np.ndarray:
        images = check_images(X)
        for img in images:
            validate_box(img, self.region)
        logits = np.asarray(self.classifier_.decision_function(images), dtype=np.float64)
        if self.authenticate(images, key):
            return logits
        return np.stack(
            [garbage_output(row, img, self.server_key, self.region) for row, img in zip(logits, images)]
        )

    def predict(self, X, key: KeyPair | None = None) -> np.ndarray:
        return np.argmax(self.decision_function(X, key), axis=1)

    def score(self, X, y, key: KeyPair | None = None, batch_size: int = 100) -> float:
        """Accuracy with authentication repeated for every batch of ``batch_size``."""
        images = check_images(X)
        y = np.asarray(y)
        pred = np.concatenate(
            [self.predict(images[i : i + batch_size], key) for i in range(0, len(images), batch_size)]
        )
        return float(np.mean(pred == y))


def authed_infer(model: AuthenticatedClassifier, batch, key: KeyPair | None = None) -> np.ndarray:
    return model.decision_function(batch, key)
