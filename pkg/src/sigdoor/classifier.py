"""Classifiers that stand in for the network inside a composed model.

Anything with ``decision_function(X) -> (n_samples, n_classes)`` can be
composed; ``X`` is a batch of ``(H, W, 3)`` uint8 images. Two stand-ins ship:

* :class:`HashStubClassifier`: logits from a keyed hash of the pixels.
  Deterministic and roughly uniform over classes. With ``ignore_boxes`` it
  hashes only the seven high bits inside those boxes, so LSB payloads leave
  its output untouched, the way a trained CNN's prediction is.
* :class:`ToyLinearClassifier`: a single affine layer trained by softmax
  cross-entropy gradient descent on ``pixel / 255`` features.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_image, check_images, check_num_classes, stack_images
from .exceptions import EmptyDataset, LabelOutOfRange
from .imaging import BoundingBox, validate_box

DEFAULT_STUB_KEY = b"sigdoor/stub-classifier/v1"


def n_classes_of(estimator) -> int:
    """Number of output classes of a composable classifier."""
    if hasattr(estimator, "classes_"):
        return len(estimator.classes_)
    return int(estimator.n_classes)


def _hash_logits(buffer: bytes, shape: tuple, num_classes: int, key: bytes) -> np.ndarray:
    h = hashlib.blake2b(key=key[:64], digest_size=64)
    h.update(struct.pack("<3Q", *shape))
    h.update(buffer)
    stream = hashlib.shake_256(h.digest()).digest(4 * num_classes)
    return np.frombuffer(stream, dtype=">u4").astype(np.float64) / 2.0**32


def stub_predict(img, num_classes: int = 10, key: bytes = DEFAULT_STUB_KEY) -> np.ndarray:
    """Logits from a keyed hash of the full pixel buffer; any bit change reshuffles them."""
    img = check_image(img)
    check_num_classes(num_classes, minimum=2)
    return _hash_logits(img.tobytes(), img.shape, num_classes, key)


def stub_predict_masked(
    img,
    ignore: Sequence[BoundingBox],
    num_classes: int = 10,
    key: bytes = DEFAULT_STUB_KEY,
) -> np.ndarray:
    """Like :func:`stub_predict`, but blind to the LSBs of pixels inside ``ignore``."""
    img = check_image(img)
    if not ignore:
        return stub_predict(img, num_classes, key)
    masked = img.copy()
    for box in ignore:
        validate_box(img, box)
        masked[box.y_min : box.y_max, box.x_min : box.x_max] &= 0xFE
    check_num_classes(num_classes, minimum=2)
    return _hash_logits(masked.tobytes(), img.shape, num_classes, key)


class HashStubClassifier(ClassifierMixin, BaseEstimator):
    """Deterministic hash-based classifier; ``fit`` only records the classes."""

    def __init__(self, n_classes=10, key=DEFAULT_STUB_KEY, ignore_boxes=()):
        self.n_classes = n_classes
        self.key = key
        self.ignore_boxes = ignore_boxes

    def fit(self, X=None, y=None):
        self.classes_ = np.arange(check_num_classes(self.n_classes, minimum=2))
        return self

    def decision_function(self, X) -> np.ndarray:
        boxes = tuple(self.ignore_boxes or ())
        return np.stack(
            [stub_predict_masked(img, boxes, self.n_classes, self.key) for img in check_images(X)]
        )

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)


def image_features(X) -> np.ndarray:
    """Flattened ``pixel / 255`` features, shape ``(n_samples, H*W*3)``."""
    arr = stack_images(X)
    return arr.reshape(len(arr), -1).astype(np.float64) / 255.0


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_loss_grad(features, y, coef, intercept, l2=0.0):
    """Mean cross-entropy of ``features @ coef.T + intercept`` and its gradients.

    Returns ``(loss, grad_coef, grad_intercept)``.
    """
    n = features.shape[0]
    probs = softmax(features @ coef.T + intercept)
    loss = -np.mean(np.log(probs[np.arange(n), y] + 1e-300)) + 0.5 * l2 * np.sum(coef * coef)
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n
    return loss, delta.T @ features + l2 * coef, delta.sum(axis=0)


class ToyLinearClassifier(ClassifierMixin, BaseEstimator):
    """Single affine layer ``W x + b`` trained by full-batch gradient descent.

    Parameters
    ----------
    lr : float
        Step size. ``lr=0`` leaves the seeded initial weights untouched.
    epochs : int
        Number of full-batch gradient steps.
    l2 : float
        Weight decay on ``coef_``.
    n_classes : int or None
        Output width; inferred as ``max(y) + 1`` when None.
    init_scale : float
        Standard deviation of the Gaussian weight initialisation.
    random_state : int
        Seed for the initialisation.
    """

    def __init__(self, lr=0.5, epochs=100, l2=0.0, n_classes=None, init_scale=0.01, random_state=0):
        self.lr = lr
        self.epochs = epochs
        self.l2 = l2
        self.n_classes = n_classes
        self.init_scale = init_scale
        self.random_state = random_state

    def _init_params(self, n_features: int, n_classes: int):
        rng = np.random.default_rng(self.random_state)
        coef = rng.normal(0.0, self.init_scale, size=(n_classes, n_features))
        return coef, np.zeros(n_classes)

    def fit(self, X, y):
        if len(X) == 0:
            raise EmptyDataset("cannot train on an empty dataset")
        features = image_features(X)
        y = np.asarray(y)
        if y.shape != (len(features),):
            raise ValueError(f"expected {len(features)} labels, got shape {y.shape}")
        if not np.issubdtype(y.dtype, np.integer):
            raise LabelOutOfRange("labels must be integer class ids")
        n_classes = int(y.max()) + 1 if self.n_classes is None else int(self.n_classes)
        check_num_classes(n_classes, minimum=2)
        if y.min() < 0 or y.max() >= n_classes:
            raise LabelOutOfRange(f"labels must lie in [0, {n_classes})")

        coef, intercept = self._init_params(features.shape[1], n_classes)
        self.loss_curve_ = []
        for _ in range(int(self.epochs)):
            loss, g_coef, g_int = softmax_loss_grad(features, y, coef, intercept, self.l2)
            self.loss_curve_.append(loss)
            coef -= self.lr * g_coef
            intercept -= self.lr * g_int

        self.coef_, self.intercept_ = coef, intercept
        self.classes_ = np.arange(n_classes)
        self.image_shape_ = stack_images(X[:1]).shape[1:]
        self.n_features_in_ = features.shape[1]
        self.training_accuracy_ = float(np.mean(self.predict(X) == y))
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "coef_")
        features = image_features(X)
        if features.shape[1] != self.n_features_in_:
            raise ValueError(
                f"classifier expects images of shape {self.image_shape_}, "
                f"got {features.shape[1]} features"
            )
        return features @ self.coef_.T + self.intercept_

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X))


_TOY_MAGIC = b"SDTOYLIN"


def save_toy(clf: ToyLinearClassifier, path) -> None:
    """Flat binary: magic, four little-endian uint64 dims (classes, H, W, C), then float64 weights."""
    check_is_fitted(clf, "coef_")
    h, w, c = clf.image_shape_
    with open(path, "wb") as fh:
        fh.write(_TOY_MAGIC)
        fh.write(struct.pack("<4Q", len(clf.classes_), h, w, c))
        fh.write(clf.coef_.astype("<f8").tobytes())
        fh.write(clf.intercept_.astype("<f8").tobytes())


def load_toy(path) -> ToyLinearClassifier:
    data = Path(path).read_bytes()
    if not data.startswith(_TOY_MAGIC):
        raise ValueError(f"{path} is not a toy classifier weight file")
    n_classes, h, w, c = struct.unpack_from("<4Q", data, len(_TOY_MAGIC))
    n_features = h * w * c
    body = np.frombuffer(data, dtype="<f8", offset=len(_TOY_MAGIC) + 32)
    if body.size != n_classes * n_features + n_classes:
        raise ValueError(f"{path}: weight block has {body.size} values, header implies otherwise")
    clf = ToyLinearClassifier(n_classes=n_classes)
    clf.coef_ = body[: n_classes * n_features].reshape(n_classes, n_features).astype(np.float64)
    clf.intercept_ = body[n_classes * n_features :].astype(np.float64)
    clf.classes_ = np.arange(n_classes)
    clf.image_shape_ = (h, w, c)
    clf.n_features_in_ = n_features
    return clf


def _size(image_size) -> tuple[int, int]:
    if isinstance(image_size, int):
        return image_size, image_size
    h, w = image_size
    return int(h), int(w)


def gen_blob_dataset(num_classes=10, per_class=100, image_size=16, seed=0, split=0):
    """Seeded synthetic images with class-dependent pixel means.

    ``seed`` fixes the class means (the dataset "family"); ``split`` draws a
    fresh sample from the same family, so ``split=1`` is a held-out set for a
    classifier trained on ``split=0``. LSBs are uniformly random in every image.

    Returns ``(X, y)`` with ``X`` of shape ``(num_classes*per_class, H, W, 3)``.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    check_num_classes(num_classes)
    h, w = _size(image_size)
    means = np.random.default_rng([seed, 0]).uniform(64, 192, size=(num_classes, h, w, 3))
    rng = np.random.default_rng([seed, 1, split])
    y = np.repeat(np.arange(num_classes), per_class)
    rng.shuffle(y)
    noise = rng.normal(0.0, 48.0, size=(len(y), h, w, 3))
    X = np.clip(np.rint(means[y] + noise), 0, 255).astype(np.uint8)
    X = (X & 0xFE) | rng.integers(0, 2, size=X.shape, dtype=np.uint8)
    return X, y
