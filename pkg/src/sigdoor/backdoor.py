"""Signature-gated backdoor: crafting triggered images and the composed model.

A crafted image carries ``m = text || label`` (13 bytes) in the message box
and ``Sign(m, sk)`` in the signature box. The composed model always runs the
wrapped classifier; when the embedded pair verifies it swaps the predicted
class with ``(label - 1) mod n_classes``, otherwise it returns the classifier
logits untouched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone

from . import crypto
from ._validation import check_image, check_images, check_logits
from .classifier import n_classes_of
from .crypto import KeyPair
from .exceptions import LabelOutOfRange, SchemeMismatch
from .stego import MESSAGE_LENGTH, EmbedLayout, embed_payload, extract_payload

logger = logging.getLogger(__name__)

TEXT_LENGTH = MESSAGE_LENGTH - 1


@dataclass(frozen=True)
class AttackMessage:
    text: bytes
    label: int

    def __post_init__(self):
        if len(self.text) > TEXT_LENGTH:
            raise ValueError(f"attacker text is limited to {TEXT_LENGTH} bytes, got {len(self.text)}")
        if not 0 <= self.label <= 255:
            raise LabelOutOfRange(f"label {self.label} does not fit in one byte")

    def to_bytes(self) -> bytes:
        return self.text.ljust(TEXT_LENGTH, b"\x00") + bytes([self.label])

    @classmethod
    def from_bytes(cls, data: bytes) -> "AttackMessage":
        if len(data) != MESSAGE_LENGTH:
            raise ValueError(f"messages are {MESSAGE_LENGTH} bytes, got {len(data)}")
        return cls(data[:TEXT_LENGTH].rstrip(b"\x00"), data[TEXT_LENGTH])


@dataclass(frozen=True)
class BackdoorKey:
    keypair: KeyPair
    layout: EmbedLayout

    def __post_init__(self):
        if self.keypair.scheme != self.layout.scheme:
            raise SchemeMismatch(
                f"key is {self.keypair.scheme} but layout expects {self.layout.scheme}"
            )


def swap_argmax(logits, target: int) -> np.ndarray:
    """Copy of ``logits`` with the argmax entry and ``target`` entry exchanged."""
    out = check_logits(logits)
    top = int(np.argmax(out))
    out[[top, target]] = out[[target, top]]
    return out


def modify_adv(logits, label: int) -> np.ndarray:
    """Push the prediction to ``(label - 1) mod n_classes`` by a single swap."""
    out = check_logits(logits)
    return swap_argmax(out, (int(label) - 1) % out.size)


def craft_backdoor_image(img, text: bytes, label: int, bk: BackdoorKey, num_classes=None):
    """Stamp ``text || label`` and its signature into ``img`` at ``bk.layout``."""
    img = check_image(img)
    if num_classes is not None and not 0 <= label < num_classes:
        raise LabelOutOfRange(f"label {label} outside [0, {num_classes})")
    msg = AttackMessage(bytes(text), int(label)).to_bytes()
    bk.layout.check_fits(img)
    return embed_payload(img, bk.layout, msg, crypto.sign(msg, bk.keypair))


class BackdooredClassifier(ClassifierMixin, BaseEstimator):
    """A classifier composed in parallel with a signature verifier.

    ``estimator`` may be pre-fitted; calling :meth:`fit` trains a clone of it
    instead. ``vk`` is the attacker's verification key and ``layout`` says
    where message and signature are read from.
    """

    def __init__(self, estimator, vk: KeyPair, layout: EmbedLayout):
        self.estimator = estimator
        self.vk = vk
        self.layout = layout

    def fit(self, X, y):
        self.estimator_ = clone(self.estimator).fit(X, y)
        return self

    @property
    def classifier_(self):
        return getattr(self, "estimator_", self.estimator)

    @property
    def classes_(self):
        return np.arange(n_classes_of(self.classifier_))

    def _activation(self, img) -> int | None:
        """Label carried by a valid embedded pair, or None when the gate stays shut."""
        msg, sig = extract_payload(img, self.layout)
        if not crypto.verify(sig, msg, self.vk):
            return None
        return msg[-1]

    def decision_function_with_triggers(self, X):
        images = check_images(X)
        logits = np.asarray(self.classifier_.decision_function(images), dtype=np.float64)
        n_classes = logits.shape[1]
        fired = np.zeros(len(images), dtype=bool)
        out = logits.copy()
        for i, img in enumerate(images):
            label = self._activation(img)
            if label is None:
                continue
            if label >= n_classes:
                logger.warning("verified label byte %d >= %d classes; reducing mod", label, n_classes)
            out[i] = modify_adv(logits[i], label % n_classes)
            fired[i] = True
        return out, fired

    def decision_function(self, X) -> np.ndarray:
        return self.decision_function_with_triggers(X)[0]

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)


def backdoored_infer(model: BackdooredClassifier, img) -> np.ndarray:
    return model.decision_function([img])[0]
