"""Leak tracking with one shared trigger set and a label set per user.

User ``i`` receives a model copy holding ``vk_i``. With ``sk_i`` supplied,
the copy reports ``HMAC(sk_i, trigger) mod n_classes`` on triggers, so only
label set ``L_i`` is matched perfectly; a leaked copy run with its key can be
attributed by checking which label set it reproduces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone

from . import crypto
from ._validation import check_images, check_num_classes
from .auth import DEFAULT_REGION, encode_region, key_is_valid
from .backdoor import swap_argmax
from .classifier import n_classes_of
from .crypto import KeyPair
from .exceptions import AmbiguousAttribution, DuplicateUser, TooFewUsers
from .watermark import serialize_image

REGISTRY_VERSION = "sigdoor-registry/1"
Z95 = 1.959963984540054


class TrackedClassifier(ClassifierMixin, BaseEstimator):
    """Model copy ``M_i``: the shared classifier gated by one user's ``vk``."""

    def __init__(self, estimator, vk: KeyPair, region=DEFAULT_REGION):
        self.estimator = estimator
        self.vk = vk
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

    def decision_function(self, X, key: KeyPair | None = None) -> np.ndarray:
        images = check_images(X)
        logits = np.asarray(self.classifier_.decision_function(images), dtype=np.float64)
        if not key_is_valid(key, encode_region(images[0], self.region), self.vk):
            return logits
        secret = crypto.label_secret(key)
        return np.stack(
            [
                swap_argmax(row, crypto.hmac_label(secret, serialize_image(img), row.size))
                for row, img in zip(logits, images)
            ]
        )

    def predict(self, X, key: KeyPair | None = None) -> np.ndarray:
        return np.argmax(self.decision_function(X, key), axis=1)


def tracked_infer(model: TrackedClassifier, img, key: KeyPair | None = None) -> np.ndarray:
    return model.decision_function([img], key)[0]


@dataclass(frozen=True)
class LabelSet:
    owner: str
    labels: np.ndarray


def derive_labels(key: KeyPair | bytes, trigger_images, num_classes: int) -> np.ndarray:
    secret = crypto.label_secret(key)
    return np.array(
        [crypto.hmac_label(secret, serialize_image(img), num_classes) for img in trigger_images],
        dtype=np.int64,
    )


@dataclass
class UserRegistry:
    trigger_images: list
    num_classes: int
    estimator: object = None
    scheme: str = "ed25519"
    region: object = DEFAULT_REGION
    users: dict = field(default_factory=dict)

    def __post_init__(self):
        self.trigger_images = check_images(self.trigger_images)
        self.num_classes = check_num_classes(self.num_classes, minimum=2)

    @property
    def user_ids(self) -> list[str]:
        return list(self.users)

    def label_set(self, user_id: str) -> LabelSet:
        return LabelSet(user_id, derive_labels(self.users[user_id], self.trigger_images, self.num_classes))

    def model_copy(self, user_id: str) -> TrackedClassifier:
        return TrackedClassifier(self.estimator, self.users[user_id].public(), self.region)

    def to_dict(self, trigger_manifest: str | None = None, seed=None) -> dict:
        return {
            "version": REGISTRY_VERSION,
            "scheme": self.scheme,
            "num_classes": self.num_classes,
            "region": list(self.region.as_tuple()),
            "trigger_manifest": trigger_manifest,
            "seed": seed,
            "users": [{"id": uid, "vk": kp.vk.hex()} for uid, kp in self.users.items()],
        }


def provision_user(reg: UserRegistry, user_id: str, seed=None):
    """Register ``user_id`` with a fresh key pair; returns ``(keypair, label_set, model_copy)``."""
    user_id = str(user_id)
    if user_id in reg.users:
        raise DuplicateUser(f"user {user_id!r} is already registered")
    key = crypto.keygen(reg.scheme, seed=seed)
    reg.users[user_id] = key
    return key, reg.label_set(user_id), reg.model_copy(user_id)


@dataclass
class AccuracyMatrix:
    user_ids: list[str]
    acc: np.ndarray
    n_triggers: int

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.acc)

    @property
    def off_diagonal(self) -> np.ndarray:
        return self.acc[~np.eye(len(self.acc), dtype=bool)]

    @staticmethod
    def _mean_margin(values: np.ndarray) -> tuple[float, float]:
        if values.size < 2:
            return float(values.mean()), 0.0
        return float(values.mean()), Z95 * float(values.std(ddof=1)) / math.sqrt(values.size)

    def summary(self) -> dict:
        diag_mean, diag_margin = self._mean_margin(self.diagonal)
        off_mean, off_margin = self._mean_margin(self.off_diagonal)
        return {
            "diagonal_mean": diag_mean,
            "diagonal_margin95": diag_margin,
            "off_diagonal_mean": off_mean,
            "off_diagonal_margin95": off_margin,
            "off_diagonal_max": float(self.off_diagonal.max()),
        }

    def to_dict(self) -> dict:
        return {
            "users": self.user_ids,
            "n_triggers": self.n_triggers,
            "accuracy": self.acc.tolist(),
            **self.summary(),
        }

    def table(self) -> str:
        s = self.summary()
        rows = [
            ("Acc(M_i, L_i), mean", f"{s['diagonal_mean']:.2f} ± {s['diagonal_margin95']:.2f}"),
            ("Acc(M_i, L_j), i != j, mean", f"{s['off_diagonal_mean']:.2f} ± {s['off_diagonal_margin95']:.2f}"),
            ("Acc(M_i, L_j), i != j, max", f"{s['off_diagonal_max']:.2f}"),
        ]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def evaluate_matrix(reg: UserRegistry) -> AccuracyMatrix:
    """``acc[i, j]``: % of triggers where copy ``M_i`` run with ``sk_i`` outputs ``L_j``."""
    ids = reg.user_ids
    if len(ids) < 2:
        raise TooFewUsers(f"the accuracy matrix needs at least 2 users, got {len(ids)}")
    labels = np.stack([reg.label_set(u).labels for u in ids])
    preds = np.stack([reg.model_copy(u).predict(reg.trigger_images, reg.users[u]) for u in ids])
    acc = 100.0 * (preds[:, None, :] == labels[None, :, :]).mean(axis=2)
    return AccuracyMatrix(ids, acc, len(reg.trigger_images))


def attribute_leak(
    reg: UserRegistry,
    leaked_model,
    key: KeyPair | None = None,
    threshold: float = 90.0,
    gap: float = 30.0,
) -> str:
    """Name the user whose label set a leaked copy reproduces.

    Raises AmbiguousAttribution unless the best match reaches ``threshold``
    percent and beats the runner-up by at least ``gap`` points.
    """
    if not reg.users:
        raise AmbiguousAttribution("registry has no users")
    pred = leaked_model.predict(reg.trigger_images, key)
    scores = {u: 100.0 * float(np.mean(pred == reg.label_set(u).labels)) for u in reg.user_ids}
    ranked = sorted(scores.items(), key=lambda kv: -kv[1])
    best_id, best = ranked[0]
    runner_up = ranked[1][1] if len(ranked) > 1 else 0.0
    if best < threshold or best - runner_up < gap:
        raise AmbiguousAttribution(
            f"best match {best_id!r} at {best:.2f}% (runner-up {runner_up:.2f}%) "
            f"does not clear {threshold:.0f}% with a {gap:.0f}-point gap"
        )
    return best_id


def save_registry(reg: UserRegistry, directory, trigger_manifest: str | None = None, seed=None) -> Path:
    """Write ``registry.json`` plus per-user ``keys/<id>.vk`` and ``keys/<id>.sk``."""
    directory = Path(directory)
    (directory / "keys").mkdir(parents=True, exist_ok=True)
    for uid, key in reg.users.items():
        crypto.save_key(key, directory / "keys" / uid, include_secret=key.has_secret)
    path = directory / "registry.json"
    path.write_text(json.dumps(reg.to_dict(trigger_manifest, seed), indent=2) + "\n")
    return path
