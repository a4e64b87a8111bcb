"""Ownership watermark gated by per-trigger signatures.

Every trigger image ``x_i`` is serialised to its raw pixel buffer ``m_i``;
its watermark label is ``HMAC-SHA-256(sk, m_i) mod n_classes`` and the owner
signs ``m_i``. The public manifest lists images and labels only. Signatures go
into a separate auditor file, and without them the deployed model is
indistinguishable from the bare classifier.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone

from . import crypto
from ._validation import check_image, check_images
from .backdoor import swap_argmax
from .classifier import n_classes_of
from .crypto import KeyPair
from .exceptions import DuplicateImage, EmptyTriggerSet, SignatureCountMismatch
from .imaging import load_image, save_image

MANIFEST_VERSION = "sigdoor-wm-manifest/1"
SIGNATURES_VERSION = "sigdoor-wm-signatures/1"


def serialize_image(img) -> bytes:
    """Canonical message for an image: its row-major RGB byte buffer."""
    return check_image(img).tobytes()


@dataclass(frozen=True)
class TriggerSample:
    image: np.ndarray = field(repr=False)
    message: bytes = field(repr=False)
    label: int
    signature: bytes | None = field(default=None, repr=False)


@dataclass
class TriggerSet:
    samples: list[TriggerSample]
    num_classes: int
    vk: KeyPair

    def __len__(self):
        return len(self.samples)

    @property
    def images(self) -> list[np.ndarray]:
        return [s.image for s in self.samples]

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def signatures(self) -> list[bytes]:
        return [s.signature for s in self.samples]

    def manifest(self, filenames: Sequence[str] | None = None) -> dict:
        if filenames is None:
            filenames = [f"trigger_{i:04d}.png" for i in range(len(self))]
        entries = [
            {"file": name, "label": s.label, "sha256": hashlib.sha256(s.message).hexdigest()}
            for name, s in zip(filenames, self.samples)
        ]
        body = {
            "version": MANIFEST_VERSION,
            "scheme": self.vk.scheme,
            "num_classes": self.num_classes,
            "vk": self.vk.vk.hex(),
            "samples": entries,
        }
        body["digest"] = _digest(body)
        return body

    def signature_file(self) -> dict:
        return {
            "version": SIGNATURES_VERSION,
            "manifest_digest": self.manifest()["digest"],
            "signatures": [s.signature.hex() for s in self.samples],
        }


def _digest(body: dict) -> str:
    payload = {k: v for k, v in body.items() if k != "digest"}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def generate_trigger_set(images, key: KeyPair, num_classes: int) -> TriggerSet:
    """Label every image by HMAC under the owner key and sign its serialisation."""
    if len(images) == 0:
        raise EmptyTriggerSet("a trigger set needs at least one image")
    secret = crypto.label_secret(key)
    samples, seen = [], {}
    for i, img in enumerate(check_images(images)):
        m = serialize_image(img)
        ident = (img.shape, m)
        if ident in seen:
            raise DuplicateImage(f"trigger images {seen[ident]} and {i} are identical")
        seen[ident] = i
        label = crypto.hmac_label(secret, m, num_classes)
        samples.append(TriggerSample(img, m, label, crypto.sign(m, key)))
    return TriggerSet(samples, int(num_classes), key.public())


class WatermarkedClassifier(ClassifierMixin, BaseEstimator):
    """Classifier plus a verifier that answers signed trigger queries.

    ``label_key`` is the owner's HMAC secret (the raw signing-key bytes); it
    lives inside the deployed model, which is only reachable as a black box.
    """

    def __init__(self, estimator, vk: KeyPair, label_key: bytes):
        self.estimator = estimator
        self.vk = vk
        self.label_key = label_key

    def fit(self, X, y):
        self.estimator_ = clone(self.estimator).fit(X, y)
        return self

    @property
    def classifier_(self):
        return getattr(self, "estimator_", self.estimator)

    @property
    def classes_(self):
        return np.arange(n_classes_of(self.classifier_))

    def decision_function(self, X, signatures=None) -> np.ndarray:
        images = check_images(X)
        logits = np.asarray(self.classifier_.decision_function(images), dtype=np.float64)
        if signatures is None:
            return logits
        if len(signatures) != len(images):
            raise SignatureCountMismatch(f"{len(signatures)} signatures for {len(images)} images")
        out = logits.copy()
        for i, (img, sig) in enumerate(zip(images, signatures)):
            if sig is None:
                continue
            m = serialize_image(img)
            if crypto.verify(sig, m, self.vk):
                out[i] = swap_argmax(logits[i], crypto.hmac_label(self.label_key, m, out.shape[1]))
        return out

    def predict(self, X, signatures=None) -> np.ndarray:
        return np.argmax(self.decision_function(X, signatures), axis=1)


def watermark_infer(model: WatermarkedClassifier, img, signature: bytes | None = None):
    return model.decision_function([img], None if signature is None else [signature])[0]


def audit(model: WatermarkedClassifier, tset: TriggerSet, signatures) -> float:
    """Trigger accuracy in percent when querying with the given signatures."""
    if len(tset) == 0:
        raise EmptyTriggerSet("nothing to audit")
    if signatures is None or len(signatures) != len(tset):
        got = 0 if signatures is None else len(signatures)
        raise SignatureCountMismatch(f"{got} signatures for {len(tset)} trigger samples")
    pred = model.predict(tset.images, list(signatures))
    return 100.0 * float(np.mean(pred == tset.labels))


def save_trigger_set(tset: TriggerSet, directory) -> tuple[Path, Path]:
    """Write trigger PNGs, ``manifest.json`` and the auditor's ``signatures.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = tset.manifest()
    for entry, sample in zip(manifest["samples"], tset.samples):
        save_image(sample.image, directory / entry["file"])
    manifest_path = directory / "manifest.json"
    sig_path = directory / "signatures.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    sig_path.write_text(json.dumps(tset.signature_file(), indent=2) + "\n")
    return manifest_path, sig_path


def load_trigger_set(manifest_path) -> TriggerSet:
    """Rebuild a trigger set (without signatures) from a manifest and its images."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("version") != MANIFEST_VERSION:
        raise ValueError(f"{manifest_path}: unsupported manifest version {manifest.get('version')}")
    if manifest.get("digest") != _digest(manifest):
        raise ValueError(f"{manifest_path}: manifest digest does not match its contents")
    samples = []
    for entry in manifest["samples"]:
        img = load_image(manifest_path.parent / entry["file"])
        m = serialize_image(img)
        if hashlib.sha256(m).hexdigest() != entry["sha256"]:
            raise ValueError(f"{entry['file']}: image digest does not match the manifest")
        samples.append(TriggerSample(img, m, int(entry["label"])))
    vk = KeyPair(manifest["scheme"], bytes.fromhex(manifest["vk"]))
    return TriggerSet(samples, int(manifest["num_classes"]), vk)


def load_signatures(path) -> list[bytes]:
    data = json.loads(Path(path).read_text())
    if data.get("version") != SIGNATURES_VERSION:
        raise ValueError(f"{path}: unsupported signature file version {data.get('version')}")
    return [bytes.fromhex(s) for s in data["signatures"]]
