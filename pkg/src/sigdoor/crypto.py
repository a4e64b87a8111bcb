"""Signature schemes behind one interface, HMAC label derivation, key files.

Supported schemes:

``ed25519``
    Classical deterministic signatures via ``cryptography`` (64-byte signatures).
``dilithium2``
    Post-quantum CRYSTALS-Dilithium round-3 parameter set via ``dilithium-py``
    (2420-byte signatures).
``test-deterministic``
    HMAC-SHA-512 tag with a shared secret, so ``vk == sk``. It exists only for
    fast property tests and is refused by the CLI.

Key files are two lines of text: the scheme name, then the hex-encoded raw
key. The signing key goes to ``<stem>.sk`` and the verification key to
``<stem>.vk``.
"""

from __future__ import annotations

import hashlib
import hmac
import os
from dataclasses import dataclass
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from ._validation import check_num_classes
from .exceptions import MalformedKey, SchemeMismatch, UnsupportedScheme

_RAW = serialization.Encoding.Raw


@dataclass(frozen=True)
class SchemeId:
    name: str
    sig_len: int
    vk_len: int
    sk_len: int


SCHEMES = {
    "ed25519": SchemeId("ed25519", sig_len=64, vk_len=32, sk_len=32),
    "dilithium2": SchemeId("dilithium2", sig_len=2420, vk_len=1312, sk_len=2528),
    "test-deterministic": SchemeId("test-deterministic", sig_len=64, vk_len=32, sk_len=32),
}
PRODUCTION_SCHEMES = ("ed25519", "dilithium2")


def get_scheme(name: str) -> SchemeId:
    try:
        return SCHEMES[name]
    except KeyError:
        raise UnsupportedScheme(f"unknown signature scheme {name!r}") from None


@dataclass(frozen=True, repr=False)
class KeyPair:
    """A verification key plus, optionally, the matching signing key."""

    scheme: str
    vk: bytes
    sk: bytes | None = None

    def __post_init__(self):
        s = get_scheme(self.scheme)
        if len(self.vk) != s.vk_len:
            raise MalformedKey(f"{s.name} verification keys are {s.vk_len} bytes, got {len(self.vk)}")
        if self.sk is not None and len(self.sk) != s.sk_len:
            raise MalformedKey(f"{s.name} signing keys are {s.sk_len} bytes, got {len(self.sk)}")

    def __repr__(self):
        secret = "present" if self.sk is not None else "absent"
        return f"KeyPair(scheme={self.scheme!r}, vk={self.vk.hex()[:16]}..., sk={secret})"

    @property
    def has_secret(self) -> bool:
        return self.sk is not None

    def public(self) -> "KeyPair":
        return KeyPair(self.scheme, self.vk)


def _seed_bytes(seed, n: int, domain: bytes) -> bytes:
    if isinstance(seed, int):
        seed = seed.to_bytes(16, "big", signed=True)
    elif isinstance(seed, str):
        seed = seed.encode()
    return hashlib.shake_256(domain + b"\x00" + bytes(seed)).digest(n)


def _dilithium(random_bytes=None):
    from dilithium_py.dilithium.default_parameters import DEFAULT_PARAMETERS
    from dilithium_py.dilithium.dilithium import Dilithium

    d = Dilithium(DEFAULT_PARAMETERS["dilithium2"])
    if random_bytes is not None:
        d.random_bytes = random_bytes
    return d


_DILITHIUM = None


def _dilithium_shared():
    global _DILITHIUM
    if _DILITHIUM is None:
        _DILITHIUM = _dilithium()
    return _DILITHIUM


def keygen(scheme: str = "ed25519", seed=None) -> KeyPair:
    """Generate a key pair. With ``seed`` (bytes, str or int) the result is reproducible."""
    s = get_scheme(scheme)
    if s.name == "ed25519":
        if seed is None:
            priv = Ed25519PrivateKey.generate()
        else:
            priv = Ed25519PrivateKey.from_private_bytes(_seed_bytes(seed, 32, b"ed25519"))
        sk = priv.private_bytes(_RAW, serialization.PrivateFormat.Raw, serialization.NoEncryption())
        return KeyPair(s.name, priv.public_key().public_bytes(_RAW, serialization.PublicFormat.Raw), sk)
    if s.name == "dilithium2":
        if seed is None:
            vk, sk = _dilithium_shared().keygen()
        else:
            stream = _seed_bytes(seed, 32, b"dilithium2")
            vk, sk = _dilithium(lambda n: stream[:n]).keygen()
        return KeyPair(s.name, vk, sk)
    secret = os.urandom(32) if seed is None else _seed_bytes(seed, 32, b"test-deterministic")
    return KeyPair(s.name, secret, secret)


def sign(msg: bytes, key: KeyPair) -> bytes:
    if not isinstance(key, KeyPair) or key.sk is None:
        raise MalformedKey("signing requires a key pair that holds its secret key")
    msg = bytes(msg)
    if key.scheme == "ed25519":
        return Ed25519PrivateKey.from_private_bytes(key.sk).sign(msg)
    if key.scheme == "dilithium2":
        try:
            return _dilithium_shared().sign(key.sk, msg)
        except (ValueError, IndexError) as exc:
            raise MalformedKey(f"unusable dilithium2 signing key: {exc}") from exc
    return hmac.new(key.sk, msg, hashlib.sha512).digest()


def verify(sig: bytes, msg: bytes, key: KeyPair) -> bool:
    """True iff ``sig`` is a valid signature of ``msg`` under ``key``.

    Total by design: wrong lengths, garbage bytes and malformed keys all give
    False rather than raising, because clean images feed arbitrary bytes here.
    """
    try:
        s = get_scheme(key.scheme)
        sig, msg = bytes(sig), bytes(msg)
        if len(sig) != s.sig_len:
            return False
        if s.name == "ed25519":
            Ed25519PublicKey.from_public_bytes(key.vk).verify(sig, msg)
            return True
        if s.name == "dilithium2":
            return bool(_dilithium_shared().verify(key.vk, msg, sig))
        return hmac.compare_digest(hmac.new(key.vk, msg, hashlib.sha512).digest(), sig)
    except InvalidSignature:
        return False
    except Exception:  # malformed keys or signature encodings
        return False


def hmac_digest(secret: bytes, msg: bytes) -> bytes:
    return hmac.new(bytes(secret), bytes(msg), hashlib.sha256).digest()


def hmac_label(secret: bytes, msg: bytes, num_classes: int) -> int:
    """Big-endian HMAC-SHA-256 of ``msg`` reduced modulo ``num_classes``."""
    n = check_num_classes(num_classes)
    return int.from_bytes(hmac_digest(secret, msg), "big") % n


def label_secret(key: KeyPair | bytes) -> bytes:
    """The HMAC key used for label derivation: the raw signing key bytes."""
    if isinstance(key, KeyPair):
        if key.sk is None:
            raise MalformedKey("label derivation needs the secret key")
        return key.sk
    return bytes(key)


def _write_keyfile(path: Path, scheme: str, raw: bytes) -> None:
    path.write_text(f"{scheme}\n{raw.hex()}\n")


def _read_keyfile(path: Path) -> tuple[str, bytes]:
    lines = path.read_text().splitlines()
    if len(lines) < 2:
        raise MalformedKey(f"{path}: expected scheme line and hex key line")
    name = lines[0].strip()
    if name not in SCHEMES:
        raise SchemeMismatch(f"{path}: unknown scheme tag {name!r}")
    try:
        raw = bytes.fromhex(lines[1].strip())
    except ValueError as exc:
        raise MalformedKey(f"{path}: key is not valid hex") from exc
    return name, raw


def _stem(path) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".sk", ".vk") else p


def save_key(key: KeyPair, path, include_secret: bool = False) -> list[Path]:
    """Write ``<stem>.vk`` and, only when asked, ``<stem>.sk``. Returns the paths written."""
    stem = _stem(path)
    written = [stem.with_suffix(".vk")]
    _write_keyfile(written[0], key.scheme, key.vk)
    if include_secret:
        if key.sk is None:
            raise MalformedKey("no secret key to save")
        written.append(stem.with_suffix(".sk"))
        _write_keyfile(written[1], key.scheme, key.sk)
    return written


def load_key(path, scheme: str | None = None) -> KeyPair:
    """Load ``<stem>.vk`` plus ``<stem>.sk`` when present.

    Scheme tags that are unknown, disagree between the two files, disagree
    with ``scheme``, or do not fit the key length raise SchemeMismatch.
    """
    stem = _stem(path)
    vk_path, sk_path = stem.with_suffix(".vk"), stem.with_suffix(".sk")
    if not vk_path.exists():
        raise FileNotFoundError(vk_path)
    name, vk = _read_keyfile(vk_path)
    sk = None
    if sk_path.exists():
        sk_name, sk = _read_keyfile(sk_path)
        if sk_name != name:
            raise SchemeMismatch(f"{sk_path} is tagged {sk_name!r} but {vk_path} is {name!r}")
    if scheme is not None and scheme != name:
        raise SchemeMismatch(f"expected a {scheme} key, {vk_path} holds {name}")
    try:
        return KeyPair(name, vk, sk)
    except MalformedKey as exc:
        raise SchemeMismatch(f"{stem}: key length does not match scheme {name}: {exc}") from exc
