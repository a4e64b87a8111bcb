"""Least-significant-bit codec for fixed-length payloads inside bounding boxes.

One payload bit per channel value. Bits are consumed row-major inside the box
with R, G, B innermost, and bytes convert to bits MSB-first. Payload lengths
are never stored in-band; both sides derive them from the layout and scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_image
from .crypto import get_scheme
from .exceptions import CapacityExceeded
from .imaging import BoundingBox, validate_box

MESSAGE_LENGTH = 13  # 12-byte text + 1 label byte

CIFAR_MSG_BOX = BoundingBox(0, 0, 6, 6)
CIFAR_SIG_BOX = BoundingBox(7, 7, 25, 25)
IMAGENET_SIG_BOX = BoundingBox(7, 7, 100, 100)


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))


def bits_to_bytes(bits) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 8:
        raise ValueError(f"bit count {bits.size} is not a whole number of bytes")
    return np.packbits(bits).tobytes()


def capacity_bits(img, box: BoundingBox) -> int:
    validate_box(img, box)
    return box.pixel_count * 3


def embed_bits(img, box: BoundingBox, payload) -> np.ndarray:
    """Return a copy of ``img`` with ``payload`` written into the LSBs of ``box``."""
    img = check_image(img)
    payload = np.asarray(payload, dtype=np.uint8).ravel()
    cap = capacity_bits(img, box)
    if payload.size > cap:
        raise CapacityExceeded(f"payload of {payload.size} bits exceeds box capacity {cap}")
    if payload.size and payload.max() > 1:
        raise ValueError("payload must contain only 0/1 values")
    out = img.copy()
    if payload.size == 0:
        return out
    # touch only the rows the payload reaches
    rows = -(-payload.size // (3 * box.width))
    region = out[box.y_min : box.y_min + rows, box.x_min : box.x_max]
    flat = region.reshape(-1)  # strided view, so this is a copy
    flat[: payload.size] = (flat[: payload.size] & 0xFE) | payload
    region[...] = flat.reshape(region.shape)
    return out


def extract_bits(img, box: BoundingBox, n: int) -> np.ndarray:
    img = check_image(img)
    cap = capacity_bits(img, box)
    if n > cap:
        raise CapacityExceeded(f"requested {n} bits from a box holding {cap}")
    rows = -(-n // (3 * box.width))
    return img[box.y_min : box.y_min + rows, box.x_min : box.x_max].reshape(-1)[:n] & 1


@dataclass(frozen=True)
class EmbedLayout:
    """Where the message and the signature live inside a carrier image."""

    msg_box: BoundingBox
    sig_box: BoundingBox
    scheme: str = "ed25519"
    msg_len: int = MESSAGE_LENGTH

    def __post_init__(self):
        if self.msg_box.overlaps(self.sig_box):
            raise ValueError(f"message box {self.msg_box} overlaps signature box {self.sig_box}")
        get_scheme(self.scheme)

    @property
    def sig_len(self) -> int:
        return get_scheme(self.scheme).sig_len

    def check_fits(self, img) -> None:
        """Raise CapacityExceeded (or BoxOutOfBounds) if ``img`` cannot carry the layout."""
        need_msg, need_sig = 8 * self.msg_len, 8 * self.sig_len
        have_msg = capacity_bits(img, self.msg_box)
        have_sig = capacity_bits(img, self.sig_box)
        if need_msg > have_msg:
            raise CapacityExceeded(f"message needs {need_msg} bits, box holds {have_msg}")
        if need_sig > have_sig:
            raise CapacityExceeded(
                f"{self.scheme} signature needs {need_sig} bits, box holds {have_sig}"
            )

    def to_dict(self) -> dict:
        return {
            "msg_box": list(self.msg_box.as_tuple()),
            "sig_box": list(self.sig_box.as_tuple()),
            "scheme": self.scheme,
            "msg_len": self.msg_len,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmbedLayout":
        return cls(
            msg_box=BoundingBox(*d["msg_box"]),
            sig_box=BoundingBox(*d["sig_box"]),
            scheme=d.get("scheme", "ed25519"),
            msg_len=int(d.get("msg_len", MESSAGE_LENGTH)),
        )

    def shifted(self, dx: int = 0, dy: int = 0) -> "EmbedLayout":
        return EmbedLayout(
            self.msg_box.shifted(dx, dy), self.sig_box.shifted(dx, dy), self.scheme, self.msg_len
        )


CIFAR_LAYOUT = EmbedLayout(CIFAR_MSG_BOX, CIFAR_SIG_BOX, "ed25519")
IMAGENET_LAYOUT = EmbedLayout(CIFAR_MSG_BOX, IMAGENET_SIG_BOX, "dilithium2")
PRESET_LAYOUTS = {"cifar": CIFAR_LAYOUT, "imagenet": IMAGENET_LAYOUT}


def embed_payload(img, layout: EmbedLayout, msg: bytes, sig: bytes) -> np.ndarray:
    if len(sig) != layout.sig_len:
        raise ValueError(f"{layout.scheme} signatures are {layout.sig_len} bytes, got {len(sig)}")
    if len(msg) != layout.msg_len:
        raise ValueError(f"layout message length is {layout.msg_len} bytes, got {len(msg)}")
    layout.check_fits(img)
    out = embed_bits(img, layout.msg_box, bytes_to_bits(msg))
    return embed_bits(out, layout.sig_box, bytes_to_bits(sig))


def extract_payload(img, layout: EmbedLayout) -> tuple[bytes, bytes]:
    """Read back ``(message, signature)``; on a clean image these are arbitrary bytes."""
    msg = bits_to_bytes(extract_bits(img, layout.msg_box, 8 * layout.msg_len))
    sig = bits_to_bytes(extract_bits(img, layout.sig_box, 8 * layout.sig_len))
    return msg, sig
