"""Signature-gated classifier backdoors and the defences built on them."""

from .auth import AuthenticatedClassifier, authed_infer, encode_region, garbage_output
from .backdoor import (
    AttackMessage,
    BackdoorKey,
    BackdooredClassifier,
    backdoored_infer,
    craft_backdoor_image,
    modify_adv,
)
from .classifier import (
    HashStubClassifier,
    ToyLinearClassifier,
    gen_blob_dataset,
    stub_predict,
    stub_predict_masked,
)
from .crypto import KeyPair, hmac_label, keygen, load_key, save_key, sign, verify
from .imaging import BoundingBox, load_image, save_image, validate_box
from .stego import EmbedLayout, capacity_bits, embed_bits, embed_payload, extract_bits, extract_payload
from .tracking import (
    TrackedClassifier,
    UserRegistry,
    attribute_leak,
    evaluate_matrix,
    provision_user,
    tracked_infer,
)
from .watermark import WatermarkedClassifier, audit, generate_trigger_set, watermark_infer

__version__ = "0.1.0"
