"""Wall-clock cost of payload decoding and verification next to classifier inference.

Numbers depend on the stand-in classifier. With the hash stub the overhead
ratio says nothing about a real network; the report names the classifier on
every row so it is not read as a ResNet figure.
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import crypto
from .backdoor import BackdoorKey, BackdooredClassifier, craft_backdoor_image
from .classifier import HashStubClassifier, ToyLinearClassifier
from .exceptions import CapacityExceeded, UnsupportedConfig
from .imaging import BoundingBox, random_image
from .stego import (
    CIFAR_MSG_BOX,
    CIFAR_SIG_BOX,
    IMAGENET_SIG_BOX,
    EmbedLayout,
    bits_to_bytes,
    extract_bits,
    extract_payload,
)

WARMUP = 3
MIN_ITERATIONS = 10


@dataclass
class Timing:
    median: float
    mean: float
    stdev: float

    @classmethod
    def of(cls, samples: list[float]) -> "Timing":
        return cls(
            statistics.median(samples),
            statistics.fmean(samples),
            statistics.stdev(samples) if len(samples) > 1 else 0.0,
        )


@dataclass
class BenchRow:
    scheme: str
    classifier: str
    height: int
    width: int
    payload_bits: int
    iterations: int
    extract: Timing
    verify: Timing
    classify: Timing
    composed: Timing

    @property
    def overhead_ratio(self) -> float:
        return (self.extract.median + self.verify.median) / self.classify.median


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "unit": "seconds",
            "warmup": WARMUP,
            "rows": [{**asdict(r), "overhead_ratio": r.overhead_ratio} for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self) -> str:
        head = (
            f"{'classifier':<10} {'scheme':<10} {'size':>9} {'bits':>6} "
            f"{'extract_ms':>10} {'verify_ms':>9} {'classify_ms':>11} {'composed_ms':>11} {'ratio':>7}"
        )
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r.classifier:<10} {r.scheme:<10} {f'{r.height}x{r.width}':>9} {r.payload_bits:>6} "
                f"{1e3 * r.extract.median:>10.4f} {1e3 * r.verify.median:>9.4f} "
                f"{1e3 * r.classify.median:>11.4f} {1e3 * r.composed.median:>11.4f} {r.overhead_ratio:>7.2f}"
            )
        return "\n".join(lines)


def default_layout(scheme: str, height: int, width: int) -> EmbedLayout:
    """Signature box (7,7,25,25) for small images, (7,7,100,100) from 100x100 up."""
    sig_box = IMAGENET_SIG_BOX if min(height, width) >= 100 else CIFAR_SIG_BOX
    return EmbedLayout(CIFAR_MSG_BOX, sig_box, scheme)


def _classifier(name: str, n_classes: int, height: int, width: int, layout: EmbedLayout):
    if name == "stub":
        return HashStubClassifier(n_classes, ignore_boxes=(layout.msg_box, layout.sig_box)).fit()
    if name == "toy":
        rng = np.random.default_rng(0)
        X = rng.integers(0, 256, size=(n_classes, height, width, 3), dtype=np.uint8)
        return ToyLinearClassifier(epochs=0, n_classes=n_classes).fit(X, np.arange(n_classes))
    raise UnsupportedConfig(f"unknown classifier {name!r}; choose stub or toy")


def _time(fn, iterations: int, inner: int = 1) -> list[float]:
    """Per-call seconds for ``iterations`` samples of ``inner`` back-to-back calls."""
    for _ in range(WARMUP):
        fn()
    out = []
    for _ in range(iterations):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        out.append((time.perf_counter() - t0) / inner)
    return out


def run_bench(
    scheme: str = "ed25519",
    image_size=(32, 32),
    classifier: str = "stub",
    iterations: int = 30,
    n_classes: int = 10,
    seed: int = 0,
) -> BenchRow:
    """Time one configuration on an activated (validly crafted) image."""
    if iterations < MIN_ITERATIONS:
        raise UnsupportedConfig(f"need at least {MIN_ITERATIONS} iterations, got {iterations}")
    height, width = (image_size, image_size) if isinstance(image_size, int) else image_size
    if scheme not in crypto.PRODUCTION_SCHEMES:
        raise UnsupportedConfig(f"scheme {scheme!r} is not benchmarked")
    rng = np.random.default_rng(seed)
    img = random_image(rng, height, width)
    try:
        layout = default_layout(scheme, height, width)
        layout.check_fits(img)
    except (CapacityExceeded, ValueError) as exc:
        raise UnsupportedConfig(f"{scheme} at {height}x{width}: {exc}") from exc

    key = crypto.keygen(scheme, seed=seed)
    crafted = craft_backdoor_image(img, b"bench", 1, BackdoorKey(key, layout))
    clf = _classifier(classifier, n_classes, height, width, layout)
    model = BackdooredClassifier(clf, key.public(), layout)
    msg, sig = extract_payload(crafted, layout)
    batch = [crafted]

    return BenchRow(
        scheme=scheme,
        classifier=classifier,
        height=height,
        width=width,
        payload_bits=8 * (layout.msg_len + layout.sig_len),
        iterations=iterations,
        extract=Timing.of(_time(lambda: extract_payload(crafted, layout), iterations, inner=20)),
        verify=Timing.of(_time(lambda: crypto.verify(sig, msg, model.vk), iterations)),
        classify=Timing.of(_time(lambda: clf.decision_function(batch), iterations)),
        composed=Timing.of(_time(lambda: model.decision_function(batch), iterations)),
    )


def extraction_times(
    image_size=(224, 224),
    payload_bits=(0, 512, 4096, 19360),
    iterations: int = 30,
    inner: int = 20,
    box: BoundingBox = IMAGENET_SIG_BOX,
    seed: int = 0,
) -> dict[int, float]:
    """Median seconds per extraction of ``n`` bits from one fixed box, for each ``n``.

    Each timed sample runs ``inner`` extractions back to back to lift the
    measurement above timer resolution. Payload sizes are interleaved within
    every iteration so clock drift and frequency scaling hit all sizes alike.
    """
    height, width = (image_size, image_size) if isinstance(image_size, int) else image_size
    img = random_image(np.random.default_rng(seed), height, width)
    sizes = [-(-n // 8) * 8 for n in payload_bits]

    def timed(n_bits: int) -> float:
        t0 = time.perf_counter()
        for _ in range(inner):
            bits_to_bytes(extract_bits(img, box, n_bits))
        return time.perf_counter() - t0

    for _ in range(WARMUP):
        for n_bits in sizes:
            timed(n_bits)
    samples = {n: [] for n in payload_bits}
    for _ in range(iterations):
        for n, n_bits in zip(payload_bits, sizes):
            samples[n].append(timed(n_bits))
    return {n: statistics.median(v) / inner for n, v in samples.items()}


def scheme_extraction_times(
    schemes=("ed25519", "dilithium2"),
    image_size=(224, 224),
    iterations: int = 30,
    inner: int = 50,
    seed: int = 0,
) -> dict[str, float]:
    """Median seconds to extract each scheme's full (message, signature) payload.

    Schemes are interleaved within every iteration, as in :func:`extraction_times`.
    """
    height, width = (image_size, image_size) if isinstance(image_size, int) else image_size
    img = random_image(np.random.default_rng(seed), height, width)
    layouts = {}
    for scheme in schemes:
        layout = default_layout(scheme, height, width)
        try:
            layout.check_fits(img)
        except CapacityExceeded as exc:
            raise UnsupportedConfig(f"{scheme} at {height}x{width}: {exc}") from exc
        layouts[scheme] = layout

    def timed(layout) -> float:
        t0 = time.perf_counter()
        for _ in range(inner):
            extract_payload(img, layout)
        return time.perf_counter() - t0

    for _ in range(WARMUP):
        for layout in layouts.values():
            timed(layout)
    samples = {scheme: [] for scheme in layouts}
    for _ in range(iterations):
        for scheme, layout in layouts.items():
            samples[scheme].append(timed(layout))
    return {scheme: statistics.median(v) / inner for scheme, v in samples.items()}


def run_suite(configs, iterations: int = 30, seed: int = 0) -> BenchReport:
    """Run ``(scheme, (h, w), classifier)`` configurations; unsupported ones are skipped."""
    report = BenchReport()
    for scheme, size, clf in configs:
        try:
            report.rows.append(run_bench(scheme, size, clf, iterations, seed=seed))
        except UnsupportedConfig:
            continue
    return report
