"""Command line entry point: ``sigdoor <command> ...``.

Protocol outcomes such as an invalid signature, a wrong key or an
unattributable leak are normal results and exit 0. Bad arguments, missing
files and malformed inputs exit 2 with a message on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, crypto
from .auth import AuthenticatedClassifier
from .backdoor import BackdoorKey, BackdooredClassifier, craft_backdoor_image
from .bench import BenchReport, run_bench
from .classifier import HashStubClassifier, ToyLinearClassifier, gen_blob_dataset, load_toy, save_toy
from .exceptions import AmbiguousAttribution, SigdoorError
from .imaging import BoundingBox, load_image, random_image, save_image
from .stego import PRESET_LAYOUTS, EmbedLayout
from .tracking import (
    UserRegistry,
    attribute_leak,
    evaluate_matrix,
    provision_user,
    save_registry,
)
from .watermark import (
    WatermarkedClassifier,
    audit,
    generate_trigger_set,
    load_signatures,
    load_trigger_set,
    save_trigger_set,
)

log = logging.getLogger("sigdoor")

MANIFEST_VERSION = "sigdoor-manifest/1"
HOME_ENV = "SIGDOOR_HOME"


class UsageError(Exception):
    pass


def home_dir() -> Path:
    return Path(os.environ.get(HOME_ENV, Path.home() / ".sigdoor"))


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    return text


def parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 32x32, got {text!r}") from None


def parse_box(text: str) -> BoundingBox:
    try:
        return BoundingBox.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def resolve_layout(name: str) -> EmbedLayout:
    if name in PRESET_LAYOUTS:
        return PRESET_LAYOUTS[name]
    path = Path(name)
    if not path.is_file():
        raise UsageError(f"layout {name!r} is neither a preset ({', '.join(PRESET_LAYOUTS)}) nor a file")
    data = json.loads(path.read_text())
    return EmbedLayout.from_dict(data.get("layout", data))


def build_classifier(name: str, n_classes: int, ignore=()):
    """``stub`` for the hash stub (blind to LSBs in ``ignore``), else a toy weight file."""
    if name == "stub":
        return HashStubClassifier(n_classes, ignore_boxes=tuple(ignore)).fit()
    path = Path(name)
    if not path.is_file():
        raise UsageError(f"model {name!r} is neither 'stub' nor a weight file")
    return load_toy(path)


def load_production_key(path, need_secret=False) -> crypto.KeyPair:
    key = crypto.load_key(path)
    if key.scheme not in crypto.PRODUCTION_SCHEMES:
        raise UsageError(f"scheme {key.scheme!r} is for tests only")
    if need_secret and not key.has_secret:
        raise UsageError(f"{path}: no .sk file next to the verification key")
    return key


def sorted_images(directory) -> list[Path]:
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".png", ".ppm"))
    if not files:
        raise UsageError(f"no .png/.ppm images in {directory}")
    return files


def row_report(name, logits) -> dict:
    return {"image": str(name), "argmax": int(np.argmax(logits)), "logits": [float(v) for v in logits]}


# commands -------------------------------------------------------------------


def cmd_keygen(args):
    out = args.out or home_dir() / "keys" / args.scheme
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    key = crypto.keygen(args.scheme)
    for p in crypto.save_key(key, out, include_secret=True):
        print(p)


def cmd_craft(args):
    layout = resolve_layout(args.layout)
    key = load_production_key(args.key, need_secret=True)
    img = load_image(args.input)
    crafted = craft_backdoor_image(img, args.text.encode(), args.label, BackdoorKey(key, layout), args.classes)
    save_image(crafted, args.out)
    print(args.out)


def cmd_infer(args):
    layout = resolve_layout(args.layout)
    vk = load_production_key(args.key).public()
    clf = build_classifier(args.model, args.classes, ignore=(layout.msg_box, layout.sig_box))
    model = BackdooredClassifier(clf, vk, layout)
    images = [load_image(p) for p in args.inputs]
    logits, fired = model.decision_function_with_triggers(images)
    rows = [{**row_report(p, z), "backdoor_fired": bool(f)} for p, z, f in zip(args.inputs, logits, fired)]
    sys.stdout.write(dump_json(rows, args.report))


def cmd_wm_gen(args):
    key = load_production_key(args.key, need_secret=True)
    images = [load_image(p) for p in sorted_images(args.images)]
    tset = generate_trigger_set(images, key, args.classes)
    manifest, sigs = save_trigger_set(tset, args.out)
    print(manifest)
    print(sigs)


def cmd_wm_audit(args):
    owner = load_production_key(args.owner_key, need_secret=True)
    tset = load_trigger_set(args.manifest)
    if tset.vk.vk != owner.vk:
        raise UsageError("the owner key does not match the manifest's verification key")
    sigs = load_signatures(args.sigs) if args.sigs else [None] * len(tset)
    clf = build_classifier(args.model, tset.num_classes)
    model = WatermarkedClassifier(clf, owner.public(), crypto.label_secret(owner))
    acc = audit(model, tset, sigs)
    if args.report:
        dump_json({"trigger_accuracy": acc, "n_triggers": len(tset)}, args.report)
    print(f"{acc:.2f}")


def cmd_auth_infer(args):
    vk = load_production_key(args.vk).public()
    server = load_production_key(args.server_key, need_secret=True)
    claimed = None
    if args.key:
        try:
            claimed = crypto.load_key(args.key)
        except (SigdoorError, FileNotFoundError) as exc:
            log.warning("claimed key unusable (%s); answering as unauthenticated", exc)
    clf = build_classifier(args.model, args.classes)
    model = AuthenticatedClassifier(clf, vk, server.sk, args.region)
    images = [load_image(p) for p in args.batch]
    logits = model.decision_function(images, claimed)
    sys.stdout.write(dump_json([row_report(p, z) for p, z in zip(args.batch, logits)], args.report))


def _load_registry(path, model_arg=None) -> tuple[UserRegistry, dict]:
    path = Path(path)
    data = json.loads(path.read_text())
    if data.get("version") != "sigdoor-registry/1":
        raise UsageError(f"{path}: not a registry file")
    images = [load_image(path.parent / f) for f in data["triggers"]]
    n_classes = int(data["num_classes"])
    clf = build_classifier(model_arg or data.get("model", "stub"), n_classes)
    reg = UserRegistry(images, n_classes, clf, data["scheme"], BoundingBox(*data["region"]))
    for entry in data["users"]:
        key = crypto.load_key(path.parent / "keys" / entry["id"])
        if key.vk.hex() != entry["vk"]:
            raise UsageError(f"key file for user {entry['id']} does not match the registry")
        reg.users[entry["id"]] = key
    return reg, data


def cmd_track_provision(args):
    out = Path(args.out)
    (out / "triggers").mkdir(parents=True, exist_ok=True)
    if args.triggers:
        images = [load_image(p) for p in sorted_images(args.triggers)]
    else:
        h, w = args.size
        rng = np.random.default_rng([args.seed, 7])
        images = [random_image(rng, h, w) for _ in range(args.n_triggers)]
    names = []
    for i, img in enumerate(images):
        name = f"triggers/trigger_{i:04d}.png"
        save_image(img, out / name)
        names.append(name)
    clf = build_classifier(args.model, args.classes)
    reg = UserRegistry(images, args.classes, clf, args.scheme, args.region)
    for i in range(args.users):
        provision_user(reg, f"user{i:03d}", seed=f"{args.seed}:{i}")
    path = save_registry(reg, out, seed=args.seed)
    data = json.loads(path.read_text())
    data.update(triggers=names, model=args.model)
    dump_json(data, path)
    print(path)


def cmd_track_matrix(args):
    reg, _ = _load_registry(args.registry, args.model)
    matrix = evaluate_matrix(reg)
    if args.report:
        dump_json(matrix.to_dict(), args.report)
    print(matrix.table())


def cmd_track_attribute(args):
    reg, _ = _load_registry(args.registry, args.model)
    if args.copy not in reg.users:
        raise UsageError(f"unknown user copy {args.copy!r}")
    leaked = reg.model_copy(args.copy)
    key = None
    if args.key:
        key = crypto.load_key(args.key)
    try:
        user = attribute_leak(reg, leaked, key, args.threshold, args.gap)
    except AmbiguousAttribution as exc:
        print(f"ambiguous: {exc}")
        return
    print(user)


def cmd_bench(args):
    row = run_bench(args.scheme, args.size, args.model, args.iters, seed=args.seed)
    report = BenchReport([row])
    if args.report:
        dump_json(report.to_dict(), args.report)
    print(f"classifier={row.classifier} (stand-in; ratios are not ResNet figures)")
    print(report.table())


def cmd_dataset_gen(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    h, w = args.size
    if args.kind == "blobs":
        X, y = gen_blob_dataset(args.classes, args.per_class, (h, w), args.seed, args.split)
    else:
        rng = np.random.default_rng([args.seed, 3])
        X = np.stack([random_image(rng, h, w) for _ in range(args.count)])
        y = np.full(len(X), -1)
    files = []
    for i, img in enumerate(X):
        name = f"img_{i:05d}.png"
        save_image(img, out / name)
        files.append({"file": name, "label": int(y[i])})
    manifest = {
        "version": MANIFEST_VERSION,
        "kind": args.kind,
        "num_classes": args.classes,
        "size": [h, w],
        "seed": args.seed,
        "split": args.split,
        "samples": files,
    }
    dump_json(manifest, out / "manifest.json")
    print(out / "manifest.json")


def _load_dataset(directory):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    X = np.stack([load_image(directory / s["file"]) for s in manifest["samples"]])
    y = np.array([s["label"] for s in manifest["samples"]])
    if (y < 0).any():
        raise UsageError(f"{directory} holds unlabeled images")
    return X, y, manifest


def cmd_toy_train(args):
    X, y, manifest = _load_dataset(args.data)
    clf = ToyLinearClassifier(lr=args.lr, epochs=args.epochs, n_classes=manifest["num_classes"], random_state=args.seed)
    clf.fit(X, y)
    save_toy(clf, args.out)
    print(f"training accuracy {100 * clf.training_accuracy_:.2f}")


def cmd_toy_eval(args):
    X, y, _ = _load_dataset(args.data)
    print(f"{100 * load_toy(args.model).score(X, y):.2f}")


# parser ---------------------------------------------------------------------


def _model_args(p, classes_default=10):
    p.add_argument("--model", default="stub", help="'stub' or a toy weight file")
    p.add_argument("--classes", type=int, default=classes_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigdoor", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sigdoor {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate a key pair from OS entropy")
    p.add_argument("--scheme", choices=crypto.PRODUCTION_SCHEMES, default="ed25519")
    p.add_argument("--out", help=f"key stem (default ${HOME_ENV}/keys/<scheme>)")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("craft", help="stamp a signed message into an image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--text", default="")
    p.add_argument("--label", type=int, required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--key", required=True, help="attacker key stem (needs .sk)")
    p.add_argument("--layout", default="cifar", help="preset name or layout JSON file")
    p.set_defaults(func=cmd_craft)

    p = sub.add_parser("infer", help="run the backdoored composed model")
    _model_args(p)
    p.add_argument("--key", required=True, help="verification key stem")
    p.add_argument("--layout", default="cifar")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_infer)

    wm = sub.add_parser("wm", help="watermark trigger sets").add_subparsers(dest="wm_command", required=True)
    p = wm.add_parser("gen", help="label and sign a trigger set")
    p.add_argument("--images", required=True)
    p.add_argument("--key", required=True, help="owner key stem (needs .sk)")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_wm_gen)
    p = wm.add_parser("audit", help="query the watermarked deployment with auditor signatures")
    p.add_argument("--model", default="stub")
    p.add_argument("--manifest", required=True)
    p.add_argument("--sigs", help="auditor signature file; omit to query without signatures")
    p.add_argument("--owner-key", required=True, help="deployment key stem (label secret)")
    p.add_argument("--report")
    p.set_defaults(func=cmd_wm_audit)

    auth = sub.add_parser("auth", help="authenticated inference").add_subparsers(dest="auth_command", required=True)
    p = auth.add_parser("infer")
    _model_args(p)
    p.add_argument("--vk", required=True, help="legitimate user's verification key stem")
    p.add_argument("--server-key", required=True, help="server key stem whose secret drives garbage labels")
    p.add_argument("--key", help="claimed user key stem; omit for an unauthenticated query")
    p.add_argument("--region", type=parse_box, default=BoundingBox(0, 0, 5, 5))
    p.add_argument("--batch", nargs="+", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_auth_infer)

    track = sub.add_parser("track", help="leak tracking").add_subparsers(dest="track_command", required=True)
    p = track.add_parser("provision")
    _model_args(p)
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--triggers", help="directory of trigger images; default is seeded noise")
    p.add_argument("--n-triggers", type=int, default=100)
    p.add_argument("--size", type=parse_size, default=(32, 32))
    p.add_argument("--scheme", choices=crypto.PRODUCTION_SCHEMES, default="ed25519")
    p.add_argument("--region", type=parse_box, default=BoundingBox(0, 0, 5, 5))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_track_provision)
    p = track.add_parser("matrix")
    p.add_argument("--registry", required=True)
    p.add_argument("--model")
    p.add_argument("--report")
    p.set_defaults(func=cmd_track_matrix)
    p = track.add_parser("attribute")
    p.add_argument("--registry", required=True)
    p.add_argument("--model")
    p.add_argument("--copy", required=True, help="user id whose model copy leaked")
    p.add_argument("--key", help="key stem found with the leaked copy")
    p.add_argument("--threshold", type=float, default=90.0)
    p.add_argument("--gap", type=float, default=30.0)
    p.set_defaults(func=cmd_track_attribute)

    p = sub.add_parser("bench", help="time decoding against classifier inference")
    p.add_argument("--scheme", choices=crypto.PRODUCTION_SCHEMES, default="ed25519")
    p.add_argument("--size", type=parse_size, default=(32, 32))
    p.add_argument("--model", choices=("stub", "toy"), default="stub")
    p.add_argument("--iters", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report")
    p.set_defaults(func=cmd_bench)

    ds = sub.add_parser("dataset", help="synthetic datasets").add_subparsers(dest="ds_command", required=True)
    p = ds.add_parser("gen")
    p.add_argument("--kind", choices=("blobs", "noise"), default="blobs")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--count", type=int, default=100, help="image count for --kind noise")
    p.add_argument("--size", type=parse_size, default=(16, 16))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--split", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset_gen)

    toy = sub.add_parser("toy", help="train/evaluate the linear classifier").add_subparsers(dest="toy_command", required=True)
    p = toy.add_parser("train")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_toy_train)
    p = toy.add_parser("eval")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_toy_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, SigdoorError, FileNotFoundError, ValueError) as exc:
        print(f"sigdoor: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
