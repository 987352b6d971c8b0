#!/usr/bin/env python3
"""Produce reference CLS vectors for the ViT parity check.

    python3 tools/make_reference_cls.py dino_deitsmall16_pretrain.pth \
        tests/fixtures/vits16_reference_cls.csv

The default backend is the publisher's own model code (fetched through
torch.hub from facebookresearch/dino) loaded with the given checkpoint.
`--backend functional` uses tools/reference_vit.py instead, for machines
without hub access. Either way the images go through the same half-pixel
bilinear resize and ImageNet normalization as the C++ pipeline, so the
comparison isolates the network.

Image paths in the CSV are relative to the CSV's directory.
"""

import argparse
import os
import sys

import numpy as np
import torch
from PIL import Image

import reference_vit
from convert_dino_checkpoint import HEADS, backbone_state

DEFAULT_IMAGES = [
    "vit_tiny/images/img0.png",
    "vit_tiny/images/img1.png",
    "vit_tiny/images/img2.png",
    "vit_tiny/images/img3.png",
    "vit_tiny/images/img4.png",
    "images/apple_120.jpg",
    "images/banana_600x400.jpg",
]

HUB_ENTRY = {"vit-s16": "dino_vits16", "vit-s8": "dino_vits8", "vit-b16": "dino_vitb16", "vit-b8": "dino_vitb8"}


def publisher_model(state, variant):
    model = torch.hub.load("facebookresearch/dino:main", HUB_ENTRY[variant], pretrained=False)
    missing, unexpected = model.load_state_dict(state, strict=False)
    if missing:
        sys.exit("checkpoint lacks: " + ", ".join(missing))
    model.eval()
    # DINO's VisionTransformer.forward returns the normed CLS token.
    return lambda x: model(x.to(torch.float32)).to(torch.float64)


def functional_model(state, variant):
    weights = {k: v.detach().to(torch.float64).numpy() for k, v in state.items() if torch.is_tensor(v)}
    return lambda x: reference_vit.forward_cls(weights, x, HEADS[variant])


def main(argv):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("checkpoint", help="published DINO checkpoint (.pth)")
    ap.add_argument("output", help="CSV to write")
    ap.add_argument("--variant", choices=sorted(HEADS), default="vit-s16")
    ap.add_argument("--key", default="teacher", help="entry to use when the file is a training checkpoint")
    ap.add_argument("--backend", choices=["publisher", "functional"], default="publisher")
    ap.add_argument("--images", nargs="*", default=DEFAULT_IMAGES, help="paths relative to the output directory")
    args = ap.parse_args(argv)

    obj = torch.load(args.checkpoint, map_location="cpu", weights_only=False)
    state = backbone_state(obj, args.key)
    forward = (publisher_model if args.backend == "publisher" else functional_model)(state, args.variant)

    root = os.path.dirname(os.path.abspath(args.output))
    rows = []
    with torch.no_grad():
        for rel in args.images:
            rgb = np.array(Image.open(os.path.join(root, rel)).convert("RGB"))
            cls = forward(reference_vit.preprocess(rgb))[0].numpy()
            rows.append((rel, cls))
    with open(args.output, "w", newline="\n") as f:
        f.write("image," + ",".join(f"e{i}" for i in range(len(rows[0][1]))) + "\n")
        for rel, cls in rows:
            f.write(rel + "," + ",".join(repr(float(v)) for v in cls) + "\n")
    print(f"wrote {len(rows)} reference vectors to {args.output}")


if __name__ == "__main__":
    main(sys.argv[1:])
