#!/usr/bin/env python3
"""Convert a published DINO ViT backbone checkpoint (.pth) into the
dinoprobe weight container.

    python3 tools/convert_dino_checkpoint.py dino_deitsmall16_pretrain.pth \
        weights/vit-s16.dpt --variant vit-s16

Accepts either a bare backbone state dict or a training checkpoint holding a
"teacher"/"student" entry (the "module."/"backbone." prefixes are stripped;
projection-head tensors are dropped). The fused QKV layout ([Q; K; V] along
the output dimension) is the publisher's and is copied unchanged.
"""

import argparse
import sys

import numpy as np
import torch

import tensor_container

HEADS = {"vit-s16": 6, "vit-s8": 6, "vit-b16": 12, "vit-b8": 12}


def backbone_state(obj, key):
    if isinstance(obj, dict) and key in obj and isinstance(obj[key], dict):
        obj = obj[key]
    state = {}
    for name, value in obj.items():
        for prefix in ("module.", "backbone."):
            if name.startswith(prefix):
                name = name[len(prefix):]
        if name.startswith("head."):
            continue
        state[name] = value
    return state


def main(argv):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("checkpoint")
    ap.add_argument("output")
    ap.add_argument("--variant", choices=sorted(HEADS), required=True)
    ap.add_argument("--key", default="teacher", help="entry to use when the file is a training checkpoint")
    args = ap.parse_args(argv)

    obj = torch.load(args.checkpoint, map_location="cpu", weights_only=False)
    state = backbone_state(obj, args.key)
    tensors = {k: v.detach().to(torch.float32).numpy() for k, v in state.items() if torch.is_tensor(v)}
    bad = [k for k, v in tensors.items() if not np.all(np.isfinite(v))]
    if bad:
        sys.exit("non-finite values in: " + ", ".join(bad))
    tensor_container.write(args.output, tensors, {"variant": args.variant, "num_heads": HEADS[args.variant]})
    print(f"wrote {len(tensors)} tensors to {args.output}")


if __name__ == "__main__":
    main(sys.argv[1:])
