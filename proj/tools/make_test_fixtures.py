#!/usr/bin/env python3
"""Regenerate the committed test fixtures under tests/fixtures/.

    python3 tools/make_test_fixtures.py tests/fixtures

Everything is seeded; rerunning produces the same files.
"""

import io
import os
import sys

import numpy as np
from PIL import Image

import reference_vit
import tensor_container


def save(img, path, **kw):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    img.save(path, **kw)


def smooth_pattern(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.zeros((h, w, 3))
    for c in range(3):
        fy, fx, ph = rng.uniform(0.5, 4.0), rng.uniform(0.5, 4.0), rng.uniform(0, 6.28)
        out[..., c] = 127.5 + 110 * np.sin(2 * np.pi * (fy * yy / h + fx * xx / w) + ph)
    out += rng.normal(0, 12, size=out.shape)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def fruit(rng, h, w, body, defect=False):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.full((h, w, 3), 235.0)
    r = 0.38 * min(h, w)
    mask = (yy - h / 2) ** 2 + (xx - w / 2) ** 2 < r * r
    img[mask] = body
    if defect:
        cy, cx = h / 2 + rng.uniform(-r / 3, r / 3), w / 2 + rng.uniform(-r / 3, r / 3)
        spot = (yy - cy) ** 2 + (xx - cx) ** 2 < (r / 4) ** 2
        img[spot] = (70, 50, 30)
    img += rng.normal(0, 6, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def codec_fixtures(root, rng):
    d = os.path.join(root, "images")
    save(Image.new("RGB", (1, 1), (255, 255, 255)), os.path.join(d, "white_1x1.png"))
    gray = np.array([[0, 64, 128], [192, 255, 32]], dtype=np.uint8)
    save(Image.fromarray(gray, mode="L"), os.path.join(d, "gray_3x2.png"))
    rgba = np.zeros((2, 2, 4), dtype=np.uint8)
    rgba[..., 0], rgba[..., 3] = 200, 255
    save(Image.fromarray(rgba, mode="RGBA"), os.path.join(d, "rgba_2x2.png"))
    apple = fruit(rng, 120, 120, (180, 30, 40), defect=True)
    save(Image.fromarray(apple), os.path.join(d, "apple_120.jpg"), quality=92)
    banana = fruit(rng, 400, 600, (220, 200, 40))
    save(Image.fromarray(banana), os.path.join(d, "banana_600x400.jpg"), quality=92)
    save(Image.fromarray(smooth_pattern(rng, 30, 40)[..., 0], mode="L"), os.path.join(d, "gray_40x30.jpg"),
         quality=95)
    buf = io.BytesIO()
    Image.fromarray(apple).save(buf, format="JPEG", quality=92)
    with open(os.path.join(d, "truncated.jpg"), "wb") as f:
        f.write(buf.getvalue()[: len(buf.getvalue()) // 2])
    with open(os.path.join(d, "not_an_image.png"), "wb") as f:
        f.write(b"this is not an image\n")


def tiny_vit(rng, d=64, heads=4, depth=2, patch=16, side=224, mlp=4):
    g = side // patch
    hidden = d * mlp

    def lin(o, i):
        return rng.normal(0, 1 / np.sqrt(i), size=(o, i)), rng.normal(0, 0.02, size=o)

    w = {}
    w["patch_embed.proj.weight"] = rng.normal(0, 1 / np.sqrt(3 * patch * patch), size=(d, 3, patch, patch))
    w["patch_embed.proj.bias"] = rng.normal(0, 0.02, size=d)
    w["cls_token"] = rng.normal(0, 0.5, size=(1, 1, d))
    w["pos_embed"] = rng.normal(0, 0.5, size=(1, g * g + 1, d))
    for i in range(depth):
        b = f"blocks.{i}."
        for nm in ("norm1", "norm2"):
            w[b + nm + ".weight"] = 1 + rng.normal(0, 0.1, size=d)
            w[b + nm + ".bias"] = rng.normal(0, 0.1, size=d)
        w[b + "attn.qkv.weight"], w[b + "attn.qkv.bias"] = lin(3 * d, d)
        w[b + "attn.proj.weight"], w[b + "attn.proj.bias"] = lin(d, d)
        w[b + "mlp.fc1.weight"], w[b + "mlp.fc1.bias"] = lin(hidden, d)
        w[b + "mlp.fc2.weight"], w[b + "mlp.fc2.bias"] = lin(d, hidden)
    w["norm.weight"] = 1 + rng.normal(0, 0.1, size=d)
    w["norm.bias"] = rng.normal(0, 0.1, size=d)
    # dropout/head leftovers a converter might let through
    w["head.weight"] = np.zeros((2, d))
    return {k: v.astype(np.float32) for k, v in w.items()}, heads


def parity_fixtures(root, rng):
    d = os.path.join(root, "vit_tiny")
    os.makedirs(os.path.join(d, "images"), exist_ok=True)
    weights, heads = tiny_vit(rng)
    tensor_container.write(os.path.join(d, "weights.dpt"), weights, {"num_heads": heads, "variant": "tiny"})
    backbone = {k: v for k, v in weights.items() if not k.startswith("head.")}
    sizes = [(224, 224), (120, 120), (200, 300), (300, 200), (97, 131)]
    rows = []
    for idx, (h, w) in enumerate(sizes):
        img = smooth_pattern(rng, h, w)
        name = f"img{idx}.png"
        save(Image.fromarray(img), os.path.join(d, "images", name))
        x = reference_vit.preprocess(img)
        cls = reference_vit.forward_cls(backbone, x, heads)[0].numpy()
        rows.append((name, cls))
    with open(os.path.join(d, "reference_cls.csv"), "w", newline="\n") as f:
        f.write("image," + ",".join(f"e{i}" for i in range(len(rows[0][1]))) + "\n")
        for name, cls in rows:
            f.write(name + "," + ",".join(repr(float(v)) for v in cls) + "\n")


def mini_dataset(root, rng):
    d = os.path.join(root, "mini_dataset")
    classes = {"green": (60, 170, 50), "ripe": (230, 200, 40), "overripe": (120, 80, 30)}
    for cls, body in classes.items():
        for i in range(8):
            h, w = (48, 64) if i % 2 else (64, 48)
            img = fruit(rng, h, w, tuple(np.clip(np.array(body) + rng.normal(0, 10, 3), 0, 255)))
            save(Image.fromarray(img), os.path.join(d, cls, f"{cls}_{i:02d}.png"))


def main(root):
    rng = np.random.default_rng(20231015)
    codec_fixtures(root, rng)
    parity_fixtures(root, rng)
    mini_dataset(root, rng)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures")
