"""Plain PyTorch ViT backbone used to produce reference CLS vectors.

Written against torch.nn.functional only, independent of the C++ code path.
"""

import numpy as np
import torch
import torch.nn.functional as F

MEAN = (0.485, 0.456, 0.406)
STD = (0.229, 0.224, 0.225)


def preprocess(rgb_u8, side=224, mean=MEAN, std=STD, dtype=torch.float64):
    """HWC uint8 -> 1x3xSxS normalized tensor; half-pixel bilinear, no antialias."""
    x = torch.from_numpy(np.ascontiguousarray(rgb_u8)).to(dtype).permute(2, 0, 1).unsqueeze(0)
    if x.shape[-2:] != (side, side):
        x = F.interpolate(x, size=(side, side), mode="bilinear", align_corners=False, antialias=False)
    x = x / 255.0
    m = torch.tensor(mean, dtype=dtype).view(1, 3, 1, 1)
    s = torch.tensor(std, dtype=dtype).view(1, 3, 1, 1)
    return (x - m) / s


def forward_cls(weights, x, num_heads, eps=1e-6):
    w = {k: torch.as_tensor(np.asarray(v)).to(x.dtype) for k, v in weights.items()}
    proj = w["patch_embed.proj.weight"]
    d, p = proj.shape[0], proj.shape[-1]
    t = F.conv2d(x, proj, w["patch_embed.proj.bias"], stride=p).flatten(2).transpose(1, 2)
    t = torch.cat([w["cls_token"].expand(t.shape[0], -1, -1), t], dim=1) + w["pos_embed"]
    n = t.shape[1]
    depth = 0
    while f"blocks.{depth}.norm1.weight" in w:
        depth += 1
    for i in range(depth):
        b = f"blocks.{i}."
        h = F.layer_norm(t, (d,), w[b + "norm1.weight"], w[b + "norm1.bias"], eps)
        qkv = F.linear(h, w[b + "attn.qkv.weight"], w[b + "attn.qkv.bias"])
        qkv = qkv.reshape(t.shape[0], n, 3, num_heads, d // num_heads).permute(2, 0, 3, 1, 4)
        a = F.scaled_dot_product_attention(qkv[0], qkv[1], qkv[2])
        a = a.transpose(1, 2).reshape(t.shape[0], n, d)
        t = t + F.linear(a, w[b + "attn.proj.weight"], w[b + "attn.proj.bias"])
        h = F.layer_norm(t, (d,), w[b + "norm2.weight"], w[b + "norm2.bias"], eps)
        h = F.gelu(F.linear(h, w[b + "mlp.fc1.weight"], w[b + "mlp.fc1.bias"]))
        t = t + F.linear(h, w[b + "mlp.fc2.weight"], w[b + "mlp.fc2.bias"])
    t = F.layer_norm(t, (d,), w["norm.weight"], w["norm.bias"], eps)
    return t[:, 0]
