"""Frozen image encoders.

`pixel_norm` is the always-available deterministic baseline: grayscale pixels
flattened and L2-normalized.  The torch-backed entries load public pre-trained
checkpoints when the weights are installed locally and refuse (rather than
download) otherwise, keeping exports reproducible and offline-safe.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


class EncoderUnavailable(Exception):
    pass


def _load_gray(path: str) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=float)


def pixel_norm(path: str) -> np.ndarray:
    pixels = _load_gray(path).ravel()
    norm = np.linalg.norm(pixels)
    if norm == 0:
        return pixels
    return pixels / norm


def _torch_encoder(model_name: str):
    def encode(path: str) -> np.ndarray:
        try:
            import torch
            import torchvision.models as models
            import torchvision.transforms as transforms
        except ImportError as exc:
            raise EncoderUnavailable(f"{model_name} needs torch/torchvision: {exc}")
        try:
            if model_name == "vit":
                net = models.vit_b_16(weights=models.ViT_B_16_Weights.IMAGENET1K_V1)
                net.heads = torch.nn.Identity()
            else:
                net = models.resnet18(weights=models.ResNet18_Weights.IMAGENET1K_V1)
                net.fc = torch.nn.Identity()
        except Exception as exc:  # weights not cached locally
            raise EncoderUnavailable(f"{model_name} weights not available locally: {exc}")
        net.eval()
        prep = transforms.Compose([
            transforms.Resize((224, 224)),
            transforms.ToTensor(),
            transforms.Normalize(mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]),
        ])
        with Image.open(path) as img, torch.no_grad():
            batch = prep(img.convert("RGB")).unsqueeze(0)
            return net(batch).squeeze(0).numpy().astype(float)

    return encode


ENCODERS = {
    "pixel_norm": pixel_norm,
    "vit": _torch_encoder("vit"),
    "resnet": _torch_encoder("resnet"),
}


def get_encoder(name: str):
    try:
        return ENCODERS[name]
    except KeyError:
        raise EncoderUnavailable(f"unknown encoder {name!r}; have {sorted(ENCODERS)}")
