"""Manifest-driven export into the engine's embeddings sidecar format.

The manifest is a CSV of ``id,path`` rows (an optional ``# dim=N`` first line
declares the expected vector size).  The sidecar is JSON-lines with one
``{"id": ..., "vector": [...]}`` record per constant, written atomically.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from encoder_bridge.encoders import get_encoder


class BridgeError(Exception):
    pass


def read_manifest(path: str | Path) -> tuple[list[tuple[str, Path]], int | None]:
    rows: list[tuple[str, Path]] = []
    declared_dim: int | None = None
    base = Path(path).parent
    seen: set[str] = set()
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "dim=" in line:
                declared_dim = int(line.split("dim=", 1)[1].strip())
            continue
        if line.lower().startswith("id,"):
            continue
        parts = [p.strip() for p in line.split(",", 1)]
        if len(parts) != 2:
            raise BridgeError(f"{path}:{lineno}: expected `id,path`")
        cid, img = parts
        if cid in seen:
            raise BridgeError(f"{path}:{lineno}: duplicate id {cid!r}")
        seen.add(cid)
        img_path = Path(img)
        rows.append((cid, img_path if img_path.is_absolute() else base / img_path))
    if not rows:
        raise BridgeError(f"{path}: empty manifest")
    return rows, declared_dim


def export_embeddings(manifest: str | Path, encoder_name: str, out_path: str | Path) -> int:
    """Encode every manifest image and write the sidecar; returns record count."""
    rows, declared_dim = read_manifest(manifest)
    encode = get_encoder(encoder_name)
    records = []
    dim = declared_dim
    for cid, img_path in rows:
        if not img_path.exists():
            raise BridgeError(f"missing image for id {cid!r}: {img_path}")
        vec = np.asarray(encode(str(img_path)), dtype=float)
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise BridgeError(
                f"dim mismatch for id {cid!r}: got {vec.shape[0]}, expected {dim}"
            )
        records.append({"id": cid, "vector": [float(v) for v in vec]})
    out = Path(out_path)
    fd, tmp = tempfile.mkstemp(dir=out.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(records)


def write_digit_corpus(out_dir: str | Path, per_class: int = 20) -> tuple[Path, dict[str, int]]:
    """Bundled digit images (8x8 grayscale) plus their manifest.

    Returns the manifest path and the id -> true-label map (labels are for
    test assertions only and are not part of the export contract).
    """
    from PIL import Image
    from sklearn.datasets import load_digits

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digits = load_digits()
    labels: dict[str, int] = {}
    lines = []
    for cls in range(10):
        (idx,) = np.where(digits.target == cls)
        for k, i in enumerate(idx[:per_class]):
            cid = f"d{cls}_{k:02d}"
            img = Image.fromarray((digits.images[i] * (255.0 / 16.0)).astype(np.uint8))
            img_path = out / f"{cid}.png"
            img.save(img_path)
            labels[cid] = cls
            lines.append(f"{cid},{img_path.name}")
    manifest = out / "manifest.csv"
    manifest.write_text("id,path\n" + "\n".join(lines) + "\n")
    return manifest, labels
