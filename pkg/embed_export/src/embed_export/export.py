"""Pooled-embedding extraction over an image folder.

Walks a directory of images in sorted path order, runs each image through a
pretrained torchvision backbone with the fc head removed (global average
pool of the penultimate stage), and writes one float32 feature row per
image in the OCCF binary layout:

    magic   4 bytes  "OCCF"
    version u32      = 1   (little-endian)
    flags   u8       bit0: labels present
    n       u64      rows
    d       u64      feature dimension
    data    n*d f32  row-major
    labels  n*i32    only when flags bit0 is set

When the images live in immediate subdirectories of the root, each
subdirectory becomes a class and the labels column is written (label =
index of the sorted subdirectory name).  Images directly under the root
produce an unlabeled file.

Inference is deterministic: eval mode, no augmentation, fixed
preprocessing (resize 256, center-crop 224, ImageNet normalization), and a
fixed seed for randomly initialized weights, so exporting the same
directory twice yields byte-identical files.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import torch
import torchvision.models as tvm
from PIL import Image
from torchvision import transforms

log = logging.getLogger("embed_export")

_HEADER = struct.Struct("<4sIBQQ")
_MAGIC = b"OCCF"
_VERSION = 1

_IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".bmp", ".gif", ".webp",
                     ".tif", ".tiff")

BACKBONES = ("resnet18", "resnet34", "resnet50")


class ExportError(Exception):
    """Raised when the export cannot produce a valid feature file."""


@dataclass
class ExportSpec:
    image_dir: str
    backbone: str = "resnet50"
    # "pretrained" loads the torchvision ImageNet weights (needs the weight
    # file on disk or network access); "none" uses a seeded random
    # initialization so the pipeline runs fully offline.
    weights: str = "pretrained"
    batch_size: int = 32
    out_path: str = "features.occf"
    seed: int = 0
    resize: int = field(default=256, repr=False)
    crop: int = field(default=224, repr=False)

    def validate(self):
        if self.backbone not in BACKBONES:
            raise ExportError(f"unknown backbone {self.backbone!r}; "
                              f"choose from {BACKBONES}")
        if self.weights not in ("pretrained", "none"):
            raise ExportError("weights must be 'pretrained' or 'none'")
        if self.batch_size < 1:
            raise ExportError("batch_size must be >= 1")
        if not os.path.isdir(self.image_dir):
            raise ExportError(f"not a directory: {self.image_dir}")


def write_occf(path, data: np.ndarray, labels: Optional[np.ndarray]) -> None:
    """Atomically write a feature matrix in the OCCF binary layout."""
    data = np.ascontiguousarray(data, dtype="<f4")
    n, d = data.shape
    flags = 0 if labels is None else 1
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, _VERSION, flags, n, d))
        f.write(data.tobytes())
        if labels is not None:
            f.write(np.ascontiguousarray(labels, dtype="<i4").tobytes())
    os.replace(tmp, path)


def list_images(image_dir) -> List[Tuple[str, Optional[int]]]:
    """(path, label) pairs in sorted path order.

    Immediate subdirectories define classes; images directly under the
    root are unlabeled (and may not be mixed with subdirectory images).
    """
    subdirs = sorted(e.name for e in os.scandir(image_dir) if e.is_dir())
    root_images = sorted(
        e.name for e in os.scandir(image_dir)
        if e.is_file() and e.name.lower().endswith(_IMAGE_EXTENSIONS))
    if subdirs and root_images:
        raise ExportError(
            f"{image_dir} mixes images with class subdirectories")
    if not subdirs:
        return [(os.path.join(image_dir, n), None) for n in root_images]
    pairs = []
    for label, sub in enumerate(subdirs):
        names = sorted(
            e.name for e in os.scandir(os.path.join(image_dir, sub))
            if e.is_file() and e.name.lower().endswith(_IMAGE_EXTENSIONS))
        pairs.extend((os.path.join(image_dir, sub, n), label) for n in names)
    return pairs


def build_preprocess(resize: int, crop: int):
    return transforms.Compose([
        transforms.Resize(resize),
        transforms.CenterCrop(crop),
        transforms.ToTensor(),
        transforms.Normalize(mean=[0.485, 0.456, 0.406],
                             std=[0.229, 0.224, 0.225]),
    ])


def build_backbone(name: str, weights: str, seed: int) -> torch.nn.Module:
    """Backbone with the classification head removed: forward returns the
    globally average-pooled penultimate features."""
    factory = getattr(tvm, name)
    if weights == "pretrained":
        model = factory(weights="IMAGENET1K_V1")
    else:
        torch.manual_seed(seed)
        model = factory(weights=None)
    model.fc = torch.nn.Identity()
    model.eval()
    return model


def export(spec: ExportSpec) -> int:
    """Run the export; returns the number of rows written.

    Images that fail to decode are logged and skipped; an export with no
    usable images is an error.
    """
    spec.validate()
    pairs = list_images(spec.image_dir)
    preprocess = build_preprocess(spec.resize, spec.crop)
    model = build_backbone(spec.backbone, spec.weights, spec.seed)

    tensors, labels, has_labels = [], [], False
    for path, label in pairs:
        try:
            with Image.open(path) as img:
                tensors.append(preprocess(img.convert("RGB")))
        except (OSError, ValueError) as e:
            log.warning("skipping %s: %s", path, e)
            continue
        if label is not None:
            has_labels = True
            labels.append(label)
    if not tensors:
        raise ExportError(f"no decodable images under {spec.image_dir}")

    rows = []
    with torch.no_grad():
        for start in range(0, len(tensors), spec.batch_size):
            batch = torch.stack(tensors[start:start + spec.batch_size])
            rows.append(model(batch).cpu().numpy())
    data = np.concatenate(rows).astype(np.float32)
    write_occf(spec.out_path,
               data, np.asarray(labels, np.int32) if has_labels else None)
    return data.shape[0]
