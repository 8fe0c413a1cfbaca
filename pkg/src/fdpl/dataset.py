"""Training patches: extraction, the packed patch file, manifests and batching."""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .degrade import DegradeConfig, degrade_pair
from .image import list_pngs, load_luminance
from .srcnn import sub_seed

log = logging.getLogger(__name__)

PATCH_SIZE = 32
PATCH_STRIDE = 13
PATCH_MAGIC = b"FDPLPAT1"
PATCH_FILE = "patches.bin"
MANIFEST_FILE = "manifest.txt"


@dataclass
class PatchPair:
    input: np.ndarray  # degraded, pre-upsampled
    target: np.ndarray  # ground truth
    row: int
    col: int


def patch_origins(n: int, size: int = PATCH_SIZE, stride: int = PATCH_STRIDE) -> range:
    return range(0, n - size + 1, stride) if n >= size else range(0)


def patch_count(h: int, w: int, size: int = PATCH_SIZE, stride: int = PATCH_STRIDE) -> int:
    if h < size or w < size:
        return 0
    return ((h - size) // stride + 1) * ((w - size) // stride + 1)


def extract_patches(
    gt: np.ndarray, degraded: np.ndarray, size: int = PATCH_SIZE, stride: int = PATCH_STRIDE
) -> list[PatchPair]:
    """All fully contained ``size`` windows at multiples of ``stride``, row-major."""
    if np.shape(gt) != np.shape(degraded):
        raise ValueError(f"shape mismatch: {np.shape(gt)} vs {np.shape(degraded)}")
    h, w = np.shape(gt)
    if h < size or w < size:
        raise ValueError(f"image {w}x{h} is smaller than the {size}x{size} patch")
    return [
        PatchPair(degraded[r : r + size, c : c + size], gt[r : r + size, c : c + size], r, c)
        for r in patch_origins(h, size, stride)
        for c in patch_origins(w, size, stride)
    ]


@dataclass
class CorpusManifest:
    entries: list[tuple[str, int, int]] = field(default_factory=list)
    seed: int = 0
    config: dict = field(default_factory=dict)
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w") as f:
            f.write(f"# seed = {self.seed}\n")
            for key, value in self.config.items():
                f.write(f"# {key} = {value}\n")
            f.write(f"# count = {len(self.entries)}\n")
            for name, r, c in self.entries:
                f.write(f"{name} {r} {c}\n")

    @classmethod
    def read(cls, path: str | os.PathLike) -> "CorpusManifest":
        m = cls()
        with open(path) as f:
            for line in f:
                line = line.rstrip("\n")
                if line.startswith("#"):
                    key, _, value = line[1:].partition("=")
                    key, value = key.strip(), value.strip()
                    if key == "seed":
                        m.seed = int(value)
                    elif key and key != "count":
                        m.config[key] = value
                elif line.strip():
                    name, r, c = line.rsplit(" ", 2)
                    m.entries.append((name, int(r), int(c)))
        return m


class PatchSet:
    """Aligned ``(N, 32, 32)`` input and target arrays."""

    def __init__(self, inputs: np.ndarray, targets: np.ndarray):
        if inputs.shape != targets.shape or inputs.ndim != 3:
            raise ValueError(f"bad patch arrays: {inputs.shape} vs {targets.shape}")
        self.inputs = inputs
        self.targets = targets

    @classmethod
    def from_pairs(cls, pairs: list[PatchPair]) -> "PatchSet":
        if not pairs:
            return cls(np.zeros((0, PATCH_SIZE, PATCH_SIZE)), np.zeros((0, PATCH_SIZE, PATCH_SIZE)))
        return cls(np.stack([p.input for p in pairs]), np.stack([p.target for p in pairs]))

    def __len__(self) -> int:
        return len(self.inputs)

    def subset(self, index) -> "PatchSet":
        return PatchSet(self.inputs[index], self.targets[index])

    def batches(self, batch_size: int, seed: int, epoch: int = 0) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for idx in batch_indices(len(self), batch_size, seed, epoch):
            yield (
                np.asarray(self.inputs[idx], dtype=np.float64),
                np.asarray(self.targets[idx], dtype=np.float64),
            )


def batch_indices(n: int, batch_size: int, seed: int, epoch: int = 0) -> Iterator[np.ndarray]:
    """One epoch of shuffled index batches; the final batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = np.random.default_rng([sub_seed(seed, "shuffle"), epoch])
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


class PatchWriter:
    """Streams pairs to a patch file and fills in the count on close.

    Layout: ``FDPLPAT1``, u32 little-endian pair count, then for every pair
    the input and target planes as little-endian float32, row-major.
    """

    def __init__(self, path: str | os.PathLike):
        self.f = open(path, "wb")
        self.count = 0
        self.f.write(PATCH_MAGIC + struct.pack("<I", 0))

    def write(self, pair: PatchPair) -> None:
        self.f.write(np.asarray(pair.input, dtype="<f4").tobytes())
        self.f.write(np.asarray(pair.target, dtype="<f4").tobytes())
        self.count += 1

    def close(self) -> None:
        self.f.seek(len(PATCH_MAGIC))
        self.f.write(struct.pack("<I", self.count))
        self.f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_patch_file(path: str | os.PathLike, pairs) -> None:
    with PatchWriter(path) as w:
        for p in pairs:
            w.write(p)


def read_patch_file(path: str | os.PathLike) -> PatchSet:
    with open(path, "rb") as f:
        head = f.read(12)
    if len(head) < 12 or head[:8] != PATCH_MAGIC:
        raise ValueError(f"{path}: not a patch file")
    (n,) = struct.unpack("<I", head[8:])
    expected = 12 + n * 2 * PATCH_SIZE * PATCH_SIZE * 4
    size = os.path.getsize(path)
    if size != expected:
        raise ValueError(f"{path}: size {size} bytes, expected {expected} for {n} pairs")
    if n == 0:
        return PatchSet.from_pairs([])
    data = np.memmap(path, dtype="<f4", mode="r", offset=12, shape=(n, 2, PATCH_SIZE, PATCH_SIZE))
    return PatchSet(data[:, 0], data[:, 1])


def load_corpus(directory: str | os.PathLike) -> PatchSet:
    return read_patch_file(os.path.join(directory, PATCH_FILE))


def image_pairs(
    image_dir: str | os.PathLike,
    cfg: DegradeConfig,
    skipped: list | None = None,
    multiple: int | None = None,
):
    """Yield ``(name, ground truth, degraded)`` for each usable PNG, sorted by name."""
    for path in list_pngs(image_dir):
        name = os.path.basename(path)
        try:
            gt, deg = degrade_pair(load_luminance(path), cfg, multiple)
        except (OSError, ValueError) as exc:
            log.warning("skipping %s: %s", name, exc)
            if skipped is not None:
                skipped.append(name)
            continue
        yield name, gt, deg


def prepare_corpus(
    image_dir: str | os.PathLike,
    cfg: DegradeConfig,
    out_dir: str | os.PathLike,
    seed: int = 0,
    size: int = PATCH_SIZE,
    stride: int = PATCH_STRIDE,
) -> CorpusManifest:
    """Degrade every PNG in ``image_dir`` and write its patches to ``out_dir``."""
    if not os.path.isdir(image_dir):
        raise FileNotFoundError(f"image directory not found: {image_dir}")
    if not list_pngs(image_dir):
        raise ValueError(f"no PNG files in {image_dir}")
    skipped: list[str] = []
    manifest = CorpusManifest(
        seed=seed,
        config={
            "scale": cfg.scale,
            "blur_sigma": cfg.blur_sigma,
            "blur_kernel_radius": cfg.blur_kernel_radius,
            "patch_size": size,
            "stride": stride,
        },
    )
    os.makedirs(out_dir, exist_ok=True)
    with PatchWriter(os.path.join(out_dir, PATCH_FILE)) as writer:
        # no whole-image crop: every 32x32 patch tiles into 8x8 blocks by itself
        for name, gt, deg in image_pairs(image_dir, cfg, skipped, multiple=1):
            if min(gt.shape) < size:
                log.warning("skipping %s: size %s below patch size", name, gt.shape)
                skipped.append(name)
                continue
            for p in extract_patches(gt, deg, size, stride):
                writer.write(p)
                manifest.entries.append((name, p.row, p.col))
    manifest.skipped = len(skipped)
    if skipped:
        log.warning("%d file(s) skipped", len(skipped))
    if not manifest.entries:
        raise ValueError(f"no usable images in {image_dir}")
    manifest.write(os.path.join(out_dir, MANIFEST_FILE))
    return manifest
