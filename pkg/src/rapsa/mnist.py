"""MNIST IDX reader, 0-vs-8 task construction and checksum-verified download."""

from __future__ import annotations

import gzip
import hashlib
import os
import shutil
import struct
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DomainError
from .problems import LogisticProblem

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049

MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "http://yann.lecun.com/exdb/mnist/",
)
# published MD5 digests of the gzipped archives
ARCHIVE_MD5 = {
    "train-images-idx3-ubyte.gz": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
    "train-labels-idx1-ubyte.gz": "d53e105ee54ea40749a09fcbcd1e9432",
    "t10k-images-idx3-ubyte.gz": "9fb629c4189551a2d022fa330f9573f3",
    "t10k-labels-idx1-ubyte.gz": "ec29112dd5afa0611ce80d1b7f02629c",
}
SHA_MANIFEST = "SHA256SUMS"


class IdxError(ValueError):
    pass


class WrongMagicError(IdxError):
    pass


class TruncatedIdxError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


@dataclass
class MnistDataset:
    images: np.ndarray  # (N, rows*cols), values in [0, 1]
    labels: np.ndarray  # (N,), ints in [0, 9]

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise CountMismatchError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_header(f, magic, ndims, path):
    head = f.read(4 * (1 + ndims))
    if len(head) < 4:
        raise TruncatedIdxError(f"{path}: missing header")
    (got,) = struct.unpack(">i", head[:4])
    if got != magic:
        raise WrongMagicError(f"{path}: magic {got}, expected {magic}")
    if len(head) < 4 * (1 + ndims):
        raise TruncatedIdxError(f"{path}: truncated header")
    return struct.unpack(">" + "i" * ndims, head[4:])


def read_idx_images(path) -> np.ndarray:
    """Raw ``uint8`` array of shape ``(count, rows, cols)``."""
    with _open(path) as f:
        count, rows, cols = _read_header(f, IMAGES_MAGIC, 3, path)
        payload = f.read()
    need = count * rows * cols
    if len(payload) < need:
        raise TruncatedIdxError(f"{path}: {len(payload)} pixel bytes, expected {need}")
    return np.frombuffer(payload[:need], dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    with _open(path) as f:
        (count,) = _read_header(f, LABELS_MAGIC, 1, path)
        payload = f.read()
    if len(payload) < count:
        raise TruncatedIdxError(f"{path}: {len(payload)} label bytes, expected {count}")
    return np.frombuffer(payload[:count], dtype=np.uint8).copy()


def load_mnist_idx(images_path, labels_path) -> MnistDataset:
    """Load an IDX image/label pair, scaling intensities to ``[0, 1]``."""
    imgs = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(imgs) != len(labels):
        raise CountMismatchError(f"{len(imgs)} images but {len(labels)} labels")
    return MnistDataset(imgs.reshape(len(imgs), -1).astype(float) / 255.0, labels.astype(int))


def write_idx_images(path, images) -> None:
    images = np.asarray(images, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


def build_binary_task(ds: MnistDataset, digits=(0, 8), lam: float | None = None) -> LogisticProblem:
    """Keep two digits; the first maps to ``y = -1`` and the second to ``y = +1``.

    ``lam`` defaults to ``1/N`` for the filtered set.
    """
    neg, pos = digits
    keep = (ds.labels == neg) | (ds.labels == pos)
    if not np.any(ds.labels == neg) or not np.any(ds.labels == pos):
        raise DomainError(f"dataset must contain both digits {neg} and {pos}")
    Z = ds.images[keep]
    y = np.where(ds.labels[keep] == pos, 1.0, -1.0)
    return LogisticProblem(Z, y, 1.0 / len(y) if lam is None else lam)


def data_dir(default=None) -> Path:
    env = os.environ.get("RAPSA_DATA_DIR")
    return Path(env or default or Path.home() / ".cache" / "rapsa" / "mnist")


def split_paths(directory, split: str):
    prefix = "train" if split == "train" else "t10k"
    directory = Path(directory)
    out = []
    for kind, nd in (("images", 3), ("labels", 1)):
        stem = f"{prefix}-{kind}-idx{nd}-ubyte"
        raw = directory / stem
        out.append(raw if raw.exists() else directory / (stem + ".gz"))
    return tuple(out)


def available(directory=None) -> bool:
    directory = data_dir(directory)
    return all(p.exists() for split in ("train", "test") for p in split_paths(directory, split))


def _digest(path, algo):
    h = hashlib.new(algo)
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fetch(directory=None, offline_ok=True, log=print) -> bool:
    """Download the four archives, verify them, and keep a SHA-256 manifest.

    Archives are checked against their published MD5 digests when first
    downloaded; their SHA-256 digests are then written to ``SHA256SUMS`` and
    every later call re-verifies against that manifest. Returns ``False`` when
    the network is unreachable and ``offline_ok`` is set.
    """
    directory = data_dir(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest_path = directory / SHA_MANIFEST
    manifest = {}
    if manifest_path.exists():
        for line in manifest_path.read_text().splitlines():
            digest, name = line.split()
            manifest[name] = digest
    for name, md5 in ARCHIVE_MD5.items():
        target = directory / name
        if not target.exists():
            last = None
            for mirror in MIRRORS:
                try:
                    with urllib.request.urlopen(mirror + name, timeout=30) as resp, open(target, "wb") as out:
                        shutil.copyfileobj(resp, out)
                    break
                except OSError as exc:
                    last = exc
                    target.unlink(missing_ok=True)
            else:
                if offline_ok:
                    log(f"skipping MNIST fetch, network unavailable: {last}")
                    return False
                raise ConnectionError(f"could not download {name}") from last
            if _digest(target, "md5") != md5:
                target.unlink()
                raise IdxError(f"{name}: MD5 mismatch after download")
        sha = _digest(target, "sha256")
        if name in manifest and manifest[name] != sha:
            raise IdxError(f"{name}: SHA-256 {sha} does not match manifest {manifest[name]}")
        manifest[name] = sha
        log(f"{name} ok sha256={sha}")
    manifest_path.write_text("".join(f"{d}  {n}\n" for n, d in sorted(manifest.items())))
    return True
