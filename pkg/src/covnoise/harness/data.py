"""Synthetic generators and the IDX (MNIST-style) reader."""

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import BadMagic, BadParams, CountMismatch, IoFailure, TruncatedFile
from ..network import Batch
from ..quadratic import make_quadratic
from ..rng import Rng

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049


@dataclass(eq=False)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray = None  # class labels, real targets, or None for unlabeled images
    name: str = ""
    params: dict = field(default_factory=dict)
    digest: str = None

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def batch(self):
        if self.targets is None:
            raise BadParams(f"dataset {self.name!r} has no labels")
        return Batch(self.inputs, self.targets)


def blob_centers(in_dim, classes, radius=2.0):
    # vertices radius * e_c of the standard simplex
    if classes > in_dim:
        raise BadParams(f"{classes} classes need in_dim >= {classes}, got {in_dim}")
    return radius * np.eye(classes, in_dim)


def gen_blobs(n, in_dim, classes, spread=1.0, seed=0):
    """Class-balanced Gaussian blobs; sample i belongs to class i mod classes."""
    if classes < 2 or n < classes or in_dim < 1:
        raise BadParams(f"need classes >= 2 and n >= classes (n={n}, classes={classes})")
    if spread < 0:
        raise BadParams("spread must be nonnegative")
    centers = blob_centers(in_dim, classes)
    labels = np.arange(n) % classes
    noise = Rng(seed).normal(n * in_dim).reshape(n, in_dim)
    X = centers[labels] + spread * noise
    params = {"n": n, "in_dim": in_dim, "classes": classes, "spread": spread, "seed": seed}
    return Dataset(X, labels, "blobs", params)


def gen_toy_2d(n, noise_sd, seed=0, w=(2.0, -1.0)):
    """1-D linear regression y = w1 x + w2 + noise with x ~ N(0, 1).

    Mean squared error over the features (x, 1) is exactly
    ``1/2 theta^T A theta - b^T theta + const`` with A the second-moment matrix
    of the features, so the returned problem (in coordinates shifted by the
    minimizer ``params["theta_star"]``) describes the loss surface.
    """
    if n < 2:
        raise BadParams("need at least two samples")
    if noise_sd < 0:
        raise BadParams("noise_sd must be nonnegative")
    r = Rng(seed)
    x = r.normal(n)
    eps = r.normal(n)
    y = w[0] * x + w[1] + noise_sd * eps
    Phi = np.column_stack([x, np.ones(n)])
    A = Phi.T @ Phi / n
    b = Phi.T @ y / n
    theta_star = np.linalg.solve(A, b)
    problem = make_quadratic(A)
    params = {
        "n": n,
        "noise_sd": noise_sd,
        "seed": seed,
        "w": [float(v) for v in w],
        "b": b,
        "theta_star": theta_star,
        "offset": float(0.5 * np.mean(y * y) - 0.5 * b @ theta_star),
    }
    return Dataset(x[:, None], y, "toy2d", params), problem


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e


def parse_idx(raw, path="<bytes>"):
    """Header-checked uint8 array from IDX bytes (images: 3-D, labels: 1-D)."""
    if len(raw) < 8:
        raise TruncatedFile(f"{path}: header shorter than 8 bytes")
    (magic,) = struct.unpack(">i", raw[:4])
    if magic == IMAGES_MAGIC:
        ndim = 3
    elif magic == LABELS_MAGIC:
        ndim = 1
    else:
        raise BadMagic(f"{path}: magic {magic} is neither {IMAGES_MAGIC} nor {LABELS_MAGIC}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFile(f"{path}: header shorter than {header} bytes")
    dims = struct.unpack(">" + "i" * ndim, raw[4:header])
    size = int(np.prod(dims))
    if len(raw) < header + size:
        raise TruncatedFile(f"{path}: expected {size} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def read_idx(path):
    return parse_idx(_read_bytes(path), path)


def write_idx(path, array):
    a = np.asarray(array)
    if a.dtype != np.uint8 or a.ndim not in (1, 3):
        raise BadParams("IDX writer takes uint8 arrays with 1 (labels) or 3 (images) dims")
    magic = LABELS_MAGIC if a.ndim == 1 else IMAGES_MAGIC
    head = struct.pack(">i" + "i" * a.ndim, magic, *a.shape)
    try:
        Path(path).write_bytes(head + a.tobytes())
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def load_idx(images_path, labels_path=None, limit=None):
    """Images scaled to [0, 1] and flattened, plus labels when given.

    The digest is the SHA-256 of the raw file bytes, in argument order.
    """
    raw = _read_bytes(images_path)
    imgs = parse_idx(raw, images_path)
    if imgs.ndim != 3:
        raise BadMagic(f"{images_path}: expected an image file (magic {IMAGES_MAGIC})")
    h = hashlib.sha256(raw)
    labels = None
    if labels_path is not None:
        raw_l = _read_bytes(labels_path)
        labels = parse_idx(raw_l, labels_path)
        if labels.ndim != 1:
            raise BadMagic(f"{labels_path}: expected a label file (magic {LABELS_MAGIC})")
        if labels.shape[0] != imgs.shape[0]:
            raise CountMismatch(f"{imgs.shape[0]} images but {labels.shape[0]} labels")
        h.update(raw_l)
        labels = labels.astype(np.int64)
    X = imgs.reshape(imgs.shape[0], -1).astype(np.float64) / 255.0
    if limit is not None:
        X = X[:limit]
        labels = labels[:limit] if labels is not None else None
    params = {"images": str(images_path), "labels": None if labels_path is None else str(labels_path)}
    return Dataset(X, labels, "idx", params, h.hexdigest())
