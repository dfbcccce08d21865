"""Random-Fourier-feature mean embeddings of 3D point clouds.

The Gaussian kernel k(x, y) = exp(-||x - y||^2 / (2 gamma^2)) is approximated
by a feature map built from F frequency rows drawn from the kernel's spectral
density N(0, (1/gamma^2) I):

    phi(x) = (1 / sqrt(F)) [cos(w_1.x), sin(w_1.x), ..., cos(w_F.x), sin(w_F.x)]

so phi(x).phi(y) is an unbiased Monte Carlo estimate of k(x, y), each phi(x)
has unit norm, and a cloud is summarized by the mean of its per-point features.
Inner products of two cloud embeddings then approximate the mean pairwise
kernel value between the clouds at O(N F) cost instead of O(N^2).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .clouds import PointCloud, as_points
from .errors import EmptyCloudError

_BASIS_MAGIC = b"RFFB"
_BASIS_FORMAT_VERSION = 1
# little-endian: magic, version, num_pairs, seed, gamma
_BASIS_HEADER = struct.Struct("<4sIIQd")


def rbf_kernel(x, y, gamma: float = 1.0) -> float:
    """Gaussian kernel between two single points.

    k(x, y) = exp(-||x - y||^2 / (2 gamma^2)), so k(x, x) = 1 for any x.
    """
    if gamma <= 0 or not np.isfinite(gamma):
        raise ValueError(f"gamma must be positive and finite, got {gamma}")
    xv = np.asarray(x, dtype=np.float64).reshape(-1)
    yv = np.asarray(y, dtype=np.float64).reshape(-1)
    if xv.shape != yv.shape:
        raise ValueError(f"point shapes differ: {xv.shape} vs {yv.shape}")
    if not (np.isfinite(xv).all() and np.isfinite(yv).all()):
        raise ValueError("rbf_kernel requires finite inputs")
    d2 = float(((xv - yv) ** 2).sum())
    return float(np.exp(-d2 / (2.0 * gamma * gamma)))


@dataclass(frozen=True)
class RffBasis:
    """Frozen random Fourier basis: F frequency rows for a width-2F feature map."""

    frequencies: np.ndarray  # (F, 3)
    gamma: float
    seed: int

    def __post_init__(self):
        freq = np.asarray(self.frequencies, dtype=np.float64)
        if freq.ndim != 2 or freq.shape[1] != 3 or freq.shape[0] < 1:
            raise ValueError(f"frequencies must be (F, 3) with F >= 1, got {freq.shape}")
        if not np.isfinite(freq).all():
            raise ValueError("frequencies contain non-finite values")
        if self.gamma <= 0 or not np.isfinite(self.gamma):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")
        freq = np.ascontiguousarray(freq)
        freq.setflags(write=False)
        object.__setattr__(self, "frequencies", freq)

    @property
    def num_pairs(self) -> int:
        return self.frequencies.shape[0]

    @property
    def output_dim(self) -> int:
        return 2 * self.frequencies.shape[0]


def sample_rff_basis(num_pairs: int, gamma: float = 1.0, seed: int = 0) -> RffBasis:
    """Draw F frequency rows from the Gaussian kernel's spectral density.

    Rows are i.i.d. N(0, (1/gamma^2) I_3); the per-coordinate standard
    deviation of a large basis therefore converges to 1/gamma.
    """
    if num_pairs < 1:
        raise ValueError(f"num_pairs must be >= 1, got {num_pairs}")
    if gamma <= 0 or not np.isfinite(gamma):
        raise ValueError(f"gamma must be positive and finite, got {gamma}")
    rng = np.random.default_rng(seed)
    freq = rng.standard_normal((num_pairs, 3)) / gamma
    return RffBasis(frequencies=freq, gamma=float(gamma), seed=int(seed))


def feature_maps(points, basis: RffBasis) -> np.ndarray:
    """Per-point feature rows for an (N, 3) array; returns (N, 2F).

    Columns interleave cos/sin per frequency and carry the 1/sqrt(F) scale,
    so every row has unit Euclidean norm.
    """
    pts = as_points(points)
    proj = pts @ basis.frequencies.T  # (N, F)
    out = np.empty((pts.shape[0], 2 * basis.num_pairs), dtype=np.float64)
    out[:, 0::2] = np.cos(proj)
    out[:, 1::2] = np.sin(proj)
    out /= np.sqrt(basis.num_pairs)
    return out


def feature_map(x, basis: RffBasis) -> np.ndarray:
    """Feature row of a single point; identical bits to the batched path."""
    xv = np.asarray(x, dtype=np.float64).reshape(1, 3)
    return feature_maps(xv, basis)[0]


@dataclass(frozen=True)
class Embedding:
    """Mean feature vector of a cloud plus the point count it averaged."""

    values: np.ndarray  # (2F,)
    source_count: int

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def embed_cloud(cloud, basis: RffBasis) -> Embedding:
    """Mean of per-point feature rows, accumulated in input order.

    Raises EmptyCloudError for empty input: callers must choose their own
    fallback rather than silently receiving a zero vector.
    """
    pts = as_points(cloud)
    if pts.shape[0] == 0:
        raise EmptyCloudError("cannot embed an empty cloud")
    feats = feature_maps(pts, basis)
    return Embedding(values=feats.mean(axis=0), source_count=pts.shape[0])


def exact_mean_inner(p, q, gamma: float = 1.0) -> float:
    """Exact mean pairwise kernel value (1/(Np*Nq)) sum_ij k(p_i, q_j).

    O(Np*Nq) reference the embeddings approximate; used as oracle and as the
    benchmark baseline.
    """
    if gamma <= 0 or not np.isfinite(gamma):
        raise ValueError(f"gamma must be positive and finite, got {gamma}")
    pp = as_points(p, allow_empty=False)
    qq = as_points(q, allow_empty=False)
    diff = pp[:, None, :] - qq[None, :, :]
    sq = (diff * diff).sum(axis=-1)
    return float(np.exp(-sq / (2.0 * gamma * gamma)).mean())


def mmd2(p, q, gamma: float = 1.0) -> float:
    """Squared maximum mean discrepancy from exact Gram means.

    mmd2(P, P) is exactly 0 because all three terms evaluate identically;
    tiny negative values can occur for P != Q only through float rounding.
    """
    kpp = exact_mean_inner(p, p, gamma)
    kqq = exact_mean_inner(q, q, gamma)
    kpq = exact_mean_inner(p, q, gamma)
    return kpp + kqq - 2.0 * kpq


class CloudEmbedder(TransformerMixin, BaseEstimator):
    """Transformer mapping point clouds to fixed-width mean feature vectors.

    fit() draws the frequency basis from (output_dim, gamma, seed);
    transform() maps a sequence of clouds to an (n_clouds, output_dim) array.
    The basis is sampled once and reused for every cloud so embeddings stay
    mutually comparable.
    """

    def __init__(self, output_dim: int = 16, gamma: float = 1.0, seed: int = 0):
        self.output_dim = output_dim
        self.gamma = gamma
        self.seed = seed

    def fit(self, X=None, y=None):
        if self.output_dim < 2 or self.output_dim % 2 != 0:
            raise ValueError(f"output_dim must be a positive even integer, got {self.output_dim}")
        self.basis_ = sample_rff_basis(self.output_dim // 2, self.gamma, self.seed)
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "basis_")
        clouds = self._as_cloud_list(X)
        out = np.empty((len(clouds), self.output_dim), dtype=np.float64)
        for i, cloud in enumerate(clouds):
            out[i] = embed_cloud(cloud, self.basis_).values
        return out

    @staticmethod
    def _as_cloud_list(X) -> list:
        # a single (N, 3) array is treated as one cloud, not N rows
        if isinstance(X, (PointCloud, np.ndarray)):
            return [X]
        return list(X)


def save_rff_basis(basis: RffBasis, path) -> None:
    """Write a basis as a little-endian header plus flat float64 rows."""
    header = _BASIS_HEADER.pack(
        _BASIS_MAGIC,
        _BASIS_FORMAT_VERSION,
        basis.num_pairs,
        basis.seed,
        basis.gamma,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(basis.frequencies).tobytes())


def load_rff_basis(path) -> RffBasis:
    """Read a basis written by save_rff_basis; validates magic and version."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _BASIS_HEADER.size:
        raise ValueError(f"basis file too short: {len(raw)} bytes")
    magic, version, num_pairs, seed, gamma = _BASIS_HEADER.unpack_from(raw, 0)
    if magic != _BASIS_MAGIC:
        raise ValueError(f"not a basis file (magic {magic!r})")
    if version != _BASIS_FORMAT_VERSION:
        raise ValueError(f"unsupported basis format version {version}")
    body = raw[_BASIS_HEADER.size:]
    expected = num_pairs * 3 * 8
    if len(body) != expected:
        raise ValueError(f"basis payload has {len(body)} bytes, expected {expected}")
    freq = np.frombuffer(body, dtype="<f8").reshape(num_pairs, 3).copy()
    return RffBasis(frequencies=freq, gamma=float(gamma), seed=int(seed))
