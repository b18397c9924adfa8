"""Planted low-rank instances and phaseless measurement ensembles.

Each ensemble stores, for every column k, the linear map ``A_k'`` that takes an
n-vector to its m linear measurements; its rows are ``a_{i,k}^H``. Every kind
exposes the same forward/adjoint pair (per column, for all columns at once, and
for a shared block of vectors), so algorithms never need to know whether the
vectors are dense Gaussians or masked 2-D Fourier transforms.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, DimensionError, PartitionError

logger = logging.getLogger(__name__)

__all__ = [
    "CdpEnsemble",
    "GaussianEnsemble",
    "GroundTruth",
    "MAX_MATERIALIZE",
    "MeasurementEnsemble",
    "MeasurementPart",
    "Measurements",
    "StackedEnsemble",
    "gen_ensemble",
    "gen_low_rank",
    "measure",
    "split_measurements",
    "stream_rng",
]

EnsembleKind = Literal["gaussian-real", "gaussian-complex", "cdp"]
Sharing = Literal["per-column", "shared"]

# CDP operators are never turned into dense matrices above this dimension.
MAX_MATERIALIZE = 4096

# Columns processed together when building dense Gram matrices.
_CHUNK = 64

_TRUTH_STREAM = 0
_VECTOR_STREAM = 1
_FRESH_STREAM = 2
_MASK_STREAM = 3
_NOISE_STREAM = 4

_CDP_ALPHABET = np.array([1.0, -1.0, 1.0j, -1.0j])


def stream_rng(seed: int, stream: int, *key: int) -> np.random.Generator:
    """
    Returns a counter-based Philox generator keyed on (seed, stream, key...).

    Args:
        seed (int): Non-negative experiment seed.
        stream (int): Tag separating truth, vectors, masks and noise.
        *key (int): Further integers, e.g. the column index k.

    Returns:
        np.random.Generator: Independent of every other key, so columns can be
        generated in any order or in parallel with identical results.
    """
    if int(seed) < 0:
        raise ConfigurationError(f"Seeds must be non-negative, got {seed}.")
    seq = np.random.SeedSequence(entropy=(int(seed), int(stream)), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """
    A planted rank-r matrix X = U B.

    Attributes:
        U (np.ndarray): n x r matrix with orthonormal columns.
        B (np.ndarray): r x q coefficient matrix.
        X (np.ndarray): n x q matrix equal to U @ B.
        seed (int, optional): Seed the instance was drawn from.
    """
    U: np.ndarray
    B: np.ndarray
    X: np.ndarray
    seed: Optional[int] = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def q(self) -> int:
        return self.X.shape[1]

    @property
    def r(self) -> int:
        return self.U.shape[1]

    @cached_property
    def lambda_bar(self) -> np.ndarray:
        """Eigenvalues of (1/q) B B' in descending order."""
        gram = (self.B @ self.B.conj().T) / self.q
        return np.sort(np.linalg.eigvalsh(gram))[::-1]

    @property
    def lambda_min(self) -> float:
        return float(self.lambda_bar[-1])

    @property
    def kappa(self) -> float:
        """Condition number of (1/q) X X' restricted to its range."""
        return float(self.lambda_bar[0] / self.lambda_bar[-1])

    @property
    def rho(self) -> float:
        """Largest column energy relative to the average column energy."""
        energy = np.sum(np.abs(self.X) ** 2, axis=0)
        return float(energy.max() / energy.mean())


def gen_low_rank(n: int, q: int, r: int, seed: int = 0) -> GroundTruth:
    """
    Draws a planted instance: U orthonormalizes an n x r Gaussian matrix and the
    entries of B are iid uniform on [-1, 1].

    Args:
        n (int): Ambient dimension.
        q (int): Number of columns.
        r (int): Rank, 1 <= r <= min(n, q).
        seed (int): Seed; the same seed always gives the same instance.

    Returns:
        GroundTruth: The planted instance.

    Raises:
        DimensionError: If the dimensions are not positive or r is out of range.
    """
    if n < 1 or q < 1 or not 1 <= r <= min(n, q):
        raise DimensionError(f"Need 1 <= r <= min(n, q); got n={n}, q={q}, r={r}.")
    rng = stream_rng(seed, _TRUTH_STREAM)
    U, _ = np.linalg.qr(rng.standard_normal((n, r)))
    B = rng.uniform(-1.0, 1.0, size=(r, q))
    logger.info(f"Generated rank-{r} ground truth with n={n}, q={q}, seed={seed}.")
    return GroundTruth(U=U, B=B, X=U @ B, seed=seed)


class MeasurementEnsemble(ABC):
    """
    Family of per-column linear maps A_k' (m x n), k = 1..q.

    Subclasses implement the forward map (A_k' x) and its adjoint (A_k z); the
    dense helpers below are built on top of those and may be overridden by
    subclasses with cheaper direct formulas.
    """

    kind: str
    n: int
    m: int
    q: int
    m_fresh: int = 0

    @property
    @abstractmethod
    def sharing(self) -> str:
        """Either "per-column" or "shared"."""

    @property
    def is_complex(self) -> bool:
        return self.kind != "gaussian-real"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.complex128) if self.is_complex else np.dtype(np.float64)

    @abstractmethod
    def forward(self, k: int, v: np.ndarray) -> np.ndarray:
        """Applies A_k' to an n-vector or to each column of an n x p block."""

    @abstractmethod
    def adjoint(self, k: int, z: np.ndarray) -> np.ndarray:
        """Applies A_k to an m-vector or to each column of an m x p block."""

    @abstractmethod
    def forward_all(self, X: np.ndarray) -> np.ndarray:
        """Maps an n x q matrix to the m x q matrix whose column k is A_k' x_k."""

    @abstractmethod
    def adjoint_all(self, Z: np.ndarray) -> np.ndarray:
        """Maps an m x q matrix to the n x q matrix whose column k is A_k z_k."""

    @abstractmethod
    def take_rows(self, start: int, stop: int) -> "MeasurementEnsemble":
        """Returns the ensemble restricted to measurement rows [start, stop)."""

    def forward_block(self, V: np.ndarray) -> np.ndarray:
        """Applies every A_k' to the same n x p block; returns a q x m x p array."""
        return np.stack([self.forward(k, V) for k in range(self.q)])

    def column_matrix(self, k: int) -> np.ndarray:
        """Dense m x n matrix A_k', built by applying the operator to the identity."""
        if self.n > MAX_MATERIALIZE:
            raise ConfigurationError(
                f"Refusing to materialize a {self.m} x {self.n} operator (n > {MAX_MATERIALIZE})."
            )
        return self.forward(k, np.eye(self.n, dtype=self.dtype))

    def column_weighted_grams(self, W: np.ndarray, cols: Sequence[int]) -> np.ndarray:
        """
        Returns the stack of A_k diag(W[:, k]) A_k' for the requested columns.

        Args:
            W (np.ndarray): m x q real weights.
            cols (Sequence[int]): Column indices.

        Returns:
            np.ndarray: Array of shape (len(cols), n, n).
        """
        grams = []
        for k in cols:
            Ak = self.column_matrix(k)
            grams.append(Ak.conj().T @ (W[:, k][:, None] * Ak))
        return np.stack(grams)

    def weighted_gram(self, W: np.ndarray) -> np.ndarray:
        """Returns sum_k A_k diag(W[:, k]) A_k' as a dense n x n matrix."""
        total = np.zeros((self.n, self.n), dtype=self.dtype)
        for start in range(0, self.q, _CHUNK):
            cols = range(start, min(start + _CHUNK, self.q))
            total += self.column_weighted_grams(W, cols).sum(axis=0)
        return total

    @cached_property
    def gram_stack(self) -> np.ndarray:
        """The q x n x n stack of A_k A_k', cached because it never changes."""
        ones = np.ones((self.m, self.q))
        chunks = [
            self.column_weighted_grams(ones, range(start, min(start + _CHUNK, self.q)))
            for start in range(0, self.q, _CHUNK)
        ]
        return np.concatenate(chunks)

    def _check_columns(self, X: np.ndarray, rows: int, name: str) -> None:
        if X.ndim != 2 or X.shape != (rows, self.q):
            raise DimensionError(f"{name} must have shape ({rows}, {self.q}), got {X.shape}.")


def _adjoint_rows(rows: np.ndarray, z: np.ndarray) -> np.ndarray:
    # rows^H z without copying a conjugated rows array
    return (rows.T @ np.conj(z)).conj()


class GaussianEnsemble(MeasurementEnsemble):
    """
    Dense Gaussian measurement vectors.

    Args:
        rows (np.ndarray): Either a q x m x n stack (one A_k' per column) or an
            m x n matrix reused by every column.
        q (int, optional): Number of columns; required when ``rows`` is shared.
        seed (int, optional): Seed the rows were drawn from, kept for provenance.
    """

    def __init__(self, rows: np.ndarray, q: Optional[int] = None, seed: Optional[int] = None):
        rows = np.asarray(rows)
        if rows.ndim == 3:
            self._shared = False
            self.q, self.m, self.n = rows.shape
            if q is not None and q != self.q:
                raise DimensionError(f"rows hold {self.q} columns but q={q} was given.")
        elif rows.ndim == 2:
            if q is None or q < 1:
                raise DimensionError("A shared ensemble needs the column count q.")
            self._shared = True
            self.m, self.n = rows.shape
            self.q = q
        else:
            raise DimensionError(f"rows must be 2-D or 3-D, got shape {rows.shape}.")
        self.kind = "gaussian-complex" if np.iscomplexobj(rows) else "gaussian-real"
        self.seed = seed
        self._rows = rows
        logger.debug(f"GaussianEnsemble {self.kind} n={self.n} m={self.m} q={self.q} sharing={self.sharing}")

    @property
    def sharing(self) -> str:
        return "shared" if self._shared else "per-column"

    @property
    def rows(self) -> np.ndarray:
        return self._rows

    def column_rows(self, k: int) -> np.ndarray:
        """The m x n matrix A_k'; the same object for every k when shared."""
        if not 0 <= k < self.q:
            raise DimensionError(f"Column index {k} out of range for q={self.q}.")
        return self._rows if self._shared else self._rows[k]

    def forward(self, k, v):
        return self.column_rows(k) @ v

    def adjoint(self, k, z):
        return _adjoint_rows(self.column_rows(k), z)

    def forward_all(self, X):
        self._check_columns(X, self.n, "X")
        if self._shared:
            return self._rows @ X
        return np.matmul(self._rows, X.T[:, :, None])[:, :, 0].T

    def adjoint_all(self, Z):
        self._check_columns(Z, self.m, "Z")
        if self._shared:
            return _adjoint_rows(self._rows, Z)
        out = np.matmul(np.conj(Z).T[:, None, :], self._rows)[:, 0, :]
        return np.conj(out).T

    def forward_block(self, V):
        if self._shared:
            return np.broadcast_to(self._rows @ V, (self.q, self.m) + V.shape[1:])
        return np.matmul(self._rows, V)

    def column_matrix(self, k):
        return self.column_rows(k)

    def column_weighted_grams(self, W, cols):
        cols = list(cols)
        R = self._rows[None] if self._shared else self._rows[cols]
        weighted = W[:, cols].T[:, :, None] * R
        return np.matmul(np.conj(R).transpose(0, 2, 1), weighted)

    def weighted_gram(self, W):
        self._check_columns(W, self.m, "W")
        if self._shared:
            w = W.sum(axis=1)
            return self._rows.conj().T @ (w[:, None] * self._rows)
        return super().weighted_gram(W)

    @cached_property
    def gram_stack(self):
        if self._shared:
            G = self._rows.conj().T @ self._rows
            return np.broadcast_to(G, (self.q, self.n, self.n))
        return super().gram_stack

    def take_rows(self, start, stop):
        if not 0 <= start < stop <= self.m:
            raise PartitionError(f"Row range [{start}, {stop}) is invalid for m={self.m}.")
        if self._shared:
            return GaussianEnsemble(self._rows[start:stop], q=self.q, seed=self.seed)
        return GaussianEnsemble(self._rows[:, start:stop], seed=self.seed)


class CdpEnsemble(MeasurementEnsemble):
    """
    Coded diffraction patterns: L random {1, -1, i, -i} masks per column, each
    followed by an unnormalized 2-D DFT of the n1 x n2 image, so m = n L.

    Vectors are images flattened in row-major order. The adjoint uses n times
    the inverse FFT, which is exactly the conjugate transpose of the forward DFT.

    Args:
        masks (np.ndarray): q x L x n1 x n2 stack, or L x n1 x n2 shared by every column.
        q (int, optional): Number of columns; required when ``masks`` is shared.
        seed (int, optional): Seed the masks were drawn from.
    """

    kind = "cdp"

    def __init__(self, masks: np.ndarray, q: Optional[int] = None, seed: Optional[int] = None):
        masks = np.asarray(masks, dtype=np.complex128)
        if masks.ndim == 4:
            self._shared = False
            self.q, self.L, self.n1, self.n2 = masks.shape
            if q is not None and q != self.q:
                raise DimensionError(f"masks hold {self.q} columns but q={q} was given.")
        elif masks.ndim == 3:
            if q is None or q < 1:
                raise DimensionError("Shared masks need the column count q.")
            self._shared = True
            self.L, self.n1, self.n2 = masks.shape
            self.q = q
        else:
            raise DimensionError(f"masks must be 3-D or 4-D, got shape {masks.shape}.")
        self.n = self.n1 * self.n2
        self.m = self.n * self.L
        self.seed = seed
        self._masks = masks
        logger.debug(f"CdpEnsemble {self.n1}x{self.n2} L={self.L} q={self.q} sharing={self.sharing}")

    @property
    def sharing(self) -> str:
        return "shared" if self._shared else "per-column"

    @property
    def masks(self) -> np.ndarray:
        return self._masks

    def column_masks(self, k: int) -> np.ndarray:
        if not 0 <= k < self.q:
            raise DimensionError(f"Column index {k} out of range for q={self.q}.")
        return self._masks if self._shared else self._masks[k]

    def forward(self, k, v):
        v = np.asarray(v)
        masks = self.column_masks(k)
        if v.ndim == 1:
            z = np.fft.fft2(masks * v.reshape(self.n1, self.n2))
            return z.reshape(self.m)
        p = v.shape[1]
        images = v.T.reshape(p, 1, self.n1, self.n2)
        z = np.fft.fft2(masks[None] * images)
        return z.reshape(p, self.m).T

    def adjoint(self, k, z):
        z = np.asarray(z)
        masks = np.conj(self.column_masks(k))
        if z.ndim == 1:
            planes = np.fft.ifft2(z.reshape(self.L, self.n1, self.n2)) * self.n
            return (masks * planes).sum(axis=0).reshape(self.n)
        p = z.shape[1]
        planes = np.fft.ifft2(z.T.reshape(p, self.L, self.n1, self.n2)) * self.n
        return (masks[None] * planes).sum(axis=1).reshape(p, self.n).T

    def forward_all(self, X):
        self._check_columns(X, self.n, "X")
        images = X.T.reshape(self.q, 1, self.n1, self.n2)
        masks = self._masks[None] if self._shared else self._masks
        return np.fft.fft2(masks * images).reshape(self.q, self.m).T

    def adjoint_all(self, Z):
        self._check_columns(Z, self.m, "Z")
        planes = np.fft.ifft2(Z.T.reshape(self.q, self.L, self.n1, self.n2)) * self.n
        masks = np.conj(self._masks[None] if self._shared else self._masks)
        return (masks * planes).sum(axis=1).reshape(self.q, self.n).T

    def take_rows(self, start, stop):
        if not 0 <= start < stop <= self.m or start % self.n or stop % self.n:
            raise PartitionError(
                f"CDP rows can only be split at multiples of n={self.n}; got [{start}, {stop})."
            )
        lo, hi = start // self.n, stop // self.n
        if self._shared:
            return CdpEnsemble(self._masks[lo:hi], q=self.q, seed=self.seed)
        return CdpEnsemble(self._masks[:, lo:hi], seed=self.seed)


class StackedEnsemble(MeasurementEnsemble):
    """
    Row-wise concatenation of ensembles over the same columns, used for the
    partitioned model: per-column vectors followed by a shared fresh block.
    """

    def __init__(self, parts: List[MeasurementEnsemble], m_fresh: int = 0):
        if not parts:
            raise ConfigurationError("A stacked ensemble needs at least one part.")
        first = parts[0]
        for part in parts[1:]:
            if part.n != first.n or part.q != first.q or part.is_complex != first.is_complex:
                raise DimensionError("Stacked ensemble parts must agree on n, q and field.")
        self.parts = list(parts)
        self.kind = first.kind
        self.n, self.q = first.n, first.q
        self.m = sum(part.m for part in parts)
        self.m_fresh = m_fresh
        self._offsets = np.cumsum([0] + [part.m for part in parts])

    @property
    def sharing(self) -> str:
        return "shared" if all(p.sharing == "shared" for p in self.parts) else "per-column"

    def _split(self, z):
        return [z[lo:hi] for lo, hi in zip(self._offsets[:-1], self._offsets[1:])]

    def forward(self, k, v):
        return np.concatenate([part.forward(k, v) for part in self.parts])

    def adjoint(self, k, z):
        return sum(part.adjoint(k, piece) for part, piece in zip(self.parts, self._split(z)))

    def forward_all(self, X):
        return np.concatenate([part.forward_all(X) for part in self.parts])

    def adjoint_all(self, Z):
        self._check_columns(Z, self.m, "Z")
        return sum(part.adjoint_all(piece) for part, piece in zip(self.parts, self._split(Z)))

    def forward_block(self, V):
        return np.concatenate([part.forward_block(V) for part in self.parts], axis=1)

    def column_weighted_grams(self, W, cols):
        return sum(
            part.column_weighted_grams(piece, cols)
            for part, piece in zip(self.parts, self._split(W))
        )

    def weighted_gram(self, W):
        return sum(part.weighted_gram(piece) for part, piece in zip(self.parts, self._split(W)))

    def take_rows(self, start, stop):
        if not 0 <= start < stop <= self.m:
            raise PartitionError(f"Row range [{start}, {stop}) is invalid for m={self.m}.")
        pieces = []
        for part, lo, hi in zip(self.parts, self._offsets[:-1], self._offsets[1:]):
            a, b = max(start, lo), min(stop, hi)
            if a < b:
                pieces.append(part.take_rows(int(a - lo), int(b - lo)))
        return pieces[0] if len(pieces) == 1 else StackedEnsemble(pieces)


def _gaussian_rows(rng: np.random.Generator, m: int, n: int, complex_valued: bool) -> np.ndarray:
    # Row i always consumes the same contiguous block of the column's stream.
    if complex_valued:
        g = rng.standard_normal((m, 2, n))
        return (g[:, 0, :] + 1j * g[:, 1, :]) / np.sqrt(2.0)
    return rng.standard_normal((m, n))


def _gaussian_block(kind, n, m, q, sharing, seed, stream) -> GaussianEnsemble:
    complex_valued = kind == "gaussian-complex"
    if sharing == "shared":
        rows = _gaussian_rows(stream_rng(seed, stream, 0), m, n, complex_valued)
        return GaussianEnsemble(rows, q=q, seed=seed)
    dtype = np.complex128 if complex_valued else np.float64
    rows = np.empty((q, m, n), dtype=dtype)
    for k in range(q):
        rows[k] = _gaussian_rows(stream_rng(seed, stream, k), m, n, complex_valued)
    return GaussianEnsemble(rows, seed=seed)


def _cdp_block(n1, n2, L, q, sharing, seed, stream) -> CdpEnsemble:
    if sharing == "shared":
        idx = stream_rng(seed, stream, 0).integers(0, 4, size=(L, n1, n2))
        return CdpEnsemble(_CDP_ALPHABET[idx], q=q, seed=seed)
    masks = np.empty((q, L, n1, n2), dtype=np.complex128)
    for k in range(q):
        masks[k] = _CDP_ALPHABET[stream_rng(seed, stream, k).integers(0, 4, size=(L, n1, n2))]
    return CdpEnsemble(masks, seed=seed)


def gen_ensemble(
    kind: EnsembleKind,
    n: int,
    m: int,
    q: int,
    sharing: Sharing = "per-column",
    seed: int = 0,
    cdp_dims: Optional[Tuple[int, int, int]] = None,
    m_fresh: int = 0,
) -> MeasurementEnsemble:
    """
    Generates a deterministic measurement ensemble.

    Args:
        kind (str): "gaussian-real", "gaussian-complex" or "cdp".
        n (int): Signal dimension.
        m (int): Measurements per column.
        q (int): Number of columns.
        sharing (str): "per-column" draws independent vectors for every (i, k);
            "shared" reuses column 1's vectors for every column.
        seed (int): Seed; vectors of column k depend only on (seed, k).
        cdp_dims (tuple, optional): (n1, n2, L) for the cdp kind.
        m_fresh (int): Extra shared rows appended for the partitioned model.

    Returns:
        MeasurementEnsemble: A StackedEnsemble when m_fresh > 0.

    Raises:
        ConfigurationError: On unknown kinds or inconsistent cdp dimensions.
    """
    if kind not in ("gaussian-real", "gaussian-complex", "cdp"):
        raise ConfigurationError(f"Unknown ensemble kind: {kind}")
    if sharing not in ("per-column", "shared"):
        raise ConfigurationError(f"Unknown sharing mode: {sharing}")
    if n < 1 or m < 1 or q < 1 or m_fresh < 0:
        raise DimensionError(f"Counts must be positive; got n={n}, m={m}, q={q}, m_fresh={m_fresh}.")

    if kind == "cdp":
        if cdp_dims is None or len(cdp_dims) != 3:
            raise ConfigurationError("The cdp kind requires cdp_dims=(n1, n2, L).")
        n1, n2, L = (int(d) for d in cdp_dims)
        if n1 * n2 != n or m != n * L:
            raise ConfigurationError(
                f"cdp_dims={cdp_dims} do not match n={n}, m={m}; need n1*n2 = n and m = n*L."
            )
        if m_fresh % n:
            raise ConfigurationError(f"CDP fresh measurements must be a multiple of n={n}, got {m_fresh}.")
        base = _cdp_block(n1, n2, L, q, sharing, seed, _MASK_STREAM)
        fresh = _cdp_block(n1, n2, m_fresh // n, q, "shared", seed, _FRESH_STREAM) if m_fresh else None
    else:
        base = _gaussian_block(kind, n, m, q, sharing, seed, _VECTOR_STREAM)
        fresh = _gaussian_block(kind, n, m_fresh, q, "shared", seed, _FRESH_STREAM) if m_fresh else None

    logger.info(f"Generated {kind} ensemble n={n} m={m} q={q} sharing={sharing} m_fresh={m_fresh} seed={seed}.")
    if fresh is None:
        return base
    return StackedEnsemble([base, fresh], m_fresh=m_fresh)


@dataclass(frozen=True, eq=False)
class Measurements:
    """
    Observed squared magnitudes.

    Attributes:
        y (np.ndarray): m_tot x q matrix; with ``m_fresh`` > 0 its last m_fresh
            rows come from the shared fresh vectors.
        noise_halfwidth (float): Halfwidth w of the additive uniform noise, 0 if noiseless.
        m_fresh (int): Number of trailing fresh rows.
    """
    y: np.ndarray
    noise_halfwidth: float = 0.0
    m_fresh: int = 0

    @property
    def m_init(self) -> int:
        return self.y.shape[0] - self.m_fresh

    @property
    def y_init(self) -> np.ndarray:
        return self.y[: self.m_init]

    @property
    def y_new(self) -> Optional[np.ndarray]:
        return self.y[self.m_init:] if self.m_fresh else None


@dataclass(frozen=True, eq=False)
class MeasurementPart:
    """One side of a partition: the ensemble rows and the matching measurements."""
    ensemble: Optional[MeasurementEnsemble]
    y: np.ndarray

    @property
    def m(self) -> int:
        return self.y.shape[0]


def measure(
    ens: MeasurementEnsemble, gt: GroundTruth, noise_halfwidth: float = 0.0, seed: int = 0
) -> Measurements:
    """
    Computes y_{i,k} = |a_{i,k}' x_k|^2 + w_{i,k}, with w iid uniform on
    [-noise_halfwidth, noise_halfwidth]. Noisy entries are not clipped.

    Raises:
        DimensionError: If the ensemble and the ground truth disagree on n or q.
        ConfigurationError: If noise_halfwidth is negative.
    """
    if ens.n != gt.n or ens.q != gt.q:
        raise DimensionError(
            f"Ensemble is {ens.n} x {ens.q} but the ground truth is {gt.n} x {gt.q}."
        )
    if noise_halfwidth < 0:
        raise ConfigurationError(f"noise_halfwidth must be >= 0, got {noise_halfwidth}.")
    y = np.abs(ens.forward_all(gt.X)) ** 2
    if noise_halfwidth > 0:
        rng = stream_rng(seed, _NOISE_STREAM)
        y = y + rng.uniform(-noise_halfwidth, noise_halfwidth, size=y.shape)
    return Measurements(y=y, noise_halfwidth=float(noise_halfwidth), m_fresh=ens.m_fresh)


def split_measurements(
    ens: MeasurementEnsemble, y: Union[Measurements, np.ndarray], m: int, m_fresh: int
) -> Tuple[MeasurementPart, MeasurementPart]:
    """
    Splits the rows into the first m (init part) and the last m_fresh (fresh part).

    Returns:
        tuple: (init part, fresh part). The fresh part has no ensemble and zero
        rows when m_fresh is 0.

    Raises:
        PartitionError: If m + m_fresh does not equal the number of rows.
    """
    y_arr = y.y if isinstance(y, Measurements) else np.asarray(y)
    total = y_arr.shape[0]
    if m < 1 or m_fresh < 0 or m + m_fresh != total or ens.m != total:
        raise PartitionError(
            f"Cannot split {total} rows (ensemble has {ens.m}) into m={m} and m_fresh={m_fresh}."
        )
    init = MeasurementPart(ens.take_rows(0, m), y_arr[:m])
    if m_fresh == 0:
        return init, MeasurementPart(None, y_arr[m:])
    return init, MeasurementPart(ens.take_rows(m, total), y_arr[m:])
