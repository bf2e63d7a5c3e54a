"""Datasets, LIBSVM I/O, sharding and the ridge regression objective."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np
import scipy.sparse as sp

from .model import Allocation


class ParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rows of a CSR matrix (0-based columns) with one label per row."""

    X: sp.csr_matrix
    y: np.ndarray
    w_true: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"{self.X.shape[0]} rows but {self.y.shape[0]} labels")
        if not np.all(np.isfinite(self.X.data)) or not np.all(np.isfinite(self.y)):
            raise ValueError("dataset contains non-finite values")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, rows: np.ndarray) -> Dataset:
        return Dataset(self.X[rows], self.y[rows], self.w_true)

    def same_as(self, other: Dataset) -> bool:
        a, b = self.X.tocsr(), other.X.tocsr()
        a.sort_indices()
        b.sort_indices()
        return (
            a.shape == b.shape
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
            and np.array_equal(self.y, other.y)
        )


def parse_libsvm(stream: TextIO | str, *, dim: int | None = None) -> Dataset:
    """Parse ``label idx:val idx:val ...`` lines (1-based, strictly increasing indices).

    ``#`` starts a comment; blank lines are skipped.  ``dim`` forces the column
    count, otherwise the largest index seen is used.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    labels: list[float] = []
    indptr = [0]
    cols: list[int] = []
    vals: list[float] = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *pairs = line.split()
        labels.append(_number(head, lineno, "label"))
        last = 0
        for pair in pairs:
            idx_s, sep, val_s = pair.partition(":")
            if not sep:
                raise ParseError(lineno, f"malformed pair {pair!r}")
            try:
                idx = int(idx_s)
            except ValueError:
                raise ParseError(lineno, f"malformed index in {pair!r}") from None
            if idx < 1:
                raise ParseError(lineno, f"index {idx} < 1")
            if idx <= last:
                raise ParseError(lineno, f"index {idx} not increasing (previous {last})")
            last = idx
            cols.append(idx - 1)
            vals.append(_number(val_s, lineno, f"value in {pair!r}"))
        indptr.append(len(cols))
    width = max(cols, default=-1) + 1
    if dim is not None:
        if dim < width:
            raise ValueError(f"dim={dim} smaller than largest index {width}")
        width = dim
    X = sp.csr_matrix(
        (np.asarray(vals, dtype=float), np.asarray(cols, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(labels), width),
    )
    return Dataset(X, np.asarray(labels, dtype=float))


def _number(text: str, lineno: int, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(lineno, f"non-numeric {what}: {text!r}") from None
    if not math.isfinite(v):
        raise ParseError(lineno, f"non-finite {what}: {text!r}")
    return v


def read_libsvm(path, *, dim: int | None = None) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return parse_libsvm(fh, dim=dim)


def serialize_libsvm(data: Dataset) -> str:
    X = data.X.tocsr()
    X.sort_indices()
    out = []
    for i in range(len(data)):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        pairs = " ".join(f"{j + 1}:{float(v)!r}" for j, v in zip(X.indices[lo:hi], X.data[lo:hi]))
        out.append(f"{float(data.y[i])!r} {pairs}".rstrip())
    return "\n".join(out) + "\n"


def gen_synthetic(n_samples: int, dim: int, noise_sd: float = 0.1, seed: int = 0) -> Dataset:
    """``y = X w_true + noise`` with standard normal ``X`` and ``w_true``."""
    if n_samples < 1 or dim < 1:
        raise ValueError("n_samples and dim must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_samples, dim))
    w = rng.standard_normal(dim)
    y = X @ w + noise_sd * rng.standard_normal(n_samples)
    return Dataset(sp.csr_matrix(X), y, w)


@dataclass(frozen=True, eq=False)
class ShardSet:
    shards: tuple[Dataset, ...]
    permutation: np.ndarray


def shard(data: Dataset, alloc: Allocation | Sequence[int], seed: int = 0) -> ShardSet:
    """Seeded shuffle, then contiguous blocks of sizes ``alloc.b`` (server first)."""
    sizes = list(alloc.b if isinstance(alloc, Allocation) else alloc)
    if sum(sizes) != len(data):
        raise ValueError(f"allocation sums to {sum(sizes)}, dataset has {len(data)} rows")
    perm = np.random.default_rng(seed).permutation(len(data))
    bounds = np.cumsum([0, *sizes])
    shards = tuple(data.subset(perm[a:b]) for a, b in zip(bounds[:-1], bounds[1:]))
    return ShardSet(shards, perm)


@dataclass(frozen=True, eq=False)
class RidgeProblem:
    """``(1/2b) ||X w - y||^2 + (lam/2) ||w||^2`` over the rows of ``data``."""

    data: Dataset
    lam: float

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")

    @property
    def b(self) -> int:
        return len(self.data)

    @property
    def dim(self) -> int:
        return self.data.dim

    def gram(self) -> np.ndarray:
        """Dense ``X^T X / b``."""
        X = self.data.X
        if self.b == 0:
            return np.zeros((self.dim, self.dim))
        return np.asarray((X.T @ X).todense()) / self.b

    def xty(self) -> np.ndarray:
        if self.b == 0:
            return np.zeros(self.dim)
        return np.asarray(self.data.X.T @ self.data.y).ravel() / self.b

    def hessian(self) -> np.ndarray:
        return self.gram() + self.lam * np.eye(self.dim)

    def solve(self) -> np.ndarray:
        """Exact minimizer by a dense linear solve."""
        return np.linalg.solve(self.hessian(), self.xty())


def ridge_value_grad(problem: RidgeProblem, w: np.ndarray) -> tuple[float, np.ndarray]:
    w = np.asarray(w, dtype=float)
    if w.shape != (problem.dim,):
        raise ValueError(f"w has shape {w.shape}, expected ({problem.dim},)")
    X, y = problem.data.X, problem.data.y
    r = X @ w - y
    b = max(problem.b, 1)
    value = 0.5 * float(r @ r) / b + 0.5 * problem.lam * float(w @ w)
    grad = np.asarray(X.T @ r).ravel() / b + problem.lam * w
    return value, grad


class PowerIterationError(ArithmeticError):
    pass


def power_iteration(matvec, dim: int, *, tol: float = 1e-8, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD operator given by ``matvec``."""
    v = np.random.default_rng(seed).standard_normal(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    resid = math.inf
    for _ in range(max_iter):
        w = matvec(v)
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        resid = float(np.linalg.norm(w - lam * v))
        if resid <= tol * max(abs(lam), 1e-300):
            return lam
        v = w / nw
    raise PowerIterationError(f"power iteration did not converge, residual {resid:.3e}")


def spectral_constants(problem: RidgeProblem, *, mu_from_spectrum: bool = False) -> tuple[float, float]:
    """``L = lambda_max(X^T X / N) + lam`` and ``mu = lam``.

    With ``mu_from_spectrum`` the strong-convexity constant is
    ``lambda_min(X^T X / N) + lam`` instead.
    """
    if problem.b == 0:
        raise ValueError("empty dataset")
    X = problem.data.X
    N = problem.b
    top = power_iteration(lambda v: np.asarray(X.T @ (X @ v)).ravel() / N, problem.dim)
    L = top + problem.lam
    if mu_from_spectrum:
        mu = float(np.linalg.eigvalsh(problem.gram())[0]) + problem.lam
    else:
        mu = problem.lam
    return L, mu


def hessian_gap(full: RidgeProblem, part: RidgeProblem) -> float:
    """Spectral norm of the Hessian difference between two ridge objectives."""
    diff = full.gram() - part.gram()
    return float(np.max(np.abs(np.linalg.eigvalsh(diff))))


def stack(datasets: Iterable[Dataset]) -> Dataset:
    parts = list(datasets)
    return Dataset(sp.vstack([d.X for d in parts]).tocsr(), np.concatenate([d.y for d in parts]))
