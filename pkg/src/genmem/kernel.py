from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KernelSpec:
    """Generalization kernel: ``linear`` (dot product) or ``rbf`` exp(-sigma |x - z|^2)."""

    kind: str = "linear"
    sigma: float | None = None

    def __post_init__(self):
        if self.kind == "linear":
            if self.sigma is not None:
                raise ValueError("linear kernel takes no sigma")
        elif self.kind == "rbf":
            if self.sigma is None or not self.sigma > 0:
                raise ValueError(f"rbf kernel needs sigma > 0, got {self.sigma}")
            object.__setattr__(self, "sigma", float(self.sigma))
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind} if self.kind == "linear" else {"kind": self.kind, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(d["kind"], d.get("sigma"))


def linear() -> KernelSpec:
    return KernelSpec("linear")


def rbf(sigma: float) -> KernelSpec:
    return KernelSpec("rbf", sigma)


def sq_distances(A, B) -> np.ndarray:
    """Pairwise squared Euclidean distances from explicit differences.

    Each entry is computed the same way whether it is requested alone or
    inside a full matrix, so row-wise and matrix evaluations agree bitwise.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"feature dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    out = np.empty((A.shape[0], B.shape[0]))
    chunk = max(1, 2_000_000 // max(1, B.shape[0] * B.shape[1]))
    for start in range(0, A.shape[0], chunk):
        diff = A[start:start + chunk, None, :] - B[None, :, :]
        out[start:start + chunk] = (diff * diff).sum(axis=-1)
    return out


def eval_kernel(spec: KernelSpec, x, z) -> float:
    x = np.asarray(x, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if x.shape != z.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {z.shape[0]}")
    if spec.kind == "linear":
        return float(x @ z)
    return float(np.exp(-spec.sigma * sq_distances(x[None, :], z[None, :])[0, 0]))


def gram(spec: KernelSpec, A, B=None) -> np.ndarray:
    """Kernel matrix with entry (i, j) = K(A_i, B_j); ``B`` defaults to ``A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"feature dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if spec.kind == "linear":
        G = A @ B.T
        if B is A:
            G = 0.5 * (G + G.T)
        return G
    return np.exp(-spec.sigma * sq_distances(A, B))
