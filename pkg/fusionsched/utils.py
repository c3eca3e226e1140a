import hashlib
from typing import Optional

import numpy as np

PSD_TOL = 1e-9


def sanitize_name(name: str) -> str:
    """
    Sanitize a label (policy, variation, run name) to be filesystem-friendly.
    """
    return "".join(c for c in name if c.isalnum() or c in ('_', '-', '.')).rstrip('.')


def derive_seed(master_seed: int, label: str) -> int:
    """
    Derive an independent sub-seed for one consumer of randomness.

    The master seed and the consumer label are hashed together, so adding a
    new consumer never shifts the streams of existing ones.
    """
    digest = hashlib.sha256(f"{int(master_seed)}/{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(master_seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, label))


def symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def min_eigenvalue(mat: np.ndarray) -> float:
    return float(np.min(np.linalg.eigvalsh(symmetrize(mat))))


def is_psd(mat: np.ndarray, tol: float = PSD_TOL) -> bool:
    if not np.all(np.isfinite(mat)):
        return False
    return min_eigenvalue(mat) >= -tol


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """
    Square-root factor S with S @ S.T == mat for a PSD matrix.

    Eigenvalues are clipped at zero, so rank-deficient or slightly indefinite
    (round-off) inputs still yield a real factor.
    """
    vals, vecs = np.linalg.eigh(symmetrize(mat))
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


def as_vector(value, length: Optional[int] = None, label: str = "vector") -> np.ndarray:
    vec = np.atleast_1d(np.asarray(value, dtype=float)).reshape(-1)
    if length is not None and vec.shape[0] != length:
        raise ValueError(f"{label} must have length {length}, got {vec.shape[0]}")
    return vec
