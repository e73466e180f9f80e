"""SVD-based principal component analysis with a deterministic sign choice.

Input rows are expected to be preprocessed (z-scored or scaled) feature
vectors; the fit still removes the column mean it sees, so projecting the
training mean gives exactly zero scores.  The retained dimension is the
smallest k whose cumulative explained variance reaches the threshold.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import AlignmentError, InsufficientDataError, NumericError

_ORTHO_TOL = 1.0e-10


@dataclass
class PcaBasis:
    """Truncated orthonormal basis with variance bookkeeping."""

    components: np.ndarray  # (n_features, k), orthonormal columns
    singular_values: np.ndarray  # all r singular values
    explained_variance_ratio: np.ndarray  # all r ratios, descending
    mean: np.ndarray  # column mean of the fitted matrix
    k: int
    variance_threshold: float

    def __post_init__(self) -> None:
        if self.k != self.components.shape[1]:
            raise AlignmentError("k must match the retained component count")
        if self.k:
            gram = self.components.T @ self.components
            if np.max(np.abs(gram - np.eye(self.k))) > _ORTHO_TOL:
                raise NumericError("retained components are not orthonormal")

    @property
    def n_features(self) -> int:
        return self.components.shape[0]

    def retained_variance(self) -> float:
        return float(self.explained_variance_ratio[: self.k].sum())


def pca_fit(z: np.ndarray, variance_threshold: float = 0.99) -> PcaBasis:
    """Fit a basis on preprocessed rows; retain the fewest components whose
    cumulative explained variance reaches the threshold."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[0] < 2:
        raise InsufficientDataError("PCA fit needs a matrix with >= 2 rows")
    if not np.all(np.isfinite(z)):
        raise NumericError("PCA input contains non-finite entries")
    if not 0.0 < variance_threshold <= 1.0:
        raise ValueError("variance_threshold must lie in (0, 1]")
    mean = z.mean(axis=0)
    centered = z - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    var = svals**2
    total = float(var.sum())
    if total <= 0.0:
        warnings.warn("zero total variance; retaining no components", stacklevel=2)
        return PcaBasis(
            components=np.zeros((z.shape[1], 0)),
            singular_values=svals,
            explained_variance_ratio=np.zeros_like(svals),
            mean=mean,
            k=0,
            variance_threshold=variance_threshold,
        )
    ratios = var / total
    cumulative = np.cumsum(ratios)
    k = int(np.searchsorted(cumulative, variance_threshold - 1e-12) + 1)
    # Drop numerically-zero directions even at threshold 1.0.
    positive = svals > svals[0] * 1e-12
    k = min(k, int(np.count_nonzero(positive)))
    components = vt[:k].T.copy()
    # Sign convention: the largest-magnitude entry of each component is positive.
    for j in range(k):
        col = components[:, j]
        if col[int(np.argmax(np.abs(col)))] < 0.0:
            components[:, j] = -col
    return PcaBasis(
        components=components,
        singular_values=svals,
        explained_variance_ratio=ratios,
        mean=mean,
        k=k,
        variance_threshold=variance_threshold,
    )


def pca_project_vector(basis: PcaBasis, vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.shape[-1] != basis.n_features:
        raise AlignmentError(
            f"vector length {vec.shape[-1]} does not match basis ({basis.n_features})"
        )
    return (vec - basis.mean) @ basis.components


def pca_reconstruct_vector(basis: PcaBasis, scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    if scores.shape[-1] != basis.k:
        raise AlignmentError(f"score length {scores.shape[-1]} does not match k = {basis.k}")
    return scores @ basis.components.T + basis.mean


def save_basis(path: str | Path, basis: PcaBasis, extra: dict | None = None) -> None:
    """Persist as a JSON header plus CSV matrix payloads (no binary formats)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    header = {
        "n_features": basis.n_features,
        "k": basis.k,
        "variance_threshold": basis.variance_threshold,
        "explained_variance_ratio": basis.explained_variance_ratio.tolist(),
        "singular_values": basis.singular_values.tolist(),
    }
    if extra:
        header.update(extra)
    (path / "basis.json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    np.savetxt(path / "components.csv", basis.components, fmt="%.17g", delimiter=",")
    np.savetxt(path / "mean.csv", basis.mean[None, :], fmt="%.17g", delimiter=",")


def load_basis(path: str | Path) -> tuple[PcaBasis, dict]:
    path = Path(path)
    header = json.loads((path / "basis.json").read_text())
    components = np.loadtxt(path / "components.csv", delimiter=",", ndmin=2)
    mean = np.loadtxt(path / "mean.csv", delimiter=",", ndmin=2)[0]
    if header["k"] == 0:
        components = np.zeros((header["n_features"], 0))
    basis = PcaBasis(
        components=components,
        singular_values=np.asarray(header["singular_values"]),
        explained_variance_ratio=np.asarray(header["explained_variance_ratio"]),
        mean=mean,
        k=header["k"],
        variance_threshold=header["variance_threshold"],
    )
    return basis, header
