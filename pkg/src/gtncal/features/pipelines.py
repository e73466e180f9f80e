"""Modality pipelines: raw observation -> standardized PC-score vector.

The FD pipeline segments a curve at Point Y, resamples 200 forces on the
unit axis, z-scores them with training statistics, projects onto the
truncated basis, and appends the failure displacement (unstandardized, mm).
The field pipeline scales strain components for variance balance and
projects the flattened snapshot.  Both pipelines persist as JSON + CSV and
expose the linear preprocessing map needed for noise propagation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import AlignmentError
from ..simulator import CurveSegment, StrainSnapshot
from . import pca as _pca
from .curves import locate_yield_point, resample_segment
from .fields import flatten_field, unflatten_field
from .pca import PcaBasis
from .standardize import Standardizer

FD_TAG = "FD"
FIELD_TAG = "FIELD"


@dataclass(frozen=True)
class ScoreVector:
    """Low-dimensional representation of one observation."""

    modality: str
    scores: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=float))
        if self.modality not in (FD_TAG, FIELD_TAG):
            raise AlignmentError(f"unknown modality tag {self.modality!r}")
        if not np.all(np.isfinite(self.scores)):
            raise AlignmentError("score vector has non-finite entries")

    def __len__(self) -> int:
        return self.scores.size


@dataclass
class FdFeaturePipeline:
    """Curve segment -> [alpha_1..alpha_k, d_f]."""

    standardizer: Standardizer
    basis: PcaBasis
    n_stations: int = 200

    @classmethod
    def fit(
        cls,
        curves: list[CurveSegment],
        n_stations: int = 200,
        variance_threshold: float = 0.99,
    ) -> tuple["FdFeaturePipeline", np.ndarray]:
        """Fit on training curves; returns the pipeline and the score table
        (one row per curve, d_f appended)."""
        rows = []
        for curve in curves:
            yp = locate_yield_point(curve)
            rows.append(resample_segment(curve, yp, n_stations))
        forces = np.stack(rows)
        standardizer = Standardizer.fit(forces)
        z = standardizer.apply(forces)
        basis = _pca.pca_fit(z, variance_threshold)
        pipe = cls(standardizer=standardizer, basis=basis, n_stations=n_stations)
        table = np.column_stack(
            [
                _pca.pca_project_vector(basis, z),
                [c.failure_displacement for c in curves],
            ]
        )
        return pipe, table

    @property
    def n_outputs(self) -> int:
        return self.basis.k + 1

    def encode(self, curve: CurveSegment) -> ScoreVector:
        yp = locate_yield_point(curve)
        forces = resample_segment(curve, yp, self.n_stations)
        scores = _pca.pca_project_vector(self.basis, self.standardizer.apply(forces))
        return ScoreVector(FD_TAG, np.append(scores, curve.failure_displacement))

    def decode(self, scores: np.ndarray) -> np.ndarray:
        """PC scores (without d_f) -> resampled force vector."""
        z = _pca.pca_reconstruct_vector(self.basis, np.asarray(scores, dtype=float))
        return self.standardizer.invert(z)

    def preprocess_scale(self) -> np.ndarray:
        """Diagonal of the linear preprocessing map applied before projection."""
        return 1.0 / self.standardizer.std

    def save(self, path: str | Path) -> None:
        path = Path(path)
        _pca.save_basis(
            path,
            self.basis,
            extra={"modality": FD_TAG, "n_stations": self.n_stations},
        )
        np.savetxt(path / "standardizer_mean.csv", self.standardizer.mean[None, :],
                   fmt="%.17g", delimiter=",")
        np.savetxt(path / "standardizer_std.csv", self.standardizer.std[None, :],
                   fmt="%.17g", delimiter=",")

    @classmethod
    def load(cls, path: str | Path) -> "FdFeaturePipeline":
        path = Path(path)
        basis, header = _pca.load_basis(path)
        mean = np.loadtxt(path / "standardizer_mean.csv", delimiter=",", ndmin=2)[0]
        std = np.loadtxt(path / "standardizer_std.csv", delimiter=",", ndmin=2)[0]
        return cls(
            standardizer=Standardizer(mean=mean, std=std),
            basis=basis,
            n_stations=header["n_stations"],
        )


@dataclass
class FieldFeaturePipeline:
    """Strain snapshot -> [beta_1..beta_k]."""

    basis: PcaBasis
    mask: np.ndarray
    scale_e11: float
    scale_e12: float
    eps_ref: dict[str, float]

    @classmethod
    def fit(
        cls,
        snapshots: list[StrainSnapshot],
        variance_threshold: float = 0.99,
        scales: tuple[float, float] | None = None,
    ) -> tuple["FieldFeaturePipeline", np.ndarray]:
        from .fields import field_reference_magnitudes, field_scaling_factors

        mask = snapshots[0].mask.copy()
        if scales is None:
            scales = field_scaling_factors(snapshots, mask)
        s11, s12 = scales
        flat = np.stack([flatten_field(s, mask, s11, s12) for s in snapshots])
        basis = _pca.pca_fit(flat, variance_threshold)
        eps_ref = field_reference_magnitudes(snapshots, mask)
        pipe = cls(basis=basis, mask=mask, scale_e11=s11, scale_e12=s12, eps_ref=eps_ref)
        return pipe, _pca.pca_project_vector(basis, flat)

    @property
    def n_outputs(self) -> int:
        return self.basis.k

    def encode(self, snap: StrainSnapshot) -> ScoreVector:
        flat = flatten_field(snap, self.mask, self.scale_e11, self.scale_e12)
        return ScoreVector(FIELD_TAG, _pca.pca_project_vector(self.basis, flat))

    def decode(self, scores: np.ndarray) -> dict[str, np.ndarray]:
        """PC scores -> per-component masked-cell strain vectors."""
        flat = _pca.pca_reconstruct_vector(self.basis, np.asarray(scores, dtype=float))
        return unflatten_field(flat, self.mask, self.scale_e11, self.scale_e12)

    def preprocess_scale(self) -> np.ndarray:
        p = int(self.mask.sum())
        return np.concatenate(
            [np.full(p, self.scale_e11), np.full(p, self.scale_e12), np.ones(p)]
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        _pca.save_basis(
            path,
            self.basis,
            extra={
                "modality": FIELD_TAG,
                "scale_e11": self.scale_e11,
                "scale_e12": self.scale_e12,
                "eps_ref": self.eps_ref,
                "mask_shape": list(self.mask.shape),
            },
        )
        np.savetxt(path / "mask.csv", self.mask.astype(int), fmt="%d", delimiter=",")

    @classmethod
    def load(cls, path: str | Path) -> "FieldFeaturePipeline":
        path = Path(path)
        basis, header = _pca.load_basis(path)
        mask = np.loadtxt(path / "mask.csv", delimiter=",", ndmin=2).astype(bool)
        return cls(
            basis=basis,
            mask=mask,
            scale_e11=header["scale_e11"],
            scale_e12=header["scale_e12"],
            eps_ref=header["eps_ref"],
        )
