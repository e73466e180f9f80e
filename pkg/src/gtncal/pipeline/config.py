"""Experiment configuration: one JSON file drives every pipeline stage."""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import ParameterError

#: Calibrated-parameter box used for design generation and priors.
DEFAULT_BOX = {
    "eps_n": (0.1, 0.5),
    "f_n": (0.01, 0.05),
    "f_c": (0.01, 0.15),
    "f_f": (0.15, 0.35),
}


@dataclass(frozen=True)
class NoiseConfig:
    sigma_fd: float = 12.0  # N, iid on resampled forces
    sigma_dic: float = 2.0e-4  # strain, iid on snapshot cells
    sigma_df: float | None = None  # mm; None = 1% of the training d_f range


@dataclass(frozen=True)
class TmcmcSettings:
    particles: int = 2000
    runs: int = 8
    mh_steps: int = 5
    proposal_scale: float = 0.04
    cov_target: float = 1.0
    max_stages: int = 60
    kde_max_centers: int = 2000


@dataclass(frozen=True)
class SimulatorConfig:
    nx: int = 72
    ny: int = 36
    kappa: float = 2.0
    plastic_gain: float = 5.0
    loc_gain: float = 100.0
    amp_cap: float = 25.0
    triaxiality: float = 1.0
    far_stride: int = 6
    max_displacement: float = 8.0
    time_step: float = 0.1953125


@dataclass(frozen=True)
class ExperimentConfig:
    output_dir: str = "runs/default"
    seed: int = 20240821
    design_size: int = 400
    train_fraction: float = 0.75
    pca_threshold_fd: float = 0.9999
    pca_threshold_field: float = 0.9999
    n_stations: int = 200
    informativeness_metric: str = "hpd_width_product"  # or "cov_determinant"
    box: dict = field(default_factory=lambda: dict(DEFAULT_BOX))
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    tmcmc: TmcmcSettings = field(default_factory=TmcmcSettings)
    simulator: SimulatorConfig = field(default_factory=SimulatorConfig)
    truth_theta: tuple[float, float, float, float] = (0.30, 0.030, 0.09, 0.26)

    def __post_init__(self) -> None:
        if self.design_size < 16:
            raise ParameterError("design_size must be at least 16")
        if not 0.0 < self.train_fraction < 1.0:
            raise ParameterError("train_fraction must lie in (0, 1)")
        for thr in (self.pca_threshold_fd, self.pca_threshold_field):
            if not 0.0 < thr <= 1.0:
                raise ParameterError("PCA thresholds must lie in (0, 1]")
        if self.informativeness_metric not in ("hpd_width_product", "cov_determinant"):
            raise ParameterError("unknown informativeness metric")
        box = self.box_array()
        if np.any(box[:, 0] >= box[:, 1]):
            raise ParameterError("every box lower bound must lie below its upper bound")
        t = self.truth_theta
        if not (len(t) == 4 and t[2] < t[3]):
            raise ParameterError("truth_theta must be 4 values with f_c < f_f")

    def box_array(self) -> np.ndarray:
        from ..material import PARAM_NAMES

        return np.array([self.box[name] for name in PARAM_NAMES], dtype=float)

    def out(self, *parts: str) -> Path:
        return Path(self.output_dir).joinpath(*parts)

    def stage_seed(self, stage: str) -> int:
        """Stable per-stage seed derived from the master seed."""
        return int(
            np.random.SeedSequence([self.seed, zlib.crc32(stage.encode())]).generate_state(1)[0]
        )

    def loading_program(self):
        from ..simulator import LoadingProgram

        return LoadingProgram(
            max_displacement=self.simulator.max_displacement,
            time_step=self.simulator.time_step,
        )

    def simulator_settings(self):
        from ..simulator import SimulatorSettings

        s = self.simulator
        return SimulatorSettings(
            nx=s.nx,
            ny=s.ny,
            kappa=s.kappa,
            plastic_gain=s.plastic_gain,
            loc_gain=s.loc_gain,
            amp_cap=s.amp_cap,
            triaxiality=s.triaxiality,
            far_stride=s.far_stride,
        )

    def tmcmc_config(self, seed: int):
        from ..bayes.tmcmc import TmcmcConfig

        t = self.tmcmc
        return TmcmcConfig(
            particles=t.particles,
            runs=t.runs,
            mh_steps=t.mh_steps,
            proposal_scale=t.proposal_scale,
            cov_target=t.cov_target,
            max_stages=t.max_stages,
            seed=seed,
        )

    def to_json(self) -> str:
        payload = asdict(self)
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        raw = json.loads(text)
        return cls._from_dict(raw)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    @classmethod
    def _from_dict(cls, raw: dict) -> "ExperimentConfig":
        kwargs = dict(raw)
        if "noise" in kwargs:
            kwargs["noise"] = NoiseConfig(**kwargs["noise"])
        if "tmcmc" in kwargs:
            kwargs["tmcmc"] = TmcmcSettings(**kwargs["tmcmc"])
        if "simulator" in kwargs:
            kwargs["simulator"] = SimulatorConfig(**kwargs["simulator"])
        if "box" in kwargs:
            kwargs["box"] = {k: tuple(v) for k, v in kwargs["box"].items()}
        if "truth_theta" in kwargs:
            kwargs["truth_theta"] = tuple(kwargs["truth_theta"])
        return cls(**kwargs)

    def override(self, dotted: dict[str, object]) -> "ExperimentConfig":
        """Apply 'a.b=value' style overrides (CLI flags)."""
        raw = json.loads(self.to_json())
        for key, value in dotted.items():
            parts = key.split(".")
            node = raw
            for p in parts[:-1]:
                if p not in node:
                    raise ParameterError(f"unknown config section {p!r} in {key!r}")
                node = node[p]
            if parts[-1] not in node:
                raise ParameterError(f"unknown config key {key!r}")
            node[parts[-1]] = value
        return self._from_dict(raw)
