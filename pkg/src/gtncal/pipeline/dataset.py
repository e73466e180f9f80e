"""Dataset stages: design -> simulate -> reduce (features) -> train (GPs).

Each stage verifies the content hashes of the artifacts it consumes and
registers what it produces, so a stale or edited artifact fails fast with an
ArtifactError.  Simulation is chunked in fixed blocks; the chunking (and
therefore every floating-point result) is independent of the worker count.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..emulator import HyperparamBounds, train_bundle
from ..emulator.bundle import load_bundle, save_bundle
from ..errors import ArtifactError, SimulationIncompleteError
from ..features.pipelines import FdFeaturePipeline, FieldFeaturePipeline
from ..material import PARAM_NAMES, GtnParams
from ..simulator import (
    SimulationResult,
    simulate_batch,
    write_curve_csv,
    write_sidecar_json,
    write_snapshot_csv,
)
from .config import ExperimentConfig
from .design import lhs_design
from .manifest import RunManifest

_FMT = "%.17g"
_SIM_CHUNK = 64
_MAX_EXCLUDED_FRACTION = 0.05


def _manifest(config: ExperimentConfig) -> RunManifest:
    root = config.out()
    root.mkdir(parents=True, exist_ok=True)
    try:
        manifest = RunManifest.load(root)
        if manifest.config_hash != config.config_hash():
            raise ArtifactError(
                "config hash changed; refusing to mix artifacts from different configs"
            )
    except ArtifactError as exc:
        if "no manifest" not in str(exc):
            raise
        manifest = RunManifest.create(root, config.config_hash())
        config.save(root / "config.json")
    return manifest


def stage_design(config: ExperimentConfig) -> Path:
    manifest = _manifest(config)
    seed = config.stage_seed("design")
    theta, redraws = lhs_design(config.design_size, config.box_array(), seed)
    path = config.out("design")
    path.mkdir(parents=True, exist_ok=True)
    out = path / "design.csv"
    header = "row_id," + ",".join(PARAM_NAMES)
    rows = np.column_stack([np.arange(theta.shape[0]), theta])
    np.savetxt(out, rows, fmt=["%d"] + [_FMT] * 4, delimiter=",", header=header, comments="")
    (path / "design.json").write_text(
        json.dumps({"seed": seed, "redraws": redraws, "n": int(theta.shape[0])},
                   indent=2, sort_keys=True) + "\n"
    )
    manifest.add("design/design.csv", out, stage="design")
    manifest.add("design/design.json", path / "design.json", stage="design")
    manifest.seeds["design"] = seed
    manifest.save()
    return out


def load_design(config: ExperimentConfig) -> np.ndarray:
    manifest = RunManifest.load(config.out())
    manifest.verify(["design/design.csv"])
    data = np.loadtxt(manifest.path_of("design/design.csv"), delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1:]


def _simulate_chunk(args) -> list:
    theta_chunk, config_json = args
    config = ExperimentConfig.from_json(config_json)
    params = [GtnParams.from_array(row) for row in theta_chunk]
    return simulate_batch(
        params,
        program=config.loading_program(),
        settings=config.simulator_settings(),
    )


def stage_simulate(config: ExperimentConfig, jobs: int = 1) -> dict:
    manifest = _manifest(config)
    manifest.verify(["design/design.csv"])
    theta = load_design(config)
    sims_dir = config.out("sims")
    sims_dir.mkdir(parents=True, exist_ok=True)

    chunks = [
        (theta[i : i + _SIM_CHUNK], config.to_json())
        for i in range(0, theta.shape[0], _SIM_CHUNK)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunk_results = list(pool.map(_simulate_chunk, chunks))
    else:
        chunk_results = [_simulate_chunk(c) for c in chunks]

    completed, excluded = [], []
    row = 0
    for results in chunk_results:
        for res in results:
            if isinstance(res, SimulationIncompleteError):
                excluded.append({"row_id": row, "reason": str(res)})
            else:
                _write_sim(sims_dir, row, res)
                completed.append(row)
            row += 1
    index = {
        "completed": completed,
        "excluded": excluded,
        "total": row,
    }
    if len(excluded) > _MAX_EXCLUDED_FRACTION * row:
        raise SimulationIncompleteError(
            f"{len(excluded)} of {row} simulations incomplete "
            f"(> {100 * _MAX_EXCLUDED_FRACTION:.0f}%); aborting dataset build"
        )
    if excluded:
        warnings.warn(f"excluded {len(excluded)} incomplete simulation row(s)", stacklevel=2)
    (sims_dir / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    manifest.add_tree("sims", sims_dir, stage="simulate")
    manifest.save()
    return index


def _write_sim(sims_dir: Path, row: int, res: SimulationResult) -> None:
    write_curve_csv(sims_dir / f"curve_{row:04d}.csv", res.curve)
    write_snapshot_csv(sims_dir / f"snapshot_{row:04d}.csv", res.snapshot)
    write_sidecar_json(sims_dir / f"meta_{row:04d}.json", res)


def _load_sims(config: ExperimentConfig, rows: list[int]):
    from ..simulator import (
        LoadingProgram,
        SimulatorSettings,
        build_templates,
        read_curve_csv,
        read_snapshot_csv,
        StrainSnapshot,
    )

    sims_dir = config.out("sims")
    tpl = build_templates(config.loading_program(), config.simulator_settings())
    reference = StrainSnapshot(
        nx=config.simulator.nx,
        ny=config.simulator.ny,
        x=tpl.x,
        y=tpl.y,
        mask=tpl.mask,
        e11=np.zeros_like(tpl.x),
        e12=np.zeros_like(tpl.x),
        e22=np.zeros_like(tpl.x),
    )
    curves, snaps = [], []
    for row in rows:
        meta = json.loads((sims_dir / f"meta_{row:04d}.json").read_text())
        curves.append(
            read_curve_csv(sims_dir / f"curve_{row:04d}.csv", meta["failure_displacement"])
        )
        snaps.append(read_snapshot_csv(sims_dir / f"snapshot_{row:04d}.csv", reference))
    return curves, snaps


def train_test_split(config: ExperimentConfig, completed: list[int]) -> tuple[list[int], list[int]]:
    rng = np.random.default_rng(config.stage_seed("split"))
    order = rng.permutation(len(completed))
    n_train = int(round(config.train_fraction * len(completed)))
    train = sorted(completed[i] for i in order[:n_train])
    test = sorted(completed[i] for i in order[n_train:])
    return train, test


def stage_reduce(config: ExperimentConfig) -> dict:
    """Fit feature pipelines on the training split only; score every row."""
    manifest = _manifest(config)
    manifest.verify_prefix("sims")
    index = json.loads((config.out("sims") / "index.json").read_text())
    completed = index["completed"]
    train_rows, test_rows = train_test_split(config, completed)

    curves_train, snaps_train = _load_sims(config, train_rows)
    fd_pipe, _ = FdFeaturePipeline.fit(
        curves_train, n_stations=config.n_stations, variance_threshold=config.pca_threshold_fd
    )
    field_pipe, _ = FieldFeaturePipeline.fit(
        snaps_train, variance_threshold=config.pca_threshold_field
    )

    features_dir = config.out("features")
    fd_pipe.save(features_dir / "fd")
    field_pipe.save(features_dir / "field")

    all_rows = sorted(completed)
    curves, snaps = _load_sims(config, all_rows)
    split = {r: ("train" if r in set(train_rows) else "test") for r in all_rows}
    fd_scores = np.stack([fd_pipe.encode(c).scores for c in curves])
    field_scores = np.stack([field_pipe.encode(s).scores for s in snaps])

    scores_dir = config.out("scores")
    scores_dir.mkdir(parents=True, exist_ok=True)
    _write_scores(
        scores_dir / "fd_scores.csv",
        all_rows,
        split,
        fd_scores,
        [f"alpha{i+1}" for i in range(fd_pipe.basis.k)] + ["d_f"],
    )
    _write_scores(
        scores_dir / "field_scores.csv",
        all_rows,
        split,
        field_scores,
        [f"beta{i+1}" for i in range(field_pipe.basis.k)],
    )
    info = {
        "k_fd": fd_pipe.basis.k,
        "k_field": field_pipe.basis.k,
        "fd_retained_variance": fd_pipe.basis.retained_variance(),
        "field_retained_variance": field_pipe.basis.retained_variance(),
        "train_rows": train_rows,
        "test_rows": test_rows,
        "scale_e11": field_pipe.scale_e11,
        "scale_e12": field_pipe.scale_e12,
        "eps_ref": field_pipe.eps_ref,
    }
    (scores_dir / "reduce.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    manifest.add_tree("features", features_dir, stage="reduce")
    manifest.add_tree("scores", scores_dir, stage="reduce")
    manifest.seeds["split"] = config.stage_seed("split")
    manifest.save()
    return info


def _write_scores(path: Path, rows, split, scores, names) -> None:
    header = "row_id,split," + ",".join(names)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row, vec in zip(rows, scores):
            vals = ",".join(format(float(v), ".17g") for v in vec)
            fh.write(f"{row},{split[row]},{vals}\n")


def read_scores(path: Path) -> tuple[np.ndarray, list[str], np.ndarray, list[str]]:
    """Returns (row_ids, split labels, score matrix, column names)."""
    with open(path) as fh:
        names = fh.readline().strip().split(",")[2:]
        rows, splits, mat = [], [], []
        for line in fh:
            parts = line.strip().split(",")
            rows.append(int(parts[0]))
            splits.append(parts[1])
            mat.append([float(v) for v in parts[2:]])
    return np.asarray(rows), splits, np.asarray(mat), names


def stage_train(config: ExperimentConfig, jobs: int = 1) -> dict:
    manifest = _manifest(config)
    manifest.verify_prefix("scores")
    manifest.verify(["design/design.csv"])
    theta = load_design(config)
    bounds = HyperparamBounds()
    out = {}
    for modality, filename in (("FD", "fd_scores.csv"), ("FIELD", "field_scores.csv")):
        rows, splits, scores, names = read_scores(config.out("scores", filename))
        train_mask = np.array([s == "train" for s in splits])
        train_rows = rows[train_mask]
        bundle = train_bundle(
            modality,
            theta[train_rows],
            scores[train_mask],
            config.box_array(),
            names,
            bounds=bounds,
            seed=config.stage_seed(f"gp-{modality}"),
            train_indices=train_rows,
            test_indices=rows[~train_mask],
            jobs=jobs,
        )
        bundle_dir = config.out("bundles", modality.lower())
        save_bundle(bundle_dir, bundle)
        manifest.add_tree(f"bundles/{modality.lower()}", bundle_dir, stage="train")
        manifest.seeds[f"gp-{modality}"] = config.stage_seed(f"gp-{modality}")
        out[modality] = {"outputs": names, "n_train": int(train_mask.sum())}
    manifest.save()
    return out


def load_pipelines(config: ExperimentConfig):
    manifest = RunManifest.load(config.out())
    manifest.verify_prefix("features")
    fd = FdFeaturePipeline.load(config.out("features", "fd"))
    field = FieldFeaturePipeline.load(config.out("features", "field"))
    return fd, field


def load_bundles(config: ExperimentConfig):
    manifest = RunManifest.load(config.out())
    manifest.verify_prefix("bundles")
    fd = load_bundle(config.out("bundles", "fd"))
    field = load_bundle(config.out("bundles", "field"))
    return fd, field


def build_dataset(config: ExperimentConfig, jobs: int = 1) -> dict:
    """design -> simulate -> reduce -> train, returning the reduce summary."""
    stage_design(config)
    stage_simulate(config, jobs=jobs)
    info = stage_reduce(config)
    stage_train(config, jobs=jobs)
    return info
