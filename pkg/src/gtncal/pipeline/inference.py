"""Inference stages: synthetic observations, update sequences, field
recovery at the MAP, and the order-sensitivity comparison."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..bayes.likelihood import NoiseModel, ScoreLogLikelihood
from ..bayes.priors import UniformBoxPrior, fit_kde_prior
from ..bayes.sequential import SequentialResult
from ..bayes.tmcmc import PosteriorSampleSet, tmcmc_sample
from ..errors import ArtifactError, ConvergenceError
from ..features.pipelines import ScoreVector
from ..material import PARAM_NAMES, GtnParams
from ..simulator import (
    CurveSegment,
    StrainSnapshot,
    read_curve_csv,
    read_snapshot_csv,
    simulate_specimen_full,
    write_curve_csv,
    write_sidecar_json,
    write_snapshot_csv,
)
from .config import ExperimentConfig
from .dataset import load_bundles, load_pipelines, read_scores
from .manifest import RunManifest

ORDERS = ("FD_DIC", "DIC_FD", "FD_ONLY", "DIC_ONLY")
_FMT = "%.17g"


@dataclass
class Observation:
    curve: CurveSegment
    snapshot: StrainSnapshot
    truth: np.ndarray | None = None
    # Precomputed noisy score vectors; set for synthetic observations so the
    # injected noise matches the likelihood's score-space noise model exactly.
    fd_scores: ScoreVector | None = None
    field_scores: ScoreVector | None = None


def make_synthetic_observation(
    config: ExperimentConfig, seed: int, out_dir: Path | None = None
) -> Observation:
    """Simulate the truth specimen and add measurement noise at the
    configured levels.

    Noise enters exactly where the likelihood models it: iid force noise on
    the resampled stations (after Point Y segmentation of the clean curve),
    d_f noise on the appended failure displacement, and iid strain noise on
    every snapshot cell.  A noisy raw curve file is also written so the
    external-observation code path can be exercised on the same specimen.
    """
    from ..features.curves import locate_yield_point, resample_segment

    rng = np.random.default_rng(seed)
    params = GtnParams.from_array(np.asarray(config.truth_theta))
    result = simulate_specimen_full(
        params, program=config.loading_program(), settings=config.simulator_settings()
    )
    curve, snap = result.curve, result.snapshot
    fd_pipe, field_pipe = load_pipelines(config)

    yp = locate_yield_point(curve)
    stations = resample_segment(curve, yp, fd_pipe.n_stations)
    noisy_stations = stations + rng.normal(0.0, config.noise.sigma_fd, size=stations.shape)
    sigma_df = _sigma_df(config)
    noisy_df = curve.failure_displacement + float(rng.normal(0.0, sigma_df))
    from ..features import pca as _pca

    alpha = _pca.pca_project_vector(
        fd_pipe.basis, fd_pipe.standardizer.apply(noisy_stations)
    )
    fd_scores = ScoreVector("FD", np.append(alpha, noisy_df))

    s = config.noise.sigma_dic
    noisy_snap = StrainSnapshot(
        nx=snap.nx,
        ny=snap.ny,
        x=snap.x,
        y=snap.y,
        mask=snap.mask,
        e11=snap.e11 + rng.normal(0.0, s, size=snap.e11.shape),
        e12=snap.e12 + rng.normal(0.0, s, size=snap.e12.shape),
        e22=snap.e22 + rng.normal(0.0, s, size=snap.e22.shape),
        capture_ratio=snap.capture_ratio,
        achieved_ratio=snap.achieved_ratio,
    )
    field_scores = field_pipe.encode(noisy_snap)

    noisy_forces = np.maximum(
        curve.forces + rng.normal(0.0, config.noise.sigma_fd, size=curve.forces.shape), 0.0
    )
    noisy_forces[0] = 0.0
    noisy_curve = CurveSegment(
        curve.displacements.copy(), noisy_forces, max(noisy_df, float(curve.displacements[-2]))
    )
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_curve_csv(out_dir / "curve.csv", noisy_curve)
        write_snapshot_csv(out_dir / "snapshot.csv", noisy_snap)
        write_sidecar_json(
            out_dir / "meta.json",
            result,
            extra={"observation_seed": seed, "noisy_d_f": noisy_df,
                   "truth_theta": list(config.truth_theta)},
        )
    return Observation(
        curve=noisy_curve,
        snapshot=noisy_snap,
        truth=np.asarray(config.truth_theta),
        fd_scores=fd_scores,
        field_scores=field_scores,
    )


def load_observation_files(
    config: ExperimentConfig, curve_path: str | Path, snapshot_path: str | Path
) -> Observation:
    from ..simulator import build_templates

    tpl = build_templates(config.loading_program(), config.simulator_settings())
    reference = StrainSnapshot(
        nx=config.simulator.nx, ny=config.simulator.ny, x=tpl.x, y=tpl.y, mask=tpl.mask,
        e11=np.zeros_like(tpl.x), e12=np.zeros_like(tpl.x), e22=np.zeros_like(tpl.x),
    )
    return Observation(
        curve=read_curve_csv(curve_path),
        snapshot=read_snapshot_csv(snapshot_path, reference),
    )


def _sigma_df(config: ExperimentConfig) -> float:
    if config.noise.sigma_df is not None:
        return config.noise.sigma_df
    _, _, fd_scores, _ = read_scores(config.out("scores", "fd_scores.csv"))
    df = fd_scores[:, -1]
    return 0.01 * float(df.max() - df.min())


def build_likelihoods(config: ExperimentConfig, obs: Observation) -> dict:
    fd_pipe, field_pipe = load_pipelines(config)
    fd_bundle, field_bundle = load_bundles(config)
    noise_fd = NoiseModel.for_fd(fd_pipe, config.noise.sigma_fd, _sigma_df(config))
    noise_field = NoiseModel.for_field(field_pipe, config.noise.sigma_dic)
    obs_fd = obs.fd_scores if obs.fd_scores is not None else fd_pipe.encode(obs.curve)
    obs_field = (
        obs.field_scores if obs.field_scores is not None else field_pipe.encode(obs.snapshot)
    )
    return {
        "FD": ScoreLogLikelihood(observed=obs_fd, bundle=fd_bundle, noise=noise_fd),
        "DIC": ScoreLogLikelihood(observed=obs_field, bundle=field_bundle, noise=noise_field),
    }


def run_sequence(
    config: ExperimentConfig,
    order: str,
    observation: Observation | None = None,
    seed: int | None = None,
    persist: bool = True,
) -> dict[str, PosteriorSampleSet]:
    """Execute one update chain and persist posterior artifacts.

    Returns the posteriors keyed by stage label.  Raises ConvergenceError
    after persisting artifacts when any split R-hat fails the 1.05 gate.
    """
    if order not in ORDERS:
        raise ValueError(f"unknown order {order!r}; expected one of {ORDERS}")
    seed = config.stage_seed(f"infer-{order}") if seed is None else seed
    obs = observation or make_synthetic_observation(
        config, config.stage_seed("observation"),
        out_dir=config.out("observation", "synthetic") if persist else None,
    )
    likelihoods = build_likelihoods(config, obs)
    prior = UniformBoxPrior(config.box_array())

    stages: list[tuple[str, str]] = []
    if order == "FD_ONLY":
        stages = [("FD", "fd_only")]
    elif order == "DIC_ONLY":
        stages = [("DIC", "dic_only")]
    elif order == "FD_DIC":
        stages = [("FD", "fd_first"), ("DIC", "fd_dic")]
    else:
        stages = [("DIC", "dic_first"), ("FD", "dic_fd")]

    seeds = np.random.SeedSequence(seed).spawn(len(stages))
    posteriors: dict[str, PosteriorSampleSet] = {}
    current_prior = prior
    for (modality, label), seq in zip(stages, seeds):
        cfg = config.tmcmc_config(int(seq.generate_state(1)[0]))
        post = tmcmc_sample(current_prior, likelihoods[modality], cfg)
        posteriors[label] = post
        if persist:
            _persist_posterior(config, f"{order.lower()}_{label}", post, obs)
        if label in ("fd_first", "dic_first"):
            from ..bayes.sequential import BRIDGE_BANDWIDTH_SCALE

            current_prior = fit_kde_prior(
                post.samples,
                config.box_array(),
                max_centers=config.tmcmc.kde_max_centers,
                seed=cfg.seed,
                bandwidth_scale=BRIDGE_BANDWIDTH_SCALE,
            )
    gate_failures = [label for label, p in posteriors.items() if not p.passes_gate()]
    if gate_failures:
        raise ConvergenceError(
            f"split R-hat gate (>= 1.05) failed for stage(s): {', '.join(gate_failures)}"
        )
    return posteriors


def _persist_posterior(
    config: ExperimentConfig, label: str, post: PosteriorSampleSet, obs: Observation
) -> None:
    out = config.out("posteriors", label)
    out.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([post.samples, post.chain_ids, post.log_posterior])
    np.savetxt(
        out / "samples.csv",
        data,
        fmt=[_FMT] * 4 + ["%d", _FMT],
        delimiter=",",
        header=",".join(PARAM_NAMES) + ",chain_id,log_posterior",
        comments="",
    )
    summary = {
        "map": {n: float(v) for n, v in zip(PARAM_NAMES, post.map_point)},
        "map_log_posterior": post.map_log_posterior,
        "hpd": {n: [float(a), float(b)] for n, (a, b) in zip(PARAM_NAMES, post.hpd)},
        "hpd_coverage": post.coverage,
        "rhat": {n: float(v) for n, v in zip(PARAM_NAMES, post.rhat)},
        "ess": {n: float(v) for n, v in zip(PARAM_NAMES, post.ess)},
        "gamma_ladders": post.gamma_ladders,
        "seed": post.seed,
        "n_samples": int(post.samples.shape[0]),
        "truth_theta": None if obs.truth is None else [float(v) for v in obs.truth],
        "passes_gate": post.passes_gate(),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write_corner_data(out / "corner", post)
    manifest = RunManifest.load(config.out())
    manifest.add_tree(f"posteriors/{label}", out, stage="infer")
    manifest.save()


def _write_corner_data(out: Path, post: PosteriorSampleSet, bins: int = 60) -> None:
    """1D histograms and pairwise 2D bin counts for external corner plots."""
    out.mkdir(parents=True, exist_ok=True)
    s = post.samples
    for j, name in enumerate(PARAM_NAMES):
        counts, edges = np.histogram(s[:, j], bins=bins)
        np.savetxt(
            out / f"hist_{name}.csv",
            np.column_stack([edges[:-1], edges[1:], counts]),
            fmt=[_FMT, _FMT, "%d"],
            delimiter=",",
            header="bin_low,bin_high,count",
            comments="",
        )
    for i in range(len(PARAM_NAMES)):
        for j in range(i + 1, len(PARAM_NAMES)):
            counts, xe, ye = np.histogram2d(s[:, i], s[:, j], bins=bins)
            np.savetxt(
                out / f"pair_{PARAM_NAMES[i]}_{PARAM_NAMES[j]}.csv",
                counts,
                fmt="%d",
                delimiter=",",
                header=(
                    f"x={PARAM_NAMES[i]} rows [{xe[0]:.6g},{xe[-1]:.6g}] "
                    f"y={PARAM_NAMES[j]} cols [{ye[0]:.6g},{ye[-1]:.6g}]"
                ),
            )


def recover_fields(config: ExperimentConfig, posterior_label: str) -> dict:
    """Rerun the simulator at the posterior MAP and export state fields."""
    summary_path = config.out("posteriors", posterior_label, "summary.json")
    if not summary_path.exists():
        raise ArtifactError(f"no posterior summary at {summary_path}")
    summary = json.loads(summary_path.read_text())
    theta = np.array([summary["map"][n] for n in PARAM_NAMES])
    result = simulate_specimen_full(
        GtnParams.from_array(theta),
        program=config.loading_program(),
        settings=config.simulator_settings(),
    )
    out = config.out("recovered", posterior_label)
    out.mkdir(parents=True, exist_ok=True)
    mask = result.snapshot.mask.ravel()
    data = np.column_stack(
        [
            result.snapshot.x.ravel()[mask],
            result.snapshot.y.ravel()[mask],
            result.stress_field.ravel()[mask],
            result.vvf_field.ravel()[mask],
        ]
    )
    np.savetxt(out / "fields.csv", data, fmt=_FMT, delimiter=",",
               header="x,y,s22,vvf", comments="")
    write_sidecar_json(out / "meta.json", result, extra={"posterior": posterior_label})
    manifest = RunManifest.load(config.out())
    manifest.add_tree(f"recovered/{posterior_label}", out, stage="recover")
    manifest.save()
    return {
        "map_theta": theta.tolist(),
        "vvf_max": float(result.vvf_field.ravel()[mask].max()),
        "fields": str(out / "fields.csv"),
    }


def _hpd_widths_from_summary(summary: dict) -> dict[str, float]:
    return {n: summary["hpd"][n][1] - summary["hpd"][n][0] for n in PARAM_NAMES}


def compare_orders(config: ExperimentConfig) -> dict:
    """Order-sensitivity report from persisted posterior summaries."""
    labels = {
        "fd_only": "fd_only_fd_only",
        "dic_only": "dic_only_dic_only",
        "fd_dic": "fd_dic_fd_dic",
        "dic_fd": "dic_fd_dic_fd",
    }
    summaries = {}
    for key, label in labels.items():
        path = config.out("posteriors", label, "summary.json")
        if not path.exists():
            raise ArtifactError(f"missing posterior {label!r}; run the sequences first")
        summaries[key] = json.loads(path.read_text())

    rows = []
    for key in ("fd_dic", "dic_fd"):
        widths = _hpd_widths_from_summary(summaries[key])
        for n in PARAM_NAMES:
            rows.append((key, n, widths[n], summaries[key]["map"][n]))

    def informativeness(key: str) -> float:
        if config.informativeness_metric == "hpd_width_product":
            w = _hpd_widths_from_summary(summaries[key])
            return float(np.prod([w[n] for n in PARAM_NAMES]))
        data = np.loadtxt(
            config.out("posteriors", labels[key], "samples.csv"), delimiter=",", skiprows=1
        )
        return float(np.linalg.det(np.cov(data[:, :4].T)))

    info_fd = informativeness("fd_only")
    info_dic = informativeness("dic_only")
    ranking = ["FD", "DIC"] if info_fd <= info_dic else ["DIC", "FD"]

    report_dir = config.out("reports")
    report_dir.mkdir(parents=True, exist_ok=True)
    with open(report_dir / "order_comparison.csv", "w") as fh:
        fh.write("order,parameter,hpd_width,map\n")
        for order, name, width, map_v in rows:
            fh.write(f"{order},{name},{width:.17g},{map_v:.17g}\n")
    report = {
        "metric": config.informativeness_metric,
        "informativeness": {"FD": info_fd, "DIC": info_dic},
        "ranking": ranking,
        "hpd_widths": {
            key: _hpd_widths_from_summary(summaries[key]) for key in summaries
        },
        "map": {key: summaries[key]["map"] for key in summaries},
    }
    (report_dir / "order_comparison.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n"
    )
    manifest = RunManifest.load(config.out())
    manifest.add_tree("reports", report_dir, stage="compare")
    manifest.save()
    return report
