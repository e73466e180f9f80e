"""Surrogate validation on the held-out split.

Reports the per-curve NMAE distribution and the per-component field NMAE
table, and exports best/worst-case reconstructions as plot-ready CSV.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..features.curves import curve_nmae, locate_yield_point, resample_segment
from ..features.fields import COMPONENTS, field_nmae, flatten_field, unflatten_field
from .config import ExperimentConfig
from .dataset import _load_sims, load_bundles, load_design, load_pipelines, read_scores
from .manifest import RunManifest

_FMT = "%.17g"


def validate_surrogates(config: ExperimentConfig) -> dict:
    manifest = RunManifest.load(config.out())
    manifest.verify_prefix("bundles")
    manifest.verify_prefix("features")
    fd_pipe, field_pipe = load_pipelines(config)
    fd_bundle, field_bundle = load_bundles(config)
    theta = load_design(config)

    _, splits, fd_scores, _ = read_scores(config.out("scores", "fd_scores.csv"))
    rows, _, _, _ = read_scores(config.out("scores", "fd_scores.csv"))
    test_rows = [int(r) for r, s in zip(rows, splits) if s == "test"]
    train_rows = [int(r) for r, s in zip(rows, splits) if s == "train"]

    curves_test, snaps_test = _load_sims(config, test_rows)
    curves_train, _ = _load_sims(config, train_rows)

    # Ensemble-average force over the training split normalizes curve NMAE.
    f_average = float(
        np.mean(
            [
                resample_segment(c, locate_yield_point(c), config.n_stations).mean()
                for c in curves_train
            ]
        )
    )

    fd_mean, _ = fd_bundle.predict(theta[test_rows])
    curve_errors = []
    truths, preds = [], []
    for curve, pred_scores in zip(curves_test, fd_mean):
        yp = locate_yield_point(curve)
        truth = resample_segment(curve, yp, config.n_stations)
        pred = fd_pipe.decode(pred_scores[:-1])
        curve_errors.append(curve_nmae(truth, pred, f_average))
        truths.append(truth)
        preds.append(pred)
    curve_errors = np.asarray(curve_errors)

    field_mean, _ = field_bundle.predict(theta[test_rows])
    comp_errors = {name: [] for name in COMPONENTS}
    for snap, pred_scores in zip(snaps_test, field_mean):
        pred = field_pipe.decode(pred_scores)
        errs = field_nmae(snap, pred, field_pipe.mask, field_pipe.eps_ref)
        for name in COMPONENTS:
            comp_errors[name].append(errs[name])
    comp_errors = {k: np.asarray(v) for k, v in comp_errors.items()}

    val_dir = config.out("validation")
    val_dir.mkdir(parents=True, exist_ok=True)
    np.savetxt(
        val_dir / "curve_nmae.csv",
        np.column_stack([test_rows, curve_errors]),
        fmt=["%d", _FMT],
        delimiter=",",
        header="row_id,nmae_percent",
        comments="",
    )
    np.savetxt(
        val_dir / "field_nmae.csv",
        np.column_stack([test_rows] + [comp_errors[n] for n in COMPONENTS]),
        fmt=["%d"] + [_FMT] * 3,
        delimiter=",",
        header="row_id," + ",".join(f"nmae_{n}" for n in COMPONENTS),
        comments="",
    )
    for label, idx in (("best", int(np.argmin(curve_errors))),
                       ("worst", int(np.argmax(curve_errors)))):
        stations = np.linspace(0.0, 1.0, config.n_stations)
        np.savetxt(
            val_dir / f"curve_{label}_case.csv",
            np.column_stack([stations, truths[idx], preds[idx]]),
            fmt=_FMT,
            delimiter=",",
            header="station,truth,prediction",
            comments="",
        )

    report = {
        "f_average": f_average,
        "curve_nmae_mean": float(curve_errors.mean()),
        "curve_nmae_p95": float(np.percentile(curve_errors, 95)),
        "curve_nmae_max": float(curve_errors.max()),
        "field_nmae_mean": {k: float(v.mean()) for k, v in comp_errors.items()},
        "field_nmae_max": {k: float(v.max()) for k, v in comp_errors.items()},
        "n_test": len(test_rows),
        "best_row": int(test_rows[int(np.argmin(curve_errors))]),
        "worst_row": int(test_rows[int(np.argmax(curve_errors))]),
    }
    (val_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    manifest.add_tree("validation", val_dir, stage="validate")
    manifest.save()
    return report
