"""Order-dependent sequential updating across data modalities.

Update 1 samples the posterior under the first modality's likelihood from
the uniform box prior.  Its samples are turned into a logit-space KDE prior
(bounds and f_c < f_f truncation preserved), under which Update 2 samples
with the second modality's likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .priors import UniformBoxPrior, fit_kde_prior
from .tmcmc import PosteriorSampleSet, TmcmcConfig, tmcmc_sample

#: Bandwidth multiplier for the update-1 -> update-2 KDE bridge; see
#: fit_kde_prior for the rationale.
BRIDGE_BANDWIDTH_SCALE = 0.5


@dataclass(frozen=True)
class SequentialResult:
    first: str
    second: str
    update1: PosteriorSampleSet
    update2: PosteriorSampleSet


def sequential_update(
    first: str,
    second: str,
    likelihoods: dict,
    prior: UniformBoxPrior,
    config: TmcmcConfig,
    kde_max_centers: int | None = 4000,
) -> SequentialResult:
    """Run the two-stage update in the given modality order.

    ``likelihoods`` maps modality tags to batched log-likelihood callables.
    The two stages use decorrelated seeds derived from the configured one.
    """
    if first not in likelihoods or second not in likelihoods:
        raise KeyError(f"likelihoods must cover {first!r} and {second!r}")
    seed1, seed2 = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(
        config.seed).spawn(2))
    cfg1 = replace(config, seed=seed1)
    update1 = tmcmc_sample(prior, likelihoods[first], cfg1)
    kde = fit_kde_prior(
        update1.samples,
        prior.bounds,
        enforce_constraint=prior.enforce_constraint,
        max_centers=kde_max_centers,
        seed=seed1,
        bandwidth_scale=BRIDGE_BANDWIDTH_SCALE,
    )
    cfg2 = replace(config, seed=seed2)
    update2 = tmcmc_sample(kde, likelihoods[second], cfg2)
    return SequentialResult(first=first, second=second, update1=update1, update2=update2)
