"""Score-space likelihoods, T-MCMC sampling, diagnostics, sequential updates."""

from .priors import KdePrior, UniformBoxPrior, fit_kde_prior, inverse_logit_map, logit_map
from .likelihood import NoiseModel, ScoreLogLikelihood, propagate_noise
from .diagnostics import effective_sample_size, map_and_hpd, split_rhat
from .tmcmc import PosteriorSampleSet, TmcmcConfig, tmcmc_sample
from .sequential import sequential_update

__all__ = [
    "logit_map",
    "inverse_logit_map",
    "UniformBoxPrior",
    "KdePrior",
    "fit_kde_prior",
    "NoiseModel",
    "propagate_noise",
    "ScoreLogLikelihood",
    "split_rhat",
    "effective_sample_size",
    "map_and_hpd",
    "TmcmcConfig",
    "PosteriorSampleSet",
    "tmcmc_sample",
    "sequential_update",
]
