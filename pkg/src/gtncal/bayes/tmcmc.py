"""Transitional MCMC.

Each run tempers prior -> posterior through p_gamma ~ prior * like^gamma.
The gamma increment is chosen by bisection so the coefficient of variation
of the stage importance weights is close to a target (1.0 by default);
particles are then systematically resampled and refreshed with short
Metropolis-Hastings chains whose Gaussian proposal covariance is a scaled
copy of the weighted sample covariance.  Independent runs provide
between-run convergence diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConvergenceError, NumericError
from .diagnostics import effective_sample_size, map_and_hpd, split_rhat

_MIN_DGAMMA = 1.0e-6
_WEIGHT_DEGENERACY_FRACTION = 1.0e-3


@dataclass(frozen=True)
class TmcmcConfig:
    particles: int = 2000
    runs: int = 8
    mh_steps: int = 5
    proposal_scale: float = 0.04  # multiplies the weighted sample covariance
    cov_target: float = 1.0  # target coefficient of variation of weights
    max_stages: int = 60
    seed: int = 0
    rhat_gate: float = 1.05

    def run_seeds(self) -> list[np.random.SeedSequence]:
        return np.random.SeedSequence(self.seed).spawn(self.runs)


@dataclass
class PosteriorSampleSet:
    """Pooled samples from all runs with provenance and diagnostics."""

    samples: np.ndarray  # (m, d)
    chain_ids: np.ndarray  # (m,)
    chain_lengths: np.ndarray  # (runs,)
    log_posterior: np.ndarray  # (m,) log prior + log likelihood at gamma=1
    gamma_ladders: list[list[float]]
    rhat: np.ndarray
    ess: np.ndarray
    map_point: np.ndarray
    map_log_posterior: float
    hpd: np.ndarray  # (d, 2)
    coverage: float
    seed: int
    log_likelihood: np.ndarray = field(default=None)

    @property
    def n_runs(self) -> int:
        return self.chain_lengths.size

    def by_chain(self) -> np.ndarray:
        """Samples reshaped to (runs, particles, d); requires equal lengths."""
        runs = self.n_runs
        n = int(self.chain_lengths[0])
        return self.samples.reshape(runs, n, -1)

    def hpd_widths(self) -> np.ndarray:
        return self.hpd[:, 1] - self.hpd[:, 0]

    def passes_gate(self, rhat_gate: float = 1.05) -> bool:
        return bool(np.all(self.rhat < rhat_gate))


def _cov_of_weights(log_like: np.ndarray, dgamma: float) -> float:
    logw = dgamma * (log_like - log_like.max())
    w = np.exp(logw)
    mean = w.mean()
    if mean <= 0.0:
        return np.inf
    return float(w.std() / mean)


def _next_gamma(gamma: float, log_like: np.ndarray, target: float) -> float:
    remaining = 1.0 - gamma
    if _cov_of_weights(log_like, remaining) <= target:
        return 1.0
    lo, hi = 0.0, remaining
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _cov_of_weights(log_like, mid) <= target:
            lo = mid
        else:
            hi = mid
    if lo < _MIN_DGAMMA:
        raise ConvergenceError(
            "weight degeneracy: no admissible tempering increment above "
            f"{_MIN_DGAMMA} (effective weight fraction < {_WEIGHT_DEGENERACY_FRACTION})"
        )
    return gamma + lo


def _systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = weights.size
    positions = (rng.random() + np.arange(n)) / n
    return np.searchsorted(np.cumsum(weights), positions).clip(0, n - 1)


def _single_run(
    prior,
    loglike,
    config: TmcmcConfig,
    seed: np.random.SeedSequence,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[float]]:
    rng = np.random.default_rng(seed)
    n = config.particles
    theta = prior.sample(n, rng)
    log_like = np.asarray(loglike(theta), dtype=float)
    log_prior = prior.log_density(theta)
    if not np.all(np.isfinite(log_like)):
        raise NumericError("non-finite log-likelihood at initial particles")
    gamma = 0.0
    ladder = [0.0]

    for _ in range(config.max_stages):
        if gamma >= 1.0:
            break
        gamma_new = _next_gamma(gamma, log_like, config.cov_target)
        dgamma = gamma_new - gamma
        logw = dgamma * (log_like - log_like.max())
        w = np.exp(logw)
        w /= w.sum()
        ess_frac = 1.0 / (n * float(np.sum(w * w)))
        if ess_frac < _WEIGHT_DEGENERACY_FRACTION:
            raise ConvergenceError(
                f"weight degeneracy at gamma={gamma_new:.4f}: effective fraction {ess_frac:.2e}"
            )

        mean = w @ theta
        centered = theta - mean
        cov = (w[:, None] * centered).T @ centered
        proposal_cov = config.proposal_scale * cov
        # Guard against rank deficiency when the population collapses.
        jitter = 1e-12 * np.trace(proposal_cov) / theta.shape[1] + 1e-300
        chol = np.linalg.cholesky(proposal_cov + jitter * np.eye(theta.shape[1]))

        idx = _systematic_resample(w, rng)
        theta = theta[idx]
        log_like = log_like[idx]
        log_prior = log_prior[idx]

        gamma = gamma_new
        ladder.append(gamma)

        log_post = log_prior + gamma * log_like
        for _ in range(config.mh_steps):
            step = rng.normal(size=theta.shape) @ chol.T
            proposal = theta + step
            prop_prior = prior.log_density(proposal)
            feasible = np.isfinite(prop_prior)
            prop_like = np.full(theta.shape[0], -np.inf)
            if feasible.any():
                prop_like[feasible] = loglike(proposal[feasible])
            prop_post = prop_prior + gamma * prop_like
            accept = np.log(rng.uniform(size=theta.shape[0])) < prop_post - log_post
            theta = np.where(accept[:, None], proposal, theta)
            log_like = np.where(accept, prop_like, log_like)
            log_prior = np.where(accept, prop_prior, log_prior)
            log_post = np.where(accept, prop_post, log_post)
    else:
        raise ConvergenceError(f"tempering did not reach gamma=1 in {config.max_stages} stages")

    # Final particles are exchangeable, but systematic resampling leaves
    # duplicate ancestors adjacent; a seeded shuffle removes that artificial
    # index ordering before sequence-based diagnostics see it.
    order = rng.permutation(n)
    return theta[order], (log_prior + log_like)[order], log_like[order], ladder


def tmcmc_sample(prior, loglike, config: TmcmcConfig | None = None) -> PosteriorSampleSet:
    """Run independent tempered chains and pool them with diagnostics.

    ``prior`` needs ``sample(n, rng)`` and ``log_density(theta)``; ``loglike``
    maps an (m, d) batch to (m,) log-likelihood values.
    """
    config = config or TmcmcConfig()
    all_theta, all_logpost, all_loglike, ladders, chain_ids = [], [], [], [], []
    for run_id, seq in enumerate(config.run_seeds()):
        theta, log_post, log_like, ladder = _single_run(prior, loglike, config, seq)
        all_theta.append(theta)
        all_logpost.append(log_post)
        all_loglike.append(log_like)
        ladders.append(ladder)
        chain_ids.append(np.full(theta.shape[0], run_id))
    samples = np.vstack(all_theta)
    log_posterior = np.concatenate(all_logpost)
    log_likelihood = np.concatenate(all_loglike)
    ids = np.concatenate(chain_ids)
    lengths = np.array([t.shape[0] for t in all_theta])

    chains = samples.reshape(config.runs, config.particles, -1)
    rhat = split_rhat(chains)
    ess = effective_sample_size(chains)
    map_point, hpd = map_and_hpd(samples, log_posterior, coverage=0.95)
    return PosteriorSampleSet(
        samples=samples,
        chain_ids=ids,
        chain_lengths=lengths,
        log_posterior=log_posterior,
        gamma_ladders=ladders,
        rhat=rhat,
        ess=ess,
        map_point=map_point,
        map_log_posterior=float(log_posterior.max()),
        hpd=hpd,
        coverage=0.95,
        seed=config.seed,
        log_likelihood=log_likelihood,
    )
