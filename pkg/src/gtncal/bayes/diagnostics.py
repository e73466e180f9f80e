"""Sampler diagnostics: split R-hat, autocorrelation ESS, MAP and HPD."""

from __future__ import annotations

import warnings

import numpy as np

from ..errors import InsufficientDataError


def split_rhat(chains: np.ndarray) -> np.ndarray:
    """Split Gelman-Rubin statistic per parameter.

    ``chains`` has shape (n_chains, n_draws, n_params); each chain is split
    in half before computing the between/within variance ratio.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 2:
        chains = chains[:, :, None]
    c, n, p = chains.shape
    if c < 2:
        raise InsufficientDataError("split R-hat needs at least 2 chains")
    if n < 4:
        raise InsufficientDataError("split R-hat needs chains of length >= 4")
    half = n // 2
    halves = np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)
    m, n2 = halves.shape[0], half
    means = halves.mean(axis=1)  # (m, p)
    variances = halves.var(axis=1, ddof=1)  # (m, p)
    w = variances.mean(axis=0)
    b = n2 * means.var(axis=0, ddof=1)
    var_plus = (n2 - 1) / n2 * w + b / n2
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_plus / w)
    return np.where(w > 0.0, rhat, 1.0)


def effective_sample_size(chains: np.ndarray) -> np.ndarray:
    """Autocorrelation ESS per parameter with Geyer initial-positive truncation.

    Autocorrelations are estimated per chain via FFT, averaged across chains,
    and summed in lag pairs until a pair sum turns negative.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 1:
        chains = chains[None, :, None]
    elif chains.ndim == 2:
        chains = chains[:, :, None]
    c, n, p = chains.shape
    if n < 10:
        raise InsufficientDataError("ESS needs chains of length >= 10")
    out = np.empty(p)
    for j in range(p):
        x = chains[:, :, j]
        var = x.var(axis=1).mean()
        if var <= 0.0:
            warnings.warn("constant chain: ESS defined as 0", stacklevel=2)
            out[j] = 0.0
            continue
        # FFT autocovariance per chain, averaged.
        xc = x - x.mean(axis=1, keepdims=True)
        size = 2 * n
        f = np.fft.rfft(xc, size, axis=1)
        acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n].real / n
        rho = (acov / acov[:, :1]).mean(axis=0)
        # Geyer: sum consecutive pairs while positive.
        tau = 1.0
        t = 1
        while t + 1 < n:
            pair = rho[t] + rho[t + 1]
            if pair <= 0.0:
                break
            tau += 2.0 * pair
            t += 2
        out[j] = c * n / tau
    return out


def map_and_hpd(
    samples: np.ndarray,
    log_posterior: np.ndarray,
    coverage: float = 0.95,
) -> tuple[np.ndarray, np.ndarray]:
    """MAP sample and per-parameter shortest intervals holding ``coverage``.

    MAP is the sample with the highest posterior log-density.  Each HPD is
    the shortest window containing ceil(coverage * m) sorted samples; ties
    break to the earliest window.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    log_posterior = np.asarray(log_posterior, dtype=float)
    m, p = samples.shape
    if m < 100:
        raise InsufficientDataError("MAP/HPD needs at least 100 samples")
    if log_posterior.shape != (m,):
        raise InsufficientDataError("log_posterior must align with samples")
    if not 0.0 < coverage < 1.0:
        raise ValueError("coverage must lie in (0, 1)")
    map_point = samples[int(np.argmax(log_posterior))].copy()
    k = int(np.ceil(coverage * m))
    hpd = np.empty((p, 2))
    for j in range(p):
        s = np.sort(samples[:, j])
        widths = s[k - 1 :] - s[: m - k + 1]
        i = int(np.argmin(widths))
        hpd[j] = (s[i], s[i + k - 1])
    return map_point, hpd
