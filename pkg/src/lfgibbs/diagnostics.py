"""MCMC output diagnostics."""

from __future__ import annotations

import warnings

import numpy as np

__all__ = ["effective_sample_size"]

_MIN_STATES = 100


def effective_sample_size(chain: np.ndarray) -> float:
    """ESS = M / (1 + 2 sum rho_k) with the initial-positive-sequence rule.

    Autocorrelations are estimated by FFT and summed over consecutive lag
    pairs (rho_1+rho_2), (rho_3+rho_4), ... until the first pair with a
    non-positive sum; lags beyond that point are noise.  A constant chain
    has no information and returns 1 with a degeneracy warning.  Requires
    at least 100 retained states.
    """
    x = np.asarray(chain, dtype=float)
    if x.ndim != 1:
        raise ValueError("chain must be one-dimensional")
    n = x.size
    if n < _MIN_STATES:
        raise ValueError(f"need at least {_MIN_STATES} retained states, got {n}")
    x = x - x.mean()
    var = float(x @ x) / n
    if var <= 0:
        warnings.warn("degenerate (constant) chain; ESS is 1 by convention")
        return 1.0

    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n] / n
    rho = acov / acov[0]

    total = 0.0
    k = 1
    while k + 1 < n:
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        total += pair
        k += 2
    ess = n / (1.0 + 2.0 * total)
    return float(min(max(ess, 1.0), n))
