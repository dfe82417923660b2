"""Kalman smoothing used to initialize the state path.

The four observation parameters are filtered independently: with a
diagonal innovation covariance the full model splits into four
9-dimensional blocks, each observing one scalar summary per day through
its own observation row.  The smoother treats each summary coordinate as
a noisy linear observation of its block; the observation variance is a
fixed plausible value, not estimated.
"""

from typing import Optional

import numpy as np

from .system import (BLOCK_DIM, DlmSpec, SeasonCalendar, block_transition,
                     observation_block)


def block_kalman_smoother(obs: np.ndarray, obs_rows: np.ndarray,
                          obs_var, g_mat: np.ndarray, w_diag,
                          m0: np.ndarray, c0_diag: np.ndarray) -> np.ndarray:
    """Smoothed state means of one scalar-observation linear block.

    obs holds y_1..y_T, obs_rows the matching observation vectors, and
    obs_var the per-step observation variances (a scalar broadcasts).
    Returns the (T+1) x dim smoothed means for states 0..T, state 0
    being the pre-sample state carrying the N(m0, diag(c0_diag)) prior.
    """
    y = np.asarray(obs, dtype=float)
    rows = np.atleast_2d(np.asarray(obs_rows, dtype=float))
    n_steps = y.size
    dim = rows.shape[1]
    if rows.shape != (n_steps, dim):
        raise ValueError("obs_rows must supply one row per observation")
    v = np.broadcast_to(np.asarray(obs_var, dtype=float), (n_steps,))
    if np.any(v <= 0):
        raise ValueError("observation variances must be positive")
    g = np.asarray(g_mat, dtype=float).reshape(dim, dim)
    w = np.diag(np.broadcast_to(np.asarray(w_diag, dtype=float), (dim,)))

    means = np.empty((n_steps + 1, dim))
    covs = np.empty((n_steps + 1, dim, dim))
    pred_means = np.empty((n_steps + 1, dim))
    pred_covs = np.empty((n_steps + 1, dim, dim))
    means[0] = np.asarray(m0, dtype=float)
    covs[0] = np.diag(np.broadcast_to(np.asarray(c0_diag, dtype=float),
                                      (dim,)))
    for t in range(1, n_steps + 1):
        a = g @ means[t - 1]
        r = g @ covs[t - 1] @ g.T + w
        r = 0.5 * (r + r.T)
        pred_means[t] = a
        pred_covs[t] = r
        row = rows[t - 1]
        gain_vec = r @ row
        q = float(row @ gain_vec) + v[t - 1]
        means[t] = a + gain_vec * ((y[t - 1] - row @ a) / q)
        c = r - np.outer(gain_vec, gain_vec) / q
        covs[t] = 0.5 * (c + c.T)
        if not (np.all(np.isfinite(means[t])) and np.all(np.isfinite(covs[t]))):
            raise np.linalg.LinAlgError(
                f"filter diverged at step {t}: non-finite moments")

    smoothed = np.empty_like(means)
    smoothed[n_steps] = means[n_steps]
    for t in range(n_steps - 1, -1, -1):
        j = np.linalg.solve(pred_covs[t + 1], g @ covs[t]).T
        smoothed[t] = means[t] + j @ (smoothed[t + 1] - pred_means[t + 1])
    if not np.all(np.isfinite(smoothed)):
        raise np.linalg.LinAlgError("smoother produced non-finite means")
    return smoothed


def kalman_smoother_init(summaries: np.ndarray, calendar: SeasonCalendar,
                         spec: DlmSpec, obs_variance: float,
                         block_w: float = 1e-4,
                         m0: Optional[np.ndarray] = None,
                         c0_diag: Optional[np.ndarray] = None) -> np.ndarray:
    """Initial state path from smoothing the per-day summaries.

    Each summary coordinate is smoothed through its own 9-dimensional
    block with innovation variance block_w and observation variance
    obs_variance.  Returns the (T+1) x p smoothed means for states
    0..T on the prior m0/c0_diag (the sampler's own prior by default).
    """
    s = np.atleast_2d(np.asarray(summaries, dtype=float))
    n_days, n_series = s.shape
    if n_series != spec.n_series:
        raise ValueError(f"summaries must have {spec.n_series} columns")
    if n_days != calendar.n_days:
        raise ValueError("summaries do not match the calendar length")
    if not np.all(np.isfinite(s)):
        raise ValueError("summaries must be finite")
    if not (obs_variance > 0 and block_w > 0):
        raise ValueError("variances must be positive")
    m0 = spec.m0 if m0 is None else np.asarray(m0, dtype=float)
    c0 = spec.c0_diag if c0_diag is None else np.asarray(c0_diag, dtype=float)

    g9 = block_transition()
    rows = np.stack([observation_block(calendar.is_summer(t))
                     for t in range(1, n_days + 1)])
    path = np.empty((n_days + 1, spec.p))
    for v in range(n_series):
        idx = np.arange(v, spec.p, n_series)
        path[:, idx] = block_kalman_smoother(
            s[:, v], rows, obs_variance, g9, block_w, m0[idx], c0[idx])
    return path
