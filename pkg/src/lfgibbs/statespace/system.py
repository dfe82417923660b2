"""System matrices for the seasonal dynamic linear model.

Each of the four observation parameters evolves through an identical
9-dimensional state block: a local-linear trend (2), a weekly seasonal
cycle (6), and a summer step effect (1).  The full state stacks the four
copies component-major, so state index k = 4*r + v addresses component r
of variable v.  The transition matrix is the Kronecker product of the
9x9 block with the 4x4 identity, and the observation matrix picks out
the trend level, the leading seasonal coordinate, and (inside the high
season) the summer coordinate.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

BLOCK_DIM = 9
N_SERIES = 4
STATE_DIM = BLOCK_DIM * N_SERIES

# 0-based block coordinates read by the observation row: trend level,
# leading seasonal coefficient, and the summer step.
_LEVEL = 0
_SEASON_LEAD = 2
_SUMMER = 8


def trend_block() -> np.ndarray:
    """2x2 local-linear-trend transition (unit upper Jordan block)."""
    return np.array([[1.0, 1.0], [0.0, 1.0]])


def weekly_seasonal_block() -> np.ndarray:
    """6x6 seasonal companion for a 7-day cycle.

    Top row is all -1 (the seasonal coefficients sum to zero over a
    week), with a shifted identity below; its 7th power is the identity.
    """
    p = np.zeros((6, 6))
    p[0, :] = -1.0
    p[1:, :5] = np.eye(5)
    return p


def block_transition() -> np.ndarray:
    """9x9 per-variable transition: block-diagonal (trend, seasonal, 1)."""
    g = np.zeros((BLOCK_DIM, BLOCK_DIM))
    g[:2, :2] = trend_block()
    g[2:8, 2:8] = weekly_seasonal_block()
    g[8, 8] = 1.0
    return g


def observation_block(summer: bool) -> np.ndarray:
    """9-vector mapping one state block to its linear predictor."""
    f = np.zeros(BLOCK_DIM)
    f[_LEVEL] = 1.0
    f[_SEASON_LEAD] = 1.0
    f[_SUMMER] = 1.0 if summer else 0.0
    return f


@dataclass(frozen=True)
class SeasonCalendar:
    """Day indexing for one modelled stretch of data.

    Days run t = 1..n_days; the summer indicator is defined through
    n_days + 1 so the forward-predictive state can be built.  The summer
    season is the inclusive index range [summer_start, summer_end]; a
    start beyond the end disables it.  first_dow records which day of
    the week t = 1 falls on (0..6), purely for labelling.
    """

    n_days: int
    summer_start: int = 1
    summer_end: int = 0
    first_dow: int = 0

    def __post_init__(self):
        if self.n_days < 1:
            raise ValueError("n_days must be at least 1")
        if self.summer_start < 1:
            raise ValueError("summer_start must be at least 1")
        if not 0 <= self.first_dow <= 6:
            raise ValueError("first_dow must be in 0..6")

    def _check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.n_days + 1:
            raise ValueError(
                f"t must be in 1..{self.n_days + 1}, got {t}")
        return t

    def is_summer(self, t: int) -> bool:
        t = self._check_t(t)
        return self.summer_start <= t <= self.summer_end

    def day_of_week(self, t: int) -> int:
        t = self._check_t(t)
        return (self.first_dow + t - 1) % 7


@dataclass(frozen=True)
class DlmSpec:
    """Dimensions, initial-state prior, and precision hyperpriors.

    The innovation covariance is diagonal, W = diag(1 / tau_1..tau_p),
    with independent Gamma(alpha, nu) priors on each precision.  The
    near-zero defaults make those priors effectively flat.  m0/c0_diag
    give the Gaussian prior for the pre-sample state; the wide default
    variance keeps it close to diffuse while staying proper.
    """

    n_series: int = N_SERIES
    block_dim: int = BLOCK_DIM
    m0: Optional[np.ndarray] = None
    c0_diag: Optional[np.ndarray] = None
    alpha: float = 1e-10
    nu: float = 1e-10

    def __post_init__(self):
        if self.n_series < 1 or self.block_dim != BLOCK_DIM:
            raise ValueError("unsupported state block layout")
        if not (self.alpha > 0 and self.nu > 0):
            raise ValueError("precision hyperparameters must be positive")
        p = self.n_series * self.block_dim
        m0 = np.zeros(p) if self.m0 is None else np.asarray(self.m0, float)
        if self.c0_diag is None:
            c0 = np.full(p, 1e6)
        else:
            c0 = np.broadcast_to(
                np.asarray(self.c0_diag, float), (p,)).copy()
        if m0.shape != (p,) or c0.shape != (p,):
            raise ValueError("m0 and c0_diag must have length p")
        if np.any(c0 <= 0):
            raise ValueError("c0_diag must be positive")
        object.__setattr__(self, "m0", m0)
        object.__setattr__(self, "c0_diag", c0)

    @property
    def p(self) -> int:
        return self.n_series * self.block_dim


def build_system_matrices(calendar: SeasonCalendar, t: int,
                          n_series: int = N_SERIES
                          ) -> Tuple[np.ndarray, np.ndarray]:
    """Observation and transition matrices at day t.

    Returns (f_mat, g_mat) with f_mat of shape (p, n_series) so that the
    linear predictor is f_mat.T @ theta_t, and g_mat of shape (p, p).
    Valid for t = 1..n_days + 1.
    """
    f9 = observation_block(calendar.is_summer(t))
    eye = np.eye(n_series)
    f_mat = np.kron(f9[:, None], eye)
    g_mat = np.kron(block_transition(), eye)
    return f_mat, g_mat
