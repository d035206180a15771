"""Unscented Kalman filter over a joint two-lamp image-plane state.

State layout (6-vector):

    x = [u1, v1, u2, v2, du, dv]^T

u/v are lamp centroid pixel coordinates; (du, dv) is a single image-plane
velocity in px/frame shared by both lamps. Lamps on the same ceiling plane
viewed by a translating camera move identically in the image, so one
velocity serves both; when one lamp's measurement is distrusted, its
position keeps being corrected through the velocity learned from the
other. The time step is folded into the transition (dt = 1 frame).

The measurement map is linear (we observe the centroids directly), so the
filter reduces to a standard Kalman filter; the sigma-point path is kept
so nonlinear measurement models can drop in, and the tests pin its
equivalence to the closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalDegeneracyError

STATE_DIM = 6

# Constant-velocity transition: both centroids advance by (du, dv).
TRANSITION = np.array([
    [1, 0, 0, 0, 1, 0],
    [0, 1, 0, 0, 0, 1],
    [0, 0, 1, 0, 1, 0],
    [0, 0, 0, 1, 0, 1],
    [0, 0, 0, 0, 1, 0],
    [0, 0, 0, 0, 0, 1],
], dtype=float)


@dataclass
class UtParams:
    """Scaled unscented-transform parameters."""

    alpha: float = 0.5
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    def lam(self, n: int) -> float:
        lam = self.alpha ** 2 * (n + self.kappa) - n
        if n + lam <= 0:
            raise ValueError("alpha/kappa yield a non-positive sigma-point spread")
        return lam


def _default_q() -> np.ndarray:
    return np.diag([0.25, 0.25, 0.25, 0.25, 1.0, 1.0])


def _default_r0() -> np.ndarray:
    return np.eye(2)


@dataclass
class NoiseModel:
    """Process/measurement noise and the reliability-to-scale mapping.

    A lamp's measurement covariance is ``s * r0`` where s comes from
    ``reliability_scale``: trusted measurements (similarity near 1) get
    ``s_min``, mismatched ones saturate at ``s_max``.
    """

    q: np.ndarray = field(default_factory=_default_q)
    r0: np.ndarray = field(default_factory=_default_r0)
    s_min: float = 1.0
    s_max: float = 100.0
    eps_rho: float = 0.05
    p0_pos: float = 4.0
    p0_vel: float = 25.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.r0 = np.asarray(self.r0, dtype=float)
        if self.q.shape != (STATE_DIM, STATE_DIM):
            raise ValueError("q must be 6x6")
        if self.r0.shape != (2, 2):
            raise ValueError("r0 must be 2x2")
        for name, m in (("q", self.q), ("r0", self.r0)):
            if not np.allclose(m, m.T, atol=1e-9):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh((m + m.T) / 2).min() < -1e-9:
                raise ValueError(f"{name} must be positive semi-definite")
        if not 1 <= self.s_min < self.s_max:
            raise ValueError("need 1 <= s_min < s_max")


@dataclass
class JointState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(STATE_DIM)
        cov = np.asarray(self.cov, dtype=float).reshape(STATE_DIM, STATE_DIM)
        self.cov = (cov + cov.T) / 2

    def lamp_centroid(self, slot: int) -> tuple[float, float]:
        """Centroid of lamp slot 0 or 1 in pixels."""
        return float(self.mean[2 * slot]), float(self.mean[2 * slot + 1])


def _sqrt_psd(a: np.ndarray) -> np.ndarray:
    """Lower-triangular factor of a PSD matrix, with one jittered retry."""
    a = (a + a.T) / 2
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        try:
            return np.linalg.cholesky(a + 1e-9 * np.eye(a.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericalDegeneracyError(
                "covariance factorization failed after jitter") from exc


def sigma_points(mean: np.ndarray, cov: np.ndarray,
                 params: UtParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scaled-UT sigma points and weights.

    Returns (points, wm, wc) with points of shape (2n+1, n). The weighted
    mean/covariance of the points reproduce the inputs exactly (up to
    factorization roundoff).
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    n = mean.size
    lam = params.lam(n)
    root = _sqrt_psd((n + lam) * cov)
    points = np.empty((2 * n + 1, n))
    points[0] = mean
    points[1:n + 1] = mean + root.T
    points[n + 1:] = mean - root.T
    wm = np.full(2 * n + 1, 1.0 / (2 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = wm[0] + (1 - params.alpha ** 2 + params.beta)
    return points, wm, wc


def _moments(points: np.ndarray, wm: np.ndarray, wc: np.ndarray,
             noise: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    mean = wm @ points
    d = points - mean
    cov = (d * wc[:, None]).T @ d
    if noise is not None:
        cov = cov + noise
    return mean, (cov + cov.T) / 2


def initialize(centroid_1: tuple[float, float], centroid_2: tuple[float, float],
               model: NoiseModel) -> JointState:
    """Fresh state from two acquisition centroids: zero velocity, prior covariance."""
    mean = np.array([centroid_1[0], centroid_1[1],
                     centroid_2[0], centroid_2[1], 0.0, 0.0])
    cov = np.diag([model.p0_pos] * 4 + [model.p0_vel] * 2)
    return JointState(mean, cov)


def predict(state: JointState, q: np.ndarray, params: UtParams) -> JointState:
    """One constant-velocity step, propagated through the unscented transform."""
    points, wm, wc = sigma_points(state.mean, state.cov, params)
    mean, cov = _moments(points @ TRANSITION.T, wm, wc, noise=np.asarray(q, dtype=float))
    return JointState(mean, cov)


def reliability_scale(rho: float, model: NoiseModel) -> float:
    """Measurement-noise scale from a similarity coefficient in [0, 1].

    s = clamp(((1 - rho) / max(rho, eps_rho))^2, s_min, s_max); monotone
    non-increasing in rho, so trusted tracks shrink the measurement noise.
    """
    if not 0 <= rho <= 1:
        raise ValueError("similarity must lie in [0, 1]")
    raw = ((1 - rho) / max(rho, model.eps_rho)) ** 2
    return float(min(max(raw, model.s_min), model.s_max))


def update(predicted: JointState,
           z1: tuple[float, float] | None, z2: tuple[float, float] | None,
           s1: float, s2: float,
           model: NoiseModel, params: UtParams) -> tuple[JointState, bool]:
    """Fuse the available centroid measurements into the predicted state.

    Missing measurements (None) drop their rows from the measurement map.
    Returns (posterior, updated); with no measurements the prediction is
    returned unchanged and ``updated`` is False.
    """
    rows: list[int] = []
    z_parts: list[float] = []
    r_blocks: list[np.ndarray] = []
    for slot, (z, s) in enumerate(((z1, s1), (z2, s2))):
        if z is None:
            continue
        rows.extend((2 * slot, 2 * slot + 1))
        z_parts.extend((z[0], z[1]))
        r_blocks.append(s * model.r0)
    if not rows:
        return predicted, False

    h = np.eye(STATE_DIM)[rows]
    r = np.zeros((len(rows), len(rows)))
    for i, block in enumerate(r_blocks):
        r[2 * i:2 * i + 2, 2 * i:2 * i + 2] = block
    z = np.array(z_parts)

    points, wm, wc = sigma_points(predicted.mean, predicted.cov, params)
    z_points = points @ h.T
    z_mean = wm @ z_points
    dz = z_points - z_mean
    dx = points - predicted.mean
    s_cov = (dz * wc[:, None]).T @ dz + r
    cross = (dx * wc[:, None]).T @ dz
    gain = cross @ np.linalg.inv(s_cov)
    mean = predicted.mean + gain @ (z - z_mean)
    cov = predicted.cov - gain @ s_cov @ gain.T
    return JointState(mean, cov), True
