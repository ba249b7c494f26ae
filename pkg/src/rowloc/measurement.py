"""Template-based sensor model.

The probability of a point cloud given a pose proposal is the product of
per-point template lookups; we work with the sum of logs to avoid
underflow, and floor each per-point probability so a single zero voxel
cannot annihilate the score.  The argmax over proposals is unchanged.

Every preprocessed point contributes to every proposal's score: points
that a proposal pushes outside the cutoff box (or off the template grid)
pay the no-information probability instead of being dropped.  Without
the constant penalty, proposals that rotate informative points out of
the box would shed their negative log terms and beat the true pose on
raw sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    Box3,
    PointCloud,
    PreprocessConfig,
    PreprocessedFrame,
    preprocess,
    rotation_from_euler,
)
from .template import Template

DEFAULT_P_FLOOR = 1e-4

# particles per scoring chunk; bounds the (chunk x n_points) temporaries
_CHUNK = 128


@dataclass(frozen=True)
class LogLikelihood:
    value: float
    n_points_scored: int

    @property
    def empty(self) -> bool:
        return self.n_points_scored == 0

    @property
    def mean(self) -> float:
        """Per-point mean log-likelihood, for comparing unequal clouds."""
        return self.value / self.n_points_scored if self.n_points_scored else 0.0


class PoseScorer:
    """Scores many (y, theta) proposals against one preprocessed frame.

    The roll/pitch/height leveling is applied to the cloud once; each
    proposal then costs one planar rotation plus a grid gather.
    """

    def __init__(
        self,
        frame: PreprocessedFrame,
        template: Template,
        cutoff: Box3 | None,
        p_floor: float = DEFAULT_P_FLOOR,
    ):
        self.template = template
        self.cutoff = cutoff
        self.p_floor = float(p_floor)
        self.log_floor = math.log(self.p_floor)

        R_level = rotation_from_euler(frame.roll, frame.pitch, 0.0).rotation
        leveled = frame.cloud_V.points @ R_level.T
        self._qx = leveled[:, 0].astype(np.float64)
        self._qy = leveled[:, 1].astype(np.float64)
        self._qz = leveled[:, 2] + frame.height  # z in {T}, pose-independent
        self._qx32 = self._qx.astype(np.float32)
        self._qy32 = self._qy.astype(np.float32)

        cfg = template.config
        self._lo = cfg.template_range.min_corner
        self._res = cfg.resolution
        self._dims = np.array(cfg.dims, dtype=np.int64)
        flat = np.ascontiguousarray(template.grid.reshape(-1), dtype=np.float64)
        self._log_flat = np.log(np.maximum(flat, self.p_floor)).astype(np.float32)
        self.log_no_info = math.log(max(template.no_info_frequency, self.p_floor))
        self.n_points = self._qx.shape[0]

        # grid-coordinate constants for the float32 hot path
        self._inv_res = np.float32(1.0 / self._res)
        self._gx_hi = np.float32(self._dims[0])
        self._gy_hi = np.float32(self._dims[1])
        box = cutoff if cutoff is not None else cfg.template_range
        self._cx = (
            np.float32((box.min_corner[0] - self._lo[0]) / self._res),
            np.float32((box.max_corner[0] - self._lo[0]) / self._res),
        )
        self._cy = (
            np.float32((box.min_corner[1] - self._lo[1]) / self._res),
            np.float32((box.max_corner[1] - self._lo[1]) / self._res),
        )

        # z index and masks never depend on the proposal
        self._iz = np.floor((self._qz - self._lo[2]) / self._res).astype(np.int64)
        at_top = self._qz == cfg.template_range.max_corner[2]
        self._iz[at_top] = self._dims[2] - 1
        self._z_in_template = (self._qz >= self._lo[2]) & (
            self._qz <= cfg.template_range.max_corner[2]
        )
        np.clip(self._iz, 0, self._dims[2] - 1, out=self._iz)
        self._iz32 = self._iz.astype(np.int32)
        if cutoff is not None:
            self._z_in_cutoff = (self._qz >= cutoff.min_corner[2]) & (
                self._qz <= cutoff.max_corner[2]
            )
        else:
            self._z_in_cutoff = np.ones_like(self._qz, dtype=bool)

    def score(self, ys: np.ndarray, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(log-likelihoods, points-scored) for parallel arrays of proposals."""
        ys = np.asarray(ys, dtype=np.float64)
        thetas = np.asarray(thetas, dtype=np.float64)
        n = ys.shape[0]
        loglik = np.zeros(n)
        n_scored = np.zeros(n, dtype=np.int64)
        if self._qx.shape[0] == 0:
            return loglik, n_scored
        for start in range(0, n, _CHUNK):
            sl = slice(start, min(start + _CHUNK, n))
            ll, ns = self._score_chunk(ys[sl], thetas[sl])
            loglik[sl] = ll
            n_scored[sl] = ns
        return loglik, n_scored

    def _score_chunk(self, ys, thetas):
        cos_t = np.cos(thetas).astype(np.float32)[:, None]
        sin_t = np.sin(thetas).astype(np.float32)[:, None]
        # work directly in grid coordinates (voxels from the grid origin)
        fx = cos_t * self._qx32 - sin_t * self._qy32
        fx -= np.float32(self._lo[0])
        fx *= self._inv_res
        fy = sin_t * self._qx32 + cos_t * self._qy32
        fy += ys.astype(np.float32)[:, None]
        fy -= np.float32(self._lo[1])
        fy *= self._inv_res

        keep = (fx >= self._cx[0]) & (fx <= self._cx[1])
        keep &= (fy >= self._cy[0]) & (fy <= self._cy[1])
        keep &= self._z_in_cutoff[None, :]
        valid = (fx >= 0) & (fx <= self._gx_hi) & (fy >= 0) & (fy <= self._gy_hi)
        valid &= self._z_in_template[None, :]
        valid &= keep

        # truncation (not floor) is fine: negatives are masked and clipped
        ix = fx.astype(np.int32)
        iy = fy.astype(np.int32)
        np.clip(ix, 0, np.int32(self._dims[0] - 1), out=ix)
        np.clip(iy, 0, np.int32(self._dims[1] - 1), out=iy)
        lin = ix
        lin *= np.int32(self._dims[1])
        lin += iy
        lin *= np.int32(self._dims[2])
        lin += self._iz32[None, :]
        logs = np.where(valid, self._log_flat[lin], np.float32(self.log_no_info))
        return logs.sum(axis=1, dtype=np.float64), keep.sum(axis=1)


def measurement_log_likelihood(
    cloud_C: PointCloud,
    template: Template,
    y: float,
    theta: float,
    row_range: Box3 | None = None,
    pre_cfg: PreprocessConfig = PreprocessConfig(),
    p_floor: float = DEFAULT_P_FLOOR,
) -> LogLikelihood:
    """Log of Eq.-style product likelihood at a single (y, theta) proposal."""
    frame = preprocess(cloud_C, pre_cfg)
    if row_range is None:
        row_range = template.config.row_range
    scorer = PoseScorer(frame, template, row_range, p_floor)
    ll, ns = scorer.score(np.array([y]), np.array([theta]))
    if ns[0] == 0:
        return LogLikelihood(0.0, 0)
    return LogLikelihood(float(ll[0]), int(ns[0]))


def likelihood_field(
    cloud_C: PointCloud,
    template: Template,
    y_values: np.ndarray,
    theta_values: np.ndarray,
    row_range: Box3 | None = None,
    pre_cfg: PreprocessConfig = PreprocessConfig(),
    p_floor: float = DEFAULT_P_FLOOR,
) -> np.ndarray:
    """Log-likelihood over a (theta, y) grid; preprocessing runs once.

    Returns an array of shape (len(theta_values), len(y_values)).
    """
    y_values = np.asarray(y_values, dtype=np.float64)
    theta_values = np.asarray(theta_values, dtype=np.float64)
    if y_values.size == 0 or theta_values.size == 0:
        raise ValueError("grids must be non-empty")
    frame = preprocess(cloud_C, pre_cfg)
    if row_range is None:
        row_range = template.config.row_range
    scorer = PoseScorer(frame, template, row_range, p_floor)
    tt, yy = np.meshgrid(theta_values, y_values, indexing="ij")
    ll, _ = scorer.score(yy.ravel(), tt.ravel())
    return ll.reshape(theta_values.size, y_values.size)


def save_likelihood_field_csv(path, field: np.ndarray, y_values, theta_values) -> None:
    """CSV matrix: rows = theta nodes, cols = y nodes, with value headers."""
    y_values = np.asarray(y_values)
    theta_values = np.asarray(theta_values)
    with open(path, "w") as f:
        f.write("theta\\y," + ",".join(repr(float(v)) for v in y_values) + "\n")
        for i, th in enumerate(theta_values):
            row = ",".join(repr(float(v)) for v in field[i])
            f.write(f"{float(th)!r},{row}\n")
