"""Panel data container and CSV round-trip.

A dataset holds a balanced panel: ``n`` strata observed over ``m`` periods,
with ``p`` pre-sample outcome values per stratum available as lags and an
optional covariate vector per observation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError

__all__ = ["PanelDataset", "assemble_z", "load_csv", "save_csv"]


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Balanced panel of outcomes, pre-sample lags, and covariates.

    Parameters
    ----------
    n, m, p : int
        Stratum count, periods per stratum, lag order.
    y : ndarray, shape (n, m)
        Outcomes, stratum-major.  Scalar outcomes only (the built-in
        models all have one-dimensional outcomes).
    y_pre : ndarray, shape (n, p)
        Pre-sample outcomes ordered oldest first, so ``y_pre[i, p-1]``
        is the value immediately preceding period 1.  Never modeled or
        resampled; only ever read as lags.
    x : ndarray, shape (n, m, dim_x)
        Covariates; ``dim_x = 0`` is allowed and is the default.
    """

    n: int
    m: int
    p: int
    y: np.ndarray
    y_pre: np.ndarray = field(default=None)  # type: ignore[assignment]
    x: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.n < 1 or self.m < 2 or self.p < 0:
            raise DataError(
                f"need n >= 1, m >= 2, p >= 0; got n={self.n}, m={self.m}, p={self.p}"
            )
        y = np.asarray(self.y, dtype=float)
        if y.shape != (self.n, self.m):
            raise DataError(f"y must have shape {(self.n, self.m)}, got {y.shape}")
        object.__setattr__(self, "y", y)

        y_pre = self.y_pre
        if y_pre is None:
            y_pre = np.zeros((self.n, 0))
        y_pre = np.asarray(y_pre, dtype=float)
        if y_pre.shape != (self.n, self.p):
            raise DataError(
                f"y_pre must have shape {(self.n, self.p)}, got {y_pre.shape}"
            )
        object.__setattr__(self, "y_pre", y_pre)

        x = self.x
        if x is None:
            x = np.zeros((self.n, self.m, 0))
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:  # accept (n, m) as a single covariate
            x = x[:, :, None]
        if x.shape[:2] != (self.n, self.m):
            raise DataError(f"x must have shape (n, m, k), got {x.shape}")
        object.__setattr__(self, "x", x)

        for name in ("y", "y_pre", "x"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                i, t = np.argwhere(~np.isfinite(arr.reshape(self.n, -1)))[0]
                raise DataError(f"non-finite value in {name} at stratum {i}, slot {t}")
            arr.setflags(write=False)

    @property
    def dim_x(self) -> int:
        return self.x.shape[2]

    def subset(self, strata: Sequence[int]) -> "PanelDataset":
        """Dataset restricted to the given stratum indices (order kept)."""
        idx = np.asarray(list(strata), dtype=int)
        if idx.size == 0:
            raise DataError("cannot build a dataset with zero strata")
        return PanelDataset(
            n=idx.size,
            m=self.m,
            p=self.p,
            y=self.y[idx].copy(),
            y_pre=self.y_pre[idx].copy(),
            x=self.x[idx].copy(),
        )


def assemble_z(data: PanelDataset, i: int, t: int) -> np.ndarray:
    """Observation tuple ``z_it = (y_it, y_it-1, ..., y_it-p, x_it)``.

    ``t`` is 1-based (periods run 1..m).  Lags reaching before period 1
    are filled from ``y_pre``.

    Returns a flat array of length ``1 + p + dim_x``.
    """
    if not (1 <= t <= data.m):
        raise DataError(f"period {t} out of range 1..{data.m}")
    if not (0 <= i < data.n):
        raise DataError(f"stratum {i} out of range 0..{data.n - 1}")
    out = np.empty(1 + data.p + data.dim_x)
    out[0] = data.y[i, t - 1]
    for lag in range(1, data.p + 1):
        s = t - 1 - lag  # 0-based index of period t-lag
        if s >= 0:
            out[lag] = data.y[i, s]
        else:
            # s = -1 means period 0 = newest pre-sample entry y_pre[i, p-1]
            out[lag] = data.y_pre[i, data.p + s]
    if data.dim_x:
        out[1 + data.p :] = data.x[i, t - 1]
    return out


_HEADER_FIXED = ("stratum", "period", "y")


def load_csv(path: str) -> PanelDataset:
    """Read a dataset from CSV with header ``stratum,period,y,x1..xk``.

    Rows with period <= 0 are pre-sample outcomes; each stratum must carry
    the same number of them (that number is ``p``) and the same periods
    1..m.  Raises :class:`DataError` with the offending line number on any
    structural problem.
    """
    rows: dict[int, dict[int, tuple[float, tuple[float, ...]]]] = {}
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if tuple(header[:3]) != _HEADER_FIXED:
            raise DataError(
                f"{path}:1: header must start with 'stratum,period,y', got {header[:3]}"
            )
        k = len(header) - 3
        expected_x = tuple(f"x{j}" for j in range(1, k + 1))
        if tuple(header[3:]) != expected_x:
            raise DataError(
                f"{path}:1: covariate columns must be named x1..x{k}, got {header[3:]}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 + k:
                raise DataError(f"{path}:{lineno}: expected {3 + k} fields, got {len(row)}")
            try:
                stratum = int(row[0])
                period = int(row[1])
                yval = float(row[2])
                xval = tuple(float(v) for v in row[3:])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            per_stratum = rows.setdefault(stratum, {})
            if period in per_stratum:
                raise DataError(
                    f"{path}:{lineno}: duplicate (stratum={stratum}, period={period})"
                )
            per_stratum[period] = (yval, xval)

    if not rows:
        raise DataError(f"{path}: no data rows")

    strata = sorted(rows)
    first = rows[strata[0]]
    periods = sorted(t for t in first if t >= 1)
    pre_periods = sorted(t for t in first if t <= 0)
    m = len(periods)
    p = len(pre_periods)
    if periods != list(range(1, m + 1)):
        raise DataError(f"{path}: stratum {strata[0]} periods must be 1..m, got {periods}")
    if pre_periods != list(range(-p + 1, 1)) and p > 0:
        raise DataError(
            f"{path}: stratum {strata[0]} pre-sample periods must be {-p + 1}..0"
        )
    n = len(strata)
    y = np.empty((n, m))
    y_pre = np.empty((n, p))
    x = np.empty((n, m, len(first[periods[0]][1]) if m else 0))
    for out_i, s in enumerate(strata):
        got = rows[s]
        if sorted(got) != pre_periods + periods:
            raise DataError(
                f"{path}: stratum {s} is unbalanced: periods {sorted(got)} "
                f"vs expected {pre_periods + periods}"
            )
        for j, t in enumerate(periods):
            y[out_i, j] = got[t][0]
            x[out_i, j] = got[t][1]
        for j, t in enumerate(pre_periods):
            y_pre[out_i, j] = got[t][0]
    return PanelDataset(n=n, m=m, p=p, y=y, y_pre=y_pre, x=x)


def save_csv(data: PanelDataset, path: str) -> None:
    """Write a dataset in the format :func:`load_csv` reads.

    Floats are written with ``repr`` so the round trip is lossless.
    """
    k = data.dim_x
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(_HEADER_FIXED) + [f"x{j}" for j in range(1, k + 1)])
        for i in range(data.n):
            for j in range(data.p):
                period = -data.p + 1 + j
                writer.writerow([i, period, repr(float(data.y_pre[i, j]))] + ["0.0"] * k)
            for t in range(1, data.m + 1):
                writer.writerow(
                    [i, t, repr(float(data.y[i, t - 1]))]
                    + [repr(float(v)) for v in data.x[i, t - 1]]
                )
