"""Loan dataset schema, the recovery-rate probit transform, CSV ingestion and
design-matrix construction."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConfigError, DomainError, IngestionError

DEFAULT_EPSILON = 1e-8

DETERMINANTS = (
    "LOANSIZE",
    "LOANTYPE",
    "LOANTYPE_X_FIRMSIZE",
    "ALLASSETCOLL",
    "INVENTRECIVECOLL",
    "OTHERCOLL",
    "PREPACK",
    "RESTRUCTURE",
    "OTHERDEFAULT",
    "TIMETOEMERGE",
    "TIMETOEMERGE_SQ",
    "PREPACK_X_TIMETOEMERGE",
    "FIRMSIZE",
    "FIRMPPE",
    "FIRMCF",
    "FIRMLEV",
    "EVERDEFAULTED",
    "GDP",
    "INDDISTRESS",
    "AIS",
)

BINARY_DETERMINANTS = frozenset(
    {
        "LOANTYPE",
        "ALLASSETCOLL",
        "INVENTRECIVECOLL",
        "OTHERCOLL",
        "PREPACK",
        "RESTRUCTURE",
        "OTHERDEFAULT",
        "EVERDEFAULTED",
        "INDDISTRESS",
    }
)


def _check_epsilon(epsilon):
    if not (0.0 < epsilon < 0.5):
        raise ConfigError(f"epsilon must lie in (0, 0.5), got {epsilon!r}")


def clamp_and_transform(rr, epsilon=DEFAULT_EPSILON):
    """Map a recovery rate in [0, 1] to the real line via the probit.

    Exact zeros and ones are replaced by ``epsilon`` and ``1 - epsilon``
    before inversion so the result is always finite.  Accepts scalars or
    arrays; scalars in, float out.
    """
    _check_epsilon(epsilon)
    arr = np.asarray(rr, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any((arr < 0.0) | (arr > 1.0)):
        raise DomainError(f"recovery rate outside [0, 1]: {rr!r}")
    clamped = np.where(arr == 0.0, epsilon, np.where(arr == 1.0, 1.0 - epsilon, arr))
    # Upper clamp via the mirrored lower tail: 1 - eps is not exact in binary,
    # and this keeps transform(0) == -transform(1) bit for bit.
    out = np.where(arr == 1.0, -ndtri(epsilon), ndtri(clamped))
    if out.ndim == 0:
        return float(out)
    return out


def inverse_transform(y):
    """Standard normal cdf, clamped to [0, 1]."""
    out = np.clip(ndtr(np.asarray(y, dtype=float)), 0.0, 1.0)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class LoanRecord:
    rr: float
    year: int
    x: tuple

    def __post_init__(self):
        if not (0.0 <= self.rr <= 1.0):
            raise DomainError(f"rr must lie in [0, 1], got {self.rr!r}")


@dataclass(frozen=True)
class LoanDataset:
    """Ordered collection of loans sharing one determinant schema."""

    records: tuple
    determinant_names: tuple = DETERMINANTS
    binary_mask: tuple = field(default=None)

    def __post_init__(self):
        names = tuple(self.determinant_names)
        object.__setattr__(self, "determinant_names", names)
        if self.binary_mask is None:
            mask = tuple(n in BINARY_DETERMINANTS for n in names)
        else:
            mask = tuple(bool(b) for b in self.binary_mask)
        if len(mask) != len(names):
            raise ConfigError("binary_mask length differs from determinant_names")
        object.__setattr__(self, "binary_mask", mask)
        object.__setattr__(self, "records", tuple(self.records))
        K = len(names)
        for r in self.records:
            if len(r.x) != K:
                raise DomainError(f"record has {len(r.x)} determinants, expected {K}")
            for k, b in enumerate(mask):
                if b and r.x[k] not in (0.0, 1.0):
                    raise DomainError(f"binary determinant {names[k]} has value {r.x[k]!r}")

    @property
    def n(self):
        return len(self.records)

    @property
    def K(self):
        return len(self.determinant_names)

    @property
    def rr(self):
        return np.array([r.rr for r in self.records], dtype=float)

    @property
    def years(self):
        return np.array([r.year for r in self.records], dtype=np.int64)

    @property
    def x(self):
        return np.array([r.x for r in self.records], dtype=float).reshape(self.n, self.K)

    @classmethod
    def from_arrays(cls, rr, years, x, determinant_names=DETERMINANTS, binary_mask=None):
        x = np.asarray(x, dtype=float)
        records = [
            LoanRecord(float(r), int(t), tuple(float(v) for v in row))
            for r, t, row in zip(rr, years, x)
        ]
        return cls(tuple(records), tuple(determinant_names), binary_mask)


def load_dataset(path, determinants: Sequence[str] = DETERMINANTS, year_span=None):
    """Read and validate a loan CSV.

    The header must contain ``rr``, ``year`` and every name in
    ``determinants``; extra columns are ignored.  Any malformed cell raises
    :class:`IngestionError` naming its row (1-based, header excluded) and
    column.  ``year_span`` is an optional inclusive ``(first, last)`` pair.
    """
    path = Path(path)
    determinants = tuple(determinants)
    binary = [n in BINARY_DETERMINANTS for n in determinants]
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path} is empty; header row required") from None
        header = [h.strip() for h in header]
        col = {}
        for name in ("rr", "year") + determinants:
            if name not in header:
                raise IngestionError("missing column", column=name)
            col[name] = header.index(name)

        records = []
        for rownum, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise IngestionError(
                    f"expected {len(header)} cells, found {len(row)}", row=rownum
                )
            rr = _parse_float(row[col["rr"]], rownum, "rr")
            if not (0.0 <= rr <= 1.0):
                raise IngestionError(f"rr={rr!r} outside [0, 1]", row=rownum, column="rr")
            yv = _parse_float(row[col["year"]], rownum, "year")
            if yv != math.floor(yv):
                raise IngestionError(f"year={yv!r} is not an integer", row=rownum, column="year")
            year = int(yv)
            if year_span is not None and not (year_span[0] <= year <= year_span[1]):
                raise IngestionError(
                    f"year {year} outside sample span {year_span}", row=rownum, column="year"
                )
            xs = []
            for name, is_bin in zip(determinants, binary):
                v = _parse_float(row[col[name]], rownum, name)
                if is_bin and v not in (0.0, 1.0):
                    raise IngestionError(
                        f"binary determinant has value {v!r}", row=rownum, column=name
                    )
                xs.append(v)
            records.append(LoanRecord(rr, year, tuple(xs)))
    if not records:
        raise IngestionError(f"{path} contains no data rows")
    return LoanDataset(tuple(records), determinants, tuple(binary))


def _parse_float(cell, row, column):
    try:
        v = float(cell)
    except ValueError:
        raise IngestionError(f"non-numeric cell {cell!r}", row=row, column=column) from None
    if not math.isfinite(v):
        raise IngestionError(f"non-finite cell {cell!r}", row=row, column=column)
    return v


def write_dataset(ds: LoanDataset, path):
    """Write ``ds`` in the ingestion CSV schema with round-trip precision."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["rr", "year", *ds.determinant_names])
        for r in ds.records:
            w.writerow([repr(float(r.rr)), str(int(r.year)), *(repr(float(v)) for v in r.x)])


@dataclass(frozen=True)
class DesignMatrix:
    """Model-ready arrays.

    ``X`` carries a leading intercept column.  ``scaling`` holds one
    ``(mean, sd)`` pair per column of ``X``; untouched columns get ``(0, 1)``.
    ``year_index`` is 1-based and contiguous over ``first_year..first_year+T-1``.
    """

    y: np.ndarray
    X: np.ndarray
    year_index: np.ndarray
    scaling: tuple
    T: int
    first_year: int
    names: tuple
    epsilon: float = DEFAULT_EPSILON

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def K(self):
        return self.X.shape[1] - 1

    @property
    def t0(self):
        """Zero-based year index."""
        return self.year_index - 1

    @property
    def rr(self):
        return inverse_transform(self.y)

    def to_raw_scale(self, beta):
        """Map coefficients fitted on this design back to raw covariate units.

        Works on a single vector or on rows of a 2-D array of draws.
        """
        beta = np.asarray(beta, dtype=float)
        mean = np.array([s[0] for s in self.scaling])
        sd = np.array([s[1] for s in self.scaling])
        raw = beta / sd
        raw[..., 0] = beta[..., 0] - np.sum(beta[..., 1:] * mean[1:] / sd[1:], axis=-1)
        return raw

    def to_standard_scale(self, beta_raw):
        beta_raw = np.asarray(beta_raw, dtype=float)
        mean = np.array([s[0] for s in self.scaling])
        sd = np.array([s[1] for s in self.scaling])
        std = beta_raw * sd
        std[..., 0] = beta_raw[..., 0] + np.sum(beta_raw[..., 1:] * mean[1:], axis=-1)
        return std


def build_design(ds: LoanDataset, standardize=True, epsilon=DEFAULT_EPSILON, year_span=None):
    """Transform responses and assemble the regression design for ``ds``.

    Continuous determinants are z-scored (sample mean, ``ddof=1`` sd) when
    ``standardize`` is set; binary dummies and the intercept pass through.
    """
    if ds.n < 1:
        raise DomainError("dataset has no records")
    _check_epsilon(epsilon)
    y = clamp_and_transform(ds.rr, epsilon)
    x = ds.x
    cols = [np.ones(ds.n)]
    scaling = [(0.0, 1.0)]
    for k, name in enumerate(ds.determinant_names):
        v = x[:, k]
        if standardize and not ds.binary_mask[k]:
            m = float(v.mean())
            s = float(v.std(ddof=1)) if ds.n > 1 else 0.0
            if not s > 0.0:
                raise DomainError(f"continuous determinant {name} has zero variance")
            cols.append((v - m) / s)
            scaling.append((m, s))
        else:
            cols.append(v.copy())
            scaling.append((0.0, 1.0))
    X = np.column_stack(cols)

    years = ds.years
    if year_span is None:
        first, last = int(years.min()), int(years.max())
    else:
        first, last = int(year_span[0]), int(year_span[1])
        if years.min() < first or years.max() > last:
            raise DomainError(f"loan years fall outside span {year_span}")
    T = last - first + 1
    year_index = (years - first + 1).astype(np.int64)
    for arr in (y, X, year_index):
        arr.setflags(write=False)
    return DesignMatrix(
        y=y,
        X=X,
        year_index=year_index,
        scaling=tuple(scaling),
        T=T,
        first_year=first,
        names=("INTERCEPT", *ds.determinant_names),
        epsilon=epsilon,
    )


def design_from_arrays(y, X, year_index, T=None, names=None):
    """Wrap pre-built arrays (already transformed, intercept included).

    Used by the test harnesses, where responses are simulated on the
    transformed scale directly.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    year_index = np.asarray(year_index, dtype=np.int64)
    if T is None:
        T = int(year_index.max())
    if names is None:
        names = ("INTERCEPT",) + tuple(f"X{k}" for k in range(1, X.shape[1]))
    return DesignMatrix(
        y=y,
        X=X,
        year_index=year_index,
        scaling=tuple((0.0, 1.0) for _ in range(X.shape[1])),
        T=int(T),
        first_year=1,
        names=tuple(names),
    )
