"""Forward simulation of the model and brute-force oracles for testing."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, ndtr, ndtri
from scipy.stats import norm

from .data import (
    BINARY_DETERMINANTS,
    DEFAULT_EPSILON,
    DETERMINANTS,
    LoanDataset,
    build_design,
    write_dataset,
)
from .errors import ConfigError
from .priors import assign_components

# Binary means and continuous medians/quartiles of the descriptive-statistics
# table; lognormal scale from the interquartile ratio, 1.349 = 2 * z(0.75).
_IQR_Z = 2.0 * 0.6744897501960817


def _lognormal(median, q1, q3):
    return {"kind": "lognormal", "median": median, "sigma": math.log(q3 / q1) / _IQR_Z}


TABLE1 = {
    "LOANSIZE": _lognormal(96.0, 35.0, 208.5),
    "LOANTYPE": {"kind": "bernoulli", "p": 0.48},
    "LOANTYPE_X_FIRMSIZE": {"kind": "product", "of": ["LOANTYPE", "FIRMSIZE"]},
    "ALLASSETCOLL": {"kind": "bernoulli", "p": 0.62},
    "INVENTRECIVECOLL": {"kind": "bernoulli", "p": 0.10},
    "OTHERCOLL": {"kind": "bernoulli", "p": 0.17},
    "PREPACK": {"kind": "bernoulli", "p": 0.08},
    "RESTRUCTURE": {"kind": "bernoulli", "p": 0.13},
    "OTHERDEFAULT": {"kind": "bernoulli", "p": 0.01},
    "TIMETOEMERGE": _lognormal(9.67, 2.59, 18.42),
    "TIMETOEMERGE_SQ": {"kind": "product", "of": ["TIMETOEMERGE", "TIMETOEMERGE"]},
    "PREPACK_X_TIMETOEMERGE": {"kind": "product", "of": ["PREPACK", "TIMETOEMERGE"]},
    "FIRMSIZE": _lognormal(665.5, 227.4, 1365.7),
    "FIRMPPE": _lognormal(0.44, 0.13, 0.82),
    "FIRMCF": _lognormal(0.09, 0.05, 0.14),
    "FIRMLEV": _lognormal(0.94, 0.77, 1.26),
    "EVERDEFAULTED": {"kind": "bernoulli", "p": 0.15},
    "GDP": {"kind": "uniform", "low": 0.06, "high": 4.79},
    "INDDISTRESS": {"kind": "bernoulli", "p": 0.18},
    "AIS": _lognormal(0.03, 0.02, 0.04),
}

PRESETS = {"table1": TABLE1}


def gaussian_spec(K, binary_every=0):
    """Simple covariate spec: K standard normals, optionally every
    ``binary_every``-th one a fair coin."""
    spec = {}
    for k in range(1, K + 1):
        if binary_every and k % binary_every == 0:
            spec[f"X{k}"] = {"kind": "bernoulli", "p": 0.5}
        else:
            spec[f"X{k}"] = {"kind": "normal", "mean": 0.0, "sd": 1.0}
    return spec


def draw_covariates(spec, n, rng):
    """Sample an (n, K) covariate block; returns (names, binary_mask, x)."""
    names = list(spec)
    cols = {}
    for name in names:
        cfg = spec[name]
        kind = cfg.get("kind")
        if kind == "bernoulli":
            if not 0.0 <= cfg["p"] <= 1.0:
                raise ConfigError(f"{name}: bernoulli p outside [0, 1]")
            cols[name] = (rng.random(n) < cfg["p"]).astype(float)
        elif kind == "lognormal":
            if not (cfg["median"] > 0 and cfg["sigma"] > 0):
                raise ConfigError(f"{name}: lognormal needs positive median and sigma")
            cols[name] = cfg["median"] * np.exp(cfg["sigma"] * rng.standard_normal(n))
        elif kind == "normal":
            if not cfg["sd"] > 0:
                raise ConfigError(f"{name}: normal sd must be positive")
            cols[name] = cfg["mean"] + cfg["sd"] * rng.standard_normal(n)
        elif kind == "uniform":
            if not cfg["high"] > cfg["low"]:
                raise ConfigError(f"{name}: uniform needs high > low")
            cols[name] = rng.uniform(cfg["low"], cfg["high"], n)
        elif kind == "product":
            continue
        else:
            raise ConfigError(f"{name}: unknown covariate kind {kind!r}")
    for name in names:
        cfg = spec[name]
        if cfg.get("kind") == "product":
            missing = [f for f in cfg["of"] if f not in cols]
            if missing:
                raise ConfigError(f"{name}: product of unknown columns {missing}")
            v = np.ones(n)
            for f in cfg["of"]:
                v = v * cols[f]
            cols[name] = v
    binary = [
        spec[nm].get("kind") == "bernoulli" or nm in BINARY_DETERMINANTS for nm in names
    ]
    x = np.column_stack([cols[nm] for nm in names]) if names else np.empty((n, 0))
    return names, binary, x


@dataclass
class TruthParams:
    mu: list
    sigma2: list
    c: list
    beta0: list
    beta1: list
    p: float
    q: float

    def __post_init__(self):
        mu = np.asarray(self.mu, float)
        c = np.asarray(self.c, float)
        if not np.all(np.diff(mu) > 0):
            raise ConfigError("truth mu must be strictly increasing")
        if np.any(np.asarray(self.sigma2) <= 0):
            raise ConfigError("truth sigma2 must be positive")
        if c.shape[0] != mu.shape[0] + 1 or c[0] != -np.inf or c[-1] != np.inf or c[1] != 0:
            raise ConfigError("truth cut-points must be (-inf, 0, ..., inf) of length J+1")
        if not np.all(np.diff(c[1:-1]) > 0):
            raise ConfigError("truth cut-points must be increasing")
        if len(self.beta0) != len(self.beta1):
            raise ConfigError("beta0 and beta1 differ in length")
        if not (0 <= self.p <= 1 and 0 <= self.q <= 1):
            raise ConfigError("p, q must lie in [0, 1]")


@dataclass
class GroundTruth:
    params: TruthParams
    S: list
    zstar: list
    z: list
    first_year: int
    n_per_year: list
    seed: int
    scale: str = "standardized"
    determinants: list = field(default_factory=list)

    def to_json(self):
        d = asdict(self)
        d["params"]["c"] = [_enc(v) for v in d["params"]["c"]]
        return json.dumps(d, indent=1)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        pr = d.pop("params")
        pr["c"] = [_dec(v) for v in pr["c"]]
        return cls(params=TruthParams(**pr), **d)


def _enc(v):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def _dec(v):
    return float(v)


def split_counts(n, T):
    """Spread n loans over T years as evenly as possible."""
    if T < 1:
        raise ConfigError("years must be at least 1")
    if n < 1:
        raise ConfigError("n must be at least 1")
    base, extra = divmod(n, T)
    return [base + (1 if t < extra else 0) for t in range(T)]


def generate(truth: TruthParams, n_per_year, cov_spec="table1", seed=0, first_year=1987,
             standardize=True, epsilon=DEFAULT_EPSILON, S=None):
    """Simulate a dataset from known parameters.

    Covariates come from ``cov_spec`` (a preset name or a spec dict); the
    regression acts on the design exactly as :func:`build_design` will build
    it, so ``truth.beta*`` are on the fitted scale.  ``S`` overrides the
    simulated state path.
    """
    spec = PRESETS[cov_spec] if isinstance(cov_spec, str) else cov_spec
    if isinstance(cov_spec, str) and cov_spec not in PRESETS:
        raise ConfigError(f"unknown covariate preset {cov_spec!r}")
    n_per_year = [int(v) for v in n_per_year]
    if any(v < 0 for v in n_per_year) or sum(n_per_year) < 1:
        raise ConfigError("n_per_year must be non-negative with a positive total")
    T = len(n_per_year)
    n = sum(n_per_year)
    rng = np.random.default_rng(seed)
    mu = np.asarray(truth.mu, float)
    sigma2 = np.asarray(truth.sigma2, float)
    c = np.asarray(truth.c, float)
    beta0 = np.asarray(truth.beta0, float)
    beta1 = np.asarray(truth.beta1, float)

    if S is None:
        p, q = truth.p, truth.q
        den = 2.0 - p - q
        pi1 = (1.0 - p) / den if den > 0 else 0.5
        S = np.empty(T, dtype=np.int64)
        S[0] = rng.random() < pi1
        for t in range(1, T):
            stay = p if S[t - 1] == 0 else q
            S[t] = S[t - 1] if rng.random() < stay else 1 - S[t - 1]
    S = np.asarray(S, dtype=np.int64)

    names, binary, x = draw_covariates(spec, n, rng)
    if len(names) + 1 != beta0.shape[0]:
        raise ConfigError(f"beta has {beta0.shape[0]} entries, covariate spec gives K={len(names)}")
    years = np.repeat(np.arange(first_year, first_year + T), n_per_year)
    placeholder = LoanDataset.from_arrays(np.full(n, 0.5), years, x, names, binary)
    d = build_design(placeholder, standardize=standardize, epsilon=epsilon,
                     year_span=(first_year, first_year + T - 1))
    st = S[d.t0]
    a = np.where(st == 1, d.X @ beta1, d.X @ beta0)
    z = a + rng.standard_normal(n)
    zstar = assign_components(z, c)
    y = mu[zstar - 1] + np.sqrt(sigma2[zstar - 1]) * rng.standard_normal(n)
    hi = -ndtri(epsilon)
    rr = np.where(y >= hi, 1.0, np.where(y <= -hi, 0.0, ndtr(y)))
    rr = np.clip(rr, 0.0, 1.0)

    ds = LoanDataset.from_arrays(rr, years, x, names, binary)
    gt = GroundTruth(
        params=truth,
        S=S.tolist(),
        zstar=zstar.tolist(),
        z=z.tolist(),
        first_year=first_year,
        n_per_year=n_per_year,
        seed=int(seed),
        scale="standardized" if standardize else "raw",
        determinants=names,
    )
    return ds, gt


def write_simulation(ds, gt, csv_path, truth_path=None):
    csv_path = Path(csv_path)
    write_dataset(ds, csv_path)
    truth_path = Path(truth_path) if truth_path else csv_path.with_suffix(".truth.json")
    truth_path.write_text(gt.to_json(), encoding="utf-8")
    return csv_path, truth_path


def default_truth(K=20, J=4, gap=1.0, seed=0, n_nonzero=None):
    """A reference parameter set with a sparse coefficient vector.

    State 1 has the higher intercept by ``gap``.  Roughly a third of the
    determinant coefficients are non-zero, with magnitudes in [0.3, 0.6].
    """
    rng = np.random.default_rng(seed)
    if J == 4:
        mu = [-5.61, -1.0, 0.3, 5.61]
        sigma2 = [0.01, 0.25, 0.16, 0.0004]
        c = [-np.inf, 0.0, 0.6, 1.2, np.inf]
    else:
        mu = list(np.linspace(-3.0, 3.0, J))
        sigma2 = [0.25] * J
        c = [-np.inf, 0.0] + list(0.7 * np.arange(1, J - 1)) + [np.inf]
    if n_nonzero is None:
        n_nonzero = max(1, K // 3)
    betas = []
    for s in (0, 1):
        b = np.zeros(K + 1)
        idx = rng.choice(K, size=min(n_nonzero, K), replace=False) + 1
        b[idx] = rng.uniform(0.3, 0.6, idx.shape[0]) * rng.choice([-1.0, 1.0], idx.shape[0])
        betas.append(b)
    betas[0][0] = 0.9 - gap / 2.0
    betas[1][0] = 0.9 + gap / 2.0
    return TruthParams(mu=mu, sigma2=sigma2, c=c, beta0=betas[0].tolist(),
                       beta1=betas[1].tolist(), p=0.7, q=0.7)


# ---------------------------------------------------------------- oracles

MAX_ENUM_T = 12


def enumerate_state_posterior(z, X, year_index, T, beta0, beta1, p, q):
    """Exact Pr(S_t = 1 | z) for every year by summing over all 2^T paths."""
    if T > MAX_ENUM_T:
        raise ConfigError(f"path enumeration refuses T={T} > {MAX_ENUM_T}")
    z = np.asarray(z, float)
    X = np.asarray(X, float)
    t0 = np.asarray(year_index) - 1
    ll = np.zeros((T, 2))
    for i in range(z.shape[0]):
        ll[t0[i], 0] += norm.logpdf(z[i] - X[i] @ np.asarray(beta0, float))
        ll[t0[i], 1] += norm.logpdf(z[i] - X[i] @ np.asarray(beta1, float))
    pi1 = (1.0 - p) / (2.0 - p - q)
    P = np.array([[p, 1.0 - p], [1.0 - q, q]])
    paths = np.array(list(itertools.product((0, 1), repeat=T)), dtype=np.int64)
    logj = np.log(np.where(paths[:, 0] == 1, pi1, 1.0 - pi1))
    for t in range(1, T):
        logj += np.log(P[paths[:, t - 1], paths[:, t]])
    logj += ll[np.arange(T)[None, :], paths].sum(axis=1)
    post = np.exp(logj - logsumexp(logj))
    return post @ paths
