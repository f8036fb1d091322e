"""Gibbs sweep orchestration for the static and Markov-switching models."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtri

from . import conditionals as cond
from . import kernels
from .data import DEFAULT_EPSILON, DesignMatrix, LoanDataset, build_design
from .errors import ConfigError, NumericError, RRMixError
from .ffbs import ffbs, state_logliks
from .priors import HyperParams, ModelState, default_hyperparams, sample_prior_state

log = logging.getLogger(__name__)

MODELS = ("static", "dynamic")


@dataclass(frozen=True)
class FitConfig:
    model: str = "dynamic"
    draws: int = 100_000
    burnin: int = 5_000
    thin: int = 1
    seed: int = 0
    J: int = 4
    epsilon: float = DEFAULT_EPSILON
    loan_weighted_transitions: bool = False
    chains: int = 1
    threads: int = 1
    standardize: bool = True
    store_latent: bool = False
    # condition the p, q update on the stationary law of S_1
    exact_pq: bool = True
    # pin (p, q) instead of sampling them, e.g. (0.0, 1.0) holds S at 1
    fixed_pq: tuple | None = None
    # "data": mixture and cut-points from y quantiles; "prior": a prior draw
    init: str = "data"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.draws < 1:
            raise ConfigError("draws must be at least 1")
        if self.burnin < 0:
            raise ConfigError("burnin must be non-negative")
        if self.thin < 1:
            raise ConfigError("thin must be at least 1")
        if self.J < 2:
            raise ConfigError("J must be at least 2")
        if self.chains < 1:
            raise ConfigError("chains must be at least 1")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if not (0.0 < self.epsilon < 0.5):
            raise ConfigError("epsilon must lie in (0, 0.5)")
        if self.init not in ("data", "prior"):
            raise ConfigError(f"init must be 'data' or 'prior', got {self.init!r}")
        if self.fixed_pq is not None:
            p, q = self.fixed_pq
            if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0) or (p == 1.0 and q == 1.0):
                raise ConfigError(f"invalid fixed_pq {self.fixed_pq!r}")
            object.__setattr__(self, "fixed_pq", (float(p), float(q)))

    @property
    def dynamic(self):
        return self.model == "dynamic"

    def to_dict(self):
        d = asdict(self)
        if d["fixed_pq"] is not None:
            d["fixed_pq"] = list(d["fixed_pq"])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("fixed_pq") is not None:
            d["fixed_pq"] = tuple(d["fixed_pq"])
        return cls(**d)


INVARIANTS = (
    "mu_order", "sigma2_positive", "cut_order", "tau_positive", "lambda_positive",
    "pq_interior", "S_binary", "zstar_range", "z_consistency",
)


def column_names(model, J, K, T):
    names = [f"mu_{j}" for j in range(1, J + 1)]
    names += [f"sigma2_{j}" for j in range(1, J + 1)]
    names += [f"c_{j}" for j in range(2, J)]
    if model == "dynamic":
        for s in (0, 1):
            names += [f"beta{s}_{k}" for k in range(K + 1)]
        for s in (0, 1):
            names += [f"tau2_{s}_{k}" for k in range(1, K + 1)]
        names += ["lambda2_0", "lambda2_1", "p", "q", "steady_state"]
    else:
        names += [f"beta_{k}" for k in range(K + 1)]
        names += [f"tau2_{k}" for k in range(1, K + 1)]
        names += ["lambda2"]
    names += [f"weight_{j}" for j in range(1, J + 1)]
    names += [f"meanrr_{j}" for j in range(1, J + 1)]
    if model == "dynamic":
        names += [f"S_{t}" for t in range(1, T + 1)]
    names += ["loglik"]
    return names


@dataclass
class Chain:
    """Retained draws, one row per kept sweep, plus run metadata.

    ``draws`` is an (m, P) float array whose columns are ``names``.  ``meta``
    carries the config echo, dimensions, design scaling and RNG provenance.
    ``S_mean`` is the online per-year average of S.  ``z``/``zstar`` are
    (m, n) traces only when latent storage was requested.
    """

    names: list
    draws: np.ndarray
    meta: dict
    S_mean: np.ndarray | None = None
    z: np.ndarray | None = None
    zstar: np.ndarray | None = None
    invariant_passes: dict = field(default_factory=dict)

    def __len__(self):
        return self.draws.shape[0]

    @property
    def model(self):
        return self.meta["config"]["model"]

    @property
    def loglik(self):
        return self.column("loglik")

    def column(self, name):
        return self.draws[:, self.names.index(name)]

    def columns(self, prefix):
        idx = [i for i, n in enumerate(self.names) if n.startswith(prefix)]
        return self.draws[:, idx], [self.names[i] for i in idx]

    def beta(self, state=1):
        """(m, K+1) coefficient draws; ``state`` is ignored for static chains."""
        K = self.meta["K"]
        pre = "beta_" if self.model == "static" else f"beta{state}_"
        return np.column_stack([self.column(f"{pre}{k}") for k in range(K + 1)])


def relabel_states(s: ModelState, d: DesignMatrix):
    """Orient the regimes so state 1 has the higher dataset-average score.

    Swaps every state-indexed quantity at once when needed; idempotent.
    """
    xbar = d.X.mean(axis=0)
    if float(xbar @ s.beta1) >= float(xbar @ s.beta0):
        return s
    out = s.copy()
    out.beta0, out.beta1 = s.beta1.copy(), s.beta0.copy()
    out.tau2_0, out.tau2_1 = s.tau2_1.copy(), s.tau2_0.copy()
    out.lambda2_0, out.lambda2_1 = s.lambda2_1, s.lambda2_0
    out.p, out.q = s.q, s.p
    out.S = 1 - s.S
    return out


def _step(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except NumericError as exc:
        exc.step = exc.step or name
        raise
    except RRMixError as exc:
        raise NumericError(str(exc), step=name) from exc


def gibbs_step(s: ModelState, d: DesignMatrix, h: HyperParams, cfg: FitConfig, rng,
               year_weights=None):
    """One full sweep; returns a new state and leaves ``s`` untouched.

    Order: indicators and scores, regression coefficients, LASSO local then
    global shrinkage, interior cut-points, S by FFBS, (p, q), means,
    variances.  The static model skips every state-0 block and keeps S at 1.
    """
    s = s.copy()
    X, y, t0 = d.X, d.y, d.t0
    dynamic = cfg.dynamic
    state_of_loan = s.S[t0]

    # 1. mixture indicators and latent scores
    if dynamic:
        a = np.where(state_of_loan == 1, X @ s.beta1, X @ s.beta0)
    else:
        a = X @ s.beta1
    s.zstar, s.z = _step("indicators", cond.draw_loans, a, y, s.c, s.mu, s.sigma2, rng,
                         cfg.threads)

    # 2. regression coefficients on the state partition
    if dynamic:
        part = cond.partition(X, s.z, state_of_loan)
        s.beta0 = _step("beta", cond.draw_beta, part.X0, part.z0, s.tau2_0, h.intercept_var, rng)
        s.beta1 = _step("beta", cond.draw_beta, part.X1, part.z1, s.tau2_1, h.intercept_var, rng)
    else:
        s.beta1 = _step("beta", cond.draw_beta, X, s.z, s.tau2_1, h.intercept_var, rng)

    # 3. local then global shrinkage
    if h.K > 0:
        if dynamic:
            s.tau2_0 = 1.0 / _step("tau", cond.draw_tau_inv2, s.beta0[1:], s.lambda2_0, rng)
            s.lambda2_0 = _step("lambda", cond.draw_lambda2, s.tau2_0, h.r_bar, h.delta_bar, rng)
        s.tau2_1 = 1.0 / _step("tau", cond.draw_tau_inv2, s.beta1[1:], s.lambda2_1, rng)
        s.lambda2_1 = _step("lambda", cond.draw_lambda2, s.tau2_1, h.r_bar, h.delta_bar, rng)

    # 4. interior cut-points
    s.c = _step("cutpoints", cond.draw_cutpoints, s.z, s.zstar, s.c, rng, h.cut_bound)

    if dynamic:
        # 5. credit-cycle states
        ll = state_logliks(s.z, X, d.year_index, d.T, s.beta0, s.beta1)
        s.S, _ = _step("states", ffbs, ll, s.p, s.q, rng,
                       allow_degenerate=cfg.fixed_pq is not None)
        # 6. transition probabilities
        if cfg.fixed_pq is None:
            s.p, s.q = _step("pq", cond.draw_pq, s.S, h, rng,
                             weights=year_weights if cfg.loan_weighted_transitions else None,
                             stationary_start=cfg.exact_pq)

    # 7. component means, 8. component variances
    s.mu = _step("mu", cond.draw_mu, y, s.zstar, s.sigma2, s.mu, h, rng)
    s.sigma2 = _step("sigma2", cond.draw_sigma2, y, s.zstar, s.mu, h, rng)
    return s


def complete_loglik(s: ModelState, d: DesignMatrix, dynamic=True):
    """log p(y, z | z*, S, parameters): mixture densities plus regression
    residual densities."""
    j = s.zstar - 1
    r = d.y - s.mu[j]
    ly = float(np.sum(-0.5 * (math.log(2.0 * math.pi) + np.log(s.sigma2[j])) - 0.5 * r * r / s.sigma2[j]))
    if dynamic:
        ll = state_logliks(s.z, d.X, d.year_index, d.T, s.beta0, s.beta1)
        lz = float(ll[np.arange(d.T), s.S].sum())
    else:
        rz = s.z - d.X @ s.beta1
        lz = float(np.sum(-0.5 * math.log(2.0 * math.pi) - 0.5 * rz * rz))
    return ly + lz


def state_row(s: ModelState, d: DesignMatrix, model, rr):
    J = s.J
    parts = [s.mu, s.sigma2, s.c[2:J]]
    if model == "dynamic":
        pi1 = (1.0 - s.p) / (2.0 - s.p - s.q)
        parts += [s.beta0, s.beta1, s.tau2_0, s.tau2_1,
                  [s.lambda2_0, s.lambda2_1, s.p, s.q, pi1]]
    else:
        parts += [s.beta1, s.tau2_1, [s.lambda2_1]]
    idx = s.zstar - 1
    counts = np.bincount(idx, minlength=J)
    sums = np.bincount(idx, weights=rr, minlength=J)
    with np.errstate(invalid="ignore", divide="ignore"):
        meanrr = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    parts += [counts / d.n, meanrr]
    if model == "dynamic":
        parts.append(s.S.astype(float))
    parts.append([complete_loglik(s, d, model == "dynamic")])
    return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])


def _data_start(s: ModelState, d: DesignMatrix, dynamic=True):
    """Overwrite the mixture block with equal-count bins of y.

    Component means and variances come from the bins; the intercept and
    cut-points are set so an intercept-only probit reproduces the bin shares.
    In dynamic mode years with an above-median mean y start in state 1, so
    both regimes hold data from the first sweep.
    """
    J = s.J
    order = np.argsort(d.y, kind="stable")
    bins = np.empty(d.n, dtype=np.int64)
    bins[order] = np.arange(d.n) * J // d.n
    mu = np.empty(J)
    sigma2 = np.empty(J)
    for j in range(J):
        yb = d.y[bins == j]
        mu[j] = yb.mean() if yb.size else 0.0
        sigma2[j] = max(yb.var(), 1e-4) if yb.size > 1 else 1.0
    for j in range(1, J):
        mu[j] = max(mu[j], mu[j - 1] + 1e-3)
    cum = np.bincount(bins, minlength=J).cumsum()[:-1] / d.n
    cum = np.clip(cum, 1e-6, 1 - 1e-6)
    b0 = -ndtri(cum[0])
    c = np.concatenate(([-np.inf], b0 + ndtri(cum), [np.inf]))
    c[1] = 0.0
    c[2:J] = np.maximum.accumulate(np.maximum(c[2:J], 1e-3))
    for j in range(3, J):
        c[j] = max(c[j], c[j - 1] + 1e-3)
    s.mu, s.sigma2, s.c = mu, sigma2, c
    s.beta0 = np.zeros_like(s.beta0)
    s.beta1 = np.zeros_like(s.beta1)
    s.beta0[0] = s.beta1[0] = b0
    if dynamic and d.T > 1:
        counts = np.bincount(d.t0, minlength=d.T)
        ybar = np.bincount(d.t0, weights=d.y, minlength=d.T) / np.maximum(counts, 1)
        occupied = counts > 0
        if occupied.sum() > 1:
            med = np.median(ybar[occupied])
            S = (ybar > med).astype(np.int64)
            S[~occupied] = s.S[~occupied]
            if 0 < S[occupied].sum() < occupied.sum():
                s.S = S
    return s


def initial_state(d: DesignMatrix, h: HyperParams, cfg: FitConfig, rng):
    """Prior draw, optionally recentred on the data, followed by one
    allocation pass conditioned on y."""
    s = sample_prior_state(
        h, d.n, d.T, rng, X=d.X, year_index=d.year_index,
        static=not cfg.dynamic, fixed_pq=cfg.fixed_pq,
    )
    if not cfg.dynamic:
        s.p = s.q = 0.5
    if cfg.init == "data":
        s = _data_start(s, d, cfg.dynamic and cfg.fixed_pq is None)
    a = np.where(s.S[d.t0] == 1, d.X @ s.beta1, d.X @ s.beta0)
    s.zstar, s.z = cond.draw_loans(a, d.y, s.c, s.mu, s.sigma2, rng, cfg.threads)
    return s


def _seed_sequences(cfg):
    root = np.random.SeedSequence(int(cfg.seed) % 2**64)
    if cfg.chains == 1:
        return [root]
    return root.spawn(cfg.chains)


def fit(ds: LoanDataset, cfg: FitConfig, h: HyperParams | None = None, progress=None):
    """Build the design for ``ds`` and run the sampler.

    Returns one :class:`Chain`, or a list of them when ``cfg.chains > 1``
    (independent seeds spawned from ``cfg.seed``).
    """
    d = build_design(ds, standardize=cfg.standardize, epsilon=cfg.epsilon)
    if h is None:
        h = default_hyperparams(cfg.J, ds.K)
    return fit_design(d, cfg, h, progress=progress)


def fit_design(d: DesignMatrix, cfg: FitConfig, h: HyperParams, progress=None):
    if h.J != cfg.J:
        raise ConfigError(f"hyperparameters are for J={h.J}, config asks J={cfg.J}")
    if h.K != d.K:
        raise ConfigError(f"hyperparameters are for K={h.K}, design has K={d.K}")
    if cfg.dynamic and d.T < 2 and cfg.fixed_pq is None:
        raise ConfigError("the dynamic model needs at least two years")
    chains = [
        _run_chain(d, cfg, h, ss, k, progress) for k, ss in enumerate(_seed_sequences(cfg))
    ]
    return chains[0] if cfg.chains == 1 else chains


def _run_chain(d, cfg, h, seedseq, chain_id, progress):
    rng = np.random.default_rng(seedseq)
    names = column_names(cfg.model, h.J, h.K, d.T)
    m = -(-cfg.draws // cfg.thin)
    out = np.empty((m, len(names)))
    rr = d.rr
    year_weights = np.bincount(d.t0, minlength=d.T).astype(float)
    S_sum = np.zeros(d.T)
    passes = {k: 0 for k in INVARIANTS}
    ztr = np.empty((m, d.n)) if cfg.store_latent else None
    zstr = np.empty((m, d.n), dtype=np.int64) if cfg.store_latent else None
    relabel = cfg.dynamic and cfg.fixed_pq is None
    strict_pq = cfg.fixed_pq is None

    t_start = time.perf_counter()
    s = initial_state(d, h, cfg, rng)
    total = cfg.burnin + cfg.draws
    kept = 0
    for g in range(total):
        try:
            s = gibbs_step(s, d, h, cfg, rng, year_weights)
        except NumericError as exc:
            exc.draw = g
            raise
        post = g - cfg.burnin
        if post < 0 or post % cfg.thin:
            continue
        r = relabel_states(s, d) if relabel else s
        bad = set(r.violations(strict_pq))
        for k in INVARIANTS:
            passes[k] += k not in bad
        out[kept] = state_row(r, d, cfg.model, rr)
        S_sum += r.S
        if ztr is not None:
            ztr[kept] = r.z
            zstr[kept] = r.zstar
        kept += 1
        if progress is not None:
            progress(chain_id, g + 1, total)
    wall = time.perf_counter() - t_start

    meta = {
        "config": cfg.to_dict(),
        "hyperparams": h.to_dict(),
        "chain_id": chain_id,
        "seed_entropy": str(seedseq.entropy),
        "spawn_key": list(seedseq.spawn_key),
        "n": d.n,
        "K": d.K,
        "J": h.J,
        "T": d.T,
        "first_year": d.first_year,
        "determinants": list(d.names),
        "scaling": [list(sc) for sc in d.scaling],
        "retained": kept,
        "wall_time_s": wall,
        "backend": kernels.BACKEND,
    }
    log.info("chain %d: %d sweeps in %.1fs", chain_id, total, wall)
    return Chain(
        names=names,
        draws=out,
        meta=meta,
        S_mean=S_sum / kept if cfg.dynamic else None,
        z=ztr,
        zstar=zstr,
        invariant_passes=passes,
    )
