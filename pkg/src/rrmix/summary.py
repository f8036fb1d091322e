"""Posterior summaries and the report tables built from a chain."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import InsufficientDataError, NotApplicableError

MIN_HPD_DRAWS = 50
MIN_ESS_DRAWS = 100
ESS_FLOOR = 1.0


def hpd_interval(draws, mass=0.95):
    """Narrowest window of ceil(mass * m) consecutive order statistics.

    Ties go to the window with the lowest lower end.
    """
    x = np.sort(np.asarray(draws, dtype=float).ravel())
    m = x.shape[0]
    if m < MIN_HPD_DRAWS:
        raise InsufficientDataError(f"HPD needs at least {MIN_HPD_DRAWS} draws, got {m}")
    if not 0.0 < mass <= 1.0:
        raise ValueError("mass must lie in (0, 1]")
    # round first so that e.g. 0.95 * 100 does not ceil to 96
    k = max(1, math.ceil(round(mass * m, 9)))
    widths = x[k - 1:] - x[: m - k + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + k - 1])


def _autocorr(x):
    m = x.shape[0]
    xc = x - x.mean()
    nfft = 1 << (2 * m - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:m] / m
    return acov / acov[0]


def ess_flagged(draws):
    """Effective sample size and a flag set when the chain is degenerate.

    Uses Geyer's initial monotone positive sequence on the autocorrelations.
    """
    x = np.asarray(draws, dtype=float).ravel()
    m = x.shape[0]
    if m < MIN_ESS_DRAWS:
        raise InsufficientDataError(f"ESS needs at least {MIN_ESS_DRAWS} draws, got {m}")
    if not np.all(np.isfinite(x)) or np.ptp(x) == 0.0:
        return ESS_FLOOR, True
    rho = _autocorr(x)
    if not np.isfinite(rho).all():
        return ESS_FLOOR, True
    npairs = m // 2
    pairs = rho[: 2 * npairs].reshape(npairs, 2).sum(axis=1)
    tau = 0.0
    prev = math.inf
    for g in pairs:
        if g <= 0.0:
            break
        g = min(g, prev)
        tau += g
        prev = g
    tau = 2.0 * tau - 1.0
    if tau <= 0.0:
        return float(m), False
    return float(min(max(m / tau, ESS_FLOOR), m)), False


def ess(draws):
    return ess_flagged(draws)[0]


@dataclass
class PosteriorSummary:
    name: str
    mean: float
    hpd_lo: float
    hpd_hi: float
    ess: float
    significant: bool | None = None
    flags: list = field(default_factory=list)

    @property
    def sign(self):
        if not self.significant:
            return ""
        return "+" if self.mean > 0 else "-"


def summarize(name, draws, mass=0.95, coefficient=False):
    x = np.asarray(draws, dtype=float)
    flags = []
    ok = x[np.isfinite(x)]
    if ok.shape[0] < MIN_HPD_DRAWS:
        return PosteriorSummary(name, float(ok.mean()) if ok.size else math.nan, math.nan,
                                math.nan, math.nan, False if coefficient else None,
                                ["too_few_draws"])
    lo, hi = hpd_interval(ok, mass)
    if ok.shape[0] >= MIN_ESS_DRAWS:
        e, degenerate = ess_flagged(ok)
        if degenerate:
            flags.append("ess_floor")
    else:
        e = math.nan
        flags.append("ess_unavailable")
    sig = None
    if coefficient:
        sig = not (lo <= 0.0 <= hi)
    return PosteriorSummary(name, float(ok.mean()), lo, hi, float(e), sig, flags)


# ---------------------------------------------------------------- reports

@dataclass
class Report:
    name: str
    columns: list
    rows: list
    meta: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c in self.columns])
        return buf.getvalue()

    def to_json(self):
        return json.dumps({"name": self.name, "meta": self.meta, "rows": self.rows},
                          indent=1, default=_jsonable, allow_nan=True)

    def column(self, name):
        return [r[name] for r in self.rows]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ";".join(map(str, v))
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v))


def _row(prefix, s: PosteriorSummary):
    return {f"{prefix}mean": s.mean, f"{prefix}hpd_lo": s.hpd_lo, f"{prefix}hpd_hi": s.hpd_hi,
            f"{prefix}ess": s.ess}


def mixture_report(chain, mass=0.95, mean_rr="allocated"):
    """Component means, standard deviations, implied weights and mean RR.

    ``mean_rr="allocated"`` averages Phi(y) over the loans allocated to each
    component; ``"phi_mu"`` reports Phi(mu_j) instead.
    """
    if mean_rr not in ("allocated", "phi_mu"):
        raise ValueError("mean_rr must be 'allocated' or 'phi_mu'")
    J = chain.meta["J"]
    rows = []
    for j in range(1, J + 1):
        mu = chain.column(f"mu_{j}")
        sd = np.sqrt(chain.column(f"sigma2_{j}"))
        w = chain.column(f"weight_{j}")
        rr = chain.column(f"meanrr_{j}") if mean_rr == "allocated" else ndtr(mu)
        flags = []
        if not np.any(w > 0):
            flags.append("never_occupied")
        r = {"component": j}
        r.update(_row("mu_", summarize(f"mu_{j}", mu, mass)))
        r.update(_row("sigma_", summarize(f"sigma_{j}", sd, mass)))
        r["weight"] = float(w.mean())
        ws = summarize(f"weight_{j}", w, mass)
        r["weight_hpd_lo"], r["weight_hpd_hi"] = ws.hpd_lo, ws.hpd_hi
        fin = rr[np.isfinite(rr)]
        r["mean_rr"] = float(fin.mean()) if fin.size else math.nan
        r["flags"] = flags
        rows.append(r)
    cols = ["component", "mu_mean", "mu_hpd_lo", "mu_hpd_hi", "mu_ess", "sigma_mean",
            "sigma_hpd_lo", "sigma_hpd_hi", "sigma_ess", "weight", "weight_hpd_lo",
            "weight_hpd_hi", "mean_rr", "flags"]
    return Report("mixture", cols, rows, {"mass": mass, "mean_rr": mean_rr})


def cycle_report(chain, mass=0.95):
    """Yearly Pr(S_t = 1 | data) and the transition/steady-state table.

    Returns ``(series, table)``.  The steady state is summarised per draw.
    """
    if chain.model != "dynamic":
        raise NotApplicableError("cycle report needs a dynamic-model chain")
    T = chain.meta["T"]
    y0 = chain.meta["first_year"]
    prob = chain.S_mean
    if prob is None:
        prob = np.column_stack([chain.column(f"S_{t}") for t in range(1, T + 1)]).mean(axis=0)
    series = Report("cycle_series", ["year", "prob_good"],
                    [{"year": y0 + t, "prob_good": float(prob[t])} for t in range(T)])
    p, q = chain.column("p"), chain.column("q")
    rows = []
    for name, v in (("p", p), ("1-p", 1.0 - p), ("1-q", 1.0 - q), ("q", q),
                    ("steady_state", chain.column("steady_state"))):
        s = summarize(name, v, mass)
        rows.append({"quantity": name, **_row("", s)})
    table = Report("transitions", ["quantity", "mean", "hpd_lo", "hpd_hi", "ess"], rows,
                   {"mass": mass})
    return series, table


def coefficient_report(chain, scaling=None, mass=0.95):
    """MPM, HPD, significance and sign per coefficient and state.

    With ``scaling`` (the design's per-column (mean, sd) record) the raw-scale
    MPM and HPD are added.
    """
    K = chain.meta["K"]
    labels = list(chain.meta.get("determinants") or [])
    if len(labels) != K + 1:
        labels = ["INTERCEPT"] + [f"X{k}" for k in range(1, K + 1)]
    states = (0, 1) if chain.model == "dynamic" else (None,)
    if scaling is not None:
        mean = np.array([s[0] for s in scaling])
        sd = np.array([s[1] for s in scaling])
    rows = []
    for st in states:
        b = chain.beta(1 if st is None else st)
        if scaling is not None:
            raw = b / sd
            raw[:, 0] = b[:, 0] - np.sum(b[:, 1:] * mean[1:] / sd[1:], axis=1)
        for k in range(K + 1):
            s = summarize(labels[k], b[:, k], mass, coefficient=True)
            r = {"state": "" if st is None else st, "coefficient": labels[k], "mpm": s.mean,
                 "hpd_lo": s.hpd_lo, "hpd_hi": s.hpd_hi, "significant": bool(s.significant),
                 "sign": s.sign, "ess": s.ess}
            if scaling is not None:
                sr = summarize(labels[k], raw[:, k], mass, coefficient=True)
                r.update(raw_mpm=sr.mean, raw_hpd_lo=sr.hpd_lo, raw_hpd_hi=sr.hpd_hi)
            rows.append(r)
    lam = {}
    if chain.model == "dynamic":
        lam = {"lambda2_0": float(chain.column("lambda2_0").mean()),
               "lambda2_1": float(chain.column("lambda2_1").mean())}
    else:
        lam = {"lambda2": float(chain.column("lambda2").mean())}
    cols = ["state", "coefficient", "mpm", "hpd_lo", "hpd_hi", "significant", "sign", "ess"]
    if scaling is not None:
        cols += ["raw_mpm", "raw_hpd_lo", "raw_hpd_hi"]
    return Report("coefficients", cols, rows, {"mass": mass, **lam})


def diagnostics_report(chain, mass=0.95):
    rows = []
    for i, name in enumerate(chain.names):
        if name.startswith("S_"):
            continue
        s = summarize(name, chain.draws[:, i], mass)
        rows.append({"quantity": name, "mean": s.mean, "ess": s.ess,
                     "ess_ratio": s.ess / len(chain) if len(chain) else math.nan,
                     "flags": s.flags})
    return Report("diagnostics", ["quantity", "mean", "ess", "ess_ratio", "flags"], rows,
                  {"retained": len(chain)})


def write_reports(chain, outdir, mass=0.95, mean_rr="allocated", cycle=None):
    """Write every applicable report as CSV and JSON; returns the paths.

    ``cycle=None`` includes the cycle report for dynamic chains; ``True``
    demands it and raises for static ones.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if cycle is None:
        cycle = chain.model == "dynamic"
    reports = [mixture_report(chain, mass, mean_rr),
               coefficient_report(chain, chain.meta.get("scaling"), mass)]
    if cycle:
        series, table = cycle_report(chain, mass)
        reports.append(table)
    reports.append(diagnostics_report(chain, mass))
    paths = []
    for r in reports:
        for ext, text in (("csv", r.to_csv()), ("json", r.to_json())):
            p = outdir / f"{r.name}.{ext}"
            p.write_text(text, encoding="utf-8")
            paths.append(p)
    if cycle:
        p = outdir / "cycle_series.txt"
        p.write_text("".join(f"{r['year']} {r['prob_good']!r}\n" for r in series.rows),
                     encoding="utf-8")
        paths.append(p)
    return paths
