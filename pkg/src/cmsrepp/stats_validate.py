"""Goodness-of-fit statistics and the experiment runner that turns a model and point into a checked prediction."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats as sps
from scipy.special import gamma as gamma_fn

from . import limit_laws as ll
from .measure_scaling import pareto_constant
from .repp_engine import (ReppSample, StartLaw, extract_clusters, hitting_start_density, sample_delay,
                          sample_returns)
from .shift_core import Classification, classify_point

SCHEMA_VERSION = 1
KS_CRIT_1PCT = 1.63


# ---------------------------------------------------------------- statistics


@dataclass
class KSResult:
    statistic: float
    n: int
    window: float | None
    censored_fraction: float
    predicted_censored: float | None
    critical_1pct: float

    @property
    def bound(self) -> float:
        """Statistic plus the censored mass it could not see."""
        return self.statistic + self.censored_fraction


def _as_cdf(ref) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(ref, ll.LawSpec):
        return lambda x: np.asarray(ll.law_cdf(ref, x), dtype=float)
    return lambda x: 1.0 - np.asarray(ref(x), dtype=float)


def ks_one_sample(sample: Sequence[float], tail, censored: Sequence[bool] | None = None,
                  window: float | None = None) -> KSResult:
    """sup |F_N - F| on the observation window; ``tail`` is t -> P(W > t) or a LawSpec.

    Censored draws count in N but never in the empirical CDF, so the sup is
    taken over [0, window) only.
    """
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    cens = np.zeros(x.size, bool) if censored is None else np.asarray(censored, dtype=bool)
    n = x.size
    obs = np.sort(x[~cens])
    if window is not None:
        obs = obs[obs < window]
    cdf = _as_cdf(tail)
    if obs.size:
        f_at = cdf(obs)
        left = np.where(obs > 0, cdf(np.nextafter(obs, -np.inf).clip(0)), 0.0)
        # at ties the ECDF jumps by the tie count; comparing both sides of each jump covers it
        upper = np.searchsorted(obs, obs, side="right") / n
        lower = np.searchsorted(obs, obs, side="left") / n
        d = max(np.max(np.abs(upper - f_at)), np.max(np.abs(lower - left)))
    else:
        d = 0.0
    if window is not None:
        # just below the window edge the ECDF sits at its final value
        d = max(d, abs(obs.size / n - float(cdf(np.array([np.nextafter(window, 0)]))[0])))
    pc = None
    if window is not None:
        pc = float(1.0 - cdf(np.array([window]))[0])
    return KSResult(float(d), n, window, float(cens.mean()), pc, KS_CRIT_1PCT / math.sqrt(n))


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """(statistic, p-value) of the two-sample KS test."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    res = sps.ks_2samp(a, b)
    return float(res.statistic), float(res.pvalue)


@dataclass
class LaplaceEstimate:
    s: float
    estimate: float
    se: float
    lower: float
    upper: float


def empirical_laplace(sample: Sequence[float], s_grid: Sequence[float], censored: Sequence[bool] | None = None,
                      horizon: float | None = None) -> list[LaplaceEstimate]:
    """Mean of e^{-s x} over uncensored draws (censored ones contribute 0), bracketed by the censored mass."""
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    cens = np.zeros(x.size, bool) if censored is None else np.asarray(censored, dtype=bool)
    if cens.any() and horizon is None:
        raise ValueError("censored draws need the censoring horizon")
    frac = float(cens.mean())
    out = []
    for s in s_grid:
        if s <= 0:
            raise ValueError("s must be positive")
        e = np.where(cens, 0.0, np.exp(-s * np.where(cens, 0.0, x)))
        est = float(e.mean())
        se = float(e.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
        top = est + (frac * math.exp(-s * horizon) if frac else 0.0)
        out.append(LaplaceEstimate(float(s), est, se, est, top))
    return out


@dataclass
class GeometricFit:
    theta_hat: float
    tv_hat: float
    tv_theta0: float | None
    n: int
    support: int


def _geo_tv(pmf_emp: np.ndarray, theta: float) -> float:
    k = np.arange(1, len(pmf_emp) + 1)
    geo = theta * (1 - theta) ** (k - 1)
    beyond = (1 - theta) ** len(pmf_emp)
    return float(0.5 * (np.abs(pmf_emp - geo).sum() + beyond))


def geometric_fit(multiplicities: Sequence[int], theta0: float | None = None, min_clusters: int = 100) -> GeometricFit:
    """theta_hat = 1 / mean (maximum likelihood on {1, 2, ...}) and total-variation distances."""
    m = np.asarray(multiplicities, dtype=np.int64)
    if m.size < min_clusters:
        raise ValueError(f"need at least {min_clusters} clusters, got {m.size}")
    if (m < 1).any():
        raise ValueError("multiplicities must be at least 1")
    theta = 1.0 / m.mean()
    pmf = np.bincount(m)[1:] / m.size
    return GeometricFit(float(theta), _geo_tv(pmf, theta), None if theta0 is None else _geo_tv(pmf, theta0),
                        int(m.size), int(m.max()))


@lru_cache(maxsize=4)
def self_test(seed: int = 20240531) -> dict:
    """Calibration (null) and power (alternative) checks of every statistic."""
    rng = np.random.default_rng(seed)
    res: dict[str, Any] = {}
    n = 10_000
    passes = 0
    for _ in range(100):
        x = rng.standard_exponential(n)
        if ks_one_sample(x, lambda t: np.exp(-t)).statistic <= KS_CRIT_1PCT / math.sqrt(n):
            passes += 1
    res["ks_calibration"] = {"passes": passes, "of": 100, "ok": passes >= 97}
    x = rng.standard_exponential(n)
    d = ks_one_sample(x, lambda t: np.exp(-2 * t)).statistic
    res["ks_power"] = {"statistic": d, "ok": d >= 0.15}
    a = rng.standard_exponential(1000)
    res["ks_two_identical"] = {"statistic": ks_two_sample(a, a)[0], "ok": ks_two_sample(a, a)[0] == 0.0}
    g = rng.geometric(0.7, n)
    fit = geometric_fit(g, 0.7)
    res["geometric_calibration"] = {"theta_hat": fit.theta_hat, "tv": fit.tv_theta0,
                                    "ok": 0.68 <= fit.theta_hat <= 0.72 and fit.tv_theta0 <= 0.02}
    g = rng.geometric(0.3, n)
    fit = geometric_fit(g, 0.7)
    res["geometric_power"] = {"tv": fit.tv_theta0, "ok": fit.tv_theta0 >= 0.2}
    zero = empirical_laplace(np.zeros(100), [0.5, 1, 2])
    res["laplace_zero"] = {"ok": all(abs(e.estimate - 1) < 1e-15 for e in zero)}
    full = empirical_laplace(np.full(50, 10.0), [1.0], np.ones(50, bool), horizon=10.0)[0]
    res["laplace_censored"] = {"ok": full.lower == 0.0 and abs(full.upper - math.exp(-10)) < 1e-15}
    res["all_ok"] = all(v["ok"] for v in res.values() if isinstance(v, dict))
    return res


# ---------------------------------------------------------------- predictions


@dataclass
class Prediction:
    """Limit law of the rescaled first return (``first_return``) plus cluster data when relevant."""

    regime: str  # ppp, cppp, fpp, cfpp, rpp_j_tilde, w_alpha_theta
    first_return: ll.LawSpec | None
    theta: float | None = None
    delay: ll.LawSpec | None = None
    delay_source: str | None = None
    process: ll.PointProcessSpec | None = None
    note: str = ""

    def to_json(self) -> dict:
        return {"regime": self.regime, "first_return": self.first_return.to_json() if self.first_return else None,
                "theta": self.theta, "delay": self.delay.to_json() if self.delay else None,
                "delay_source": self.delay_source, "process": self.process.to_json() if self.process else None,
                "note": self.note}

    def __str__(self):
        return str(self.process) if self.process is not None else self.regime


def _is_hoc_climb(model, point) -> bool:
    return model.family == "hoc" and point.meta.get("rule_name") == "climb"


def point_classification(model, point) -> Classification:
    if hasattr(model, "h_vec"):
        cls = classify_point(point, model.ts)
        if cls.kind == "periodic":
            word = point.prefix(cls.q).symbols
            if model.periodic_level_sum(word) != 0:
                return Classification("undetermined", certificate="cycle drifts in level")
        return cls
    return classify_point(point, model.ts)


def theta_for(model, point, cls: Classification) -> float:
    word = point.prefix(cls.q).symbols
    if hasattr(model, "h_vec"):
        return model.extremal_index(word)
    from .thermo import extremal_index
    return extremal_index(model.potential().normalized, word, model.ts, 0.0)


def predict(model, point=None, cls: Classification | None = None, *, target_form: str = "word", delta=(),
            sft_theta: str = "exp_pstar") -> Prediction:
    """Apply the prediction rule: periodic -> compound law, infinitely recurrent -> FPP/PPP, finitely recurrent -> J~."""
    if target_form == "union_delta":
        from .thermo import embedded_sft_relative_pressure
        alpha = _model_alpha(model)
        e = math.exp(embedded_sft_relative_pressure(model.kernel, delta))
        theta = e if sft_theta == "exp_pstar" else 1.0 - e
        lam = theta * gamma_fn(1 + alpha)
        return Prediction("w_alpha_theta", ll.compound_geom_delay(alpha, theta, lam), theta,
                          process=ll.cfpp(alpha, lam, ll.geometric(theta)),
                          note=f"e^P* = {e:.6f}; multiplicity parameter from the '{sft_theta}' convention")
    if cls is None:
        cls = point_classification(model, point)
    if cls.kind == "undetermined":
        raise UndeterminedPoint(cls.certificate or "classification undetermined")
    positive = model.recurrence().label == "positive_recurrent" if not hasattr(model, "h_vec") else False
    if positive:
        if cls.kind == "periodic":
            th = theta_for(model, point, cls)
            return Prediction("cppp", ll.compound_geom_delay(1.0, th, th), th,
                              process=ll.cppp(th, ll.geometric(th)))
        return Prediction("ppp", ll.exponential(1.0), process=ll.ppp(1.0))
    alpha = _model_alpha(model)
    g1a = gamma_fn(1 + alpha)
    if cls.kind == "periodic":
        th = theta_for(model, point, cls)
        return Prediction("cfpp", ll.compound_geom_delay(alpha, th, th * g1a), th,
                          process=ll.cfpp(alpha, th * g1a, ll.geometric(th)))
    if cls.kind == "infinitely_recurrent":
        return Prediction("fpp", ll.mittag_leffler(alpha, g1a), process=ll.fpp(alpha, g1a))
    # finitely recurrent
    if _is_hoc_climb(model, point):
        from .model_zoo.hoc import preimage_weight
        q = preimage_weight(model, point)
        nu = ll.pareto(alpha, q * pareto_constant(alpha))
        return Prediction("rpp_j_tilde", ll.j_tilde_alpha(alpha, nu), delay=nu, delay_source="closed_form",
                          process=ll.PointProcessSpec("rpp", ll.j_tilde_alpha(alpha, nu)),
                          note="tower climb: Pareto delay scaled by exp(S_m phi_*)")
    return Prediction("rpp_j_tilde", None, delay=None, delay_source="sample_delay",
                      note="delay law measured by simulation; first-return law checked through Laplace transforms")


def _model_alpha(model) -> float:
    a = getattr(model, "alpha", None)
    if a is None:
        a = model.scaling_profile().alpha
    return float(a)


class UndeterminedPoint(ValueError):
    pass


def hoc_climb_delay_tail(model, n: int, ts: Sequence[float]) -> np.ndarray:
    """Exact mu_{B_n}(gamma r_[0] >= t) = q_{max(n, ceil(t/gamma))} / q_n for x_up on a tower."""
    target = model.target_for(model.point("x_up"), n)
    g = model.scaling_profile().gamma(target.measure)
    law = model.return_law
    qn = law.q(n)
    return np.array([law.q(max(n, math.ceil(t / g))) / qn for t in ts])


# ---------------------------------------------------------------- reports


@dataclass
class Statistic:
    name: str
    n: int | None
    value: float
    tolerance: float | None
    passed: bool | None
    details: dict = field(default_factory=dict)


@dataclass
class ValidationReport:
    experiment_id: str
    model: str
    point: str | None
    classification: dict
    predicted: dict
    statistics: list
    sample_sizes: dict
    censoring: dict
    seed: int
    config: dict
    verdict: bool | None
    reason: str = ""
    curves: list = field(default_factory=list, repr=False)
    timing: dict = field(default_factory=dict)
    sample: ReppSample | None = field(default=None, repr=False)  # last simulated sample, not serialized

    def to_json(self, with_timing: bool = True) -> str:
        doc = {
            "schema": SCHEMA_VERSION,
            "experiment_id": self.experiment_id,
            "model": self.model,
            "point": self.point,
            "classification": self.classification,
            "predicted": self.predicted,
            "statistics": [asdict(s) for s in self.statistics],
            "sample_sizes": self.sample_sizes,
            "censoring": self.censoring,
            "seed": self.seed,
            "config": self.config,
            "verdict": self.verdict,
            "reason": self.reason,
        }
        if with_timing:
            doc["timing"] = self.timing
        return json.dumps(doc, indent=2, sort_keys=True, default=_jsonable)

    def curves_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf)
        wr.writerow(["n", "t", "empirical", "predicted"])
        for row in self.curves:
            wr.writerow([row[0], repr(float(row[1])), repr(float(row[2])), repr(float(row[3]))])
        return buf.getvalue()

    def table(self) -> str:
        lines = [f"experiment {self.experiment_id}: model={self.model} point={self.point}",
                 f"prediction: {self.predicted.get('process') or self.predicted.get('regime')}"]
        for s in self.statistics:
            mark = "-" if s.passed is None else ("PASS" if s.passed else "FAIL")
            tol = "" if s.tolerance is None else f" (tol {s.tolerance:g})"
            nn = "" if s.n is None else f" n={s.n}"
            lines.append(f"  {mark:4s} {s.name}{nn}: {s.value:.6g}{tol}")
        v = "refused" if self.verdict is None else ("PASS" if self.verdict else "FAIL")
        lines.append(f"verdict: {v}{' - ' + self.reason if self.reason else ''}")
        return "\n".join(lines)


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    return str(x)


# ---------------------------------------------------------------- experiment runner

DEFAULTS = {
    "start": "conditioned_on_target",
    "replicas": 10_000,
    "k_max": 1,
    "horizon": 50.0,
    "s_grid": [0.5, 1.0, 2.0, 4.0],
    "tolerances": {"ks": 0.08, "tv": 0.02, "laplace_se": 3.0, "laplace_allowance": 0.02, "theta": 0.03,
                   "closed_form_tail": 0.03, "monotone": True},
    "sft_theta": "exp_pstar",
    "self_test": True,
}


def _merge(config: dict) -> dict:
    cfg = {**DEFAULTS, **config}
    cfg["tolerances"] = {**DEFAULTS["tolerances"], **config.get("tolerances", {})}
    if "seed" not in config:
        raise ValueError("experiment config needs a seed")
    n = cfg.get("n", [8])
    cfg["n"] = [int(n)] if isinstance(n, (int, float)) else [int(v) for v in n]
    return cfg


def _build(cfg: dict):
    from .model_zoo import build_model
    spec = cfg["model"]
    if isinstance(spec, str):
        return build_model(spec)
    return build_model(spec["name"], **spec.get("params", {}))


def run_experiment(config: dict) -> ValidationReport:
    """Build, classify, predict, simulate and compare; see DEFAULTS for the recognised keys."""
    t0 = time.time()
    cfg = _merge(config)
    exp_id = str(cfg.get("id", "experiment"))
    tol = cfg["tolerances"]
    seed = int(cfg["seed"])
    stats: list[Statistic] = []
    curves: list = []
    if cfg["self_test"]:
        st = self_test()
        stats.append(Statistic("self_test", None, float(st["all_ok"]), None, bool(st["all_ok"]),
                               {k: v for k, v in st.items() if isinstance(v, dict)}))
    model = _build(cfg)
    model_name = cfg["model"] if isinstance(cfg["model"], str) else cfg["model"]["name"]
    target_spec = cfg.get("target", {"form": "word"})
    form = target_spec.get("form", "word")
    point = None
    cls = None
    if form == "word":
        point = model.point(cfg["point"])
        cls = point_classification(model, point)
        if cls.kind == "undetermined":
            rep = ValidationReport(exp_id, model_name, cfg.get("point"), cls.to_json(), {}, stats, {}, {}, seed,
                                   cfg, None, f"classification undetermined: {cls.certificate}")
            rep.timing = {"seconds": time.time() - t0}
            return rep
    delta = tuple(target_spec.get("delta", ()))
    pred = predict(model, point, cls, target_form=form, delta=delta, sft_theta=cfg["sft_theta"])
    start = cfg["start"]
    if isinstance(start, dict):
        start = hitting_start_density(model, start["anchor"])
    sizes: dict = {}
    cens: dict = {}
    ks_by_n: list[tuple[int, float]] = []
    level = target_spec.get("level", 0)
    for i, n in enumerate(cfg["n"]):
        if form == "word":
            target = model.target_for(point, n, level) if hasattr(model, "h_vec") else model.target_for(point, n)
        else:
            from .model_zoo.base import embedded_sft_target
            target = embedded_sft_target(model, delta, n)
        periodic = pred.regime in ("cppp", "cfpp", "w_alpha_theta")
        k_max = cfg["k_max"] if not periodic else max(cfg["k_max"], int(cfg.get("cluster_k_max", 50)))
        sample = sample_returns(model, target, point, start, k_max, cfg["horizon"], seed + 7919 * i,
                                replicas=int(cfg["replicas"]), strict=bool(cfg.get("strict", False)),
                                point_name=cfg.get("point"))
        sizes[str(n)] = sample.replicas
        cens[str(n)] = {"censored_fraction": sample.censored_fraction(), "horizon": sample.horizon,
                        "escaped": int(sample.escaped.sum())}
        vals, cmask = sample.first_return()
        if periodic:
            q = cls.q if cls is not None else 1
            cl = extract_clusters(sample, q)
            fit = geometric_fit(cl.multiplicities, pred.theta)
            stats.append(Statistic("geometric_tv", n, fit.tv_theta0, tol["tv"], fit.tv_theta0 <= tol["tv"],
                                   {"theta_hat": fit.theta_hat, "theta": pred.theta, "clusters": fit.n}))
            stats.append(Statistic("theta_hat", n, abs(fit.theta_hat - pred.theta), tol["theta"],
                                   abs(fit.theta_hat - pred.theta) <= tol["theta"],
                                   {"theta_hat": fit.theta_hat, "theta": pred.theta}))
            if pred.regime != "w_alpha_theta":
                alpha = 1.0 if pred.regime == "cppp" else _model_alpha(model)
                lam = pred.theta * (1.0 if alpha == 1.0 else gamma_fn(1 + alpha))
                law = ll.exponential(lam) if alpha == 1.0 else ll.mittag_leffler(alpha, lam)
                ks = ks_one_sample(cl.first_gap, law, cl.first_gap_censored, sample.horizon)
                ks_by_n.append((n, ks.statistic))
                stats.append(Statistic("ks_cluster_gap", n, ks.statistic, tol["ks"], ks.statistic <= tol["ks"],
                                       {"censored_fraction": ks.censored_fraction}))
        elif pred.first_return is not None and "tail" in pred.first_return.capabilities:
            ks = ks_one_sample(vals, pred.first_return, cmask, sample.horizon)
            ks_by_n.append((n, ks.statistic))
            stats.append(Statistic("ks_first_return", n, ks.statistic, tol["ks"], ks.statistic <= tol["ks"],
                                   {"censored_fraction": ks.censored_fraction, "critical_1pct": ks.critical_1pct}))
            grid = np.quantile(vals[~cmask], np.linspace(0.02, 0.98, 25)) if (~cmask).any() else []
            for t in grid:
                curves.append((n, t, float(np.mean(np.where(cmask, False, vals <= t))),
                               float(ll.law_cdf(pred.first_return, t))))
        if pred.regime == "rpp_j_tilde":
            stats.extend(_j_tilde_checks(model, point, cls, target, pred, vals, cmask, sample, cfg, n, seed + i))
    if tol.get("monotone", True) and len(ks_by_n) > 1:
        seq = [v for _, v in ks_by_n]
        mono = all(b <= a + 1e-12 for a, b in zip(seq, seq[1:]))
        stats.append(Statistic("ks_nonincreasing", None, float(mono), None, mono, {"sequence": ks_by_n}))
    decisive = [s for s in stats if s.passed is not None]
    verdict = all(s.passed for s in decisive)
    rep = ValidationReport(exp_id, model_name, cfg.get("point"), cls.to_json() if cls else {"kind": "union_delta"},
                           pred.to_json(), stats, sizes, cens, seed, cfg, verdict, curves=curves)
    rep.predicted["process"] = str(pred)
    rep.sample = sample
    rep.timing = {"seconds": time.time() - t0}
    return rep


def _j_tilde_checks(model, point, cls, target, pred, vals, cmask, sample, cfg, n, seed) -> list[Statistic]:
    tol = cfg["tolerances"]
    alpha = _model_alpha(model)
    out: list[Statistic] = []
    if pred.delay is not None:
        nu_laplace = lambda s: ll.law_laplace(pred.delay, s)  # noqa: E731
        source = "closed_form"
        if _is_hoc_climb(model, point) and not point.meta.get("prefix"):
            ts = np.linspace(1.0, 8.0, 57)
            exact = hoc_climb_delay_tail(model, n, ts)
            dev = float(np.max(np.abs(exact - np.asarray(ll.law_tail(pred.delay, ts)))))
            out.append(Statistic("closed_form_delay_tail", n, dev, tol["closed_form_tail"],
                                 dev <= tol["closed_form_tail"]))
    else:
        v = cls.symbol if cls.symbol is not None else point.symbol(0)
        j_v = int(cls.last_visit.get(v, 0))
        d = sample_delay(model, target, v, j_v, cfg["horizon"], seed + 104729, replicas=int(cfg["replicas"]))
        est = {s: e for s, e in zip(cfg["s_grid"], empirical_laplace(d.values, cfg["s_grid"], d.censored,
                                                                     d.horizon))}
        nu_laplace = lambda s: est[s].estimate  # noqa: E731
        source = "sample_delay"
    for e in empirical_laplace(vals, cfg["s_grid"], cmask, sample.horizon):
        lv = nu_laplace(e.s)
        pred_v = lv / (lv + e.s ** alpha / gamma_fn(1 + alpha))
        allow = tol["laplace_se"] * e.se + tol["laplace_allowance"] + (e.upper - e.lower)
        dev = abs(e.estimate - pred_v)
        out.append(Statistic("laplace_j_tilde", n, dev, allow, dev <= allow,
                             {"s": e.s, "empirical": e.estimate, "predicted": pred_v, "se": e.se,
                              "censor_bracket": e.upper - e.lower, "delay_source": source}))
    return out


__all__ = [
    "KSResult", "LaplaceEstimate", "GeometricFit", "Prediction", "Statistic", "ValidationReport",
    "UndeterminedPoint", "ks_one_sample", "ks_two_sample", "empirical_laplace", "geometric_fit", "self_test",
    "predict", "point_classification", "theta_for", "hoc_climb_delay_tail", "run_experiment", "DEFAULTS",
]
