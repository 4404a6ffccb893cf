"""Evaluation statistics: correlation, ROC/AUC, confusion rates, Kaplan-Meier, Cox and log-rank."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from radpath.errors import DataError, NumericError

log = logging.getLogger(__name__)

Z95 = 1.96


def pearson(x, y) -> float:
    """Sample Pearson correlation."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise DataError("pearson needs two 1D sequences of equal length >= 2")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise DataError("correlation undefined for constant input")
    return float(np.clip(dx @ dy / math.sqrt(sxx * syy), -1.0, 1.0))


# --------------------------------------------------------------------------
# ROC


@dataclass(frozen=True)
class RocResult:
    auc: float
    se: float
    ci: tuple
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray


def _binary(labels):
    lab = np.asarray(labels)
    if lab.dtype == bool:
        return lab
    vals = set(np.unique(lab).tolist())
    if not vals <= {-1, 0, 1}:
        raise DataError(f"labels must be binary, got {sorted(vals)}")
    return lab > 0


def hanley_mcneil_se(auc, n_pos, n_neg) -> float:
    q1 = auc / (2 - auc)
    q2 = 2 * auc * auc / (1 + auc)
    var = (auc * (1 - auc) + (n_pos - 1) * (q1 - auc * auc) + (n_neg - 1) * (q2 - auc * auc)) / (n_pos * n_neg)
    return math.sqrt(max(var, 0.0))


def roc_auc(scores, labels) -> RocResult:
    """Mann-Whitney AUC (ties count one half), Hanley-McNeil SE and threshold sweep.

    Positive labels (True / +1) are expected to carry higher scores.
    """
    s = np.asarray(scores, dtype=np.float64)
    pos = _binary(labels)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC needs both classes")
    sp, sn = s[pos], np.sort(s[~pos])
    below = np.searchsorted(sn, sp, side="left")
    ties = np.searchsorted(sn, sp, side="right") - below
    auc = float((below.sum() + 0.5 * ties.sum()) / (n_pos * n_neg))
    se = hanley_mcneil_se(auc, n_pos, n_neg)
    ci = (max(0.0, auc - Z95 * se), min(1.0, auc + Z95 * se))
    thr = np.unique(s)[::-1]
    tpr = np.array([0.0] + [np.mean(sp >= t) for t in thr])
    fpr = np.array([0.0] + [np.mean(s[~pos] >= t) for t in thr])
    return RocResult(auc, se, ci, fpr, tpr, np.r_[np.inf, thr])


def confusion_metrics(predicted, truth) -> dict:
    """Accuracy, sensitivity (long-class recall) and specificity (short-class recall) in percent."""
    p = _binary(predicted)
    t = _binary(truth)
    if p.shape != t.shape:
        raise DataError("predicted and truth differ in length")
    if t.all() or not t.any():
        raise DataError("confusion metrics need both classes in truth")
    tp = int((p & t).sum())
    tn = int((~p & ~t).sum())
    return {
        "accuracy": 100.0 * (tp + tn) / len(t),
        "sensitivity": 100.0 * tp / int(t.sum()),
        "specificity": 100.0 * tn / int((~t).sum()),
        "tp": tp,
        "fn": int(t.sum()) - tp,
        "tn": tn,
        "fp": int((~t).sum()) - tn,
    }


# --------------------------------------------------------------------------
# Kaplan-Meier


@dataclass(frozen=True)
class KmCurve:
    times: np.ndarray  # 0 followed by the distinct event times
    survival: np.ndarray
    at_risk: np.ndarray

    def __call__(self, t):
        """S(t), right-continuous step function."""
        k = np.searchsorted(self.times, np.asarray(t, dtype=np.float64), side="right") - 1
        return self.survival[np.maximum(k, 0)]


def _check_times(times, events):
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events).astype(bool)
    if t.shape != e.shape or t.ndim != 1 or len(t) == 0:
        raise DataError("times and events must be equal-length non-empty sequences")
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise DataError("survival times must be finite and non-negative")
    return t, e


def km_estimate(times, events) -> KmCurve:
    """Product-limit estimate of the survival function."""
    t, e = _check_times(times, events)
    ev_times = np.unique(t[e])
    s, surv, risk = 1.0, [1.0], [len(t)]
    for u in ev_times:
        n = int((t >= u).sum())
        d = int(((t == u) & e).sum())
        s *= 1.0 - d / n
        surv.append(s)
        risk.append(n)
    return KmCurve(np.r_[0.0, ev_times], np.array(surv), np.array(risk))


# --------------------------------------------------------------------------
# Cox model with one binary covariate


@dataclass(frozen=True)
class CoxResult:
    beta: float
    se: float
    hr: float
    ci: tuple
    p: float
    loglik: np.ndarray  # partial log-likelihood at each Newton iterate


def _risk_table(t, e, g):
    """Per distinct event time: events in group 1, all events, at-risk counts n0, n1."""
    rows = []
    for u in np.unique(t[e]):
        at = t >= u
        dead = (t == u) & e
        rows.append((int((dead & g).sum()), int(dead.sum()), int((at & ~g).sum()), int((at & g).sum())))
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def cox_loglik(beta, table) -> float:
    d1, d, n0, n1 = table.T
    return float(np.sum(d1 * beta - d * np.log(n0 + n1 * math.exp(beta))))


def _score_info(beta, table):
    d1, d, n0, n1 = table.T
    r = n1 * math.exp(beta)
    share = r / (n0 + r)
    return float(np.sum(d1 - d * share)), float(np.sum(d * share * (1 - share)))


def cox_hr(times, events, group, max_iter=100, tol=1e-10) -> CoxResult:
    """Hazard ratio of ``group == 1`` versus ``group == 0`` (Breslow ties).

    Newton steps are halved until the partial likelihood increases.
    """
    t, e = _check_times(times, events)
    g = np.asarray(group).astype(bool)
    if g.shape != t.shape:
        raise DataError("group length differs from times")
    if g.all() or not g.any():
        raise DataError("Cox model needs both groups")
    if not e.any():
        raise DataError("Cox model needs at least one event")
    table = _risk_table(t, e, g)
    d1, d, n0, n1 = table.T
    # limits of the score at +/- infinity; zero means the likelihood is monotone
    if np.sum(d1 - d * (n1 > 0)) == 0:
        raise NumericError("monotone partial likelihood: every event at risk in group 1 falls in group 1 (HR -> inf)")
    if np.sum(d1 - d * (n0 == 0)) == 0:
        raise NumericError("monotone partial likelihood: no event falls in group 1 while group 0 is at risk (HR -> 0)")
    beta = 0.0
    ll = cox_loglik(beta, table)
    path = [ll]
    for _ in range(max_iter):
        u, info = _score_info(beta, table)
        step = u / info
        while True:
            cand = beta + step
            ll_new = cox_loglik(cand, table)
            if ll_new >= ll or abs(step) < 1e-14:
                break
            step /= 2
        beta, ll = cand, max(ll_new, ll)
        path.append(ll)
        if abs(step) < tol:
            break
    else:
        raise NumericError(f"Cox Newton iteration did not converge (beta={beta:.4g})")
    _, info = _score_info(beta, table)
    se = 1.0 / math.sqrt(info)
    z = beta / se
    return CoxResult(
        beta, se, math.exp(beta), (math.exp(beta - Z95 * se), math.exp(beta + Z95 * se)),
        math.erfc(abs(z) / math.sqrt(2.0)), np.array(path),
    )


def logrank(times, events, group):
    """Log-rank chi-square statistic (1 dof) and its p-value."""
    t, e = _check_times(times, events)
    g = np.asarray(group).astype(bool)
    if g.all() or not g.any():
        raise DataError("log-rank test needs both groups")
    if not e.any():
        raise DataError("log-rank test needs at least one event")
    table = _risk_table(t, e, g)
    d1, d, n0, n1 = table.T
    n = n0 + n1
    expected = d * n1 / n
    with np.errstate(invalid="ignore", divide="ignore"):
        var = np.where(n > 1, d * (n1 / n) * (n0 / n) * (n - d) / (n - 1), 0.0)
    o_e, v = float(np.sum(d1 - expected)), float(np.sum(var))
    stat = o_e * o_e / v if v > 0 else 0.0
    return stat, chi2_sf_1(stat)


def chi2_sf_1(x) -> float:
    """Upper tail of the chi-square distribution with one degree of freedom."""
    return math.erfc(math.sqrt(max(x, 0.0) / 2.0))


def logrank_p(times, events, group) -> float:
    return logrank(times, events, group)[1]


# --------------------------------------------------------------------------
# report bundle


@dataclass(frozen=True)
class Report:
    metrics: dict
    km_rows: list  # (group, time, survival, at_risk)
    roc_rows: list  # (fpr, tpr, threshold)
    scatter_rows: list  # (subject_id, actual_days, predicted)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(json.dumps(self.metrics, indent=2, sort_keys=True) + "\n")
        _write_csv(out / "km.csv", ("group", "time", "survival", "at_risk"), self.km_rows)
        _write_csv(out / "roc.csv", ("fpr", "tpr", "threshold"), self.roc_rows)
        _write_csv(out / "scatter.csv", ("subject_id", "actual_days", "predicted"), self.scatter_rows)


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def report(predictions, task: str) -> Report:
    """Assemble every statistic for one set of cross-validated predictions.

    Group labels follow the signed prediction score: long when the score is
    non-negative. The Cox and log-rank comparisons use the predicted short
    group as the exposed group, so a useful model gives HR > 1.
    """
    if not predictions:
        raise DataError("no predictions to report")
    score = np.array([p.score for p in predictions])
    days = np.array([p.survival_days for p in predictions])
    events = np.array([p.event for p in predictions])
    pred_long = score >= 0
    truth_long = np.array([p.truth_long for p in predictions])
    if truth_long.all() or not truth_long.any():
        # small validation sets can hold one true class only
        log.warning("all subjects share one true class; sensitivity, specificity and AUC undefined")
        tp = int((pred_long & truth_long).sum())
        tn = int((~pred_long & ~truth_long).sum())
        m = {"accuracy": 100.0 * (tp + tn) / len(score), "sensitivity": None, "specificity": None,
             "tp": tp, "fn": int(truth_long.sum()) - tp, "tn": tn, "fp": int((~truth_long).sum()) - tn}
        roc = None
    else:
        m = confusion_metrics(pred_long, truth_long)
        roc = roc_auc(score, truth_long)
    metrics = {
        "task": task,
        "n": len(predictions),
        "accuracy": m["accuracy"],
        "sensitivity": m["sensitivity"],
        "specificity": m["specificity"],
        "confusion": {k: m[k] for k in ("tp", "fn", "tn", "fp")},
        "auc": roc.auc if roc else None,
        "auc_se": roc.se if roc else None,
        "auc_ci": list(roc.ci) if roc else None,
        "rho": pearson([p.predicted for p in predictions], days) if task == "regress" else None,
    }
    short = ~pred_long
    if short.all() or not short.any():
        log.warning("all subjects fall in one predicted group; survival comparison skipped")
        metrics.update(hr=None, hr_ci=None, hr_p=None, p=None, logrank_chi2=None)
    else:
        try:
            cox = cox_hr(days, events, short)
            metrics.update(hr=cox.hr, hr_ci=list(cox.ci), hr_p=cox.p)
        except NumericError as exc:
            log.warning("hazard ratio not estimable: %s", exc)
            metrics.update(hr=None, hr_ci=None, hr_p=None, hr_note=str(exc))
        stat, p = logrank(days, events, short)
        metrics.update(p=p, logrank_chi2=stat)
    km_rows = []
    for name, sel in (("predicted_long", pred_long), ("predicted_short", short)):
        if sel.any():
            km = km_estimate(days[sel], events[sel])
            km_rows += [(name, float(a), float(b), int(c)) for a, b, c in zip(km.times, km.survival, km.at_risk)]
    roc_rows = [] if roc is None else [(float(a), float(b), float(c))
                                       for a, b, c in zip(roc.fpr, roc.tpr, roc.thresholds)]
    scatter = [(p.subject_id, p.survival_days, p.predicted) for p in predictions]
    return Report(metrics, km_rows, roc_rows, scatter)
