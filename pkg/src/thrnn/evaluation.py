"""Ranking and return-time metrics, plus the non-neural baselines.

Everything aggregates from flat arrays (ranks, predicted seconds,
target seconds) so the neural model, its ablations, and the Hawkes
baselines all report through the identical code path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetSplit
from .hawkes import FitConfig, HawkesParams, fit, hawkes_predict_next
from .point_process import QuadratureConfig

REPORT_FORMAT_VERSION = 1
SECONDS_PER_DAY = 86400.0


def rank_of_target(scores: np.ndarray, target: int) -> int:
    """1 + number of strictly greater scores: ties never push the target down."""
    return 1 + int(np.sum(scores > scores[target]))


def recall_at_k(ranks, k: int) -> float:
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("no ranked events")
    if np.any(ranks < 1):
        raise ValueError("ranks are 1-based")
    return float(np.mean(ranks <= k))


def mrr_at_k(ranks, k: int) -> float:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("no ranked events")
    if np.any(ranks < 1):
        raise ValueError("ranks are 1-based")
    rr = np.where(ranks <= k, 1.0 / ranks, 0.0)
    return float(np.sort(rr).sum() / ranks.size)


@dataclass
class BucketRow:
    low_days: float
    high_days: float  # inf for the open-ended last bucket
    mae_days: float | None  # None when the bucket is empty
    count: int

    @property
    def label(self) -> str:
        hi = "inf" if np.isinf(self.high_days) else f"{self.high_days:g}"
        return f"[{self.low_days:g},{hi})"


def mae_by_bucket(pred_seconds, target_seconds, bucket_edges_days) -> tuple[list[BucketRow], float]:
    """Per-bucket and overall mean absolute error, reported in days.

    Events are bucketed by their target gap; the final bucket is
    open-ended so every event is counted. Sums run over sorted values,
    making the result independent of event order.
    """
    pred = np.asarray(pred_seconds, dtype=np.float64) / SECONDS_PER_DAY
    target = np.asarray(target_seconds, dtype=np.float64) / SECONDS_PER_DAY
    if pred.shape != target.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {target.shape}")
    edges = np.asarray(bucket_edges_days, dtype=np.float64)
    if len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bucket edges must be strictly increasing, >= 2 of them")

    err = np.abs(pred - target)
    idx = np.clip(np.digitize(target, edges) - 1, 0, len(edges) - 2)
    rows = []
    for b in range(len(edges) - 1):
        high = np.inf if b == len(edges) - 2 else edges[b + 1]
        sel = np.sort(err[idx == b])
        rows.append(BucketRow(low_days=float(edges[b]), high_days=float(high),
                              mae_days=float(sel.mean()) if sel.size else None,
                              count=int(sel.size)))
    overall = float(np.sort(err).sum() / err.size) if err.size else float("nan")
    return rows, overall


@dataclass
class EvalReport:
    model: str
    recall: dict[int, float] = field(default_factory=dict)
    mrr: dict[int, float] = field(default_factory=dict)
    mae_buckets: list[BucketRow] = field(default_factory=list)
    overall_mae_days: float | None = None
    num_rank_events: int = 0
    num_gap_events: int = 0


def build_report(model: str, ranks, pred_seconds, target_seconds,
                 ks=(5, 10, 20), bucket_edges_days=None) -> EvalReport:
    """Assemble the full report; either metric family may be absent."""
    report = EvalReport(model=model)
    ranks = np.asarray(ranks)
    if ranks.size:
        for k in ks:
            report.recall[k] = recall_at_k(ranks, k)
            report.mrr[k] = mrr_at_k(ranks, k)
        report.num_rank_events = int(ranks.size)
    pred_seconds = np.asarray(pred_seconds, dtype=np.float64)
    if pred_seconds.size:
        if bucket_edges_days is None:
            bucket_edges_days = np.arange(0.0, 31.0)
        rows, overall = mae_by_bucket(pred_seconds, target_seconds, bucket_edges_days)
        report.mae_buckets = rows
        report.overall_mae_days = overall
        report.num_gap_events = int(pred_seconds.size)
    return report


def save_report(report: EvalReport, path: str) -> None:
    """Line-delimited records: header, recall/mrr rows, bucket rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_jline({"kind": "report-header", "version": REPORT_FORMAT_VERSION,
                         "model": report.model,
                         "num_rank_events": report.num_rank_events,
                         "num_gap_events": report.num_gap_events,
                         "overall_mae_days": report.overall_mae_days}))
        for k in sorted(report.recall):
            fh.write(_jline({"kind": "ranking", "k": k, "recall": report.recall[k],
                             "mrr": report.mrr[k]}))
        for row in report.mae_buckets:
            fh.write(_jline({"kind": "mae-bucket", "low_days": row.low_days,
                             "high_days": row.high_days if np.isfinite(row.high_days) else None,
                             "mae_days": row.mae_days, "count": row.count}))


def load_report(path: str) -> EvalReport:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("kind") != "report-header":
            raise ValueError(f"{path}: not a report file")
        if header["version"] != REPORT_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported report version {header['version']}")
        report = EvalReport(model=header["model"],
                            overall_mae_days=header["overall_mae_days"],
                            num_rank_events=header["num_rank_events"],
                            num_gap_events=header["num_gap_events"])
        for line in fh:
            rec = json.loads(line)
            if rec["kind"] == "ranking":
                report.recall[rec["k"]] = rec["recall"]
                report.mrr[rec["k"]] = rec["mrr"]
            else:
                high = rec["high_days"] if rec["high_days"] is not None else np.inf
                report.mae_buckets.append(BucketRow(rec["low_days"], high,
                                                    rec["mae_days"], rec["count"]))
    return report


def save_plot_data(report: EvalReport, path: str) -> None:
    """(bucket low, bucket high, MAE, count) rows for external plotting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# model={report.model} low_days high_days mae_days count\n")
        for row in report.mae_buckets:
            mae = "nan" if row.mae_days is None else f"{row.mae_days:.6f}"
            fh.write(f"{row.low_days:g} {row.high_days:g} {mae} {row.count}\n")


# ---------------------------------------------------------------------------
# evaluation walks shared by the simple baselines

def iter_test_gaps(split: DatasetSplit):
    """Yield (user_index, target gap seconds, prior event times seconds,
    train gaps seconds) for every unmasked test-session gap, teacher-forced:
    history grows with each test session consumed.

    Event times are session starts of real sittings; the second half of a
    length-split session is the same sitting, so it never becomes an event.
    """
    for tr, te in zip(split.train, split.test):
        train_gaps = [s.gap_before for s in tr.sessions[1:] if not s.gap_masked]
        events = [s.start_time for s in tr.sessions if not s.gap_masked]
        for s in te.sessions:
            if not s.gap_masked:
                yield tr.user_index, s.gap_before, list(events), train_gaps
                events.append(s.start_time)


def mean_gap_report(split: DatasetSplit, bucket_edges_days=None) -> EvalReport:
    """Constant predictor: each user's mean train gap (global mean fallback)."""
    all_train = [s.gap_before for u in split.train
                 for s in u.sessions[1:] if not s.gap_masked]
    global_mean = float(np.mean(all_train)) if all_train else 0.0
    preds, targets = [], []
    for _, gap, _, train_gaps in iter_test_gaps(split):
        preds.append(float(np.mean(train_gaps)) if train_gaps else global_mean)
        targets.append(gap)
    return build_report("mean_gap", [], preds, targets,
                        bucket_edges_days=bucket_edges_days)


def popularity_report(split: DatasetSplit, ks=(5, 10, 20)) -> EvalReport:
    """Static ranking by train-set frequency, scored on every test step."""
    counts = np.zeros(split.num_items)
    for u in split.train:
        for s in u.sessions:
            for it in s.items:
                counts[it] += 1
    ranks = []
    for u in split.test:
        for s in u.sessions:
            for target in s.items[1:]:
                ranks.append(rank_of_target(counts, target))
    return build_report("popularity", ranks, [], [], ks=ks)


def hawkes_report(split: DatasetSplit, cfg: FitConfig, q: QuadratureConfig,
                  time_unit: float = SECONDS_PER_DAY,
                  bucket_edges_days=None) -> EvalReport:
    """Per-user Hawkes fit on train events; predictions teacher-forced over
    the test walk (fitting is once per user, not per event)."""
    all_train = [s.gap_before for u in split.train
                 for s in u.sessions[1:] if not s.gap_masked]
    global_rate = time_unit / float(np.mean(all_train)) if all_train else 1.0
    params_by_user: dict[int, HawkesParams] = {}
    preds, targets = [], []
    for user, gap, events, train_gaps in iter_test_gaps(split):
        if user not in params_by_user:
            # the walk yields the first test gap before appending anything,
            # so `events` here is exactly the user's train history
            train_events = np.asarray(events, dtype=np.float64) / time_unit
            rate = time_unit / float(np.mean(train_gaps)) if train_gaps else global_rate
            params_by_user[user] = fit(train_events, cfg, fallback_rate=rate)
        p = params_by_user[user]
        history = np.asarray(events, dtype=np.float64) / time_unit
        preds.append(hawkes_predict_next(history, p, q) * time_unit)
        targets.append(gap)
    name = "hawkes_short" if cfg.window == "last_k" else "hawkes_long"
    return build_report(name, [], preds, targets, bucket_edges_days=bucket_edges_days)


def _jline(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"
