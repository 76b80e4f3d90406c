"""The joint session model: two stacked GRU levels plus an intensity
head for return-time prediction, trained end to end.

Session j of a user is summarized by the intra-level GRU over its item
embeddings; the last hidden state, a gap-bucket embedding, and a user
embedding concatenate into the session representation. The inter-level
GRU consumes the most recent representations from a zero state, and its
final state h_j both seeds the next intra-level unroll and drives the
return-time density.

Two details of the training scheme deserve calling out:

* History representations enter the computation with their intra-level
  summary detached (a constant refreshed once per epoch from the current
  weights), while their gap and user embedding segments are live
  lookups. Item embeddings therefore learn only from the recommendation
  loss of the session being predicted, never through the history
  pathway; gap and user embeddings keep learning through both losses.
* The time head gets its own optimizer group with a smaller learning
  rate and a gradient-norm clip. Its loss is exponential in s + w*g, so
  shared step sizes reliably blow it up.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import point_process as pp
from .autodiff import (GRUWeights, NonFiniteError, Tape, Tensor, add, concat,
                       constant, dropout, embedding, gru_cell, gru_cell_np,
                       linear, masked_softmax_xent, scale)
from .data import DatasetSplit, GapBucketizer, UserHistory
from .evaluation import EvalReport, build_report, rank_of_target
from .optim import Adam, ParamGroup
from .point_process import ExponentOverflowError, QuadratureConfig


class TrainingDivergedError(RuntimeError):
    """Raised when a training step produces a non-finite loss."""


@dataclass
class ModelConfig:
    num_items: int
    num_users: int
    item_embedding_dim: int = 50
    user_embedding_dim: int = 10
    gap_embedding_dim: int = 5
    hidden_dim_inter: int = 100
    hidden_dim_intra: int = 100
    max_session_reps: int = 15
    dropout_rate: float = 0.0
    loss_weight_time: float = 0.45
    loss_weight_rec: float = 0.45
    alpha_exp: float = 1.0
    batch_size: int = 100
    learning_rate: float = 1e-3
    learning_rate_time: float = 1e-4
    time_clip_norm: float | None = 5.0
    time_unit: float = 86400.0
    gap_bucket_bound: float = 30 * 86400.0
    num_gap_buckets: int = 30
    gap_bucket_scheme: str = "uniform"

    def __post_init__(self):
        dims = (self.item_embedding_dim, self.user_embedding_dim,
                self.gap_embedding_dim, self.hidden_dim_inter,
                self.hidden_dim_intra)
        if any(d < 1 for d in dims):
            raise ValueError("all dimensions must be positive")
        if self.num_items < 2 or self.num_users < 1:
            raise ValueError("need >= 2 items and >= 1 user")
        if self.hidden_dim_inter != self.hidden_dim_intra:
            raise ValueError(
                "inter and intra hidden dims must match: the inter state is "
                "propagated directly as the intra initial state")
        if self.max_session_reps < 1:
            raise ValueError("max_session_reps must be >= 1")
        if self.loss_weight_time < 0 or self.loss_weight_rec < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0.0 < self.alpha_exp <= 1.0:
            raise ValueError(f"alpha_exp must lie in (0, 1], got {self.alpha_exp}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.time_unit <= 0 or self.gap_bucket_bound <= 0:
            raise ValueError("time_unit and gap_bucket_bound must be positive")
        if self.num_gap_buckets < 1:
            raise ValueError("need at least one gap bucket")

    @property
    def rep_dim(self) -> int:
        return self.hidden_dim_intra + self.gap_embedding_dim + self.user_embedding_dim

    def bucketizer(self) -> GapBucketizer:
        return GapBucketizer(upper_bound=self.gap_bucket_bound,
                             num_buckets=self.num_gap_buckets,
                             scheme=self.gap_bucket_scheme)

    def quadrature(self) -> QuadratureConfig:
        return QuadratureConfig(cutoff=self.gap_bucket_bound / self.time_unit)


# ---------------------------------------------------------------------------
# parameters

GRU_FIELDS = ("w_r", "u_r", "b_r", "w_z", "u_z", "b_z", "w_c", "u_c", "b_c")


def _glorot(rng, rows: int, cols: int) -> np.ndarray:
    a = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-a, a, size=(rows, cols))


def _gru_init(rng, n_in: int, n_hidden: int, prefix: str) -> GRUWeights:
    def w(r, c, nm):
        return Tensor(_glorot(rng, r, c), name=f"{prefix}.{nm}")

    def b(nm):
        return Tensor(np.zeros(n_hidden), name=f"{prefix}.{nm}")

    return GRUWeights(w(n_in, n_hidden, "w_r"), w(n_hidden, n_hidden, "u_r"), b("b_r"),
                      w(n_in, n_hidden, "w_z"), w(n_hidden, n_hidden, "u_z"), b("b_z"),
                      w(n_in, n_hidden, "w_c"), w(n_hidden, n_hidden, "u_c"), b("b_c"))


@dataclass
class ModelParams:
    item_emb: Tensor
    user_emb: Tensor
    gap_emb: Tensor
    inter: GRUWeights
    intra: GRUWeights
    out_w: Tensor
    out_b: Tensor
    time_v: Tensor
    time_b: Tensor
    time_w: Tensor

    @staticmethod
    def init(cfg: ModelConfig, seed: int) -> "ModelParams":
        rng = np.random.default_rng([seed, 0])
        h = cfg.hidden_dim_intra

        def emb(rows, dim, nm):
            return Tensor(rng.uniform(-0.1, 0.1, size=(rows, dim)), name=nm)

        return ModelParams(
            item_emb=emb(cfg.num_items, cfg.item_embedding_dim, "item_emb"),
            user_emb=emb(cfg.num_users, cfg.user_embedding_dim, "user_emb"),
            gap_emb=emb(cfg.num_gap_buckets, cfg.gap_embedding_dim, "gap_emb"),
            inter=_gru_init(rng, cfg.rep_dim, h, "inter"),
            intra=_gru_init(rng, cfg.item_embedding_dim, h, "intra"),
            out_w=Tensor(_glorot(rng, h, cfg.num_items), name="out_w"),
            out_b=Tensor(np.zeros(cfg.num_items), name="out_b"),
            # the time head starts as a unit-rate exponential (v = 0, w = 0,
            # b = 0): a tame deterministic origin for its volatile gradients
            time_v=Tensor(np.zeros((h, 1)), name="time_v"),
            time_b=Tensor(np.zeros(1), name="time_b"),
            time_w=Tensor(np.zeros(()), name="time_w"),
        )

    def named(self) -> dict[str, Tensor]:
        out = {"item_emb": self.item_emb, "user_emb": self.user_emb,
               "gap_emb": self.gap_emb, "out_w": self.out_w, "out_b": self.out_b,
               "time_v": self.time_v, "time_b": self.time_b, "time_w": self.time_w}
        for prefix, cell in (("inter", self.inter), ("intra", self.intra)):
            for f in GRU_FIELDS:
                out[f"{prefix}.{f}"] = getattr(cell, f)
        return out

    def main_tensors(self) -> list[Tensor]:
        return ([self.item_emb, self.user_emb, self.gap_emb]
                + self.inter.tensors() + self.intra.tensors()
                + [self.out_w, self.out_b])

    def time_tensors(self) -> list[Tensor]:
        return [self.time_v, self.time_b, self.time_w]


def time_head(params: ModelParams) -> pp.TimeHeadParams:
    return pp.TimeHeadParams(v=params.time_v.value[:, 0],
                             w=float(params.time_w.value),
                             b=float(params.time_b.value[0]))


# ---------------------------------------------------------------------------
# examples

@dataclass(frozen=True)
class SessionRep:
    """One history entry: a detached intra summary plus the bucket id of
    the gap that preceded the session (the user id is example-level)."""

    intra_state: np.ndarray
    gap_bucket: int


@dataclass
class TrainingExample:
    user_index: int
    slot: int  # position in the user's train timeline
    inputs: np.ndarray  # items[:-1], consumed step by step
    targets: np.ndarray  # items[1:], one label per consumed step
    gap_target: float  # model time units (seconds / time_unit)
    time_masked: bool
    history: list[SessionRep] = field(default_factory=list)


def build_examples(split: DatasetSplit, cfg: ModelConfig) -> list[TrainingExample]:
    """One example per train session; histories get filled in later from
    the representation cache."""
    examples = []
    for hist in split.train:
        for j, s in enumerate(hist.sessions):
            # no predecessor (slot 0) and split-session halves carry a
            # meaningless zero gap: mask the time loss for both
            time_masked = s.gap_masked or j == 0
            if time_masked and len(s.items) < 2:
                continue  # neither loss has a target here
            examples.append(TrainingExample(
                user_index=hist.user_index, slot=j,
                inputs=np.asarray(s.items[:-1], dtype=np.int64),
                targets=np.asarray(s.items[1:], dtype=np.int64),
                gap_target=s.gap_before / cfg.time_unit,
                time_masked=time_masked))
    if not examples:
        raise ValueError("train split yields no usable examples")
    return examples


# ---------------------------------------------------------------------------
# tape-free hierarchy walk (representation cache, evaluation, prediction)

def _hierarchy_walk(params: ModelParams, cfg: ModelConfig,
                    session_lists: list[list], user_indices: list[int],
                    ranked_from: list[int] | None = None):
    """Run the full two-level recursion without a tape, slot-synchronously
    across users (every active user at slot j has exactly j predecessors,
    so the inter window length is uniform and the unroll batches cleanly).

    Returns per-user lists (intra_states, gap_buckets, h_before) and, when
    `ranked_from` marks each user's first scored slot, the rank of every
    within-session target from that slot on, teacher-forced.
    """
    n_users = len(session_lists)
    h_dim = cfg.hidden_dim_intra
    bucketizer = cfg.bucketizer()
    n_slots = [len(sl) for sl in session_lists]
    intra_states = [[None] * n for n in n_slots]
    buckets = [[bucketizer.bucket(s.gap_before) for s in sl] for sl in session_lists]
    h_before = [[None] * n for n in n_slots]
    ranks = [[] for _ in range(n_users)] if ranked_from is not None else None

    item_t, gap_t, user_t = (params.item_emb.value, params.gap_emb.value,
                             params.user_emb.value)
    for j in range(max(n_slots, default=0)):
        active = [u for u in range(n_users) if n_slots[u] > j]
        h = np.zeros((len(active), h_dim))
        for t in range(j - min(j, cfg.max_session_reps), j):
            rep = np.concatenate(
                [np.stack([intra_states[u][t] for u in active]),
                 gap_t[[buckets[u][t] for u in active]],
                 user_t[[user_indices[u] for u in active]]], axis=1)
            h = gru_cell_np(rep, h, params.inter)
        for row, u in enumerate(active):
            h_before[u][j] = h[row]

        sessions = [session_lists[u][j] for u in active]
        lens = np.array([len(s.items) for s in sessions])
        width = int(lens.max())
        ids = np.zeros((len(active), width), dtype=np.int64)
        for row, s in enumerate(sessions):
            ids[row, :len(s.items)] = s.items
        hh = h
        for t in range(width):
            h_new = gru_cell_np(item_t[ids[:, t]], hh, params.intra)
            hh = np.where((lens > t)[:, None], h_new, hh)
            if ranks is not None:
                need = [row for row, u in enumerate(active)
                        if j >= ranked_from[u] and t + 1 < lens[row]]
                if need:
                    sc = h_new[need] @ params.out_w.value + params.out_b.value
                    for srow, row in enumerate(need):
                        ranks[active[row]].append(
                            rank_of_target(sc[srow], int(ids[row, t + 1])))
        for row, u in enumerate(active):
            intra_states[u][j] = hh[row]
    return intra_states, buckets, h_before, ranks


def _refresh_histories(examples: list[TrainingExample], split: DatasetSplit,
                       params: ModelParams, cfg: ModelConfig) -> None:
    """Recompute the detached history entries of every example from the
    current weights (once per epoch; within an epoch they go stale)."""
    lists = [h.sessions for h in split.train]
    uidx = [h.user_index for h in split.train]
    intra_states, buckets, _, _ = _hierarchy_walk(params, cfg, lists, uidx)
    by_user = {h.user_index: i for i, h in enumerate(split.train)}
    for ex in examples:
        u = by_user[ex.user_index]
        ex.history = [SessionRep(intra_states[u][t], buckets[u][t])
                      for t in range(max(0, ex.slot - cfg.max_session_reps), ex.slot)]


# ---------------------------------------------------------------------------
# taped forward

def forward(example: TrainingExample, params: ModelParams,
            cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Tape-free single-example pass: per-step item scores over the
    current session and the inter state h_j that preceded it."""
    h = np.zeros((1, cfg.hidden_dim_intra))
    for rep in example.history[-cfg.max_session_reps:]:
        x = np.concatenate([rep.intra_state,
                            params.gap_emb.value[rep.gap_bucket],
                            params.user_emb.value[example.user_index]])[None, :]
        h = gru_cell_np(x, h, params.inter)
    h_j = h[0].copy()
    scores = np.zeros((len(example.inputs), cfg.num_items))
    for t, item in enumerate(example.inputs):
        h = gru_cell_np(params.item_emb.value[[int(item)]], h, params.intra)
        scores[t] = h[0] @ params.out_w.value + params.out_b.value
    return scores, h_j


def joint_loss(item_scores: np.ndarray, targets: np.ndarray, h_j: np.ndarray,
               gap_target: float, gap_masked: bool, params: ModelParams,
               cfg: ModelConfig) -> float:
    """Reference combination for one example: loss_weight_time * L_time +
    loss_weight_rec * (mean per-step cross-entropy). gap_target is in
    model time units."""
    if len(targets):
        sc = np.asarray(item_scores, dtype=np.float64)
        shifted = sc - sc.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1))
        l_rec = float(np.mean(logz - shifted[np.arange(len(targets)), targets]))
    else:
        l_rec = 0.0
    l_time = pp.time_loss(h_j, gap_target, time_head(params),
                          pp.TimeLossConfig(cfg.alpha_exp, cfg.time_unit),
                          masked=gap_masked)
    return cfg.loss_weight_time * l_time + cfg.loss_weight_rec * l_rec


def _forward_batch(tape: Tape, params: ModelParams, cfg: ModelConfig,
                   batch: list[TrainingExample], rng, training: bool):
    """Batched taped pass; returns (joint loss tensor, time nll value,
    rec nll value, unmasked time rows, rec steps)."""
    n = len(batch)
    h_dim = cfg.hidden_dim_intra
    rate = cfg.dropout_rate if training else 0.0
    users = np.array([ex.user_index for ex in batch], dtype=np.int64)

    # inter level over right-aligned histories; front padding is frozen
    # out via the update mask so cold rows keep the zero state
    window = max(len(ex.history) for ex in batch)
    h = constant(np.zeros((n, h_dim)))
    if window:
        segs = np.zeros((n, window, h_dim))
        gaps = np.zeros((n, window), dtype=np.int64)
        live = np.zeros((n, window, 1))
        for i, ex in enumerate(batch):
            k = len(ex.history)
            for t, rep in enumerate(ex.history):
                segs[i, window - k + t] = rep.intra_state
                gaps[i, window - k + t] = rep.gap_bucket
                live[i, window - k + t, 0] = 1.0
        for t in range(window):
            rep = concat(tape, [constant(segs[:, t]),
                                embedding(tape, params.gap_emb, gaps[:, t]),
                                embedding(tape, params.user_emb, users)])
            rep = dropout(tape, rep, rate, rng)
            h = gru_cell(tape, rep, h, params.inter,
                         update_mask=constant(live[:, t]))
    h_j = h

    time_masked = np.array([ex.time_masked for ex in batch])
    g_alpha = np.array([0.0 if ex.time_masked else ex.gap_target ** cfg.alpha_exp
                        for ex in batch])
    s = linear(tape, h_j, params.time_v, params.time_b)
    l_time = pp.time_nll(tape, s, params.time_w, g_alpha, masked=time_masked)

    width = max((len(ex.inputs) for ex in batch), default=0)
    rec_steps = int(sum(len(ex.inputs) for ex in batch))
    if width:
        ids = np.zeros((n, width), dtype=np.int64)
        tgt = np.zeros((n, width), dtype=np.int64)
        alive = np.zeros((n, width))
        for i, ex in enumerate(batch):
            m = len(ex.inputs)
            ids[i, :m] = ex.inputs
            tgt[i, :m] = ex.targets
            alive[i, :m] = 1.0
        hh = h_j
        total = None
        for t in range(width):
            x = dropout(tape, embedding(tape, params.item_emb, ids[:, t]), rate, rng)
            hh = gru_cell(tape, x, hh, params.intra,
                          update_mask=constant(alive[:, t:t + 1]))
            sc = linear(tape, hh, params.out_w, params.out_b)
            piece = masked_softmax_xent(tape, sc, tgt[:, t],
                                        masked=alive[:, t] < 0.5, reduction="sum")
            total = piece if total is None else add(tape, total, piece)
        l_rec = scale(tape, total, 1.0 / max(rec_steps, 1))
    else:
        l_rec = constant(np.zeros(()))

    loss = add(tape, scale(tape, l_time, cfg.loss_weight_time),
               scale(tape, l_rec, cfg.loss_weight_rec))
    return loss, float(l_time.value), float(l_rec.value), int((~time_masked).sum()), rec_steps


# ---------------------------------------------------------------------------
# training

@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    time_nll: float
    rec_nll: float
    recall5: float | None
    mae_days: float | None


def train(split: DatasetSplit, cfg: ModelConfig, epochs: int, seed: int,
          log=None, *, params: ModelParams | None = None,
          opt_state: dict | None = None, start_epoch: int = 1,
          ) -> tuple[ModelParams, list[EpochStats], dict]:
    """Mini-batch training over shuffled (user, session) examples.

    Runs epochs start_epoch..epochs inclusive. Deterministic for a fixed
    seed: initialization, shuffling, and dropout each draw from their own
    seeded stream, and the shuffle/dropout streams are re-derived per
    epoch, so training straight through or stopping at any epoch and
    resuming with the saved params and optimizer state produces identical
    parameters. `log` (if given) receives one JSON line per epoch. The
    returned dict is the final optimizer state, suitable for resuming.
    """
    if start_epoch < 1:
        raise ValueError("start_epoch must be >= 1")
    if epochs < start_epoch:
        raise ValueError(f"epochs ({epochs}) must be >= start_epoch ({start_epoch})")
    if not any(h.sessions for h in split.train):
        raise ValueError("empty train split")
    if params is None:
        params = ModelParams.init(cfg, seed)
    examples = build_examples(split, cfg)
    opt = Adam([ParamGroup("main", params.main_tensors(), lr=cfg.learning_rate),
                ParamGroup("time", params.time_tensors(), lr=cfg.learning_rate_time,
                           clip_norm=cfg.time_clip_norm)])
    if opt_state is not None:
        opt.load_state_arrays(opt_state)

    stats: list[EpochStats] = []
    for epoch in range(start_epoch, epochs + 1):
        shuffle_rng = np.random.default_rng([seed, 1, epoch])
        drop_rng = np.random.default_rng([seed, 2, epoch])
        _refresh_histories(examples, split, params, cfg)
        order = shuffle_rng.permutation(len(examples))
        loss_sum = time_sum = rec_sum = 0.0
        time_rows = rec_rows = 0
        for batch_no, lo in enumerate(range(0, len(order), cfg.batch_size), start=1):
            batch = [examples[i] for i in order[lo:lo + cfg.batch_size]]
            tape = Tape()
            try:
                loss, lt, lr_, nt, nr = _forward_batch(tape, params, cfg, batch,
                                                       drop_rng, training=True)
            except (ExponentOverflowError, NonFiniteError) as err:
                raise TrainingDivergedError(
                    f"forward diverged at epoch {epoch}, batch {batch_no}: {err}") from err
            if not np.isfinite(float(loss.value)):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}")
            opt.zero_grad()
            tape.backward(loss)
            opt.step()
            loss_sum += float(loss.value) * len(batch)
            time_sum += lt * nt
            rec_sum += lr_ * nr
            time_rows += nt
            rec_rows += nr

        held_out = evaluate(params, cfg, split, ks=(5,))
        stats.append(EpochStats(
            epoch=epoch,
            train_loss=loss_sum / len(examples),
            time_nll=time_sum / max(time_rows, 1),
            rec_nll=rec_sum / max(rec_rows, 1),
            recall5=held_out.recall.get(5),
            mae_days=held_out.overall_mae_days))
        if log is not None:
            rec = stats[-1]
            log(json.dumps({"kind": "epoch", "epoch": rec.epoch,
                            "train_loss": rec.train_loss, "time_nll": rec.time_nll,
                            "rec_nll": rec.rec_nll, "recall5": rec.recall5,
                            "mae_days": rec.mae_days}, sort_keys=True))
    return params, stats, opt.state_arrays()


# ---------------------------------------------------------------------------
# evaluation and prediction

def evaluate(params: ModelParams, cfg: ModelConfig, split: DatasetSplit,
             ks=(5, 10, 20), bucket_edges_days=None,
             quad: QuadratureConfig | None = None,
             model_name: str = "thrnn") -> EvalReport:
    """Teacher-forced walk over each user's full timeline: every test-step
    target is ranked, and every unmasked test gap gets a return-time
    prediction conditioned on everything before that session."""
    quad = quad or cfg.quadrature()
    lists, uidx, first_test = [], [], []
    for tr, te in zip(split.train, split.test):
        lists.append(tr.sessions + te.sessions)
        uidx.append(tr.user_index)
        first_test.append(len(tr.sessions))
    _, _, h_before, ranks = _hierarchy_walk(params, cfg, lists, uidx,
                                            ranked_from=first_test)
    all_ranks = [r for per_user in ranks for r in per_user]

    rows, targets = [], []
    for u, te in enumerate(split.test):
        for k, s in enumerate(te.sessions):
            if not s.gap_masked:
                rows.append(h_before[u][first_test[u] + k])
                targets.append(s.gap_before)
    if rows:
        s_vec = np.stack(rows) @ params.time_v.value[:, 0] + params.time_b.value[0]
        preds = pp.expected_return_time_from_s(
            s_vec, float(params.time_w.value), quad) * cfg.time_unit
    else:
        preds = np.zeros(0)
    return build_report(model_name, all_ranks, preds, np.asarray(targets, dtype=np.float64),
                        ks=ks, bucket_edges_days=bucket_edges_days)


@dataclass
class Prediction:
    items: np.ndarray  # (k,) best first; ties go to the lower index
    scores: np.ndarray  # matching raw scores
    return_gap_seconds: float


def predict(history: UserHistory, params: ModelParams, cfg: ModelConfig,
            k: int = 5, quad: QuadratureConfig | None = None) -> Prediction:
    """Continuation ranking after the last consumed item, plus the
    expected gap until the user's next session (in seconds)."""
    if not history.sessions:
        raise ValueError("need at least one session to predict from")
    if not 0 <= history.user_index < cfg.num_users:
        raise ValueError(f"user index {history.user_index} outside [0, {cfg.num_users})")
    if not 1 <= k <= cfg.num_items:
        raise ValueError(f"k must lie in [1, {cfg.num_items}]")
    bad = sorted({int(i) for s in history.sessions for i in s.items
                  if not 0 <= int(i) < cfg.num_items})
    if bad:
        raise IndexError(f"unknown item indices: {bad}")
    quad = quad or cfg.quadrature()

    intra_states, buckets, _, _ = _hierarchy_walk(
        params, cfg, [list(history.sessions)], [history.user_index])
    last = len(history.sessions) - 1
    scores = intra_states[0][last] @ params.out_w.value + params.out_b.value
    order = np.argsort(-scores, kind="stable")[:k]

    # the next-gap prediction conditions on the session that just ended,
    # so run the inter recursion once more over the freshest window
    h = np.zeros((1, cfg.hidden_dim_intra))
    for t in range(max(0, last + 1 - cfg.max_session_reps), last + 1):
        rep = np.concatenate([intra_states[0][t],
                              params.gap_emb.value[buckets[0][t]],
                              params.user_emb.value[history.user_index]])[None, :]
        h = gru_cell_np(rep, h, params.inter)
    s = float(h[0] @ params.time_v.value[:, 0] + params.time_b.value[0])
    gap = float(pp.expected_return_time_from_s(s, float(params.time_w.value), quad)[0])
    return Prediction(items=order, scores=scores[order],
                      return_gap_seconds=gap * cfg.time_unit)
