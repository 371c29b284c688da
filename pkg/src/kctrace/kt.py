"""Knowledge-tracing sequence models with pluggable question embeddings.

Two architectures share one interface: a gated recurrent core and a
single-head causally masked dot-product attention core, each followed by a
two-layer prediction head. The question-embedding table is either randomly
initialized (``random_id``) or imported from an encoder export and routed
through a trainable linear adapter (``enriched_frozen`` / ``enriched_finetune``);
every mode uses the same graph so parameter shapes match and performance
differences are attributable to the embeddings alone.

Prediction is strictly causal: the score for position t+1 depends only on
exercises 1..t and the identity of question t+1. Gradients are hand-derived
(backprop through time for the recurrent core) and checked against finite
differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import Exercise, StudentHistory
from .errors import InputError, NumericalError
from .numerics import adam_init, adam_step

ARCH_RECURRENT = "recurrent"
ARCH_ATTENTION = "attention"
ARCHS = (ARCH_RECURRENT, ARCH_ATTENTION)

MODE_RANDOM = "random_id"
MODE_FROZEN = "enriched_frozen"
MODE_FINETUNE = "enriched_finetune"
MODES = (MODE_RANDOM, MODE_FROZEN, MODE_FINETUNE)


@dataclass
class KtConfig:
    lr: float = 5e-3
    batch_size: int = 32
    epochs: int = 20
    max_seq_len: int = 500
    seed: int = 0
    d_model: int = 300   # width after the adapter
    d_table: int = 64    # raw table width in random_id mode
    d_resp: int = 16
    hidden: int = 64     # recurrent state / attention width
    head_hidden: int = 32

    def validate(self) -> None:
        if min(self.d_model, self.d_table, self.d_resp, self.hidden, self.head_hidden) < 1:
            raise InputError("all model dimensions must be positive")
        if self.batch_size < 1 or self.epochs < 0 or self.max_seq_len < 2:
            raise InputError("batch_size >= 1, epochs >= 0, max_seq_len >= 2 required")


@dataclass
class KtModel:
    arch: str
    mode: str
    config: KtConfig
    item_index: dict[int, int]       # external item id -> table row
    params: dict[str, np.ndarray]
    frozen: set[str] = field(default_factory=set)

    @property
    def n_items(self) -> int:
        return len(self.item_index)

    def row_of(self, item_id: int) -> int:
        row = self.item_index.get(item_id)
        if row is None:
            raise InputError(f"unknown question id {item_id}")
        return row


def parameter_shapes(model: KtModel) -> dict[str, tuple[int, ...]]:
    return {name: arr.shape for name, arr in sorted(model.params.items())}


def build_kt_model(
    arch: str,
    mode: str,
    item_ids: list[int],
    config: KtConfig,
    embeddings: dict[int, np.ndarray] | None = None,
) -> KtModel:
    """Assemble a model; enriched modes must cover every item id exactly."""
    config.validate()
    if arch not in ARCHS:
        raise InputError(f"unknown architecture {arch!r}; choose from {ARCHS}")
    if mode not in MODES:
        raise InputError(f"unknown embedding mode {mode!r}; choose from {MODES}")
    ids = sorted(set(item_ids))
    if not ids:
        raise InputError("cannot build a model with no items")
    item_index = {qid: row for row, qid in enumerate(ids)}
    rng = np.random.default_rng(config.seed)
    if mode == MODE_RANDOM:
        if embeddings is not None:
            raise InputError("random_id mode does not take an embedding source")
        d_table = config.d_table
        table = rng.uniform(-0.1, 0.1, size=(len(ids), d_table))
    else:
        if embeddings is None:
            raise InputError(f"{mode} mode requires an embedding source")
        missing = [qid for qid in ids if qid not in embeddings]
        if missing:
            raise InputError(
                f"embedding export is missing question ids {missing[:10]}"
            )
        d_table = int(next(iter(embeddings.values())).shape[0])
        table = np.stack([np.asarray(embeddings[qid], dtype=np.float64) for qid in ids])

    d_x = 2 * config.d_model + config.d_resp
    h = config.hidden

    def dense(shape, fan_in):
        return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)

    params: dict[str, np.ndarray] = {
        "table": table,
        "w_adapt": dense((config.d_model, d_table), d_table),
        "b_adapt": np.zeros(config.d_model),
        "resp": rng.normal(0.0, 0.1, size=(2, config.d_resp)),
    }
    if arch == ARCH_RECURRENT:
        for gate in ("r", "z", "n"):
            params[f"w_{gate}"] = dense((h, d_x), d_x)
            params[f"u_{gate}"] = dense((h, h), h)
            params[f"b_{gate}"] = np.zeros(h)
        core_out = h
    else:
        params["w_q"] = dense((h, config.d_model), config.d_model)
        params["b_q"] = np.zeros(h)
        params["w_k"] = dense((h, d_x), d_x)
        params["b_k"] = np.zeros(h)
        params["w_v"] = dense((h, d_x), d_x)
        params["b_v"] = np.zeros(h)
        core_out = h
    # readout projects the core state into embedding space; the head sees the
    # state readout, the target embedding, and their product channel (which
    # exposes the state/target inner product to a small feed-forward head)
    params["w_out"] = dense((config.d_model, core_out), core_out)
    params["b_out"] = np.zeros(config.d_model)
    params["w_h1"] = dense((config.head_hidden, 3 * config.d_model), 3 * config.d_model)
    params["b_h1"] = np.zeros(config.head_hidden)
    params["w_h2"] = dense((config.head_hidden,), config.head_hidden)
    params["b_h2"] = np.zeros(1)
    frozen = {"table"} if mode == MODE_FROZEN else set()
    return KtModel(arch=arch, mode=mode, config=config, item_index=item_index,
                   params=params, frozen=frozen)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


@dataclass
class _Forward:
    qrows: np.ndarray
    resp: np.ndarray
    mask: np.ndarray
    emb: np.ndarray        # (B,T,d_table) raw table rows
    g: np.ndarray          # (B,T,d_model) adapted question embeddings
    x: np.ndarray          # (B,T,d_x) interaction inputs
    core_out: np.ndarray   # (B,T,core) state used by the head at each position
    head_in: np.ndarray    # (B,T,core+d_model)
    head_hid: np.ndarray   # (B,T,head_hidden)
    logits: np.ndarray     # (B,T)
    extra: dict


def _forward(model: KtModel, qrows: np.ndarray, resp: np.ndarray,
             mask: np.ndarray) -> _Forward:
    """Teacher-forced pass: logits[:, t] scores position t given positions < t."""
    p = model.params
    cfg = model.config
    b, t_len = qrows.shape
    emb = p["table"][qrows]
    g = emb @ p["w_adapt"].T + p["b_adapt"]
    rv = p["resp"][resp]
    # interaction input: what was practiced, signed by the outcome, plus a
    # learned response vector; the signed channel lets the cores accumulate
    # per-concept evidence linearly
    sign = (2.0 * resp - 1.0)[:, :, None]
    x = np.concatenate([g, g * sign, rv], axis=2)
    extra: dict = {}
    if model.arch == ARCH_RECURRENT:
        h = np.zeros((b, cfg.hidden))
        core_out = np.empty((b, t_len, cfg.hidden))
        gates_r = np.empty((b, t_len, cfg.hidden))
        gates_z = np.empty((b, t_len, cfg.hidden))
        cand = np.empty((b, t_len, cfg.hidden))
        a_pre = np.empty((b, t_len, cfg.hidden))
        h_prev_all = np.empty((b, t_len, cfg.hidden))
        for t in range(t_len):
            core_out[:, t] = h
            h_prev_all[:, t] = h
            xt = x[:, t]
            r = _sigmoid(xt @ p["w_r"].T + h @ p["u_r"].T + p["b_r"])
            z = _sigmoid(xt @ p["w_z"].T + h @ p["u_z"].T + p["b_z"])
            a = h @ p["u_n"].T + p["b_n"]
            n = np.tanh(xt @ p["w_n"].T + r * a)
            h_new = (1.0 - z) * n + z * h
            m = mask[:, t:t + 1]
            h = m * h_new + (1.0 - m) * h
            gates_r[:, t] = r
            gates_z[:, t] = z
            cand[:, t] = n
            a_pre[:, t] = a
        extra.update(gates_r=gates_r, gates_z=gates_z, cand=cand, a_pre=a_pre,
                     h_prev=h_prev_all)
    else:
        scale = 1.0 / np.sqrt(cfg.hidden)
        qv = g @ p["w_q"].T + p["b_q"]
        k = x @ p["w_k"].T + p["b_k"]
        v = x @ p["w_v"].T + p["b_v"]
        scores = np.einsum("bpd,bjd->bpj", qv, k) * scale
        allowed = np.tril(np.ones((t_len, t_len), dtype=bool), k=-1)[None, :, :]
        allowed = allowed & (mask[:, None, :] > 0)
        neg = np.where(allowed, scores, -np.inf)
        row_max = np.max(neg, axis=2, keepdims=True)
        row_max = np.where(np.isfinite(row_max), row_max, 0.0)
        e = np.exp(neg - row_max)  # disallowed entries hold -inf and vanish
        denom = e.sum(axis=2, keepdims=True)
        attn = e / np.where(denom == 0.0, 1.0, denom)
        core_out = np.einsum("bpj,bjd->bpd", attn, v)
        extra.update(qv=qv, k=k, v=v, attn=attn, scale=scale)
    u = core_out @ p["w_out"].T + p["b_out"]
    head_in = np.concatenate([u, g, u * g], axis=2)
    head_hid = np.tanh(head_in @ p["w_h1"].T + p["b_h1"])
    logits = head_hid @ p["w_h2"] + p["b_h2"][0]
    extra["u"] = u
    return _Forward(qrows=qrows, resp=resp, mask=mask, emb=emb, g=g, x=x,
                    core_out=core_out, head_in=head_in, head_hid=head_hid,
                    logits=logits, extra=extra)


def _backward(model: KtModel, fwd: _Forward, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    p = model.params
    cfg = model.config
    b, t_len = fwd.qrows.shape
    grads = {name: np.zeros_like(arr) for name, arr in p.items()}

    # head
    dhid = dlogits[:, :, None] * p["w_h2"][None, None, :]
    dhid_pre = dhid * (1.0 - fwd.head_hid ** 2)
    flat_pre = dhid_pre.reshape(-1, cfg.head_hidden)
    flat_in = fwd.head_in.reshape(-1, fwd.head_in.shape[2])
    grads["w_h1"] = flat_pre.T @ flat_in
    grads["b_h1"] = flat_pre.sum(axis=0)
    grads["w_h2"] = (fwd.head_hid * dlogits[:, :, None]).reshape(-1, cfg.head_hidden).sum(axis=0)
    grads["b_h2"] = np.array([dlogits.sum()])
    dhead_in = dhid_pre @ p["w_h1"]
    u = fwd.extra["u"]
    dm = cfg.d_model
    du = dhead_in[:, :, :dm] + dhead_in[:, :, 2 * dm:] * fwd.g
    dg = dhead_in[:, :, dm:2 * dm] + dhead_in[:, :, 2 * dm:] * u
    flat_du = du.reshape(-1, dm)
    grads["w_out"] = flat_du.T @ fwd.core_out.reshape(-1, fwd.core_out.shape[2])
    grads["b_out"] = flat_du.sum(axis=0)
    dcore = du @ p["w_out"]
    dx = np.zeros_like(fwd.x)

    if model.arch == ARCH_RECURRENT:
        gr, gz = fwd.extra["gates_r"], fwd.extra["gates_z"]
        cand, a_pre = fwd.extra["cand"], fwd.extra["a_pre"]
        h_prev = fwd.extra["h_prev"]
        dh = np.zeros((b, cfg.hidden))
        for t in range(t_len - 1, -1, -1):
            # the head at position t reads h_{t-1}, handled as part of dh_prev
            m = fwd.mask[:, t:t + 1]
            dh_raw = dh * m
            dh_prev = dh * (1.0 - m)
            r, z, n, a = gr[:, t], gz[:, t], cand[:, t], a_pre[:, t]
            hp = h_prev[:, t]
            xt = fwd.x[:, t]
            dz_pre = dh_raw * (hp - n) * z * (1.0 - z)
            dn_pre = dh_raw * (1.0 - z) * (1.0 - n ** 2)
            dh_prev = dh_prev + dh_raw * z
            # n = tanh(x w_n + r * a)
            grads["w_n"] += dn_pre.T @ xt
            dx[:, t] += dn_pre @ p["w_n"]
            dr_pre = dn_pre * a * r * (1.0 - r)
            da = dn_pre * r
            grads["u_n"] += da.T @ hp
            grads["b_n"] += da.sum(axis=0)
            dh_prev = dh_prev + da @ p["u_n"]
            grads["w_r"] += dr_pre.T @ xt
            grads["u_r"] += dr_pre.T @ hp
            grads["b_r"] += dr_pre.sum(axis=0)
            dx[:, t] += dr_pre @ p["w_r"]
            dh_prev = dh_prev + dr_pre @ p["u_r"]
            grads["w_z"] += dz_pre.T @ xt
            grads["u_z"] += dz_pre.T @ hp
            grads["b_z"] += dz_pre.sum(axis=0)
            dx[:, t] += dz_pre @ p["w_z"]
            dh_prev = dh_prev + dz_pre @ p["u_z"]
            dh = dh_prev + dcore[:, t]
    else:
        qv, k, v = fwd.extra["qv"], fwd.extra["k"], fwd.extra["v"]
        attn, scale = fwd.extra["attn"], fwd.extra["scale"]
        dctx = dcore
        dattn = np.einsum("bpd,bjd->bpj", dctx, v)
        dv = np.einsum("bpj,bpd->bjd", attn, dctx)
        inner = (attn * dattn).sum(axis=2, keepdims=True)
        dscore = attn * (dattn - inner)
        dqv = np.einsum("bpj,bjd->bpd", dscore, k) * scale
        dk = np.einsum("bpj,bpd->bjd", dscore, qv) * scale
        flat_g = fwd.g.reshape(-1, cfg.d_model)
        flat_x = fwd.x.reshape(-1, fwd.x.shape[2])
        grads["w_q"] = dqv.reshape(-1, cfg.hidden).T @ flat_g
        grads["b_q"] = dqv.reshape(-1, cfg.hidden).sum(axis=0)
        grads["w_k"] = dk.reshape(-1, cfg.hidden).T @ flat_x
        grads["b_k"] = dk.reshape(-1, cfg.hidden).sum(axis=0)
        grads["w_v"] = dv.reshape(-1, cfg.hidden).T @ flat_x
        grads["b_v"] = dv.reshape(-1, cfg.hidden).sum(axis=0)
        dg += dqv @ p["w_q"]
        dx += dk @ p["w_k"] + dv @ p["w_v"]

    # interaction input splits into plain / signed question parts + response part
    sign = (2.0 * fwd.resp - 1.0)[:, :, None]
    dg += dx[:, :, :cfg.d_model] + dx[:, :, cfg.d_model:2 * cfg.d_model] * sign
    drv = dx[:, :, 2 * cfg.d_model:]
    np.add.at(grads["resp"], fwd.resp.reshape(-1), drv.reshape(-1, cfg.d_resp))
    flat_dg = dg.reshape(-1, cfg.d_model)
    grads["w_adapt"] = flat_dg.T @ fwd.emb.reshape(-1, fwd.emb.shape[2])
    grads["b_adapt"] = flat_dg.sum(axis=0)
    demb = dg @ p["w_adapt"]
    np.add.at(grads["table"], fwd.qrows.reshape(-1), demb.reshape(-1, demb.shape[2]))
    return grads


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _windows(histories: list[StudentHistory], max_len: int) -> list[tuple[int, int, list[Exercise]]]:
    """Chop histories into (student_id, window_index, exercises) chunks."""
    out = []
    for h in sorted(histories, key=lambda s: s.student_id):
        for w, start in enumerate(range(0, len(h.exercises), max_len)):
            chunk = h.exercises[start:start + max_len]
            out.append((h.student_id, w, chunk))
    return out


def _pad_batch(model: KtModel, seqs: list[list[Exercise]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    b = len(seqs)
    t_len = max(len(s) for s in seqs)
    qrows = np.zeros((b, t_len), dtype=np.int64)
    resp = np.zeros((b, t_len), dtype=np.int64)
    mask = np.zeros((b, t_len))
    for i, seq in enumerate(seqs):
        for t, ex in enumerate(seq):
            qrows[i, t] = model.row_of(ex.question_id)
            resp[i, t] = ex.response
            mask[i, t] = 1.0
    return qrows, resp, mask


def _validation_auc(model: KtModel, histories: list[StudentHistory]) -> float:
    labels, scores = [], []
    for h in histories:
        probs = predict_sequence(model, h)
        for t in range(1, len(h.exercises)):
            labels.append(h.exercises[t].response)
            scores.append(probs[t])
    y = np.asarray(labels)
    s = np.asarray(scores)
    if y.sum() == 0 or y.sum() == y.size:
        return 0.5
    uniq, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    ranks = ((ends - counts + 1 + ends) / 2.0)[inverse]
    n_pos = int(y.sum())
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * (y.size - n_pos)))


def train_kt(
    model: KtModel,
    histories: list[StudentHistory],
    config: KtConfig,
    val_histories: list[StudentHistory] | None = None,
) -> tuple[KtModel, list[float]]:
    """Teacher-forced BCE over next-step predictions (positions 2..T).

    With ``val_histories`` given, validation AUC is measured after every epoch
    and the best-epoch weights (earliest on ties) are restored at the end.
    """
    config.validate()
    if not histories:
        raise InputError("train_kt requires at least one history")
    windows = _windows(histories, config.max_seq_len)
    trainable = {n: p for n, p in model.params.items() if n not in model.frozen}
    opt = adam_init(trainable, lr=config.lr)
    rng = np.random.default_rng(config.seed)
    trace: list[float] = []
    best_auc = -1.0
    best_params: dict[str, np.ndarray] | None = None
    for epoch in range(config.epochs):
        order = rng.permutation(len(windows))
        losses = []
        for bstart in range(0, len(order), config.batch_size):
            batch_idx = order[bstart:bstart + config.batch_size]
            seqs = [windows[i][2] for i in batch_idx]
            qrows, resp, mask = _pad_batch(model, seqs)
            fwd = _forward(model, qrows, resp, mask)
            target_mask = mask.copy()
            target_mask[:, 0] = 0.0  # first position has no history
            count = target_mask.sum()
            if count == 0:
                continue
            y = resp.astype(np.float64)
            bce = (_softplus(fwd.logits) - y * fwd.logits) * target_mask
            loss = float(bce.sum() / count)
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite training loss at epoch {epoch}, batch {bstart // config.batch_size}"
                )
            dlogits = (_sigmoid(fwd.logits) - y) * target_mask / count
            grads = _backward(model, fwd, dlogits)
            adam_step(opt, trainable, {n: grads[n] for n in trainable})
            losses.append(loss)
        trace.append(float(np.mean(losses)) if losses else 0.0)
        if val_histories is not None:
            val_auc = _validation_auc(model, val_histories)
            if val_auc > best_auc:
                best_auc = val_auc
                best_params = {n: p.copy() for n, p in model.params.items()}
    if best_params is not None:
        for name, arr in best_params.items():
            model.params[name][...] = arr
    return model, trace


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def predict_sequence(model: KtModel, history: StudentHistory) -> np.ndarray:
    """P(r_t | exercises < t) for every position; index 0 uses the empty state."""
    qrows, resp, mask = _pad_batch(model, [history.exercises])
    fwd = _forward(model, qrows, resp, mask)
    return _sigmoid(fwd.logits[0])


def predict_next(model: KtModel, prefix: list[Exercise], next_question_id: int) -> float:
    """Probability the next response is correct, given an observed prefix."""
    pseudo = list(prefix) + [Exercise(question_id=next_question_id, kc_ids=(), response=0)]
    probs = predict_sequence(model, StudentHistory(student_id=-1, exercises=pseudo))
    return float(probs[len(prefix)])


# ---------------------------------------------------------------------------
# KC-sequence expansion (leakage-free evaluation for KC-centric models)
# ---------------------------------------------------------------------------

def expand_to_kc_histories(histories: list[StudentHistory]) -> list[StudentHistory]:
    """Rewrite question sequences as KC sequences for training KC-centric models.

    Every exercise becomes one pseudo-exercise per KC, all carrying the
    question's response.
    """
    out = []
    for h in histories:
        pseudo = []
        for ex in h.exercises:
            if not ex.kc_ids:
                raise InputError(
                    f"student {h.student_id}: exercise on question {ex.question_id} "
                    "has no KC ids"
                )
            pseudo.extend(
                Exercise(question_id=kc, kc_ids=(kc,), response=ex.response)
                for kc in ex.kc_ids
            )
        out.append(StudentHistory(student_id=h.student_id, exercises=pseudo))
    return out


def evaluate_kc_expanded(
    model: KtModel, histories: list[StudentHistory]
) -> list[tuple[int, float]]:
    """Score questions through a KC-sequence model without sibling leakage.

    The observed prefix is the expanded KC sequence of *earlier* questions
    only. Each KC of the target question is appended separately, scored
    independently, and the mean of those scores is the question's prediction;
    sibling-KC labels of the target are never revealed.
    """
    results: list[tuple[int, float]] = []
    for h in histories:
        prefix: list[Exercise] = []
        for t, ex in enumerate(h.exercises):
            if not ex.kc_ids:
                raise InputError(
                    f"student {h.student_id}: exercise on question {ex.question_id} "
                    "has no KC ids"
                )
            if t >= 1:
                scores = [predict_next(model, prefix, kc) for kc in ex.kc_ids]
                results.append((ex.response, float(np.mean(scores))))
            prefix.extend(
                Exercise(question_id=kc, kc_ids=(kc,), response=ex.response)
                for kc in ex.kc_ids
            )
    return results


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_kt_model(model: KtModel, path: str) -> None:
    doc = {
        "version": 1,
        "kind": "kt_model",
        "arch": model.arch,
        "mode": model.mode,
        "config": vars(model.config),
        "item_index": {str(k): v for k, v in model.item_index.items()},
        "frozen": sorted(model.frozen),
        "params": {
            name: {"shape": list(arr.shape), "data": [repr(v) for v in arr.reshape(-1)]}
            for name, arr in model.params.items()
        },
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_kt_model(path: str) -> KtModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("kind") != "kt_model" or doc.get("version") != 1:
        raise InputError(f"{path}: not a version-1 KT checkpoint")
    params = {}
    for name, spec in doc["params"].items():
        arr = np.array([float(v) for v in spec["data"]], dtype=np.float64)
        params[name] = arr.reshape(spec["shape"])
    cfg_fields = {f for f in KtConfig.__dataclass_fields__}
    config = KtConfig(**{k: v for k, v in doc["config"].items() if k in cfg_fields})
    return KtModel(
        arch=doc["arch"],
        mode=doc["mode"],
        config=config,
        item_index={int(k): int(v) for k, v in doc["item_index"].items()},
        params=params,
        frozen=set(doc["frozen"]),
    )


def save_loss_trace(trace: list[float], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(trace):
            fh.write(f"{epoch},{repr(loss)}\n")
