"""Trainable text encoder and the contrastive losses that align questions and
solution steps with their knowledge concepts.

The encoder embeds a (role, text) pair: mean-pooled token embeddings plus a
learned role vector, pushed through a two-layer projection. Three roles exist
(question / step / kc), mirroring distinct role markers prepended to each
input kind. Losses are InfoNCE-style with in-batch negatives and
false-negative elimination via a KC cluster map; gradients are derived by
hand and validated against central finite differences in the test suite.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterAssignment, build_kc_universe
from .corpus import AnnotatedQuestion
from .errors import InputError, NumericalError
from .numerics import adam_init, adam_step, log_sum_exp

ROLE_QUESTION = "question"
ROLE_STEP = "step"
ROLE_KC = "kc"
_ROLE_IDS = {ROLE_QUESTION: 0, ROLE_STEP: 1, ROLE_KC: 2}

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass
class Tokenizer:
    """Lowercase alphanumeric tokenizer with a corpus-built frozen vocab."""

    vocab: dict[str, int]  # token -> id; id 0 is reserved for unknowns

    @staticmethod
    def split(text: str) -> list[str]:
        return _TOKEN_RE.findall(text.lower())

    @classmethod
    def build(cls, corpus: list[AnnotatedQuestion]) -> "Tokenizer":
        tokens: set[str] = set()
        for aq in corpus:
            tokens.update(cls.split(aq.question.text))
            for s in aq.steps:
                tokens.update(cls.split(s))
            for c in aq.kcs:
                tokens.update(cls.split(c))
        return cls(vocab={tok: i + 1 for i, tok in enumerate(sorted(tokens))})

    @property
    def size(self) -> int:
        return len(self.vocab) + 1

    def encode_text(self, text: str) -> list[int]:
        ids = [self.vocab.get(tok, 0) for tok in self.split(text)]
        if not ids:
            raise InputError(f"text tokenizes to nothing: {text!r}")
        return ids


@dataclass
class EncoderDims:
    d_token: int = 32
    hidden: int = 48
    d_emb: int = 64


# Dimensions matching a full-size pretrained sentence encoder, kept as a
# documented preset (token width 768 projected down to 300).
FULL_SCALE_DIMS = EncoderDims(d_token=768, hidden=768, d_emb=300)


@dataclass
class ClTrainConfig:
    tau: float = 0.1
    alpha: float = 1.0
    batch_size: int = 32
    epochs: int = 50
    lr: float = 5e-5
    dropout: float = 0.1
    seed: int = 0
    mask_false_negatives: bool = True

    def validate(self) -> None:
        if self.tau <= 0:
            raise InputError(f"temperature must be positive, got {self.tau}")
        if self.alpha < 0:
            raise InputError(f"step-loss weight must be >= 0, got {self.alpha}")
        if not (0.0 <= self.dropout < 1.0):
            raise InputError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.batch_size < 1 or self.epochs < 0:
            raise InputError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class EncoderWeights:
    tokenizer: Tokenizer
    dims: EncoderDims
    dropout: float
    params: dict[str, np.ndarray]


def init_encoder(
    tokenizer: Tokenizer, dims: EncoderDims, dropout: float, seed: int
) -> EncoderWeights:
    rng = np.random.default_rng(seed)
    v = tokenizer.size
    params = {
        "tok": rng.normal(0.0, 0.1, size=(v, dims.d_token)),
        "role": rng.normal(0.0, 0.1, size=(3, dims.d_token)),
        "w1": rng.normal(0.0, 1.0 / np.sqrt(dims.d_token), size=(dims.hidden, dims.d_token)),
        "b1": np.zeros(dims.hidden),
        "w2": rng.normal(0.0, 1.0 / np.sqrt(dims.hidden), size=(dims.d_emb, dims.hidden)),
        "b2": np.zeros(dims.d_emb),
    }
    return EncoderWeights(tokenizer=tokenizer, dims=dims, dropout=dropout, params=params)


@dataclass
class _ForwardCache:
    token_ids: list[list[int]]
    roles: np.ndarray        # (n,) role ids
    x: np.ndarray            # (n, d_token) pooled + role input
    a1: np.ndarray           # (n, hidden) post-activation
    d1: np.ndarray           # (n, hidden) post-dropout
    drop_mask: np.ndarray | None
    keep: float


def _forward_batch(
    weights: EncoderWeights,
    items: list[tuple[str, str]],
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, _ForwardCache]:
    """Encode a list of (role, text) items. Returns (n, d_emb) plus a cache."""
    p = weights.params
    token_ids = []
    roles = np.empty(len(items), dtype=np.int64)
    x = np.empty((len(items), weights.dims.d_token))
    for i, (role, text) in enumerate(items):
        if role not in _ROLE_IDS:
            raise InputError(f"unknown role {role!r}")
        ids = weights.tokenizer.encode_text(text)
        token_ids.append(ids)
        roles[i] = _ROLE_IDS[role]
        x[i] = p["tok"][ids].mean(axis=0) + p["role"][roles[i]]
    u1 = x @ p["w1"].T + p["b1"]
    a1 = np.tanh(u1)
    if train and weights.dropout > 0.0:
        if rng is None:
            raise InputError("training-mode forward requires an rng for dropout")
        keep = 1.0 - weights.dropout
        drop_mask = (rng.random(a1.shape) < keep).astype(np.float64)
        d1 = a1 * drop_mask / keep
    else:
        keep = 1.0
        drop_mask = None
        d1 = a1
    z = d1 @ p["w2"].T + p["b2"]
    cache = _ForwardCache(token_ids=token_ids, roles=roles, x=x, a1=a1, d1=d1,
                          drop_mask=drop_mask, keep=keep)
    return z, cache


def _backward_batch(
    weights: EncoderWeights, cache: _ForwardCache, dz: np.ndarray
) -> dict[str, np.ndarray]:
    """Backprop output-vector gradients to every encoder parameter."""
    p = weights.params
    grads = {name: np.zeros_like(arr) for name, arr in p.items()}
    grads["w2"] = dz.T @ cache.d1
    grads["b2"] = dz.sum(axis=0)
    dd1 = dz @ p["w2"]
    if cache.drop_mask is not None:
        da1 = dd1 * cache.drop_mask / cache.keep
    else:
        da1 = dd1
    du1 = da1 * (1.0 - cache.a1 ** 2)
    grads["w1"] = du1.T @ cache.x
    grads["b1"] = du1.sum(axis=0)
    dx = du1 @ p["w1"]
    for i, ids in enumerate(cache.token_ids):
        np.add.at(grads["tok"], ids, dx[i] / len(ids))
    np.add.at(grads["role"], cache.roles, dx)
    return grads


def encode(
    weights: EncoderWeights,
    role: str,
    text: str,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Embed one (role, text) pair; deterministic in eval mode."""
    z, _ = _forward_batch(weights, [(role, text)], train=train, rng=rng)
    return z[0]


def sim(u: np.ndarray, v: np.ndarray, tau: float) -> float:
    """exp(cosine(u, v) / tau); scale-invariant in both arguments."""
    if tau <= 0:
        raise InputError(f"temperature must be positive, got {tau}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise NumericalError("sim is undefined for zero-norm vectors")
    return float(np.exp(float(u @ v) / (tau * nu * nv)))


# ---------------------------------------------------------------------------
# Contrastive losses over an embedded batch
# ---------------------------------------------------------------------------

@dataclass
class EmbeddedQuestion:
    """Embeddings and annotation structure for one question in a batch."""

    question_id: int
    z_q: np.ndarray
    z_steps: list[np.ndarray]
    z_kcs: list[np.ndarray]
    kc_ids: list[int]               # KC-universe ids, parallel to z_kcs
    step_kc: list[list[int]]        # per step: 0-based indices into z_kcs


@dataclass
class BatchGradients:
    """Loss gradients mirroring the z-vector structure of the batch."""

    d_z_q: list[np.ndarray]
    d_z_steps: list[list[np.ndarray]]
    d_z_kcs: list[list[np.ndarray]]


def _kc_table(
    batch: list[EmbeddedQuestion], assignment: ClusterAssignment
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[tuple[int, int]]]:
    """Stack every KC in the batch: vectors, owner index, cluster id, (i, j) keys."""
    rows, owners, clusters, keys = [], [], [], []
    for qi, eq in enumerate(batch):
        if not eq.z_kcs:
            raise InputError(f"question {eq.question_id} has no KCs in the batch")
        for j, (vec, kc_id) in enumerate(zip(eq.z_kcs, eq.kc_ids)):
            rows.append(vec)
            owners.append(qi)
            clusters.append(assignment.cluster(kc_id))
            keys.append((qi, j))
    return np.stack(rows), np.array(owners), np.array(clusters), keys


def negative_pairs(
    batch: list[EmbeddedQuestion],
    assignment: ClusterAssignment,
    i: int,
    j: int,
    for_step: bool,
    masked: bool = True,
) -> list[tuple[int, int]]:
    """(question_index, kc_index) pairs in the negative pool for positive (i, j).

    Question anchors never draw negatives from their own question; step
    anchors draw from the whole batch. With masking on, any KC sharing the
    positive's cluster is excluded; with masking off only the positive
    instance itself is.
    """
    _, owners, clusters, keys = _kc_table(batch, assignment)
    pos = keys.index((i, j))
    pool = []
    for c, key in enumerate(keys):
        if c == pos:
            continue
        if not for_step and owners[c] == i:
            continue
        if masked and clusters[c] == clusters[pos]:
            continue
        pool.append(key)
    return pool


def _info_nce(anchor: np.ndarray, positive: np.ndarray,
              negatives: list[np.ndarray], tau: float) -> float:
    """-log(sim(a,p) / (sim(a,p) + sum sim(a,n))), evaluated in log space."""
    def log_sim(v: np.ndarray) -> float:
        na, nv = np.linalg.norm(anchor), np.linalg.norm(v)
        if na == 0.0 or nv == 0.0:
            raise NumericalError("loss is undefined for zero-norm vectors")
        return float(anchor @ v) / (tau * na * nv)

    s_pos = log_sim(positive)
    scores = [s_pos] + [log_sim(v) for v in negatives]
    return float(log_sum_exp(np.array(scores)) - s_pos)


def loss_question(
    z_q_i: np.ndarray,
    batch: list[EmbeddedQuestion],
    assignment: ClusterAssignment,
    i: int,
    j: int,
    tau: float,
    masked: bool = True,
) -> float:
    """Contrastive loss pulling question i toward its j-th KC."""
    pool = negative_pairs(batch, assignment, i, j, for_step=False, masked=masked)
    negatives = [batch[qi].z_kcs[jj] for qi, jj in pool]
    return _info_nce(z_q_i, batch[i].z_kcs[j], negatives, tau)


def loss_step(
    z_s_ik: np.ndarray,
    batch: list[EmbeddedQuestion],
    assignment: ClusterAssignment,
    i: int,
    j: int,
    tau: float,
    masked: bool = True,
) -> float:
    """Contrastive loss pulling a solution step toward its j-th KC.

    Unlike the question loss, the negative pool spans the entire batch
    including the step's own question, so sibling KCs in other clusters do
    act as negatives.
    """
    pool = negative_pairs(batch, assignment, i, j, for_step=True, masked=masked)
    negatives = [batch[qi].z_kcs[jj] for qi, jj in pool]
    return _info_nce(z_s_ik, batch[i].z_kcs[j], negatives, tau)


def loss_total(
    batch: list[EmbeddedQuestion],
    assignment: ClusterAssignment,
    config: ClTrainConfig,
) -> tuple[float, BatchGradients]:
    """Batch objective: mean over questions of (question loss + alpha * step loss).

    Per question the KC terms are averaged over its KCs; the step terms are
    averaged over steps and, within a step, over its mapped KCs. Questions
    without steps contribute the question term only. Returns the scalar loss
    and exact gradients for every z vector in the batch.
    """
    config.validate()
    if not batch:
        raise InputError("loss_total requires a non-empty batch")
    kc_mat, owners, clusters, keys = _kc_table(batch, assignment)
    kc_norms = np.linalg.norm(kc_mat, axis=1)
    if np.any(kc_norms == 0.0):
        raise NumericalError("zero-norm KC embedding in batch")
    kc_unit = kc_mat / kc_norms[:, None]
    key_row = {key: r for r, key in enumerate(keys)}
    masked = config.mask_false_negatives
    b = len(batch)
    total = 0.0
    d_kc = np.zeros_like(kc_mat)
    grads = BatchGradients(d_z_q=[], d_z_steps=[], d_z_kcs=[])

    def anchor_terms(
        anchor: np.ndarray, terms: list[tuple[int, float, int | None]]
    ) -> np.ndarray:
        """Accumulate loss and KC-side grads for one anchor vector.

        ``terms`` lists (positive_row, weight, owner_to_exclude) triples
        sharing this anchor. Returns the gradient w.r.t. the anchor.
        """
        nonlocal total
        na = np.linalg.norm(anchor)
        if na == 0.0:
            raise NumericalError("zero-norm anchor embedding in batch")
        a_unit = anchor / na
        cos = kc_unit @ a_unit
        s = cos / config.tau
        d_anchor = np.zeros_like(anchor)
        for pos_row, weight, own_excluded in terms:
            keep = np.ones(len(keys), dtype=bool)
            keep[pos_row] = False
            if own_excluded is not None:
                keep &= owners != own_excluded
            if masked:
                keep &= clusters != clusters[pos_row]
            rows = np.concatenate(([pos_row], np.nonzero(keep)[0]))
            scores = s[rows]
            lse = log_sum_exp(scores)
            total_term = float(lse - scores[0])
            total += weight * total_term
            w = np.exp(scores - lse)
            coeff = w * weight
            coeff[0] -= weight
            # d cos(a, v)/da = (v_hat - cos * a_hat)/|a|; symmetric in v
            g = coeff / config.tau
            d_anchor += (g[:, None] * (kc_unit[rows] - cos[rows, None] * a_unit)).sum(axis=0) / na
            d_kc[rows] += g[:, None] * (a_unit - cos[rows, None] * kc_unit[rows]) / kc_norms[rows, None]
        return d_anchor

    for qi, eq in enumerate(batch):
        m_i = len(eq.z_kcs)
        q_terms = [(key_row[(qi, j)], 1.0 / (b * m_i), qi) for j in range(m_i)]
        grads.d_z_q.append(anchor_terms(eq.z_q, q_terms))
        step_grads = []
        n_i = len(eq.z_steps)
        for k, z_s in enumerate(eq.z_steps):
            mapped = eq.step_kc[k]
            if not mapped:
                raise InputError(
                    f"question {eq.question_id}: step {k + 1} has no mapped KCs"
                )
            w = config.alpha / (b * n_i * len(mapped))
            s_terms = [(key_row[(qi, j)], w, None) for j in mapped]
            step_grads.append(anchor_terms(z_s, s_terms))
        grads.d_z_steps.append(step_grads)

    row = 0
    for eq in batch:
        grads.d_z_kcs.append([d_kc[row + j] for j in range(len(eq.z_kcs))])
        row += len(eq.z_kcs)
    return total, grads


# ---------------------------------------------------------------------------
# Batch embedding, training loop, export
# ---------------------------------------------------------------------------

def _step_kc_indices(aq: AnnotatedQuestion) -> list[list[int]]:
    return [
        [j - 1 for j in aq.kc_indices_of_step(k + 1)] for k in range(aq.num_steps)
    ]


def embed_batch(
    weights: EncoderWeights,
    questions: list[AnnotatedQuestion],
    kc_index: dict[str, int],
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[list[EmbeddedQuestion], _ForwardCache, list[tuple[int, str, int]]]:
    """Encode all texts of a question batch in one stacked forward pass.

    The returned layout maps each stacked row back to (question position,
    kind, index) so loss gradients can be routed into ``_backward_batch``.
    """
    items: list[tuple[str, str]] = []
    layout: list[tuple[int, str, int]] = []
    for qi, aq in enumerate(questions):
        items.append((ROLE_QUESTION, aq.question.text))
        layout.append((qi, "q", 0))
        for k, s in enumerate(aq.steps):
            items.append((ROLE_STEP, s))
            layout.append((qi, "s", k))
        for j, c in enumerate(aq.kcs):
            items.append((ROLE_KC, c))
            layout.append((qi, "c", j))
    z, cache = _forward_batch(weights, items, train=train, rng=rng)
    embedded = []
    row = 0
    for aq in questions:
        z_q = z[row]
        row += 1
        z_steps = [z[row + k] for k in range(aq.num_steps)]
        row += aq.num_steps
        z_kcs = [z[row + j] for j in range(aq.num_kcs)]
        row += aq.num_kcs
        embedded.append(
            EmbeddedQuestion(
                question_id=aq.question.id,
                z_q=z_q,
                z_steps=z_steps,
                z_kcs=z_kcs,
                kc_ids=[kc_index[c] for c in aq.kcs],
                step_kc=_step_kc_indices(aq),
            )
        )
    return embedded, cache, layout


def _scatter_z_grads(
    grads: BatchGradients, layout: list[tuple[int, str, int]], d_emb: int
) -> np.ndarray:
    dz = np.empty((len(layout), d_emb))
    for r, (qi, kind, idx) in enumerate(layout):
        if kind == "q":
            dz[r] = grads.d_z_q[qi]
        elif kind == "s":
            dz[r] = grads.d_z_steps[qi][idx]
        else:
            dz[r] = grads.d_z_kcs[qi][idx]
    return dz


def train_encoder(
    corpus: list[AnnotatedQuestion],
    assignment: ClusterAssignment,
    config: ClTrainConfig,
    dims: EncoderDims | None = None,
) -> tuple[EncoderWeights, list[float]]:
    """Mini-batch Adam over shuffled question batches; returns loss trace."""
    config.validate()
    dims = dims or EncoderDims()
    unannotated = [aq.question.id for aq in corpus if not aq.is_annotated]
    if unannotated:
        raise InputError(f"corpus not fully annotated; first offenders: {unannotated[:5]}")
    _, kc_index = build_kc_universe(corpus)
    for kc_id in kc_index.values():
        assignment.cluster(kc_id)  # raises if the cluster map misses a KC
    tokenizer = Tokenizer.build(corpus)
    weights = init_encoder(tokenizer, dims, config.dropout, seed=config.seed)
    opt = adam_init(weights.params, lr=config.lr)
    rng = np.random.default_rng(config.seed + 1)
    trace: list[float] = []
    n = len(corpus)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch_qs = [corpus[i] for i in idx]
            embedded, cache, layout = embed_batch(
                weights, batch_qs, kc_index, train=True, rng=rng
            )
            loss, zgrads = loss_total(embedded, assignment, config)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {len(trace)}")
            dz = _scatter_z_grads(zgrads, layout, dims.d_emb)
            grads = _backward_batch(weights, cache, dz)
            adam_step(opt, weights.params, grads)
            epoch_losses.append(loss)
        trace.append(float(np.mean(epoch_losses)) if epoch_losses else 0.0)
    return weights, trace


# ---------------------------------------------------------------------------
# Question-embedding aggregation and export
# ---------------------------------------------------------------------------

@dataclass
class QuestionEmbedding:
    z_q: np.ndarray
    step_vectors: list[np.ndarray]
    aggregated: np.ndarray  # concat(z_q, mean of step vectors), 2 * d_emb


def embed_question(weights: EncoderWeights, aq: AnnotatedQuestion) -> QuestionEmbedding:
    """Inference-time embedding; never consults the KC annotation.

    The aggregate concatenates the question vector with the mean step vector;
    questions without steps get zeros for the step half so the dimensionality
    stays fixed.
    """
    z_q = encode(weights, ROLE_QUESTION, aq.question.text)
    step_vectors = [encode(weights, ROLE_STEP, s) for s in aq.steps]
    if step_vectors:
        step_mean = np.mean(np.stack(step_vectors), axis=0)
    else:
        step_mean = np.zeros_like(z_q)
    return QuestionEmbedding(
        z_q=z_q, step_vectors=step_vectors, aggregated=np.concatenate([z_q, step_mean])
    )


def export_embeddings(
    weights: EncoderWeights,
    corpus: list[AnnotatedQuestion],
    path: str,
    sidecar_path: str | None = None,
) -> None:
    """Write aggregated vectors: header "dim=<d> count=<n>", one question per line."""
    rows = [(aq.question.id, embed_question(weights, aq)) for aq in corpus]
    dim = 2 * weights.dims.d_emb
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"dim={dim} count={len(rows)}\n")
        for qid, emb in rows:
            fh.write(str(qid) + " " + " ".join(repr(v) for v in emb.aggregated))
            fh.write("\n")
    if sidecar_path:
        with open(sidecar_path, "w", encoding="utf-8", newline="\n") as fh:
            for qid, emb in rows:
                rec = {
                    "id": qid,
                    "z_q": [repr(v) for v in emb.z_q],
                    "steps": [[repr(v) for v in s] for s in emb.step_vectors],
                }
                fh.write(json.dumps(rec, sort_keys=True))
                fh.write("\n")


def write_embedding_file(vectors: dict[int, np.ndarray], path: str) -> None:
    """Export an arbitrary id -> vector table in the standard format."""
    if not vectors:
        raise InputError("cannot export an empty embedding table")
    dims = {v.shape[0] for v in vectors.values()}
    if len(dims) != 1:
        raise InputError(f"inconsistent embedding dimensions: {sorted(dims)}")
    dim = dims.pop()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"dim={dim} count={len(vectors)}\n")
        for qid in sorted(vectors):
            fh.write(str(qid) + " " + " ".join(repr(v) for v in vectors[qid]))
            fh.write("\n")


def load_embedding_export(path: str) -> tuple[int, dict[int, np.ndarray]]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        try:
            dim = int(header[0].split("=", 1)[1])
            count = int(header[1].split("=", 1)[1])
        except (IndexError, ValueError) as exc:
            raise InputError(f"{path}: bad export header") from exc
        vectors: dict[int, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            qid = int(parts[0])
            vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            if vec.shape[0] != dim:
                raise InputError(f"{path}:{lineno}: expected {dim} floats, got {vec.shape[0]}")
            vectors[qid] = vec
    if len(vectors) != count:
        raise InputError(f"{path}: header count {count} != {len(vectors)} rows")
    return dim, vectors


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_encoder(weights: EncoderWeights, path: str) -> None:
    doc = {
        "version": 1,
        "kind": "encoder",
        "dims": {
            "d_token": weights.dims.d_token,
            "hidden": weights.dims.hidden,
            "d_emb": weights.dims.d_emb,
        },
        "dropout": weights.dropout,
        "vocab": weights.tokenizer.vocab,
        "params": {
            name: {"shape": list(arr.shape), "data": [repr(v) for v in arr.reshape(-1)]}
            for name, arr in weights.params.items()
        },
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_encoder(path: str) -> EncoderWeights:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("kind") != "encoder" or doc.get("version") != 1:
        raise InputError(f"{path}: not a version-1 encoder checkpoint")
    dims = EncoderDims(**doc["dims"])
    params = {}
    for name, spec in doc["params"].items():
        arr = np.array([float(v) for v in spec["data"]], dtype=np.float64)
        params[name] = arr.reshape(spec["shape"])
    return EncoderWeights(
        tokenizer=Tokenizer(vocab={k: int(v) for k, v in doc["vocab"].items()}),
        dims=dims,
        dropout=float(doc["dropout"]),
        params=params,
    )
