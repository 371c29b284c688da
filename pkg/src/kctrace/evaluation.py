"""Metrics and experiment protocols.

AUC is the rank-based Mann-Whitney statistic with average ranks for ties
(exactly the positive-outranks-negative pair count). Protocols cover pooled
next-step evaluation, multi-step-ahead prediction in accumulative and
non-accumulative regimes, student-count sensitivity sweeps, and the
embedding-ablation grid.

Model arguments are duck-typed: anything exposing
``predict_next(prefix, next_question_id) -> float`` works, so oracle test
doubles plug in next to real sequence models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kt
from .clustering import ClusterAssignment
from .corpus import (
    AnnotatedQuestion,
    Exercise,
    StudentHistory,
    split_by_student,
    subsample_students,
)
from .encoder import (
    ClTrainConfig,
    EncoderDims,
    ROLE_QUESTION,
    Tokenizer,
    embed_question,
    encode,
    init_encoder,
    train_encoder,
)
from .errors import InputError

ACCUMULATIVE = "accumulative"
NON_ACCUMULATIVE = "non_accumulative"

ABLATION_VARIANTS = ("a", "b", "c", "d", "e", "f", "g", "full")


def auc(labels, scores) -> float:
    """Area under the ROC curve via tied ranks; needs both classes present."""
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    if y.ndim != 1 or y.shape != s.shape:
        raise InputError("labels and scores must be 1-D and equally long")
    if not np.all((y == 0) | (y == 1)):
        raise InputError("labels must be binary 0/1")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InputError("AUC requires at least one positive and one negative")
    uniq, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)               # 1-based end rank per distinct score
    starts = ends - counts + 1
    avg_rank = (starts + ends) / 2.0
    ranks = avg_rank[inverse]
    sum_pos = float(ranks[y == 1].sum())
    return (sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


# ---------------------------------------------------------------------------
# Prediction protocols
# ---------------------------------------------------------------------------

@dataclass
class EvalFragment:
    auc: float
    n: int
    skipped: int = 0
    pairs: list[tuple[int, float]] = field(default_factory=list)


def _predict_next(model, prefix: list[Exercise], qid: int) -> float:
    if isinstance(model, kt.KtModel):
        return kt.predict_next(model, prefix, qid)
    return model.predict_next(prefix, qid)


def _predict_sequence(model, history: StudentHistory) -> np.ndarray:
    if isinstance(model, kt.KtModel):
        return kt.predict_sequence(model, history)
    if hasattr(model, "predict_sequence"):
        return np.asarray(model.predict_sequence(history), dtype=np.float64)
    return np.array(
        [
            _predict_next(model, history.exercises[:t], ex.question_id)
            for t, ex in enumerate(history.exercises)
        ]
    )


def next_step_eval(model, histories: list[StudentHistory]) -> EvalFragment:
    """Pooled (label, score) pairs for every position with a non-empty prefix."""
    if not histories:
        raise InputError("next_step_eval needs a non-empty test set")
    pairs: list[tuple[int, float]] = []
    for h in histories:
        probs = _predict_sequence(model, h)
        for t in range(1, len(h.exercises)):
            pairs.append((h.exercises[t].response, float(probs[t])))
    labels = [p[0] for p in pairs]
    scores = [p[1] for p in pairs]
    return EvalFragment(auc=auc(labels, scores), n=len(pairs), pairs=pairs)


def multi_step_eval(
    model,
    histories: list[StudentHistory],
    observed_fraction: float,
    mode: str,
) -> EvalFragment:
    """Predict the hidden tail of each history from its observed head.

    ``non_accumulative``: every hidden position is scored conditioning on the
    observed prefix only. ``accumulative``: predictions are rolled forward,
    binarized at 0.5 and appended as responses. Histories too short to have
    one observed and one hidden step are skipped and counted.
    """
    if mode not in (ACCUMULATIVE, NON_ACCUMULATIVE):
        raise InputError(f"unknown multi-step mode {mode!r}")
    if not (0.0 < observed_fraction < 1.0):
        raise InputError(f"observed_fraction must be in (0, 1), got {observed_fraction}")
    pairs: list[tuple[int, float]] = []
    skipped = 0
    for h in histories:
        t_len = len(h.exercises)
        n_obs = int(math.floor(observed_fraction * t_len + 1e-9))
        if n_obs < 1 or n_obs >= t_len:
            skipped += 1
            continue
        prefix = list(h.exercises[:n_obs])
        for pos in range(n_obs, t_len):
            target = h.exercises[pos]
            score = _predict_next(model, prefix, target.question_id)
            pairs.append((target.response, score))
            if mode == ACCUMULATIVE:
                rolled = 1 if score >= 0.5 else 0
                prefix.append(
                    Exercise(
                        question_id=target.question_id,
                        kc_ids=target.kc_ids,
                        response=rolled,
                    )
                )
    if not pairs:
        raise InputError("no history was long enough for multi-step evaluation")
    labels = [p[0] for p in pairs]
    scores = [p[1] for p in pairs]
    return EvalFragment(auc=auc(labels, scores), n=len(pairs), skipped=skipped, pairs=pairs)


# ---------------------------------------------------------------------------
# Mode comparisons, sensitivity sweep, ablation grid
# ---------------------------------------------------------------------------

def _item_ids(histories: list[StudentHistory]) -> list[int]:
    return sorted({ex.question_id for h in histories for ex in h.exercises})


def compare_modes(
    train: list[StudentHistory],
    test: list[StudentHistory],
    embeddings: dict[int, np.ndarray],
    archs: list[str],
    kt_config: kt.KtConfig,
    seeds: list[int],
    extra_row_fields: dict | None = None,
) -> list[dict]:
    """Train and evaluate random_id vs enriched_frozen for each arch and seed.

    The random table width is pinned to the export dimensionality so both
    modes share identical parameter shapes. A fifth of the training students
    is carved off as a validation set for best-epoch weight selection.
    """
    ids = _item_ids(train + test)
    dim = int(next(iter(embeddings.values())).shape[0])
    rows = []
    for arch in archs:
        for seed in seeds:
            if len(train) >= 10:
                val_folds = split_by_student(train, 5, seed=seed)
                fit, val = val_folds.split(train, test_fold=0)
            else:
                fit, val = train, None
            for mode in (kt.MODE_RANDOM, kt.MODE_FROZEN):
                cfg = kt.KtConfig(**{**vars(kt_config), "seed": seed, "d_table": dim})
                model = kt.build_kt_model(
                    arch, mode, ids, cfg,
                    embeddings=embeddings if mode != kt.MODE_RANDOM else None,
                )
                model, _ = kt.train_kt(model, fit, cfg, val_histories=val)
                frag = next_step_eval(model, test)
                row = {
                    "experiment": "mode_comparison",
                    "arch": arch,
                    "mode": mode,
                    "seed": seed,
                    "auc": frag.auc,
                    "n": frag.n,
                }
                if extra_row_fields:
                    row.update(extra_row_fields)
                rows.append(row)
    return rows


def sensitivity_sweep(
    train: list[StudentHistory],
    test: list[StudentHistory],
    embeddings: dict[int, np.ndarray],
    fractions: list[float],
    seeds: list[int],
    archs: list[str],
    kt_config: kt.KtConfig,
) -> list[dict]:
    """Shrink the training population and compare both modes at each size."""
    if any(not (0.0 < f <= 1.0) for f in fractions):
        raise InputError("fractions must lie in (0, 1]")
    rows = []
    for fraction in fractions:
        for seed in seeds:
            sub = subsample_students(train, fraction, seed)
            rows.extend(
                compare_modes(
                    sub, test, embeddings, archs, kt_config, [seed],
                    extra_row_fields={"fraction": fraction, "experiment": "sensitivity"},
                )
            )
    return rows


def _variant_text(variant: str, aq: AnnotatedQuestion) -> str:
    q = aq.question.text
    steps = " ".join(aq.steps)
    kcs = " ".join(aq.kcs)
    if variant == "a":
        return q
    if variant == "b":
        return f"{q} {kcs}"
    if variant == "c":
        return f"{q} {steps}"
    if variant == "d":
        return f"{q} {steps} {kcs}"
    if variant == "e":
        return kcs
    raise InputError(f"variant {variant!r} has no text construction")


def variant_embeddings(
    variant: str,
    corpus: list[AnnotatedQuestion],
    assignment: ClusterAssignment,
    cl_config: ClTrainConfig,
    dims: EncoderDims,
) -> dict[int, np.ndarray]:
    """Question-embedding table for one ablation variant.

    Variants a-e embed concatenated annotation text with an *untrained*
    encoder; f retrains without false-negative elimination; g retrains with
    the step loss switched off; "full" is the complete objective.
    """
    if variant not in ABLATION_VARIANTS:
        raise InputError(f"unknown ablation variant {variant!r}")
    if variant in ("a", "b", "c", "d", "e"):
        tokenizer = Tokenizer.build(corpus)
        weights = init_encoder(tokenizer, dims, cl_config.dropout, seed=cl_config.seed)
        return {
            aq.question.id: encode(weights, ROLE_QUESTION, _variant_text(variant, aq))
            for aq in corpus
        }
    overrides: dict = {}
    if variant == "f":
        overrides["mask_false_negatives"] = False
    elif variant == "g":
        overrides["alpha"] = 0.0
    cfg = ClTrainConfig(**{**vars(cl_config), **overrides})
    weights, _ = train_encoder(corpus, assignment, cfg, dims=dims)
    return {aq.question.id: embed_question(weights, aq).aggregated for aq in corpus}


def ablation_grid(
    corpus: list[AnnotatedQuestion],
    train: list[StudentHistory],
    test: list[StudentHistory],
    assignment: ClusterAssignment,
    cl_config: ClTrainConfig,
    dims: EncoderDims,
    kt_config: kt.KtConfig,
    variants: list[str],
    arch: str = kt.ARCH_RECURRENT,
) -> list[dict]:
    """Export each variant's embeddings and train the same KT model on them."""
    for v in variants:
        if v not in ABLATION_VARIANTS:
            raise InputError(f"unknown ablation variant {v!r}")
    ids = _item_ids(train + test)
    rows = []
    for variant in variants:
        table = variant_embeddings(variant, corpus, assignment, cl_config, dims)
        dim = int(next(iter(table.values())).shape[0])
        cfg = kt.KtConfig(**{**vars(kt_config), "d_table": dim})
        model = kt.build_kt_model(arch, kt.MODE_FROZEN, ids, cfg, embeddings=table)
        model, _ = kt.train_kt(model, train, cfg)
        frag = next_step_eval(model, test)
        rows.append(
            {
                "experiment": "ablation",
                "variant": variant,
                "arch": arch,
                "mode": kt.MODE_FROZEN,
                "auc": frag.auc,
                "n": frag.n,
            }
        )
    return rows
