"""Command-line entry point.

Subcommands cover every pipeline stage plus an end-to-end runner:

  synth          generate a synthetic corpus + interaction file
  annotate       run the three-stage LLM annotation over a corpus
  cluster        build the KC cluster map
  train-encoder  contrastive training of the text encoder
  embed          export aggregated question embeddings
  train-kt       train one knowledge-tracing model
  evaluate       next-step or multi-step evaluation of a trained model
  sweep          student-count sensitivity sweep (both embedding modes)
  ablate         embedding-ablation grid
  pipeline       cluster -> train-encoder -> embed -> train-kt -> evaluate -> report

Configuration is a JSON file (nested keys) merged with CLI flags whose names
mirror the config keys with dots; flags override file values, file values
override defaults. Exit codes: 0 ok, 1 input error, 2 backend error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import annotator, clustering, evaluation, kt, report as report_mod
from .corpus import (
    SynthConfig,
    generate_synthetic,
    load_corpus,
    load_interactions,
    save_corpus,
    save_interactions,
    split_by_student,
)
from .encoder import (
    ClTrainConfig,
    EncoderDims,
    ROLE_KC,
    encode,
    export_embeddings,
    load_embedding_export,
    load_encoder,
    save_encoder,
    train_encoder,
)
from .errors import BackendError, InputError, KctraceError, NumericalError

# key -> (kind, default, help); kinds: int, float, str, bool, ints, floats, strs
SCHEMA: dict[str, tuple[str, object, str]] = {
    "paths.corpus": ("str", "", "question corpus JSONL (input)"),
    "paths.interactions": ("str", "", "student interaction JSONL (input)"),
    "paths.annotated": ("str", "", "annotated corpus output (default <out_dir>/annotated.jsonl)"),
    "paths.cache": ("str", "", "annotation cache JSONL (default <out_dir>/cache.jsonl)"),
    "paths.out_dir": ("str", "out", "output directory"),
    "paths.clusters": ("str", "", "cluster map JSON (default <out_dir>/clusters.json)"),
    "paths.encoder": ("str", "", "encoder checkpoint (default <out_dir>/encoder.json)"),
    "paths.embeddings": ("str", "", "embedding export (default <out_dir>/embeddings.txt)"),
    "paths.fixtures": ("str", "", "mock backend fixture JSON"),
    "backend.kind": ("str", "mock", "completion backend: mock or http"),
    "backend.base_url": ("str", "", "chat-completion endpoint URL"),
    "backend.model": ("str", "scripted", "model name sent to the backend"),
    "backend.token_env": ("str", "KCTRACE_API_TOKEN", "env var holding the auth token"),
    "backend.temperature": ("float", 0.0, "sampling temperature"),
    "backend.workers": ("int", 4, "concurrent in-flight annotation chains"),
    "cluster.provider": ("str", "hash", "KC embedding provider: hash, encoder, or file"),
    "cluster.threshold": ("float", 0.15, "cosine-distance cutoff for single linkage"),
    "cluster.min_size": ("int", 2, "minimum cluster size before dissolving to singletons"),
    "cluster.hash_dim": ("int", 256, "dimension of the hashed-token fallback"),
    "cluster.embedding_file": ("str", "", "external KC embedding file (provider=file)"),
    "cl.tau": ("float", 0.1, "similarity temperature"),
    "cl.alpha": ("float", 1.0, "step-loss weight"),
    "cl.batch_size": ("int", 32, "contrastive batch size"),
    "cl.epochs": ("int", 50, "contrastive training epochs"),
    "cl.lr": ("float", 5e-5, "contrastive learning rate"),
    "cl.dropout": ("float", 0.1, "encoder dropout"),
    "cl.seed": ("int", 0, "encoder init/training seed"),
    "cl.mask": ("bool", True, "eliminate false negatives via the cluster map"),
    "enc.d_token": ("int", 32, "token embedding width"),
    "enc.hidden": ("int", 48, "projection hidden width"),
    "enc.d_emb": ("int", 64, "output embedding width"),
    "kt.lr": ("float", 5e-3, "KT learning rate"),
    "kt.batch_size": ("int", 32, "KT batch size"),
    "kt.epochs": ("int", 20, "KT training epochs"),
    "kt.max_seq_len": ("int", 500, "history window length"),
    "kt.seed": ("int", 0, "KT init/training seed"),
    "kt.d_model": ("int", 300, "question embedding width after the adapter"),
    "kt.d_table": ("int", 64, "raw table width in random_id mode"),
    "kt.d_resp": ("int", 16, "response embedding width"),
    "kt.hidden": ("int", 64, "sequence core width"),
    "kt.head_hidden": ("int", 32, "prediction head width"),
    "exp.folds": ("int", 5, "student-level fold count"),
    "exp.test_fold": ("int", 0, "held-out fold index"),
    "exp.split_seed": ("int", 0, "fold split seed"),
    "exp.seeds": ("ints", [0, 1, 2], "comma-separated training seeds"),
    "exp.archs": ("strs", ["recurrent"], "comma-separated architectures"),
    "exp.fractions": ("floats", [0.05, 0.25, 1.0], "sweep fractions"),
    "exp.variants": ("strs", list(evaluation.ABLATION_VARIANTS), "ablation variants"),
    "exp.multi_fraction": ("float", 0.6, "observed fraction for multi-step eval"),
    "synth.questions": ("int", 50, "synthetic question count"),
    "synth.kcs": ("int", 10, "synthetic KC count"),
    "synth.students": ("int", 200, "synthetic student count"),
    "synth.length": ("int", 50, "synthetic sequence length"),
    "synth.learn_rate": ("float", 0.08, "mastery gain per practice"),
    "synth.guess": ("float", 0.1, "guess probability"),
    "synth.slip": ("float", 0.05, "slip probability"),
    "synth.seed": ("int", 0, "synthetic generator seed"),
}


def _convert(kind: str, raw: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"expected true/false, got {raw!r}")
        if kind == "ints":
            return [int(v) for v in raw.split(",") if v]
        if kind == "floats":
            return [float(v) for v in raw.split(",") if v]
        if kind == "strs":
            return [v for v in raw.split(",") if v]
        return raw
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _flatten(prefix: str, obj, out: dict) -> None:
    if isinstance(obj, dict):
        for key, value in obj.items():
            _flatten(f"{prefix}.{key}" if prefix else str(key), value, out)
    else:
        out[prefix] = obj


def load_config(args: argparse.Namespace) -> dict:
    cfg = {key: default for key, (_, default, _) in SCHEMA.items()}
    ns = vars(args)
    if ns.get("config"):
        with open(ns["config"], "r", encoding="utf-8") as fh:
            try:
                file_cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{ns['config']}: invalid JSON: {exc}") from exc
        flat: dict = {}
        _flatten("", file_cfg, flat)
        for key, value in flat.items():
            if key not in SCHEMA:
                raise InputError(f"{ns['config']}: unknown config key {key!r}")
            kind = SCHEMA[key][0]
            cfg[key] = _convert(kind, str(value)) if isinstance(value, str) and kind != "str" else value
    for key, (kind, _, _) in SCHEMA.items():
        raw = ns.get(key)
        if raw is not None:
            cfg[key] = _convert(kind, raw)
    return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are input errors (exit 1)
        raise InputError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="kctrace", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "synth": "generate synthetic corpus and interactions",
        "annotate": "annotate a corpus through the completion backend",
        "cluster": "cluster KC texts into the false-negative map",
        "train-encoder": "train the contrastive encoder",
        "embed": "export aggregated question embeddings",
        "train-kt": "train a knowledge-tracing model",
        "evaluate": "evaluate a trained KT model",
        "sweep": "student-count sensitivity sweep",
        "ablate": "embedding ablation grid",
        "pipeline": "run the full pipeline and emit a report",
    }
    for name, help_text in commands.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="JSON config file [default: none]")
        for key, (kind, default, help_text2) in SCHEMA.items():
            default_repr = ",".join(str(v) for v in default) if isinstance(default, list) else default
            sp.add_argument(
                f"--{key}", metavar=kind.upper(), dest=key,
                help=f"{help_text2} [default: {default_repr}]",
            )
        if name == "train-kt":
            sp.add_argument("--arch", choices=kt.ARCHS, default=kt.ARCH_RECURRENT,
                            help="sequence architecture [default: recurrent]")
            sp.add_argument("--mode", choices=kt.MODES, default=kt.MODE_RANDOM,
                            help="embedding mode [default: random_id]")
        if name == "evaluate":
            sp.add_argument("--model", required=True, help="KT checkpoint path")
            sp.add_argument("--protocol", choices=("next", "multi"), default="next",
                            help="evaluation protocol [default: next]")
            sp.add_argument("--multi-mode",
                            choices=(evaluation.ACCUMULATIVE, evaluation.NON_ACCUMULATIVE),
                            default=evaluation.NON_ACCUMULATIVE,
                            help="multi-step regime [default: non_accumulative]")
    return parser


# ---------------------------------------------------------------------------
# Path helpers
# ---------------------------------------------------------------------------

def _out_path(cfg: dict, key: str, default_name: str) -> str:
    if cfg[key]:
        return cfg[key]
    os.makedirs(cfg["paths.out_dir"], exist_ok=True)
    return os.path.join(cfg["paths.out_dir"], default_name)


def _require(cfg: dict, key: str, hint: str) -> str:
    if not cfg[key]:
        raise InputError(f"{key} is required: {hint}")
    return cfg[key]


def _load_required_corpus(cfg: dict):
    return load_corpus(_require(cfg, "paths.corpus", "pass --paths.corpus"))


def _build_backend(cfg: dict) -> annotator.CompletionBackend:
    if cfg["backend.kind"] == "mock":
        fixtures = _require(cfg, "paths.fixtures", "mock backend needs a fixture file")
        return annotator.MockBackend.from_fixture(fixtures, model=cfg["backend.model"])
    if cfg["backend.kind"] == "http":
        base = _require(cfg, "backend.base_url", "http backend needs backend.base_url")
        return annotator.HttpBackend(
            base_url=base, model=cfg["backend.model"], token_env=cfg["backend.token_env"]
        )
    raise InputError(f"unknown backend kind {cfg['backend.kind']!r}")


def _cl_config(cfg: dict) -> ClTrainConfig:
    return ClTrainConfig(
        tau=cfg["cl.tau"], alpha=cfg["cl.alpha"], batch_size=cfg["cl.batch_size"],
        epochs=cfg["cl.epochs"], lr=cfg["cl.lr"], dropout=cfg["cl.dropout"],
        seed=cfg["cl.seed"], mask_false_negatives=cfg["cl.mask"],
    )


def _encoder_dims(cfg: dict) -> EncoderDims:
    return EncoderDims(d_token=cfg["enc.d_token"], hidden=cfg["enc.hidden"],
                       d_emb=cfg["enc.d_emb"])


def _kt_config(cfg: dict) -> kt.KtConfig:
    return kt.KtConfig(
        lr=cfg["kt.lr"], batch_size=cfg["kt.batch_size"], epochs=cfg["kt.epochs"],
        max_seq_len=cfg["kt.max_seq_len"], seed=cfg["kt.seed"],
        d_model=cfg["kt.d_model"], d_table=cfg["kt.d_table"],
        d_resp=cfg["kt.d_resp"], hidden=cfg["kt.hidden"],
        head_hidden=cfg["kt.head_hidden"],
    )


def _kc_provider(cfg: dict, kcs: list[str]) -> np.ndarray:
    provider = cfg["cluster.provider"]
    if provider == "hash":
        return clustering.embed_kc_texts(
            lambda texts: clustering.hashed_token_embeddings(texts, dim=cfg["cluster.hash_dim"]),
            kcs,
        )
    if provider == "encoder":
        weights = load_encoder(_require(cfg, "paths.encoder", "provider=encoder needs a checkpoint"))
        return clustering.embed_kc_texts(
            lambda texts: np.stack([encode(weights, ROLE_KC, t) for t in texts]), kcs
        )
    if provider == "file":
        path = _require(cfg, "cluster.embedding_file", "provider=file needs cluster.embedding_file")
        return clustering.embed_kc_texts(lambda texts: clustering.load_embedding_file(path, texts), kcs)
    raise InputError(f"unknown cluster provider {provider!r}")


def _split_interactions(cfg: dict, corpus=None):
    histories = load_interactions(
        _require(cfg, "paths.interactions", "pass --paths.interactions"), corpus
    )
    folds = split_by_student(histories, cfg["exp.folds"], cfg["exp.split_seed"])
    return folds.split(histories, cfg["exp.test_fold"])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(cfg: dict) -> int:
    synth = SynthConfig(
        n_questions=cfg["synth.questions"], n_kcs=cfg["synth.kcs"],
        n_students=cfg["synth.students"], seq_len=cfg["synth.length"],
        learn_rate=cfg["synth.learn_rate"], guess=cfg["synth.guess"],
        slip=cfg["synth.slip"],
    )
    corpus_path = _out_path(cfg, "paths.corpus", "corpus.jsonl")
    inter_path = _out_path(cfg, "paths.interactions", "interactions.jsonl")
    corpus, histories = generate_synthetic(synth, seed=cfg["synth.seed"])
    save_corpus(corpus, corpus_path)
    save_interactions(histories, inter_path)
    n_inter = sum(len(h.exercises) for h in histories)
    print(f"synth: wrote {len(corpus)} questions to {corpus_path}")
    print(f"synth: wrote {len(histories)} students / {n_inter} interactions to {inter_path}")
    return 0


def cmd_annotate(cfg: dict) -> int:
    corpus = _load_required_corpus(cfg)
    backend = _build_backend(cfg)
    cache = annotator.AnnotationCache.open(_out_path(cfg, "paths.cache", "cache.jsonl"))
    annotated, stats, failures = annotator.annotate_corpus(
        backend, cache, corpus,
        temperature=cfg["backend.temperature"], workers=cfg["backend.workers"],
    )
    out_path = _out_path(cfg, "paths.annotated", "annotated.jsonl")
    save_corpus(annotated, out_path)
    for stage in (annotator.STAGE_STEPS, annotator.STAGE_KCS, annotator.STAGE_MAPPING):
        print(
            f"annotate: stage {stage}: {stats.backend_calls[stage]} backend calls, "
            f"{stats.cache_hits[stage]} cache hits"
        )
    print(f"annotate: wrote {len(annotated)} questions to {out_path}")
    if failures:
        for qid, message in failures:
            print(f"annotate: FAILED question {qid}: {message}", file=sys.stderr)
        raise BackendError(f"{len(failures)} questions failed annotation")
    return 0


def cmd_cluster(cfg: dict) -> int:
    corpus = _load_required_corpus(cfg)
    kcs, _ = clustering.build_kc_universe(corpus)
    if not kcs:
        raise InputError("corpus has no KC annotations; run annotate first")
    embeddings = _kc_provider(cfg, kcs)
    assignment = clustering.cluster_kcs(
        embeddings, kcs, threshold=cfg["cluster.threshold"],
        min_cluster_size=cfg["cluster.min_size"],
    )
    out_path = _out_path(cfg, "paths.clusters", "clusters.json")
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(assignment.to_record(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(f"cluster: {len(kcs)} KCs -> {assignment.num_clusters} clusters -> {out_path}")
    return 0


def _load_assignment(cfg: dict) -> clustering.ClusterAssignment:
    path = _out_path(cfg, "paths.clusters", "clusters.json")
    if not os.path.exists(path):
        raise InputError(f"cluster map {path} not found; run the cluster stage first")
    with open(path, "r", encoding="utf-8") as fh:
        return clustering.ClusterAssignment.from_record(json.load(fh))


def cmd_train_encoder(cfg: dict) -> int:
    corpus = _load_required_corpus(cfg)
    assignment = _load_assignment(cfg)
    weights, trace = train_encoder(corpus, assignment, _cl_config(cfg), dims=_encoder_dims(cfg))
    out_path = _out_path(cfg, "paths.encoder", "encoder.json")
    save_encoder(weights, out_path)
    first = trace[0] if trace else float("nan")
    last = trace[-1] if trace else float("nan")
    print(f"train-encoder: {len(trace)} epochs, loss {first:.4f} -> {last:.4f}, saved {out_path}")
    return 0


def cmd_embed(cfg: dict) -> int:
    corpus = _load_required_corpus(cfg)
    weights = load_encoder(_out_path(cfg, "paths.encoder", "encoder.json"))
    out_path = _out_path(cfg, "paths.embeddings", "embeddings.txt")
    export_embeddings(weights, corpus, out_path, sidecar_path=out_path + ".sidecar.jsonl")
    print(f"embed: wrote {len(corpus)} question embeddings to {out_path}")
    return 0


def _load_embeddings_for_kt(cfg: dict) -> dict[int, np.ndarray]:
    path = _out_path(cfg, "paths.embeddings", "embeddings.txt")
    if not os.path.exists(path):
        raise InputError(
            f"embedding export {path} not found; run the embed stage before "
            "training an enriched-mode model"
        )
    _, vectors = load_embedding_export(path)
    return vectors


def cmd_train_kt(cfg: dict, arch: str, mode: str) -> int:
    corpus = load_corpus(cfg["paths.corpus"]) if cfg["paths.corpus"] else None
    train, _ = _split_interactions(cfg, corpus)
    ids = sorted({ex.question_id for h in train for ex in h.exercises})
    kt_cfg = _kt_config(cfg)
    embeddings = None
    if mode != kt.MODE_RANDOM:
        embeddings = _load_embeddings_for_kt(cfg)
        kt_cfg = kt.KtConfig(**{**vars(kt_cfg),
                                "d_table": int(next(iter(embeddings.values())).shape[0])})
    model = kt.build_kt_model(arch, mode, ids, kt_cfg, embeddings=embeddings)
    model, trace = kt.train_kt(model, train, kt_cfg)
    os.makedirs(cfg["paths.out_dir"], exist_ok=True)
    out_path = os.path.join(cfg["paths.out_dir"], f"kt_{arch}_{mode}.json")
    kt.save_kt_model(model, out_path)
    kt.save_loss_trace(trace, out_path.replace(".json", "_trace.csv"))
    print(f"train-kt: {arch}/{mode} trained {len(trace)} epochs, saved {out_path}")
    return 0


def cmd_evaluate(cfg: dict, model_path: str, protocol: str, multi_mode: str) -> int:
    model = kt.load_kt_model(model_path)
    corpus = load_corpus(cfg["paths.corpus"]) if cfg["paths.corpus"] else None
    _, test = _split_interactions(cfg, corpus)
    rows = []
    if protocol == "next":
        frag = evaluation.next_step_eval(model, test)
        rows.append({"experiment": "next_step", "arch": model.arch, "mode": model.mode,
                     "auc": frag.auc, "n": frag.n})
        print(f"evaluate: next-step AUC {frag.auc:.4f} over {frag.n} predictions")
    else:
        frag = evaluation.multi_step_eval(model, test, cfg["exp.multi_fraction"], multi_mode)
        rows.append({"experiment": "multi_step", "variant": multi_mode,
                     "arch": model.arch, "mode": model.mode,
                     "auc": frag.auc, "n": frag.n, "skipped": frag.skipped})
        print(
            f"evaluate: multi-step ({multi_mode}) AUC {frag.auc:.4f} over {frag.n} "
            f"predictions ({frag.skipped} histories skipped)"
        )
    rep = report_mod.EvalReport(name="evaluate", rows=rows, config=_snapshot(cfg),
                                provenance=_provenance(cfg))
    report_mod.emit_report(rep, cfg["paths.out_dir"])
    return 0


def _snapshot(cfg: dict) -> dict:
    return {k: cfg[k] for k in sorted(cfg)}


def _provenance(cfg: dict) -> dict:
    hashes = {}
    for key in ("paths.corpus", "paths.interactions", "paths.embeddings"):
        path = cfg.get(key) or ""
        if path and os.path.exists(path):
            hashes[path] = report_mod.sha256_file(path)
    return {
        "seeds": {
            "cl": cfg["cl.seed"], "kt": cfg["kt.seed"],
            "split": cfg["exp.split_seed"], "experiment": cfg["exp.seeds"],
        },
        "file_hashes": hashes,
    }


def cmd_sweep(cfg: dict) -> int:
    corpus = _load_required_corpus(cfg)
    train, test = _split_interactions(cfg, corpus)
    embeddings = _load_embeddings_for_kt(cfg)
    rows = evaluation.sensitivity_sweep(
        train, test, embeddings, cfg["exp.fractions"], cfg["exp.seeds"],
        cfg["exp.archs"], _kt_config(cfg),
    )
    rep = report_mod.EvalReport(name="sensitivity", rows=rows, config=_snapshot(cfg),
                                provenance=_provenance(cfg))
    files = report_mod.emit_report(rep, cfg["paths.out_dir"])
    print(f"sweep: {len(rows)} rows -> {files[0]}")
    return 0


def cmd_ablate(cfg: dict) -> int:
    corpus = _load_required_corpus(cfg)
    assignment = _load_assignment(cfg)
    train, test = _split_interactions(cfg, corpus)
    rows = evaluation.ablation_grid(
        corpus, train, test, assignment, _cl_config(cfg), _encoder_dims(cfg),
        _kt_config(cfg), cfg["exp.variants"], arch=cfg["exp.archs"][0],
    )
    rep = report_mod.EvalReport(name="ablation", rows=rows, config=_snapshot(cfg),
                                provenance=_provenance(cfg))
    files = report_mod.emit_report(rep, cfg["paths.out_dir"])
    print(f"ablate: {len(rows)} rows -> {files[0]}")
    return 0


def _stage(name: str, fn):
    try:
        return fn()
    except KctraceError as exc:
        raise type(exc)(f"stage {name}: {exc}") from exc


def cmd_pipeline(cfg: dict) -> int:
    corpus = _load_required_corpus(cfg)
    if any(not aq.is_annotated for aq in corpus):
        raise InputError("pipeline needs a fully annotated corpus; run annotate first")
    train, test = _stage("split", lambda: _split_interactions(cfg, corpus))

    def run_cluster():
        kcs, _ = clustering.build_kc_universe(corpus)
        embeddings = _kc_provider(cfg, kcs)
        assignment = clustering.cluster_kcs(
            embeddings, kcs, threshold=cfg["cluster.threshold"],
            min_cluster_size=cfg["cluster.min_size"],
        )
        path = _out_path(cfg, "paths.clusters", "clusters.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(assignment.to_record(), fh, sort_keys=True, indent=1)
            fh.write("\n")
        return assignment

    assignment = _stage("cluster", run_cluster)
    print(f"pipeline: clustered {len(assignment.cluster_of)} KCs "
          f"into {assignment.num_clusters} clusters")

    def run_encoder():
        weights, trace = train_encoder(corpus, assignment, _cl_config(cfg),
                                       dims=_encoder_dims(cfg))
        save_encoder(weights, _out_path(cfg, "paths.encoder", "encoder.json"))
        return weights, trace

    weights, trace = _stage("train-encoder", run_encoder)
    print(f"pipeline: encoder trained, loss {trace[0]:.4f} -> {trace[-1]:.4f}"
          if trace else "pipeline: encoder trained (0 epochs)")

    def run_embed():
        path = _out_path(cfg, "paths.embeddings", "embeddings.txt")
        export_embeddings(weights, corpus, path, sidecar_path=path + ".sidecar.jsonl")
        _, vectors = load_embedding_export(path)
        return vectors

    vectors = _stage("embed", run_embed)
    print(f"pipeline: exported {len(vectors)} question embeddings")

    rows = _stage(
        "train-kt",
        lambda: evaluation.compare_modes(
            train, test, vectors, cfg["exp.archs"], _kt_config(cfg), cfg["exp.seeds"]
        ),
    )

    def run_multi():
        out = []
        ids = sorted({ex.question_id for h in train + test for ex in h.exercises})
        dim = int(next(iter(vectors.values())).shape[0])
        kt_cfg = kt.KtConfig(**{**vars(_kt_config(cfg)), "d_table": dim})
        for arch in cfg["exp.archs"]:
            model = kt.build_kt_model(arch, kt.MODE_FROZEN, ids, kt_cfg, embeddings=vectors)
            model, _ = kt.train_kt(model, train, kt_cfg)
            for regime in (evaluation.NON_ACCUMULATIVE, evaluation.ACCUMULATIVE):
                frag = evaluation.multi_step_eval(model, test, cfg["exp.multi_fraction"], regime)
                out.append({
                    "experiment": "multi_step",
                    "variant": f"{regime}@{cfg['exp.multi_fraction']}",
                    "arch": arch, "mode": kt.MODE_FROZEN,
                    "auc": frag.auc, "n": frag.n, "skipped": frag.skipped,
                })
        return out

    rows.extend(_stage("evaluate", run_multi))

    def run_report():
        rep = report_mod.EvalReport(
            name="pipeline", rows=rows, config=_snapshot(cfg), provenance=_provenance(cfg)
        )
        labels = {aq.question.id: (aq.kcs[0] if aq.kcs else "") for aq in corpus}
        report_mod.add_pca_points(rep, vectors, labels=labels, seed=cfg["exp.split_seed"])
        return report_mod.emit_report(rep, cfg["paths.out_dir"])

    files = _stage("report", run_report)
    for row in rows:
        tag = row.get("variant") or row.get("mode")
        print(f"pipeline: {row['experiment']} {row['arch']}/{tag} "
              f"seed={row.get('seed', '-')} AUC={row['auc']:.4f}")
    print(f"pipeline: report written to {files[0]}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args)
        command = args.command
        if command == "synth":
            return cmd_synth(cfg)
        if command == "annotate":
            return cmd_annotate(cfg)
        if command == "cluster":
            return cmd_cluster(cfg)
        if command == "train-encoder":
            return cmd_train_encoder(cfg)
        if command == "embed":
            return cmd_embed(cfg)
        if command == "train-kt":
            return cmd_train_kt(cfg, args.arch, args.mode)
        if command == "evaluate":
            return cmd_evaluate(cfg, args.model, args.protocol, args.multi_mode)
        if command == "sweep":
            return cmd_sweep(cfg)
        if command == "ablate":
            return cmd_ablate(cfg)
        if command == "pipeline":
            return cmd_pipeline(cfg)
        raise InputError(f"unknown command {command!r}")
    except BackendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
