"""Three-stage LLM annotation pipeline with pluggable backends and caching.

For each question: (i) generate solution steps, (ii) generate the knowledge
concepts given those steps, (iii) map steps to concepts. Raw responses are
cached keyed by (question id, stage, prompt hash) so reruns make zero backend
calls. A scripted mock backend keeps everything offline and deterministic.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field

import requests

from .corpus import AnnotatedQuestion, Question
from .errors import BackendError, InputError
from .prompts import (
    build_kc_prompt,
    build_mapping_prompt,
    build_solution_prompt,
    parse_kc_list,
    parse_mapping,
    parse_solution_steps,
)

STAGE_STEPS = "steps"
STAGE_KCS = "kcs"
STAGE_MAPPING = "mapping"


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class CompletionBackend:
    """Abstract text-completion contract.

    ``complete(prompt, temperature)`` must be deterministic at temperature 0
    for a fixed backend state.
    """

    name = "abstract"
    model = ""

    def complete(self, prompt: str, temperature: float = 0.0) -> str:
        raise NotImplementedError


class MockBackend(CompletionBackend):
    """Scripted backend: prompt hash -> response (or a list consumed in order).

    Fixture files are JSON objects mapping sha256(prompt) to either a string
    or a list of strings; lists let tests script retry behavior.
    """

    name = "mock"

    def __init__(self, responses: dict[str, str | list[str]], model: str = "scripted"):
        self.model = model
        self._responses: dict[str, list[str]] = {}
        for key, value in responses.items():
            self._responses[key] = [value] if isinstance(value, str) else list(value)
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_fixture(cls, path: str, model: str = "scripted") -> "MockBackend":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise InputError(f"{path}: mock fixture must be a JSON object")
        return cls(data, model=model)

    def complete(self, prompt: str, temperature: float = 0.0) -> str:
        key = prompt_hash(prompt)
        with self._lock:
            self.calls += 1
            queue = self._responses.get(key)
            if not queue:
                raise BackendError(f"mock backend has no scripted response for prompt {key[:12]}")
            if len(queue) == 1:
                return queue[0]
            return queue.pop(0)


class HttpBackend(CompletionBackend):
    """Minimal chat-completion client: POST {model, messages, temperature}.

    Retries transport failures with exponential backoff (3 attempts). The
    auth token is read from an environment variable so it never lands in
    config files.
    """

    name = "http"

    def __init__(
        self,
        base_url: str,
        model: str,
        token_env: str | None = None,
        max_attempts: int = 3,
        backoff: float = 0.5,
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url
        self.model = model
        self.token_env = token_env
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.timeout = timeout
        self.session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.token_env:
            token = os.environ.get(self.token_env)
            if not token:
                raise BackendError(f"auth token env var {self.token_env!r} is not set")
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, prompt: str, temperature: float = 0.0) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        }
        last_exc: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                resp = self.session.post(
                    self.base_url, json=payload, headers=self._headers(), timeout=self.timeout
                )
                resp.raise_for_status()
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_exc = exc
                if attempt + 1 < self.max_attempts:
                    time.sleep(self.backoff * (2 ** attempt))
        raise BackendError(f"backend unreachable after {self.max_attempts} attempts: {last_exc}")


@dataclass
class AnnotationCache:
    """Append-only JSONL store keyed by (question id, stage, prompt hash)."""

    path: str | None = None
    _entries: dict[tuple[int, str, str], str] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def open(cls, path: str | None) -> "AnnotationCache":
        cache = cls(path=path)
        if path and os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                        key = (int(rec["question_id"]), str(rec["stage"]), str(rec["prompt_hash"]))
                        cache._entries.setdefault(key, str(rec["response"]))
                    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                        raise InputError(f"{path}:{lineno}: corrupt cache entry: {exc}") from exc
        return cache

    def get(self, question_id: int, stage: str, phash: str) -> str | None:
        with self._lock:
            return self._entries.get((question_id, stage, phash))

    def put(self, question_id: int, stage: str, phash: str, response: str, model: str) -> None:
        key = (question_id, stage, phash)
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = response
            if self.path:
                rec = {
                    "question_id": question_id,
                    "stage": stage,
                    "prompt_hash": phash,
                    "response": response,
                    "model": model,
                    "timestamp": time.time(),
                }
                with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                    fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
                    fh.write("\n")

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class AnnotationStats:
    backend_calls: dict[str, int] = field(default_factory=lambda: {
        STAGE_STEPS: 0, STAGE_KCS: 0, STAGE_MAPPING: 0,
    })
    cache_hits: dict[str, int] = field(default_factory=lambda: {
        STAGE_STEPS: 0, STAGE_KCS: 0, STAGE_MAPPING: 0,
    })

    def merge(self, other: "AnnotationStats") -> None:
        for stage in self.backend_calls:
            self.backend_calls[stage] += other.backend_calls[stage]
            self.cache_hits[stage] += other.cache_hits[stage]


def _run_stage(
    backend: CompletionBackend,
    cache: AnnotationCache,
    stats: AnnotationStats,
    question_id: int,
    stage: str,
    prompt: str,
    parser,
    temperature: float,
):
    """Complete+parse one stage, consulting the cache first.

    A parse failure triggers exactly one re-ask with the same prompt; only
    responses that parsed successfully are written to the cache.
    """
    phash = prompt_hash(prompt)
    cached = cache.get(question_id, stage, phash)
    if cached is not None:
        stats.cache_hits[stage] += 1
        return parser(cached)
    last_exc: BackendError | None = None
    for _ in range(2):
        stats.backend_calls[stage] += 1
        raw = backend.complete(prompt, temperature)
        try:
            parsed = parser(raw)
        except BackendError as exc:
            last_exc = exc
            continue
        cache.put(question_id, stage, phash, raw, backend.model)
        return parsed
    raise BackendError(f"question {question_id}, stage {stage}: {last_exc}")


def annotate_question(
    backend: CompletionBackend,
    cache: AnnotationCache,
    q: Question,
    temperature: float = 0.0,
    stats: AnnotationStats | None = None,
) -> AnnotatedQuestion:
    """Run the three annotation stages in order for a single question."""
    stats = stats if stats is not None else AnnotationStats()
    qid = q.id
    steps = _run_stage(
        backend, cache, stats, qid, STAGE_STEPS,
        build_solution_prompt(q), parse_solution_steps, temperature,
    )
    kcs = _run_stage(
        backend, cache, stats, qid, STAGE_KCS,
        build_kc_prompt(q, steps), parse_kc_list, temperature,
    )
    pairs = _run_stage(
        backend, cache, stats, qid, STAGE_MAPPING,
        build_mapping_prompt(q, steps, kcs),
        lambda raw: parse_mapping(raw, len(steps), len(kcs)),
        temperature,
    )
    annotated = AnnotatedQuestion(question=q, steps=steps, kcs=kcs, step_kc_pairs=pairs)
    annotated.validate()
    return annotated


def annotate_corpus(
    backend: CompletionBackend,
    cache: AnnotationCache,
    questions: list[AnnotatedQuestion],
    temperature: float = 0.0,
    workers: int = 4,
) -> tuple[list[AnnotatedQuestion], AnnotationStats, list[tuple[int, str]]]:
    """Annotate every question, up to ``workers`` concurrent backend chains.

    Already-annotated questions pass through untouched. Returns the annotated
    corpus (input order preserved), aggregate stats, and per-question failures
    as (question_id, message) pairs.
    """
    from concurrent.futures import ThreadPoolExecutor

    stats = AnnotationStats()
    failures: list[tuple[int, str]] = []
    results: list[AnnotatedQuestion | None] = [None] * len(questions)

    def work(idx: int) -> None:
        aq = questions[idx]
        if aq.is_annotated:
            results[idx] = aq
            return
        local = AnnotationStats()
        try:
            results[idx] = annotate_question(
                backend, cache, aq.question, temperature, stats=local
            )
        except (BackendError, InputError) as exc:
            failures.append((aq.question.id, str(exc)))
        finally:
            with _stats_lock:
                stats.merge(local)

    _stats_lock = threading.Lock()
    if workers <= 1:
        for i in range(len(questions)):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(len(questions))))
    annotated = [r for r in results if r is not None]
    failures.sort()
    return annotated, stats, failures
