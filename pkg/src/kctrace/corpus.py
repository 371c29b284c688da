"""Domain data model and corpus ingestion.

Questions, their annotations (solution steps, knowledge concepts, step-KC
mapping), student interaction histories, student-level fold splitting, and a
synthetic mastery-model generator used as the desk-scale test bed.

File formats (JSONL, UTF-8, LF):
  corpus record       {"id": int, "text": str, "final_answer": str|null,
                       "steps": [str], "kcs": [str], "step_kc_pairs": [[int,int]]}
  interaction record  {"student_id": int, "exercises": [{"q": int, "kcs": [int], "r": 0|1}]}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class Question:
    id: int
    text: str
    final_answer: str | None = None

    def validate(self) -> None:
        if not self.text:
            raise InputError(f"question {self.id}: text must be non-empty")


@dataclass
class AnnotatedQuestion:
    """A question plus its (possibly empty) annotation.

    ``steps`` and ``kcs`` are ordered; ``step_kc_pairs`` holds 1-based
    (step_index, kc_index) pairs. A record with no annotation at all
    (no steps, no kcs, no pairs) is a valid pre-annotation corpus entry.
    """

    question: Question
    steps: list[str] = field(default_factory=list)
    kcs: list[str] = field(default_factory=list)
    step_kc_pairs: set[tuple[int, int]] = field(default_factory=set)

    @property
    def num_steps(self) -> int:
        return len(self.steps)

    @property
    def num_kcs(self) -> int:
        return len(self.kcs)

    @property
    def is_annotated(self) -> bool:
        return bool(self.kcs)

    def kc_indices_of_step(self, step_index: int) -> list[int]:
        """1-based KC indices mapped to the given 1-based step index."""
        return sorted(j for (k, j) in self.step_kc_pairs if k == step_index)

    def validate(self) -> None:
        self.question.validate()
        qid = self.question.id
        if not self.kcs:
            if self.steps or self.step_kc_pairs:
                raise InputError(
                    f"question {qid}: steps/pairs present but no KCs annotated"
                )
            return
        if self.steps:
            covered_steps: set[int] = set()
            covered_kcs: set[int] = set()
            for (k, j) in self.step_kc_pairs:
                if not (1 <= k <= self.num_steps):
                    raise InputError(
                        f"question {qid}: pair ({k},{j}) references step {k} "
                        f"but there are {self.num_steps} steps"
                    )
                if not (1 <= j <= self.num_kcs):
                    raise InputError(
                        f"question {qid}: pair ({k},{j}) references KC {j} "
                        f"but there are {self.num_kcs} KCs"
                    )
                covered_steps.add(k)
                covered_kcs.add(j)
            if covered_steps != set(range(1, self.num_steps + 1)):
                missing = sorted(set(range(1, self.num_steps + 1)) - covered_steps)
                raise InputError(f"question {qid}: steps {missing} are unmapped")
            if covered_kcs != set(range(1, self.num_kcs + 1)):
                missing = sorted(set(range(1, self.num_kcs + 1)) - covered_kcs)
                raise InputError(f"question {qid}: KCs {missing} are unmapped")
        elif self.step_kc_pairs:
            raise InputError(f"question {qid}: step_kc_pairs present but no steps")

    def to_record(self) -> dict:
        return {
            "id": self.question.id,
            "text": self.question.text,
            "final_answer": self.question.final_answer,
            "steps": list(self.steps),
            "kcs": list(self.kcs),
            "step_kc_pairs": sorted([k, j] for (k, j) in self.step_kc_pairs),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "AnnotatedQuestion":
        try:
            q = Question(
                id=int(rec["id"]),
                text=str(rec["text"]),
                final_answer=None if rec.get("final_answer") is None else str(rec["final_answer"]),
            )
            pairs = {(int(k), int(j)) for k, j in rec.get("step_kc_pairs", [])}
            aq = cls(
                question=q,
                steps=[str(s) for s in rec.get("steps", [])],
                kcs=[str(c) for c in rec.get("kcs", [])],
                step_kc_pairs=pairs,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed corpus record: {exc}") from exc
        aq.validate()
        return aq


@dataclass(frozen=True)
class Exercise:
    question_id: int
    kc_ids: tuple[int, ...]
    response: int

    def validate(self) -> None:
        if self.response not in (0, 1):
            raise InputError(
                f"exercise on question {self.question_id}: response must be 0 or 1, "
                f"got {self.response!r}"
            )


@dataclass
class StudentHistory:
    student_id: int
    exercises: list[Exercise]

    def validate(self) -> None:
        if not self.exercises:
            raise InputError(f"student {self.student_id}: empty history")
        for ex in self.exercises:
            ex.validate()


@dataclass
class FoldAssignment:
    """Student-level k-fold partition; fold sizes differ by at most one."""

    fold_of_student: dict[int, int]

    @property
    def num_folds(self) -> int:
        return max(self.fold_of_student.values()) + 1 if self.fold_of_student else 0

    def students_in_fold(self, fold: int) -> list[int]:
        return sorted(s for s, f in self.fold_of_student.items() if f == fold)

    def split(
        self, histories: list[StudentHistory], test_fold: int
    ) -> tuple[list[StudentHistory], list[StudentHistory]]:
        """Return (train, test) histories for the given held-out fold."""
        train, test = [], []
        for h in histories:
            fold = self.fold_of_student.get(h.student_id)
            if fold is None:
                raise InputError(f"student {h.student_id} missing from fold assignment")
            (test if fold == test_fold else train).append(h)
        return train, test


# ---------------------------------------------------------------------------
# JSONL ingestion / serialization
# ---------------------------------------------------------------------------

def load_corpus(path: str) -> list[AnnotatedQuestion]:
    """Load an (optionally annotated) question corpus from JSONL."""
    questions: list[AnnotatedQuestion] = []
    seen: set[int] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            aq = AnnotatedQuestion.from_record(rec)
            if aq.question.id in seen:
                raise InputError(f"{path}:{lineno}: duplicate question id {aq.question.id}")
            seen.add(aq.question.id)
            questions.append(aq)
    return questions


def save_corpus(questions: list[AnnotatedQuestion], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for aq in questions:
            fh.write(json.dumps(aq.to_record(), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def load_interactions(
    path: str, corpus: list[AnnotatedQuestion] | None = None
) -> list[StudentHistory]:
    """Load student histories from JSONL, preserving temporal order.

    When a corpus is supplied, every question id is cross-checked against it.
    """
    known_ids = {aq.question.id for aq in corpus} if corpus is not None else None
    histories: list[StudentHistory] = []
    seen: set[int] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                sid = int(rec["student_id"])
                exercises = [
                    Exercise(
                        question_id=int(e["q"]),
                        kc_ids=tuple(int(c) for c in e.get("kcs", [])),
                        response=int(e["r"]) if e["r"] in (0, 1) else e["r"],
                    )
                    for e in rec["exercises"]
                ]
            except (KeyError, TypeError, ValueError) as exc:
                raise InputError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if sid in seen:
                raise InputError(f"{path}:{lineno}: duplicate student_id {sid}")
            seen.add(sid)
            h = StudentHistory(student_id=sid, exercises=exercises)
            h.validate()
            if known_ids is not None:
                for ex in h.exercises:
                    if ex.question_id not in known_ids:
                        raise InputError(
                            f"{path}:{lineno}: student {sid} references unknown "
                            f"question {ex.question_id}"
                        )
            histories.append(h)
    return histories


def save_interactions(histories: list[StudentHistory], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for h in histories:
            rec = {
                "student_id": h.student_id,
                "exercises": [
                    {"q": ex.question_id, "kcs": list(ex.kc_ids), "r": ex.response}
                    for ex in h.exercises
                ],
            }
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Splitting and subsampling
# ---------------------------------------------------------------------------

def split_by_student(
    histories: list[StudentHistory], k: int, seed: int
) -> FoldAssignment:
    """Partition students into k folds; no student straddles folds."""
    if k < 2:
        raise InputError(f"fold count must be >= 2, got {k}")
    students = sorted(h.student_id for h in histories)
    if k > len(students):
        raise InputError(f"fold count {k} exceeds student count {len(students)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(students))
    assignment = {students[idx]: pos % k for pos, idx in enumerate(order)}
    return FoldAssignment(fold_of_student=assignment)


def subsample_students(
    histories: list[StudentHistory], fraction: float, seed: int
) -> list[StudentHistory]:
    """Keep ceil(fraction * N) students, chosen uniformly without replacement."""
    if not (0.0 < fraction <= 1.0):
        raise InputError(f"fraction must be in (0, 1], got {fraction}")
    n = len(histories)
    # guard against float noise pushing an exact product over the next integer
    count = math.ceil(fraction * n - 1e-9)
    count = max(1, min(n, count))
    rng = np.random.default_rng(seed)
    order = sorted(range(n), key=lambda i: histories[i].student_id)
    chosen = rng.choice(len(order), size=count, replace=False)
    keep = {order[i] for i in chosen}
    return [histories[i] for i in range(n) if i in keep]


# ---------------------------------------------------------------------------
# Synthetic oracle generator
# ---------------------------------------------------------------------------

_TOPICS = [
    "addition", "subtraction", "multiplication", "division", "fractions",
    "decimals", "percentages", "ratios", "exponents", "geometry",
    "perimeter", "area", "angles", "equations", "inequalities",
    "factoring", "sequences", "probability", "statistics", "rounding",
    "measurement", "integers", "graphing", "proportions",
]


@dataclass
class SynthConfig:
    """Configuration for the synthetic mastery-model data generator.

    Each student starts out having mastered a random subset of KCs
    (probability ``know_prob`` per KC; initial mastery drawn from
    ``known_mastery`` or ``initial_mastery`` accordingly). Mastery then grows
    with practice: after each exercise touching a KC,
    mastery += learn_rate * (1 - mastery), and responses are sampled with
    P(correct) = mastery * (1 - slip) + (1 - mastery) * guess.
    """

    n_questions: int = 50
    n_kcs: int = 10
    n_students: int = 200
    seq_len: int = 50
    learn_rate: float = 0.08
    guess: float = 0.15
    slip: float = 0.1
    max_kcs_per_question: int = 2
    know_prob: float = 0.5
    initial_mastery: tuple[float, float] = (0.05, 0.2)
    known_mastery: tuple[float, float] = (0.8, 0.95)

    def validate(self) -> None:
        if self.n_questions < 1 or self.n_students < 1:
            raise InputError("synthetic config needs at least one question and one student")
        if self.n_kcs < 1 or self.seq_len < 1:
            raise InputError("synthetic config needs n_kcs >= 1 and seq_len >= 1")
        if not (0.0 <= self.guess <= 1.0 and 0.0 <= self.slip <= 1.0):
            raise InputError("guess and slip must lie in [0, 1]")
        if not (0.0 <= self.know_prob <= 1.0):
            raise InputError("know_prob must lie in [0, 1]")
        if self.max_kcs_per_question < 1:
            raise InputError("max_kcs_per_question must be >= 1")


def _kc_name(kc: int) -> str:
    topic = _TOPICS[kc] if kc < len(_TOPICS) else f"skill{kc}"
    return f"Understanding of {topic}"


def _kc_topic(kc: int) -> str:
    return _TOPICS[kc] if kc < len(_TOPICS) else f"skill{kc}"


def _build_questions(config: SynthConfig, rng: np.random.Generator) -> list[AnnotatedQuestion]:
    questions = []
    for qid in range(config.n_questions):
        # cycle through KCs first so every KC has at least one question
        primary = qid % config.n_kcs
        extra_count = int(rng.integers(0, config.max_kcs_per_question))
        others = [k for k in range(config.n_kcs) if k != primary]
        extras = (
            sorted(rng.choice(len(others), size=min(extra_count, len(others)), replace=False).tolist())
            if others and extra_count
            else []
        )
        kcs = [primary] + [others[i] for i in extras]
        topics = [_kc_topic(k) for k in kcs]
        text = (
            f"Problem {qid}: use {' and '.join(topics)} to work out the value "
            f"asked for in exercise {qid}."
        )
        answer = str(int(rng.integers(1, 1000)))
        steps = [f"Apply {t} to move the problem toward the result." for t in topics]
        steps.append(f"Combine the partial results to answer problem {qid}.")
        pairs = {(i + 1, i + 1) for i in range(len(kcs))}
        pairs |= {(len(steps), j + 1) for j in range(len(kcs))}
        aq = AnnotatedQuestion(
            question=Question(id=qid, text=text, final_answer=answer),
            steps=steps,
            kcs=[_kc_name(k) for k in kcs],
            step_kc_pairs=pairs,
        )
        aq.validate()
        questions.append(aq)
    return questions


def _simulate_students(
    config: SynthConfig,
    question_kcs: dict[int, tuple[int, ...]],
    rng: np.random.Generator,
) -> tuple[list[StudentHistory], list[list[float]]]:
    """Sample histories; also return P(correct) traces for property tests."""
    lo, hi = config.initial_mastery
    klo, khi = config.known_mastery
    histories = []
    prob_traces = []
    for sid in range(config.n_students):
        ability = rng.uniform(-1.0, 1.0)
        knows = rng.random(config.n_kcs) < config.know_prob
        mastery = np.where(
            knows,
            rng.uniform(klo, khi, size=config.n_kcs),
            rng.uniform(lo, hi, size=config.n_kcs),
        )
        mastery = np.clip(mastery + 0.1 * ability, 0.0, 1.0)
        exercises = []
        probs = []
        for _ in range(config.seq_len):
            qid = int(rng.integers(0, config.n_questions))
            kcs = question_kcs[qid]
            know = float(np.mean(mastery[list(kcs)]))
            p = know * (1.0 - config.slip) + (1.0 - know) * config.guess
            r = int(rng.random() < p)
            exercises.append(Exercise(question_id=qid, kc_ids=kcs, response=r))
            probs.append(p)
            for k in kcs:
                mastery[k] += config.learn_rate * (1.0 - mastery[k])
        histories.append(StudentHistory(student_id=sid, exercises=exercises))
        prob_traces.append(probs)
    return histories, prob_traces


def generate_synthetic(
    config: SynthConfig, seed: int
) -> tuple[list[AnnotatedQuestion], list[StudentHistory]]:
    """Generate a fully annotated corpus plus interaction histories.

    Question texts and annotations are built from a topic vocabulary so that
    textual tokens correlate with the generating KCs; responses come from the
    mastery model described on :class:`SynthConfig`. Deterministic per seed.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    questions = _build_questions(config, rng)
    kc_index = {name: i for i, name in enumerate(_kc_name(k) for k in range(config.n_kcs))}
    question_kcs = {
        aq.question.id: tuple(kc_index[c] for c in aq.kcs) for aq in questions
    }
    histories, _ = _simulate_students(config, question_kcs, rng)
    return questions, histories
