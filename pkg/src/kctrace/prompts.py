"""Prompt templates and response parsers for the three annotation stages.

Stage (i) asks for a step-by-step solution, stage (ii) for the knowledge
concepts behind it, stage (iii) for the step-to-concept mapping expressed as
"step-kc" number pairs on a single line. Builders substitute into fixed
templates and are byte-stable for fixed inputs.
"""

from __future__ import annotations

import re

from .corpus import Question
from .errors import BackendError, InputError

SOLUTION_TEMPLATE = (
    "Your task is to generate clear and concise step by step solutions of the "
    "provided Math problem. Please consider the below instructions in your generation.\n"
    "\n"
    "- You will also be provided with the final answer. When generating the step by "
    "step solution, you can leverage those information pieces, but you can also use "
    "your own judgment.\n"
    "\n"
    "- It is important that your generated step by step solution should be "
    "understandable as stand-alone, meaning that the student should not need to "
    "additionally check final answer or explanation provided.\n"
    "\n"
    "- Please provide your step-by-step solution as each step in a new line. Don't "
    "enumerate the steps. Don't put any bullet points. Separate the solution steps "
    "only with one newline \\n.\n"
    "\n"
    "Question: {question}\n"
    "Final Answer: {final_answer}\n"
    "Step by Step Solution:"
)

KC_TEMPLATE = (
    "You will be provided with a Math question, its final answer and its step by "
    "step solution. Your task is to provide the concise and comprehensive list of "
    "knowledge concepts in the Math curriculum required to correctly answer the "
    "questions. Please carefully follow the below instructions:\n"
    "\n"
    "- Provide multiple knowledge concepts only when it is actually needed.\n"
    "\n"
    "- Some questions may require a figure, which you won't be provided. As the "
    "step-by-step solution is already provided, Use your judgment to infer which "
    "knowledge concept(s) might be needed.\n"
    "\n"
    "- For a small set of solutions, their last step(s) might be missing due to "
    "limited token size. Use your judgment based on your input and your ability to "
    "infer how the solution would conclude.\n"
    "\n"
    "- Remember that knowledge concepts should be appropriate for Math curriculum "
    "between 1st and 8th grade. If the annotated step-by-step solution involves more "
    "advanced techniques, use your judgment for more simplified alternatives.\n"
    "\n"
    "Question: {question}\n"
    "Final Answer: {final_answer}\n"
    "Step by Step Solution: {steps}"
)

MAPPING_TEMPLATE = (
    "You are expert in Math education. You are given a Math question, its solution "
    "steps, and its knowledge concept(s), which you have annotated earlier. Your "
    "task is to associate which solution steps require which knowledge concepts. "
    "Note that all solution steps and all knowledge concepts must be mapped, while "
    "many-to-many mapping is indeed possible.\n"
    "\n"
    "Each solution step and each knowledge concept is numbered. Your output should "
    "enumerate all solution step - knowledge concept pairs as numbers.\n"
    "\n"
    "Your output should meet all the below criteria:\n"
    "\n"
    "- Each solution step has to be paired.\n"
    "\n"
    "- Each knowledge concept has to be paired.\n"
    "\n"
    "- Map a solution step with a knowledge concept only if they are relevant.\n"
    "\n"
    "- Your pairs cannot contain artificial solution steps. For instance, If there "
    "are 4 solution steps, the pair \"5-2\" is indeed illegal.\n"
    "\n"
    "- Your pairs cannot contain artificial knowledge concepts. For instance, If "
    "there are 3 knowledge concepts, the pair \"3-5\" is indeed illegal.\n"
    "\n"
    "You will output solution step - knowledge concept pairs in a comma separated "
    "manner and in a single line. For example, if there are 4 solution steps and 5 "
    "knowledge concepts, one potential output could be the following: \"1-1, 1-3, "
    "1-5, 2-4, 3-2, 3-5, 4-2, 4-3, 4-5\".\n"
    "\n"
    "Observe that this output also meets all the criteria explained above.\n"
    "\n"
    "Now, for the given question, solution steps and knowledge concepts, please "
    "provide your mapping as the output.\n"
    "\n"
    "Question: {question}\n"
    "Solution steps: {steps}\n"
    "Knowledge concepts: {kcs}\n"
    "Solution step - KC mapping:"
)


def build_solution_prompt(q: Question) -> str:
    if not q.text:
        raise InputError(f"question {q.id}: empty text")
    return SOLUTION_TEMPLATE.format(
        question=q.text, final_answer=q.final_answer or ""
    )


def build_kc_prompt(q: Question, steps: list[str]) -> str:
    if not q.text:
        raise InputError(f"question {q.id}: empty text")
    if not steps:
        raise InputError(f"question {q.id}: KC prompt requires at least one solution step")
    return KC_TEMPLATE.format(
        question=q.text,
        final_answer=q.final_answer or "",
        steps="\n".join(steps),
    )


def build_mapping_prompt(q: Question, steps: list[str], kcs: list[str]) -> str:
    if not steps or not kcs:
        raise InputError(f"question {q.id}: mapping prompt requires steps and KCs")
    numbered_steps = "\n".join(f"{i}. {s}" for i, s in enumerate(steps, start=1))
    numbered_kcs = "\n".join(f"{i}. {c}" for i, c in enumerate(kcs, start=1))
    return MAPPING_TEMPLATE.format(
        question=q.text, steps=numbered_steps, kcs=numbered_kcs
    )


_LIST_PREFIX = re.compile(r"^\s*(?:[-*\u2022]+|\(?\d+[.)\]:]?)\s+")


def _strip_list_prefix(line: str) -> str:
    return _LIST_PREFIX.sub("", line).strip()


def parse_solution_steps(raw: str) -> list[str]:
    """Split a stage-(i) response into steps, one per non-empty line.

    Bullet and enumeration prefixes are stripped defensively even though the
    prompt forbids them.
    """
    steps = []
    for line in raw.splitlines():
        cleaned = _strip_list_prefix(line)
        if cleaned:
            steps.append(cleaned)
    if not steps:
        raise BackendError("solution response contained no non-empty lines")
    return steps


def parse_kc_list(raw: str) -> list[str]:
    """Parse stage-(ii) output: one KC per line, case-insensitive dedup."""
    kcs: list[str] = []
    seen: set[str] = set()
    for line in raw.splitlines():
        cleaned = _strip_list_prefix(line)
        if not cleaned:
            continue
        key = cleaned.lower()
        if key in seen:
            continue
        seen.add(key)
        kcs.append(cleaned)
    if not kcs:
        raise BackendError("KC response contained no knowledge concepts")
    return kcs


def parse_mapping(raw: str, n_steps: int, m_kcs: int) -> set[tuple[int, int]]:
    """Parse "a-b" pair tokens; validate ranges and full coverage."""
    if n_steps < 1 or m_kcs < 1:
        raise InputError("parse_mapping requires n_steps >= 1 and m_kcs >= 1")
    text = raw.strip().strip('"')
    pairs: set[tuple[int, int]] = set()
    for token in text.replace("\n", ",").split(","):
        token = token.strip()
        if not token:
            continue
        m = re.fullmatch(r"(\d+)\s*-\s*(\d+)", token)
        if not m:
            raise BackendError(f"malformed mapping token {token!r}")
        k, j = int(m.group(1)), int(m.group(2))
        if not (1 <= k <= n_steps):
            raise BackendError(
                f"pair {token!r} is illegal: step {k} out of range 1..{n_steps}"
            )
        if not (1 <= j <= m_kcs):
            raise BackendError(
                f"pair {token!r} is illegal: KC {j} out of range 1..{m_kcs}"
            )
        pairs.add((k, j))
    if not pairs:
        raise BackendError("mapping response contained no pairs")
    missing_steps = sorted(set(range(1, n_steps + 1)) - {k for k, _ in pairs})
    if missing_steps:
        raise BackendError(f"mapping leaves steps {missing_steps} unpaired")
    missing_kcs = sorted(set(range(1, m_kcs + 1)) - {j for _, j in pairs})
    if missing_kcs:
        raise BackendError(f"mapping leaves KCs {missing_kcs} unpaired")
    return pairs


def serialize_mapping(pairs: set[tuple[int, int]]) -> str:
    """Render a pair set in the single-line comma-separated output grammar."""
    return ", ".join(f"{k}-{j}" for k, j in sorted(pairs))
