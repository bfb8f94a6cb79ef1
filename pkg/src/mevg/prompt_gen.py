"""Story-to-prompts segmentation.

A multi-event story becomes one single-event prompt per clip.  The primary
path asks a chat-completion service and parses a strict numbered list, with
one re-ask on malformed output.  A rule-based splitter (sentence boundaries,
then temporal conjunctions, then comma-level clauses) keeps everything
runnable offline and deterministic; later clauses that lost their subject get
it threaded back in so each prompt stands alone.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from importlib import resources

import requests

from .errors import ConfigError, PromptError

INSTRUCTION_ASSET = "prompt_instruction_v1.txt"
DEFAULT_MAX_PROMPT_CHARS = 300

_NUMBERED_LINE = re.compile(r"^\s*(\d+)\s*[.)\]:]\s*(.+?)\s*$")
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_TEMPORAL_SPLIT = re.compile(
    r",?\s+(?:and\s+)?then\s+|,?\s+(?:after that|afterwards|next|later on|later|"
    r"finally|eventually|soon after|meanwhile)\s*,?\s+|\s*;\s*",
    re.IGNORECASE,
)
_COMMA_SPLIT = re.compile(r",\s+(?:and\s+|but\s+)?")
_LEADING_CONNECTIVE = re.compile(
    r"^(?:(?:and|then|next|later|finally|eventually|afterwards|after that|"
    r"meanwhile|soon)\s*,?\s+)+",
    re.IGNORECASE,
)
# words that already carry a subject when they open a clause
_SUBJECT_OPENERS = frozenset(
    "the a an this that these those his her its their my our your "
    "he she it they we i someone somebody everyone nobody".split()
)
_LEADING_PRONOUN = re.compile(r"^(?:he|she|it|they)\b\s*", re.IGNORECASE)


def instruction_template() -> str:
    """The packaged instruction text; {story} and {num_prompts} are filled in."""
    return resources.files("mevg").joinpath("assets", INSTRUCTION_ASSET).read_text()


@dataclass(frozen=True)
class PromptRequest:
    story: str
    num_prompts: int
    instruction_template: str | None = None

    def __post_init__(self):
        if not self.story.strip():
            raise ConfigError("story must be nonempty")
        if self.num_prompts < 1:
            raise ConfigError(f"num_prompts must be >= 1, got {self.num_prompts}")

    def instruction(self) -> str:
        template = self.instruction_template or instruction_template()
        return template.format(story=normalize(self.story), num_prompts=self.num_prompts)


@dataclass(frozen=True)
class LlmClientConfig:
    endpoint: str
    model: str
    api_key_env: str = "MEVG_LLM_API_KEY"
    timeout: float = 30.0
    max_retries: int = 2

    def __post_init__(self):
        if not self.endpoint:
            raise ConfigError("endpoint must be nonempty")
        if not (self.timeout > 0):
            raise ConfigError(f"timeout must be > 0, got {self.timeout}")
        if self.max_retries < 0:
            raise ConfigError(f"max_retries must be >= 0, got {self.max_retries}")


class LlmPromptClient:
    """Blocking chat-completion client.  `transport` maps an instruction string
    to the raw completion text and is injectable for offline tests."""

    def __init__(self, config: LlmClientConfig, transport=None):
        self.config = config
        self._transport = transport if transport is not None else self._http_transport

    def _http_transport(self, instruction: str) -> str:
        headers = {}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        resp = requests.post(
            self.config.endpoint,
            json={
                "model": self.config.model,
                "messages": [{"role": "user", "content": instruction}],
            },
            headers=headers,
            timeout=self.config.timeout,
        )
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]

    def complete(self, instruction: str) -> str:
        last = None
        for _ in range(self.config.max_retries + 1):
            try:
                return self._transport(instruction)
            except Exception as exc:  # noqa: BLE001 - transport failures become PromptError
                last = exc
        raise PromptError(f"prompt service unreachable after retries: {last}") from last


def normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def parse_numbered_list(text: str, expected: int) -> list[str]:
    """Extract `expected` items from a completion numbered 1..expected in order."""
    items = []
    for line in text.splitlines():
        if not line.strip():
            continue
        m = _NUMBERED_LINE.match(line)
        if m is None:
            raise PromptError(f"unnumbered line in completion: {line.strip()!r}")
        items.append((int(m.group(1)), m.group(2).strip()))
    if [n for n, _ in items] != list(range(1, expected + 1)):
        raise PromptError(
            f"completion numbering {[n for n, _ in items]} != 1..{expected}"
        )
    if any(not body for _, body in items):
        raise PromptError("completion contains an empty prompt")
    return [body for _, body in items]


def _strip_clause(part: str) -> str:
    part = _LEADING_CONNECTIVE.sub("", part.strip())
    return part.strip(" ,;.!?")


def _clauses(story: str) -> list[str]:
    """Sentence-level then temporal-conjunction-level clause candidates."""
    sentences = [s for s in _SENTENCE_SPLIT.split(normalize(story)) if s.strip()]
    clauses = []
    for sentence in sentences:
        for part in _TEMPORAL_SPLIT.split(sentence):
            part = _strip_clause(part)
            if part:
                clauses.append(part)
    return clauses


def _subject_of(clause: str) -> str:
    words = clause.split()
    if not words:
        return ""
    if words[0].lower() in _SUBJECT_OPENERS and len(words) > 1:
        return " ".join(words[:2])
    return words[0]


def _thread_subject(clause: str, subject: str) -> str:
    """Reattach the story's subject to clauses that continue a sentence.

    Leading pronouns are substituted outright; otherwise only clauses that
    open lowercase (mid-sentence continuations such as "comes to a halt") get
    the subject prepended, so fresh sentences keep their own subjects."""
    if not subject:
        return clause
    replaced = _LEADING_PRONOUN.sub("", clause)
    if replaced != clause:
        clause = replaced.strip()
        return f"{subject} {clause}" if clause else subject
    first = clause.split()[0]
    if first.lower() in _SUBJECT_OPENERS or not first[0].islower():
        return clause
    return f"{subject} {clause}"


def _clean(prompt: str) -> str:
    prompt = normalize(prompt).strip(" ,;")
    prompt = prompt.rstrip(".!?")
    return prompt[:1].upper() + prompt[1:] if prompt else prompt


def split_story(story: str, num_prompts: int) -> list[str]:
    """Deterministic splitter: sentence boundaries, temporal conjunctions, then
    comma-level clauses; merges trailing clauses when over target and raises
    when the story cannot yield enough clauses."""
    if num_prompts == 1:
        cleaned = normalize(story)
        if not cleaned:
            raise PromptError("story is empty after cleaning")
        return [cleaned]
    clauses = _clauses(story)
    if len(clauses) < num_prompts:
        finer = []
        for clause in clauses:
            finer.extend(p for p in map(_strip_clause, _COMMA_SPLIT.split(clause)) if p)
        clauses = finer
    if len(clauses) < num_prompts:
        raise PromptError(
            f"story yields {len(clauses)} clauses, cannot produce {num_prompts} prompts"
        )
    while len(clauses) > num_prompts:
        tail = clauses.pop()
        clauses[-1] = f"{clauses[-1]}, then {tail}"
    subject = _subject_of(clauses[0])
    return [_clean(_thread_subject(c, subject)) for c in clauses]


def split_scenario(
    req: PromptRequest,
    client: LlmPromptClient | None = None,
    max_prompt_chars: int = DEFAULT_MAX_PROMPT_CHARS,
) -> list[str]:
    """Produce exactly req.num_prompts single-event prompts for the story.

    With a client, the completion is parsed as a numbered list and re-asked
    once with a stricter reminder if malformed; without one, the rule-based
    splitter runs.  The result always has the requested count or the call
    raises."""
    if client is None:
        prompts = split_story(req.story, req.num_prompts)
    else:
        instruction = req.instruction()
        completion = client.complete(instruction)
        try:
            prompts = parse_numbered_list(completion, req.num_prompts)
        except PromptError:
            reminder = (
                f"{instruction}\n\nRespond with exactly {req.num_prompts} lines, "
                f'numbered "1." to "{req.num_prompts}.", and nothing else.'
            )
            prompts = parse_numbered_list(client.complete(reminder), req.num_prompts)
    if len(prompts) != req.num_prompts:
        raise PromptError(f"expected {req.num_prompts} prompts, got {len(prompts)}")
    for p in prompts:
        if not p.strip():
            raise PromptError("produced an empty prompt")
        if len(p) > max_prompt_chars:
            raise PromptError(f"prompt exceeds {max_prompt_chars} characters: {p[:40]}...")
    return prompts
