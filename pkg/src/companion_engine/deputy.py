"""Shell companions that execute delegated tasks, plus context summarisation.

Deputies never talk to the user. The generic instruction deputy extracts the
configured scope from the provided document and hands its job to the host
companion; the answering variant runs its own inference first. When the
provided data would overflow the model's context window, a paragraph-chunk
map-reduce pass boils it down before anyone acts on it.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import replace
from typing import Callable

from .backend import Backend, BackendError, Job, JobAdminData
from .config import DeputyScope, ModelConfig
from .companion import CompanionRuntime, ReplyEnv, ReplyTrigger
from .context import Context

CHARS_PER_TOKEN = 4
MAX_SUMMARY_PASSES = 3
# Headroom for prompt framing around each chunk, in characters.
CHUNK_OVERHEAD_CHARS = 200

SUMMARY_JOB_TEMPLATE = (
    'Summarise the USER TEXT in a few sentences. Keep every name, fact, and '
    'event that matters.\n\nUSER TEXT="{chunk}"'
)

TokenEstimator = Callable[[str], int]


class InsufficientInputError(ValueError):
    """The scope needs input data and the document was blank."""


def estimate_tokens(text: str) -> int:
    """Crude but tokenizer-free estimate: one token per four characters."""
    return math.ceil(len(text) / CHARS_PER_TOKEN)


_SENTENCE_END = re.compile(r"(?<=[.!?])(?:\s+|$)")


def split_sentences(text: str) -> list[str]:
    """Split on ., ! or ? followed by whitespace or end of text."""
    return [s.strip() for s in _SENTENCE_END.split(text) if s.strip()]


def split_paragraphs(text: str) -> list[str]:
    """Paragraphs are blank-line-separated blocks."""
    return [p.strip() for p in re.split(r"\n\s*\n", text) if p.strip()]


def select_scope(document: str, scope: DeputyScope, rng: random.Random) -> str:
    """Extract the slice of the document a deputy is configured to work on."""
    if scope is DeputyScope.FULL_DOCUMENT:
        return document
    if scope is DeputyScope.SOME:
        if not document.strip():
            raise InsufficientInputError("scope 'some' needs a non-blank document")
        return document
    if scope is DeputyScope.LAST_SENTENCE:
        sentences = split_sentences(document)
        return sentences[-1] if sentences else ""
    paragraphs = split_paragraphs(document)
    if not paragraphs:
        return ""
    if scope is DeputyScope.LAST_PARAGRAPH:
        return paragraphs[-1]
    if scope is DeputyScope.RANDOM_PARAGRAPH:
        return rng.choice(paragraphs)
    raise ValueError(f"unknown scope {scope!r}")


def _data_fields(context: Context) -> list[str]:
    return [f for f in (context.text, context.paragraph, context.input) if f]


def needs_summary(
    context: Context,
    model: ModelConfig,
    estimator: TokenEstimator = estimate_tokens,
) -> bool:
    """True when the context's data would not leave room for the reply."""
    preview = "\n".join(_data_fields(context))
    return estimator(preview) > model.context_token_budget - model.max_tokens


def oversized_predicate(model: ModelConfig):
    """Trigger predicate form of needs_summary, bound to one model config."""
    return lambda context, last_speaker: needs_summary(context, model)


def _chunk_paragraphs(text: str, char_budget: int) -> list[str]:
    """Greedily pack paragraphs into chunks below the character budget.

    A paragraph longer than the budget is split at sentence boundaries, and a
    single oversized sentence is sliced hard.
    """
    pieces: list[str] = []
    for paragraph in split_paragraphs(text) or [text]:
        if len(paragraph) <= char_budget:
            pieces.append(paragraph)
            continue
        for sentence in split_sentences(paragraph) or [paragraph]:
            while len(sentence) > char_budget:
                pieces.append(sentence[:char_budget])
                sentence = sentence[char_budget:]
            if sentence:
                pieces.append(sentence)

    chunks: list[str] = []
    current = ""
    for piece in pieces:
        candidate = f"{current}\n\n{piece}" if current else piece
        if current and len(candidate) > char_budget:
            chunks.append(current)
            current = piece
        else:
            current = candidate
    if current:
        chunks.append(current)
    return chunks


def _summary_target(context: Context) -> str:
    """Field the summariser rewrites: the largest populated data field."""
    candidates = [
        (len(context.text), "text"),
        (len(context.paragraph), "paragraph"),
        (len(context.input), "input"),
    ]
    size, name = max(candidates)
    return name if size else "text"


def summarize_context(
    context: Context,
    backend: Backend,
    model: ModelConfig,
    *,
    new_admin: Callable[[str], JobAdminData] | None = None,
    estimator: TokenEstimator = estimate_tokens,
) -> Context:
    """Map-reduce the oversized data field until the context fits the budget.

    Chunks are summarised in order and their summaries concatenated; the pass
    repeats up to three times, after which the tail is hard-truncated and the
    truncation flagged on the context. A context that already fits is returned
    untouched, and a backend failure leaves the original text in place.
    """
    if not needs_summary(context, model, estimator):
        return context

    admin_factory = new_admin or _local_admin_factory()
    field = _summary_target(context)
    original = getattr(context, field)
    if context.summarized_from is None:
        context.summarized_from = len(original)

    char_budget = max(
        256, (model.context_token_budget - model.max_tokens) * CHARS_PER_TOKEN - CHUNK_OVERHEAD_CHARS
    )

    text = original
    for _ in range(MAX_SUMMARY_PASSES):
        if not needs_summary(context, model, estimator):
            break
        chunks = _chunk_paragraphs(text, char_budget)
        summaries = []
        try:
            for chunk in chunks:
                job = Job(
                    context=context.copy(),
                    model_config=replace(model, temperature=0.1),
                    rendered_prompt=SUMMARY_JOB_TEMPLATE.format(chunk=chunk),
                    admin=admin_factory("summarizer"),
                )
                summaries.append(backend.complete(job).text)
        except BackendError as exc:
            context.note_error(f"summarisation backend failure: {exc}")
            return context
        text = " ".join(summaries)
        setattr(context, field, text)

    if needs_summary(context, model, estimator):
        keep = max(0, (model.context_token_budget - model.max_tokens) * CHARS_PER_TOKEN)
        setattr(context, field, text[:keep])
        context.note_error(f"summary truncated after {MAX_SUMMARY_PASSES} passes")
    return context


def _local_admin_factory() -> Callable[[str], JobAdminData]:
    from datetime import datetime
    from itertools import count

    counter = count(1)
    return lambda speaker: JobAdminData(
        job_id=f"summary-{next(counter)}",
        chat_id="",
        speaker_name=speaker,
        created_at=datetime.now(),
    )


def make_summarize_reply(model: ModelConfig):
    """Reply function that compresses the context and passes it on unhandled."""

    def summarize_reply(context: Context, last_speaker, env: ReplyEnv) -> tuple[bool, Context]:
        context = summarize_context(context, env.backend, model, new_admin=env.new_admin)
        return False, context

    return summarize_reply


class DeputyRuntime(CompanionRuntime):
    """Base for shells executing actions; never selected as a free speaker."""

    host_action = None

    @property
    def scope(self) -> DeputyScope:
        return self.config.scope or DeputyScope.FULL_DOCUMENT

    def source_document(self, context: Context) -> str:
        """The deputy works on the user's answer first, then client-provided data."""
        return context.input or context.text or context.paragraph


class InstructionDeputy(DeputyRuntime):
    """Generic deputy: extracts its scope and defines the host companion's job.

    The chain mirrors the built-in ordering used everywhere: an input gate
    first, the summarising step second, the catch-all last.
    """

    def _register_reply_functions(self) -> None:
        self.reply_functions = [
            (ReplyTrigger.always(), self._input_gate),
            (ReplyTrigger.predicate(oversized_predicate(self.model_config)),
             make_summarize_reply(self.model_config)),
            (ReplyTrigger.always(), self._apply_job),
        ]

    def _input_gate(self, context: Context, last_speaker, env: ReplyEnv) -> tuple[bool, Context]:
        if self.scope is DeputyScope.SOME and not self.source_document(context).strip():
            context.question = env.insufficient_input_message
            return True, context
        return False, context

    def _apply_job(self, context: Context, last_speaker, env: ReplyEnv) -> tuple[bool, Context]:
        try:
            scoped = select_scope(self.source_document(context), self.scope, env.rng)
        except InsufficientInputError:
            context.question = env.insufficient_input_message
            return True, context
        context.paragraph = scoped
        context.job = self.config.job or ""
        return True, context


def instruction_deputy_reply(
    deputy: "InstructionDeputy", context: Context, env: ReplyEnv
) -> tuple[bool, Context]:
    """One deputy turn: gate on input, then apply the configured job.

    Always reports the turn handled; on insufficient input the context carries
    a question for the user instead of a job.
    """
    handled, context = deputy._input_gate(context, None, env)
    if handled:
        return True, context
    return deputy._apply_job(context, None, env)


class AnsweringDeputy(InstructionDeputy):
    """Instruction deputy that runs its own inference and reports via `answer`."""

    def _apply_job(self, context: Context, last_speaker, env: ReplyEnv) -> tuple[bool, Context]:
        handled, context = super()._apply_job(context, last_speaker, env)
        if context.question:
            return handled, context
        from .companion import build_job

        result = env.backend.complete(build_job(self, context, env))
        context.answer = result.text
        return True, context
