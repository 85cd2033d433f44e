"""Text-generation backends: an OpenAI-compatible HTTP client and a
deterministic mock oracle for offline tests.

Both return a :class:`Completion` carrying per-token log-probabilities so
callers can turn a generated label into a confidence value.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import requests

from .errors import (
    BackendRejected,
    BackendUnavailable,
    CapabilityMissing,
    UnparseableLabel,
)

logger = logging.getLogger(__name__)

CAUSAL = "causal"
NON_CAUSAL = "non-causal"

# Non-causal spellings are checked first: "causal" is a substring of every
# one of them, so priority order is what keeps the matching safe.
DEFAULT_LABEL_VARIANTS = ("non-causal", "noncausal", "non causal", CAUSAL)

PATH_BLOCK_MARKER = "[Relation Paths]:"


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_tokens: int = 16
    temperature: float = 0.0
    want_logprobs: bool = True

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class Completion:
    text: str
    tokens: tuple[tuple[str, float], ...]
    backend_id: str

    def __post_init__(self):
        for tok, lp in self.tokens:
            if lp > 0:
                raise ValueError(f"token {tok!r} has log-probability {lp} > 0")


def canonical_label(variant: str) -> str:
    """Collapse a label spelling to 'causal' or 'non-causal'."""
    collapsed = re.sub(r"[^a-z]", "", variant.lower())
    return NON_CAUSAL if collapsed.startswith("non") else CAUSAL


def label_probability(completion: Completion,
                      label_variants: Sequence[str] = DEFAULT_LABEL_VARIANTS
                      ) -> tuple[str, float]:
    """Which label the completion expresses and with what probability.

    The first variant (in the given priority order) found in the text wins;
    the probability is the exponentiated mean log-probability of the tokens
    whose spans overlap the matched label, i.e. the geometric mean of the
    per-token probabilities.
    """
    if not completion.tokens:
        raise CapabilityMissing("completion has no token log-probabilities")

    concat = "".join(tok for tok, _ in completion.tokens)
    haystacks = [concat]
    if completion.text not in haystacks:
        haystacks.append(completion.text)

    for haystack in haystacks:
        lowered = haystack.lower()
        for variant in label_variants:
            pos = lowered.find(variant.lower())
            if pos < 0:
                continue
            label = canonical_label(variant)
            if haystack is not concat:
                # Token offsets are only meaningful in the concatenation;
                # fall back to averaging across all tokens.
                logprobs = [lp for _, lp in completion.tokens]
            else:
                span = (pos, pos + len(variant))
                logprobs = []
                offset = 0
                for tok, lp in completion.tokens:
                    tok_span = (offset, offset + len(tok))
                    offset += len(tok)
                    if tok_span[0] < span[1] and tok_span[1] > span[0]:
                        logprobs.append(lp)
                if not logprobs:
                    logprobs = [lp for _, lp in completion.tokens]
            p = math.exp(sum(logprobs) / len(logprobs))
            return label, min(p, 1.0)
    raise UnparseableLabel(f"no relation label found in {completion.text!r}")


@dataclass(frozen=True)
class MockOracleConfig:
    """Planted decision rule for the deterministic mock backend.

    ``causal_motifs`` are token sequences; a prompt whose relation-path
    block contains any motif's tokens in order is answered "causal",
    otherwise "non-causal".  Each answer flips with probability
    ``flip_rate``, seeded by a stable hash of the prompt.
    """

    causal_motifs: tuple[tuple[str, ...], ...]
    base_confidence: float = 0.9
    noise_seed: int = 0
    flip_rate: float = 0.0

    def __post_init__(self):
        if not self.causal_motifs or any(not m for m in self.causal_motifs):
            raise ValueError("causal_motifs must be non-empty token sequences")
        if not 0.5 < self.base_confidence <= 1.0:
            raise ValueError("base_confidence must be in (0.5, 1]")
        if not 0.0 <= self.flip_rate < 0.5:
            raise ValueError("flip_rate must be in [0, 0.5)")

    def to_dict(self) -> dict:
        return {
            "causal_motifs": [list(m) for m in self.causal_motifs],
            "base_confidence": self.base_confidence,
            "noise_seed": self.noise_seed,
            "flip_rate": self.flip_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MockOracleConfig":
        return cls(
            causal_motifs=tuple(tuple(m) for m in d["causal_motifs"]),
            base_confidence=d.get("base_confidence", 0.9),
            noise_seed=d.get("noise_seed", 0),
            flip_rate=d.get("flip_rate", 0.0),
        )

    @classmethod
    def from_json(cls, path) -> "MockOracleConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def _stable_unit_float(*parts) -> float:
    """Hash the parts to a float in [0, 1); stable across processes."""
    digest = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode("utf-8"),
                             digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2**64


def _path_block(prompt: str) -> str:
    """Text of the relation-path section, or the whole prompt without it."""
    idx = prompt.rfind(PATH_BLOCK_MARKER)
    if idx < 0:
        return prompt
    block = prompt[idx + len(PATH_BLOCK_MARKER):]
    end = block.find("\n\n")
    return block if end < 0 else block[:end]


def _motif_matches(motif: Sequence[str], block: str) -> bool:
    lowered = block.lower()
    pos = 0
    for token in motif:
        found = lowered.find(token.lower(), pos)
        if found < 0:
            return False
        pos = found + len(token)
    return True


class MockOracle:
    """Pure function of (prompt, config); usable wherever a backend is.

    ``calls`` counts completions served, for call-accounting tests.
    """

    def __init__(self, config: MockOracleConfig):
        self.config = config
        self.backend_id = "mock"
        self.parallelism = 1
        self.calls = 0

    def complete(self, request: CompletionRequest) -> Completion:
        self.calls += 1
        block = _path_block(request.prompt)
        is_causal = any(_motif_matches(m, block) for m in self.config.causal_motifs)
        if self.config.flip_rate > 0:
            roll = _stable_unit_float("flip", self.config.noise_seed, request.prompt)
            if roll < self.config.flip_rate:
                is_causal = not is_causal
        label = CAUSAL if is_causal else NON_CAUSAL
        logprob = math.log(self.config.base_confidence)
        return Completion(text=label, tokens=((label, logprob),), backend_id=self.backend_id)


class HttpBackend:
    """Client for OpenAI-compatible completion endpoints.

    Transient failures (connection errors, HTTP 5xx) are retried with
    exponential backoff up to ``max_retries`` extra attempts; client errors
    are surfaced immediately.  ``parallelism`` bounds in-flight requests.
    """

    def __init__(self, endpoint: str, model: str, credential_env: Optional[str] = None,
                 max_retries: int = 3, parallelism: int = 4, timeout: float = 30.0,
                 backoff_base: float = 0.25, session: Optional[requests.Session] = None):
        self.endpoint = endpoint
        self.model = model
        self.credential_env = credential_env
        self.max_retries = max_retries
        self.parallelism = max(1, parallelism)
        self.timeout = timeout
        self.backoff_base = backoff_base
        self.backend_id = f"http:{model}"
        self._session = session or requests.Session()
        self._slots = threading.Semaphore(self.parallelism)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.credential_env:
            secret = os.environ.get(self.credential_env)
            if secret:
                headers["Authorization"] = f"Bearer {secret}"
        return headers

    def complete(self, request: CompletionRequest) -> Completion:
        payload = {
            "model": self.model,
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "logprobs": request.want_logprobs,
        }
        last_error: Optional[Exception] = None
        with self._slots:
            for attempt in range(1 + self.max_retries):
                if attempt:
                    time.sleep(self.backoff_base * 2 ** (attempt - 1))
                try:
                    response = self._session.post(self.endpoint, json=payload,
                                                  headers=self._headers(),
                                                  timeout=self.timeout)
                except requests.RequestException as exc:
                    last_error = exc
                    logger.warning("backend attempt %d failed: %s", attempt + 1, exc)
                    continue
                if 400 <= response.status_code < 500:
                    raise BackendRejected(response.status_code, response.text[:200])
                if response.status_code >= 500:
                    last_error = BackendUnavailable(
                        f"HTTP {response.status_code}: {response.text[:200]}")
                    logger.warning("backend attempt %d failed: HTTP %d",
                                   attempt + 1, response.status_code)
                    continue
                return self._parse(response.json(), request)
        raise BackendUnavailable(
            f"backend unreachable after {1 + self.max_retries} attempts: {last_error}")

    def _parse(self, body: dict, request: CompletionRequest) -> Completion:
        try:
            choice = body["choices"][0]
            text = choice["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed backend response: {exc}") from exc
        tokens: tuple[tuple[str, float], ...] = ()
        logprobs = choice.get("logprobs") or {}
        token_strings = logprobs.get("tokens")
        token_logprobs = logprobs.get("token_logprobs")
        if token_strings is not None and token_logprobs is not None:
            tokens = tuple(
                (tok, min(0.0, float(lp)))
                for tok, lp in zip(token_strings, token_logprobs)
                if lp is not None)
        if request.want_logprobs and not tokens:
            raise CapabilityMissing("backend did not return token log-probabilities")
        return Completion(text=text, tokens=tokens, backend_id=self.backend_id)


def complete(backend, request: CompletionRequest) -> Completion:
    """Run one completion against any configured backend."""
    return backend.complete(request)
