"""Batch submission with bounded concurrency, retries and caching.

Every request yields exactly one response or one failure entry; results
come back in input order (keyed by request_id, never by arrival). Schema
validation runs on every payload, including cache hits.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ProviderError, SchemaInvalid, UsageError
from .cache import ResponseCache
from .providers import Provider, StructuredRequest, StructuredResponse
from .schema import validate_payload

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    max_in_flight: int = 8
    backoff_base: float = 0.5

    def __post_init__(self):
        if self.max_attempts < 1 or self.max_in_flight < 1:
            raise UsageError("retry policy requires at least one attempt and one slot")


@dataclass
class BatchReport:
    submitted: int = 0
    succeeded: int = 0
    failed: list[tuple[str, str]] = field(default_factory=list)
    input_tokens: int = 0
    output_tokens: int = 0
    cache_hits: int = 0

    def reconciles(self) -> bool:
        return self.submitted == self.succeeded + len(self.failed)


@dataclass
class _Outcome:
    response: StructuredResponse | None = None
    error_class: str = ""
    input_tokens: int = 0
    output_tokens: int = 0
    cache_hit: bool = False


class BatchManager:
    """Runs structured-request batches against one provider."""

    def __init__(
        self,
        provider: Provider,
        cache: ResponseCache | None = None,
        policy: RetryPolicy | None = None,
    ):
        self.provider = provider
        self.cache = cache
        self.policy = policy or RetryPolicy()

    def submit_batch(
        self,
        requests: Sequence[StructuredRequest],
        policy: RetryPolicy | None = None,
    ) -> tuple[list[StructuredResponse], BatchReport]:
        policy = policy or self.policy
        ids = [request.request_id for request in requests]
        if len(set(ids)) != len(ids):
            raise UsageError("request_id values must be unique within a batch")

        report = BatchReport(submitted=len(requests))
        if not requests:
            return [], report

        if policy.max_in_flight == 1:
            outcomes = [self._run_one(request, policy) for request in requests]
        else:
            with ThreadPoolExecutor(max_workers=policy.max_in_flight) as pool:
                outcomes = list(pool.map(lambda req: self._run_one(req, policy), requests))

        responses: list[StructuredResponse] = []
        for request, outcome in zip(requests, outcomes):
            report.input_tokens += outcome.input_tokens
            report.output_tokens += outcome.output_tokens
            report.cache_hits += outcome.cache_hit
            if outcome.response is not None:
                responses.append(outcome.response)
            else:
                report.failed.append((request.request_id, outcome.error_class))
        report.succeeded = len(responses)
        return responses, report

    def submit_one(self, request: StructuredRequest) -> StructuredResponse:
        """Single-request convenience; raises instead of reporting."""
        responses, report = self.submit_batch([request])
        if responses:
            return responses[0]
        _, error_class = report.failed[0]
        raise ProviderError(f"request {request.request_id} failed: {error_class}")

    def _run_one(self, request: StructuredRequest, policy: RetryPolicy) -> _Outcome:
        fingerprint = request.fingerprint()
        if self.cache is not None:
            raw = self.cache.get(fingerprint)
            if raw is not None:
                try:
                    payload = validate_payload(raw, request.output_schema)
                    return _Outcome(
                        response=StructuredResponse(request.request_id, payload, raw),
                        cache_hit=True,
                    )
                except SchemaInvalid:
                    log.warning("cache entry for %s is invalid; refetching", request.request_id)

        outcome = _Outcome()
        last_error = "ProviderError"
        for attempt in range(1, policy.max_attempts + 1):
            try:
                result = self.provider.complete(request)
                outcome.input_tokens += result.input_tokens
                outcome.output_tokens += result.output_tokens
                payload = validate_payload(result.raw, request.output_schema)
            except SchemaInvalid as exc:
                last_error = exc.error_class
                log.info("request %s attempt %d rejected: %s", request.request_id, attempt, exc)
            except ProviderError as exc:
                last_error = "ProviderError"
                log.info("request %s attempt %d failed: %s", request.request_id, attempt, exc)
            else:
                if self.cache is not None:
                    self.cache.put(fingerprint, result.raw)
                outcome.response = StructuredResponse(request.request_id, payload, result.raw)
                return outcome
            if attempt < policy.max_attempts and policy.backoff_base > 0:
                time.sleep(policy.backoff_base * 2 ** (attempt - 1))
        outcome.error_class = last_error
        return outcome

    def embed_texts(self, texts: Sequence[str], chunk_size: int = 256) -> np.ndarray:
        """Embed texts in chunks with the batch retry policy.

        Returns one vector per text, in order. Failed chunks are retried;
        exhaustion raises :class:`ProviderError` naming the failed indexes.
        """
        if not texts:
            raise UsageError("embed_texts requires at least one text")
        if any(not text for text in texts):
            empties = [index for index, text in enumerate(texts) if not text]
            raise UsageError(f"empty texts at indexes {empties}")
        chunks: list[np.ndarray] = []
        for start in range(0, len(texts), chunk_size):
            chunk = list(texts[start : start + chunk_size])
            error: Exception | None = None
            for attempt in range(1, self.policy.max_attempts + 1):
                try:
                    vectors = self.provider.embed(chunk)
                    break
                except ProviderError as exc:
                    error = exc
                    if attempt < self.policy.max_attempts and self.policy.backoff_base > 0:
                        time.sleep(self.policy.backoff_base * 2 ** (attempt - 1))
            else:
                failed = list(range(start, start + len(chunk)))
                raise ProviderError(f"embedding failed for texts {failed}: {error}")
            if vectors.shape[0] != len(chunk):
                raise ProviderError("provider returned wrong number of embeddings")
            chunks.append(np.asarray(vectors, dtype=float))
        matrix = np.vstack(chunks)
        if len({chunk.shape[1] for chunk in chunks}) != 1:
            raise ProviderError("embedding dimension changed mid-run")
        return matrix
