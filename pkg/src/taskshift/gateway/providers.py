"""Provider abstraction: structured chat calls and text embeddings.

Providers return raw payload text plus token usage; validation happens in
the batch manager. The mock provider is fully deterministic: fixtures are
keyed by request fingerprint, and unknown requests either fail (strict
mode) or fall through to a rule-based synthesizer that derives a plausible
payload from the request itself.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from ..errors import ProviderError, UsageError
from .schema import Schema

_TASK_LINE_RE = re.compile(r"^\s*(-?\d+)\.\s+(.*\S)\s*$", re.MULTILINE)
_BULLET_RE = re.compile(r"^\s*(?:[-*•]|\d+\.)\s+(.*\S)\s*$")


@dataclass(frozen=True)
class StructuredRequest:
    """One chat-style call expecting a schema-conformant reply."""

    request_id: str
    system_prompt: str
    user_prompt: str
    output_schema: Schema

    def fingerprint(self) -> str:
        return request_fingerprint(self.system_prompt, self.user_prompt, self.output_schema)


@dataclass(frozen=True)
class StructuredResponse:
    request_id: str
    payload: dict
    raw: str


@dataclass(frozen=True)
class ProviderResult:
    raw: str
    input_tokens: int = 0
    output_tokens: int = 0


def request_fingerprint(system_prompt: str, user_prompt: str, schema: Schema) -> str:
    """Stable content hash of (system prompt, user prompt, schema)."""
    blob = json.dumps(
        {"system": system_prompt, "user": user_prompt, "schema": schema.to_dict()},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


class Provider(Protocol):
    """Anything that can answer structured requests and embed text."""

    def complete(self, request: StructuredRequest) -> ProviderResult: ...

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


@dataclass
class MockProvider:
    """Deterministic in-process provider for tests and dry runs.

    ``fixtures`` maps request fingerprints to payload dicts, returned
    verbatim. Misses raise in strict mode; otherwise the synthesizer
    builds a payload from the request text and schema. Embeddings are
    hash-seeded pseudo-random vectors, identical for identical strings.
    """

    fixtures: dict[str, dict] = field(default_factory=dict)
    strict: bool = False
    dimension: int = 768
    calls: int = 0
    embed_calls: int = 0

    def complete(self, request: StructuredRequest) -> ProviderResult:
        self.calls += 1
        fingerprint = request.fingerprint()
        if fingerprint in self.fixtures:
            payload = self.fixtures[fingerprint]
        elif self.strict:
            raise ProviderError(f"no fixture for request {request.request_id}")
        else:
            payload = synthesize_payload(request)
        raw = json.dumps(payload, sort_keys=True)
        prompt_chars = len(request.system_prompt) + len(request.user_prompt)
        return ProviderResult(raw, input_tokens=prompt_chars // 4, output_tokens=len(raw) // 4)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        self.embed_calls += 1
        if any(not text for text in texts):
            raise UsageError("cannot embed empty text")
        vectors = np.empty((len(texts), self.dimension))
        for row, text in enumerate(texts):
            rng = np.random.default_rng(stable_hash("embed:" + text))
            vectors[row] = rng.standard_normal(self.dimension)
        return vectors


def synthesize_payload(request: StructuredRequest) -> dict:
    """Rule-based default payload for a fixture miss, keyed on schema name."""
    name = request.output_schema.name
    if name == "task_extraction":
        return _synthesize_tasks(request.user_prompt)
    if name == "task_scores":
        listed = _tasks_between(request.user_prompt, "tasks")
        return {"scores": {str(number): _score_for(text) for number, text in listed}}
    if name == "cluster_label":
        listed = _tasks_between(request.user_prompt, "tasks")
        return {"label": _label_from_texts([text for _, text in listed])}
    if name == "focus_choice":
        listed = _tasks_between(request.user_prompt, "tasks")
        number = min(number for number, _ in listed)
        text = dict(listed)[number]
        return {
            "task_number": number,
            "reasoning": f"Concentrating effort on '{text}' compounds the value "
            "of the remaining human-led work.",
        }
    if name == "theme_flags":
        reasoning = _between(request.user_prompt, "reasoning")
        names = [spec.name for spec in request.output_schema.fields]
        seed = stable_hash("themes:" + reasoning)
        count = 1 + seed % 3
        chosen = {names[(seed // (13**rank)) % len(names)] for rank in range(count)}
        return {name_: 1 if name_ in chosen else 0 for name_ in names}
    if name == "task_rewrite":
        listed = _tasks_between(request.user_prompt, "tasks")
        return {
            "tasks": [
                {"task_number": number, "label": "No change", "new_task_details": text}
                for number, text in listed
            ]
        }
    if name == "task_mix":
        listed = _tasks_between(request.user_prompt, "remaining_tasks")
        categories = _category_choices(request.output_schema)
        return {
            "tasks": [
                {
                    "task_number": number,
                    "task_details": text,
                    "task_category": categories[stable_hash("cat:" + text) % len(categories)],
                }
                for number, text in listed
            ]
        }
    raise ProviderError(f"no synthesizer for schema {name!r}")


def _score_for(text: str) -> float:
    return (stable_hash("score:" + text.strip().lower()) % 11) / 10.0


def _between(prompt: str, tag: str) -> str:
    match = re.search(rf"<{tag}>(.*?)</{tag}>", prompt, re.DOTALL)
    if match is None:
        raise ProviderError(f"prompt lacks <{tag}> block")
    return match.group(1)


def _tasks_between(prompt: str, tag: str) -> list[tuple[int, str]]:
    block = _between(prompt, tag)
    listed = [(int(num), text) for num, text in _TASK_LINE_RE.findall(block)]
    if not listed:
        raise ProviderError(f"no task lines inside <{tag}> block")
    return listed


def _synthesize_tasks(prompt: str) -> dict:
    body = _between(prompt, "job_description")
    candidates = []
    for line in body.splitlines():
        match = _BULLET_RE.match(line)
        if match:
            candidates.append(match.group(1))
    if len(candidates) < 2:
        candidates = [
            sentence.strip()
            for sentence in re.split(r"(?<=[.!?])\s+", body)
            if len(sentence.split()) >= 4
        ]
    tasks = [
        {
            "task_number": position,
            "task_details": text.rstrip("."),
            "exposure_score": _score_for(text.rstrip(".")),
        }
        for position, text in enumerate(candidates, start=1)
    ]
    return {"tasks": tasks}


def _label_from_texts(texts: Sequence[str]) -> str:
    counts: Counter[str] = Counter()
    for text in texts:
        counts.update(word for word in re.findall(r"[a-z]+", text.lower()) if len(word) > 3)
    if not counts:
        return "General Tasks"
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return " ".join(word.capitalize() for word, _ in ranked[:2])


def _category_choices(schema: Schema) -> tuple:
    for spec in schema.fields:
        if spec.kind == "array" and spec.item is not None:
            for inner in spec.item.fields:
                if inner.name == "task_category":
                    return inner.choices
    raise ProviderError("task_mix schema lacks category choices")


@dataclass
class HttpProvider:
    """Minimal chat-completions + embeddings HTTP client.

    Credentials come from the environment variable named by ``api_key_env``;
    sampling is pinned to the most deterministic settings the endpoint
    offers (temperature 0).
    """

    base_url: str
    model: str
    embed_model: str = ""
    api_key_env: str = "TASKSHIFT_API_KEY"
    temperature: float = 0.0
    max_tokens: int = 4096
    timeout: float = 120.0

    def build_chat_body(self, request: StructuredRequest) -> dict:
        return {
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {
                    "role": "user",
                    "content": request.user_prompt
                    + "\n\nRespond with a single JSON object conforming to: "
                    + request.output_schema.canonical(),
                },
            ],
        }

    def complete(self, request: StructuredRequest) -> ProviderResult:
        data = self._post("/chat/completions", self.build_chat_body(request))
        try:
            raw = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion response: {exc}") from exc
        usage = data.get("usage", {})
        return ProviderResult(
            raw,
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
        )

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if any(not text for text in texts):
            raise UsageError("cannot embed empty text")
        data = self._post("/embeddings", {"model": self.embed_model or self.model, "input": list(texts)})
        try:
            vectors = [entry["embedding"] for entry in data["data"]]
        except (KeyError, TypeError) as exc:
            raise ProviderError(f"malformed embedding response: {exc}") from exc
        if len(vectors) != len(texts):
            raise ProviderError(f"expected {len(texts)} embeddings, got {len(vectors)}")
        return np.asarray(vectors, dtype=float)

    def _post(self, path: str, body: dict) -> dict:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise ProviderError(f"environment variable {self.api_key_env} is not set")
        request = urllib.request.Request(
            self.base_url.rstrip("/") + path,
            data=json.dumps(body).encode("utf-8"),
            headers={"Content-Type": "application/json", "Authorization": f"Bearer {key}"},
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                return json.loads(response.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            raise ProviderError(f"provider returned HTTP {exc.code}: {exc.reason}") from exc
        except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
            raise ProviderError(f"provider transport failure: {exc}") from exc
