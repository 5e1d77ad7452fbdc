"""Text-generation backends: a deterministic mock and a chat-completions HTTP adapter."""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass
from typing import Any, Protocol

import httpx

from .text import tokenize


class BackendError(RuntimeError):
    """Base class for backend failures."""


class BackendConfigError(BackendError):
    pass


class BackendTransportError(BackendError):
    pass


class BackendStatusError(BackendError):
    def __init__(self, status: int, body: str):
        super().__init__(f"backend returned HTTP {status}: {body[:200]}")
        self.status = status


class BackendResponseError(BackendError):
    """The response body did not have the expected shape."""


@dataclass(frozen=True)
class TextRequest:
    system: str
    user: str
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if not self.user.strip():
            raise ValueError("user prompt must be nonempty")


@dataclass(frozen=True)
class TextResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


class TextBackend(Protocol):
    def complete(self, req: TextRequest) -> TextResponse: ...


# ---------------------------------------------------------------------------
# Mock

REASONING_DRAFT = (
    "If you are looking for a {query}, the choice comes down to {keywords}. "
    "First, the {name} is {keywords}. "
    "Next, the other listings cover fewer of these needs. "
    "Then, the rating and the price of the {name} hold up well against the alternatives. "
    "Finally, the listing details are clear and specific. "
    "In conclusion, this suggests that the {name} is the best match for your needs."
)

REVIEW_DRAFT = (
    "I was looking for a {query} and bought the {name}. "
    "I used it every day and it worked well. "
    "It felt {keywords}, and it was easy to set up. "
    "The build felt solid and I would buy it again for the price."
)

_KEYWORD_CLAUSES = {
    "reasoning": re.compile(r"the choice comes down to (.+?)\. First,"),
    "review": re.compile(r"It felt (.+?), and it was easy to set up\."),
}
_QUERY_ECHO = {
    "reasoning": re.compile(r"If you are looking for a (.+?), the choice comes down to"),
    "review": re.compile(r"I was looking for a (.+?) and bought the "),
}
_TEMPLATES = {"reasoning": REASONING_DRAFT, "review": REVIEW_DRAFT}
_FIELD = {
    "query": re.compile(r"The user query is: \*(.*?)\*\n"),
    "products": re.compile(r"The candidate products are: \*(.*?)\*\n", re.S),
    "target": re.compile(r"The target product is: \*(.*?)\*\n"),
    "draft": re.compile(r"The current draft is: \*(.*?)\*\n\s*\nCompare the current ranking", re.S),
}


def query_keywords(query: str, count: int) -> list[str]:
    """First ``count`` distinct query tokens, in query order."""
    seen: list[str] = []
    for tok in tokenize(query):
        if tok not in seen:
            seen.append(tok)
    return seen[: max(count, 0)]


def join_keywords(words: list[str]) -> str:
    if len(words) <= 1:
        return "".join(words)
    return ", ".join(words[:-1]) + " and " + words[-1]


def split_keywords(clause: str) -> list[str]:
    return [w for w in re.split(r", | and ", clause) if w]


def mock_draft(strategy: str, query: str, name: str, version: int) -> str:
    words = query_keywords(query, 2 + version)
    return _TEMPLATES[strategy].format(query=query, name=name, keywords=join_keywords(words))


def _word_tokens(text: str) -> int:
    return len(text.split())


class MockBackend:
    """Pure function of the request; no network, no state.

    Generator prompts yield the strategy template filled with the first two
    query keywords.  Optimizer prompts read the current draft back, recover the
    query from its opening sentence and the version from its keyword clause, and
    return the next version with one more keyword.  Drafts it cannot parse are
    returned unchanged.  Synthesizer prompts are answered in retrieval order.
    """

    def complete(self, req: TextRequest) -> TextResponse:
        text = self._respond(req.user)
        prompt = f"{req.system}\n{req.user}"
        return TextResponse(text, _word_tokens(prompt), _word_tokens(text))

    def _respond(self, user: str) -> str:
        draft_m = _FIELD["draft"].search(user)
        if draft_m:
            return self._refine(draft_m.group(1))
        if "Recommend the products by producing a ranked list" in user:
            return self._rank(user)
        query_m = _FIELD["query"].search(user)
        if query_m is None:
            return ""
        query = query_m.group(1)
        name = self._target_name(user)
        if "style of a short customer review" in user:
            return mock_draft("review", query, name, 0)
        if "step-by-step logical reasoning" in user:
            return mock_draft("reasoning", query, name, 0)
        return ""

    @staticmethod
    def _target_name(user: str) -> str:
        m = _FIELD["target"].search(user)
        if m:
            try:
                info = json.loads(m.group(1))
                if isinstance(info, dict) and info.get("name"):
                    return str(info["name"])
            except json.JSONDecodeError:
                pass
        return "target product"

    @staticmethod
    def _refine(draft: str) -> str:
        for strategy, clause in _KEYWORD_CLAUSES.items():
            m = clause.search(draft)
            echo = _QUERY_ECHO[strategy].search(draft)
            if m is None or echo is None:
                continue
            query = echo.group(1)
            have = split_keywords(m.group(1))
            available = query_keywords(query, 10**6)
            if len(have) >= len(available):
                return draft
            old = join_keywords(have)
            new = join_keywords(query_keywords(query, len(have) + 1))
            return draft.replace(old, new)
        return draft

    @staticmethod
    def _rank(user: str) -> str:
        m = _FIELD["products"].search(user)
        if not m:
            return ""
        try:
            products = json.loads(m.group(1))
        except json.JSONDecodeError:
            return ""
        names = [str(p.get("name", "")) for p in products if isinstance(p, dict)]
        return "\n".join(f"{i}. {name}" for i, name in enumerate(names, start=1))


# ---------------------------------------------------------------------------
# Live adapter


@dataclass(frozen=True)
class BackendConfig:
    backend: str = "mock"
    base_url: str = ""
    model_name: str = ""
    credential_env: str = ""
    max_in_flight: int = 4
    timeout_seconds: float = 60.0
    retries: int = 1

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> BackendConfig:
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


class LiveBackend:
    """One POST per request in the common chat-completions shape.

    Request: ``{"model", "messages": [{"role", "content"}...], "max_tokens"}``.
    Response: text from ``choices[0].message.content`` and counts from ``usage``.
    No decoding parameters are sent, so provider defaults apply.
    """

    def __init__(self, cfg: BackendConfig, transport: httpx.BaseTransport | None = None):
        if not cfg.base_url:
            raise BackendConfigError("live backend needs base_url")
        if not cfg.model_name:
            raise BackendConfigError("live backend needs model_name")
        if not cfg.credential_env:
            raise BackendConfigError("live backend needs credential_env")
        if cfg.max_in_flight < 1:
            raise BackendConfigError("max_in_flight must be >= 1")
        self.cfg = cfg
        self._transport = transport
        self._slots = threading.BoundedSemaphore(cfg.max_in_flight)

    def _credential(self) -> str:
        token = os.environ.get(self.cfg.credential_env, "")
        if not token:
            raise BackendConfigError(
                f"environment variable {self.cfg.credential_env} is unset or empty"
            )
        return token

    def payload(self, req: TextRequest) -> dict[str, Any]:
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": req.user})
        return {"model": self.cfg.model_name, "messages": messages, "max_tokens": req.max_tokens}

    def complete(self, req: TextRequest) -> TextResponse:
        token = self._credential()
        headers = {"Authorization": f"Bearer {token}", "Content-Type": "application/json"}
        body = self.payload(req)
        with self._slots:
            resp = self._post(body, headers)
        if resp.status_code // 100 != 2:
            raise BackendStatusError(resp.status_code, resp.text)
        return parse_completion(resp)

    def _post(self, body: dict[str, Any], headers: dict[str, str]) -> httpx.Response:
        last: Exception | None = None
        for _ in range(self.cfg.retries + 1):
            try:
                with httpx.Client(
                    transport=self._transport, timeout=self.cfg.timeout_seconds
                ) as client:
                    return client.post(self.cfg.base_url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last = exc
        raise BackendTransportError(f"request to {self.cfg.base_url} failed: {last}") from last


def parse_completion(resp: httpx.Response) -> TextResponse:
    try:
        data = resp.json()
        text = data["choices"][0]["message"]["content"]
        if not isinstance(text, str):
            raise TypeError("content is not a string")
        usage = data.get("usage") or {}
        prompt_tokens = int(usage.get("prompt_tokens", 0))
        completion_tokens = int(usage.get("completion_tokens", 0))
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise BackendResponseError(f"malformed completion body: {exc}") from exc
    if prompt_tokens < 0 or completion_tokens < 0:
        raise BackendResponseError("negative token counts")
    return TextResponse(text, prompt_tokens, completion_tokens)


def make_backend(cfg: BackendConfig, transport: httpx.BaseTransport | None = None) -> TextBackend:
    if cfg.backend == "mock":
        return MockBackend()
    if cfg.backend == "live":
        return LiveBackend(cfg, transport=transport)
    raise BackendConfigError(f"unknown backend {cfg.backend!r}; expected 'mock' or 'live'")
