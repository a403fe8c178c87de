"""Provider-agnostic chat-completion gateway.

Every complete() call is appended to the run manifest before it returns,
including failed ones, so the manifest is a total record of model usage.
A deterministic mock provider backs the offline test path.
"""

import enum
import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from .errors import (
    ConfigError,
    DuplicateRegistration,
    MockMiss,
    ProviderUnavailable,
    TokenBudgetExceeded,
)
from .tokenizers import TokenCounter, approx_count


class PurposeTag(str, enum.Enum):
    CODE_CHALLENGES = "code_challenges"
    CODE_NEEDS = "code_needs"
    GROUP_THEMES = "group_themes"
    VARIABILITY_TEST = "variability_test"
    WRITE_PERSONA = "write_persona"
    OTHER = "other"


@dataclass(frozen=True)
class PromptRequest:
    prompt_text: str
    temperature: float
    max_response_tokens: int
    model_name: str
    purpose_tag: PurposeTag

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature out of [0,1]: {self.temperature}")
        if self.max_response_tokens <= 0:
            raise ValueError("max_response_tokens must be positive")

    @property
    def digest(self) -> str:
        payload = json.dumps(
            {
                "prompt_text": self.prompt_text,
                "temperature": self.temperature,
                "max_response_tokens": self.max_response_tokens,
                "model_name": self.model_name,
                "purpose_tag": self.purpose_tag.value,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Completion:
    request_digest: str
    response_text: str
    latency_ms: int
    provider: str
    truncated: bool = False

    @property
    def response_digest(self) -> str:
        return hashlib.sha256(self.response_text.encode("utf-8")).hexdigest()


class TransientProviderError(Exception):
    """Retryable transport or rate-limit failure."""


class MockProvider:
    """Deterministic canned-response provider for offline runs and tests.

    Responses are registered per purpose tag, optionally narrowed to a
    specific request digest. Digest-level registrations win over tag-level.
    """

    name = "mock"

    def __init__(self):
        self._registry: Dict[Tuple[str, Optional[str]], str] = {}

    def register_canned(
        self, purpose_tag: PurposeTag, response: str, digest: Optional[str] = None
    ) -> Tuple[str, Optional[str]]:
        key = (purpose_tag.value, digest)
        if key in self._registry:
            raise DuplicateRegistration(f"matcher already registered: {key}")
        self._registry[key] = response
        return key

    def load_registry(self, path) -> None:
        """Load a fixture file mapping purpose_tag -> response text."""
        with open(path, encoding="utf-8") as fh:
            mapping = json.load(fh)
        for tag, response in mapping.items():
            self.register_canned(PurposeTag(tag), response)

    def send(self, req: PromptRequest) -> Tuple[str, bool]:
        for key in ((req.purpose_tag.value, req.digest), (req.purpose_tag.value, None)):
            if key in self._registry:
                return self._registry[key], False
        raise MockMiss(f"no canned response for purpose_tag={req.purpose_tag.value}")


class OpenAIChatProvider:
    """Minimal chat-completions client; credentials come from the env."""

    name = "openai"

    def __init__(
        self,
        api_key_env: str = "OPENAI_API_KEY",
        endpoint: str = "https://api.openai.com/v1/chat/completions",
        timeout: float = 60.0,
    ):
        self.api_key = os.environ.get(api_key_env, "")
        if not self.api_key:
            raise ConfigError(f"missing API key: set {api_key_env}")
        self.endpoint = endpoint
        self.timeout = timeout

    def send(self, req: PromptRequest) -> Tuple[str, bool]:
        import httpx

        body = {
            "model": req.model_name,
            "temperature": req.temperature,
            "max_tokens": req.max_response_tokens,
            "messages": [{"role": "user", "content": req.prompt_text}],
        }
        try:
            resp = httpx.post(
                self.endpoint,
                json=body,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except httpx.TransportError as exc:
            raise TransientProviderError(str(exc)) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientProviderError(f"HTTP {resp.status_code}")
        resp.raise_for_status()
        data = resp.json()
        choice = data["choices"][0]
        truncated = choice.get("finish_reason") == "length"
        return choice["message"]["content"], truncated


@dataclass
class GatewayGauge:
    """Concurrency observability for tests."""

    current: int = 0
    peak: int = 0


class Gateway:
    def __init__(
        self,
        provider,
        manifest_append: Optional[Callable[[dict], None]] = None,
        tokenizer: TokenCounter = approx_count,
        context_limit: int = 4097,
        max_in_flight: int = 4,
        retry_cap: int = 3,
        backoff_base: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.provider = provider
        self.manifest_append = manifest_append
        self.tokenizer = tokenizer
        self.context_limit = context_limit
        self.max_in_flight = max_in_flight
        self.retry_cap = retry_cap
        self.backoff_base = backoff_base
        self.sleep = sleep
        self.gauge = GatewayGauge()
        self._sem = threading.Semaphore(max_in_flight)
        self._gauge_lock = threading.Lock()
        self._manifest_lock = threading.Lock()

    def _log(self, req: PromptRequest, outcome: str, response_digest: str = "",
             latency_ms: int = 0) -> None:
        if self.manifest_append is None:
            return
        entry = {
            "purpose_tag": req.purpose_tag.value,
            "request_digest": req.digest,
            "prompt_text": req.prompt_text,
            "response_digest": response_digest,
            "parameters": {
                "temperature": req.temperature,
                "max_response_tokens": req.max_response_tokens,
                "model_name": req.model_name,
            },
            "outcome": outcome,
            "latency_ms": latency_ms,
            "provider": getattr(self.provider, "name", "unknown"),
        }
        with self._manifest_lock:
            self.manifest_append(entry)

    def complete(self, req: PromptRequest) -> Completion:
        prompt_tokens = self.tokenizer(req.prompt_text)
        if prompt_tokens + req.max_response_tokens > self.context_limit:
            self._log(req, "TokenBudgetExceeded")
            raise TokenBudgetExceeded(
                f"{prompt_tokens} prompt + {req.max_response_tokens} response "
                f"tokens exceed context limit {self.context_limit}"
            )

        with self._sem:
            with self._gauge_lock:
                self.gauge.current += 1
                self.gauge.peak = max(self.gauge.peak, self.gauge.current)
            try:
                start = time.monotonic()
                last_exc = None
                for attempt in range(self.retry_cap + 1):
                    try:
                        response_text, truncated = self.provider.send(req)
                        break
                    except TransientProviderError as exc:
                        last_exc = exc
                        if attempt < self.retry_cap:
                            self.sleep(self.backoff_base * (2 ** attempt))
                else:
                    self._log(req, "ProviderUnavailable")
                    raise ProviderUnavailable(
                        f"retries exhausted after {self.retry_cap + 1} attempts: {last_exc}"
                    )
                latency_ms = int((time.monotonic() - start) * 1000)
            except (MockMiss, ConfigError) as exc:
                self._log(req, type(exc).__name__)
                raise
            finally:
                with self._gauge_lock:
                    self.gauge.current -= 1

        completion = Completion(
            request_digest=req.digest,
            response_text=response_text,
            latency_ms=latency_ms,
            provider=getattr(self.provider, "name", "unknown"),
            truncated=truncated,
        )
        self._log(req, "ok", completion.response_digest, latency_ms)
        return completion

    def complete_many(self, reqs: List[PromptRequest]) -> List[Completion]:
        """Results in input order regardless of completion order."""
        if not reqs:
            return []
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(self.complete, reqs))
