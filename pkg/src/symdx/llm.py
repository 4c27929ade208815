"""Chat-completions client with a content-addressed response cache.

Requests are plain JSON against any chat-completions-shaped endpoint;
the endpoint and model name are configuration, not code.  Every answer
is written to the cache keyed by (template id, category, model), so a
warm cache makes knowledge-base builds fully reproducible without
network access.  The API key is read from an environment variable at
call time and never persisted or logged.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import requests

from .errors import EmptyResponseError, TransportError

CACHE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class LlmConfig:
    """Connection and sampling settings for the chat endpoint."""

    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    api_key_env: str = "SYMDX_API_KEY"
    timeout: float = 60.0


def cache_key(template_id: str, category: str, model: str) -> str:
    """Content address for one (template, category, model) query."""
    material = "\x1f".join((template_id, category, model))
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class ResponseCache:
    """One JSON file per cached answer, named by its content address.

    Writes go through a temp file and rename, so concurrent readers
    never observe a partial entry (single-writer, many-reader).
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        if not path.is_file():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: str, record: dict) -> None:
        path = self._path(key)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(
            json.dumps(record, indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        tmp.replace(path)


def query_llm(
    prompt: str,
    cfg: LlmConfig,
    cache: ResponseCache | None = None,
    key: str | None = None,
) -> str:
    """Return the model's answer for ``prompt``, cache-first.

    A cache hit returns the stored answer byte-for-byte with no network
    I/O.  On a miss the endpoint is called and the answer is written
    back to the cache before returning.
    """
    if key is None:
        key = hashlib.sha256(
            f"{cfg.model}\x1f{prompt}".encode("utf-8")
        ).hexdigest()

    if cache is not None:
        record = cache.get(key)
        if record is not None:
            return record["response"]

    api_key = os.environ.get(cfg.api_key_env, "")
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    payload = {
        "model": cfg.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
    }
    try:
        resp = requests.post(
            cfg.endpoint, json=payload, headers=headers, timeout=cfg.timeout
        )
    except requests.RequestException as e:
        raise TransportError(
            f"LLM endpoint unreachable and no cache entry exists: {e}"
        ) from e
    if resp.status_code != 200:
        raise TransportError(
            f"LLM endpoint returned HTTP {resp.status_code}: {resp.text[:200]}"
        )
    try:
        body = resp.json()
        answer = body["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as e:
        raise TransportError(f"malformed completion response: {e}") from e
    if not answer or not answer.strip():
        raise EmptyResponseError("LLM returned an empty completion")

    if cache is not None:
        cache.put(
            key,
            {
                "schema_version": CACHE_SCHEMA_VERSION,
                "prompt": prompt,
                "response": answer,
                "model": cfg.model,
                "temperature": cfg.temperature,
                "captured_at": datetime.now(timezone.utc).isoformat(
                    timespec="seconds"
                ),
            },
        )
    return answer
