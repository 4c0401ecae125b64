"""Chat-completion client that turns a text prompt into composition JSON.

The rest of the package never imports this module; the command line wires
it in.  Conversations are kept as a list of turns so an edit request can be
replayed with the full history.
"""

from __future__ import annotations

import json
import os
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Callable

API_KEY_ENV = "M6_LLM_API_KEY"
DEFAULT_MODEL = "gpt-4-1106-preview"
DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"

# (payload, api_key) -> raw response body
Transport = Callable[[dict[str, Any], str], str]


class LLMError(RuntimeError):
    pass


class CredentialsMissing(LLMError):
    pass


class TransportError(LLMError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ReplyError(LLMError):
    """The model answered, but not with a JSON object."""

    def __init__(self, message: str, reply: str):
        super().__init__(f"{message}; reply was: {reply!r}")
        self.reply = reply


def default_system_prompt() -> str:
    return resources.files("evocomposer.data").joinpath("system_prompt.txt").read_text(encoding="utf-8")


@dataclass
class ChatSession:
    system_prompt: str = field(default_factory=default_system_prompt)
    turns: list[tuple[str, str]] = field(default_factory=list)
    model_id: str = DEFAULT_MODEL
    temperature: float = 0.0

    def messages(self, user_prompt: str | None = None) -> list[dict[str, str]]:
        msgs = [{"role": "system", "content": self.system_prompt}]
        for user, assistant in self.turns:
            msgs.append({"role": "user", "content": user})
            msgs.append({"role": "assistant", "content": assistant})
        if user_prompt is not None:
            msgs.append({"role": "user", "content": user_prompt})
        return msgs

    def to_dict(self) -> dict[str, Any]:
        return {
            "system_prompt": self.system_prompt,
            "turns": [list(t) for t in self.turns],
            "model_id": self.model_id,
            "temperature": self.temperature,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ChatSession":
        return cls(
            system_prompt=doc["system_prompt"],
            turns=[(str(u), str(a)) for u, a in doc.get("turns", [])],
            model_id=doc.get("model_id", DEFAULT_MODEL),
            temperature=float(doc.get("temperature", 0.0)),
        )


def https_transport(endpoint: str = DEFAULT_ENDPOINT, timeout: float = 120.0) -> Transport:
    """POST the payload as JSON with a bearer token and return the body text."""

    def send(payload: dict[str, Any], api_key: str) -> str:
        req = urllib.request.Request(
            endpoint,
            data=json.dumps(payload).encode("utf-8"),
            headers={"Content-Type": "application/json", "Authorization": f"Bearer {api_key}"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                return resp.read().decode("utf-8")
        except urllib.error.HTTPError as exc:
            detail = exc.read().decode("utf-8", "replace")[:500]
            raise TransportError(f"HTTP {exc.code}: {detail}", exc.code) from exc
        except urllib.error.URLError as exc:
            raise TransportError(f"request failed: {exc.reason}") from exc

    return send


def _reply_text(body: str) -> str:
    try:
        doc = json.loads(body)
        return doc["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"unexpected response body: {body[:200]!r}") from exc


def strip_envelope(reply: str) -> str:
    """Cut the outermost ``{...}`` out of a reply, dropping fences and prose."""
    start = reply.find("{")
    if start < 0:
        raise ReplyError("no JSON object found", reply)
    depth = 0
    in_str = False
    escaped = False
    for i in range(start, len(reply)):
        ch = reply[i]
        if in_str:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return reply[start:i + 1]
    raise ReplyError("unterminated JSON object", reply)


def request_structure(
    session: ChatSession,
    user_prompt: str,
    transport: Transport | None = None,
    api_key: str | None = None,
) -> str:
    """Send the conversation plus ``user_prompt``; return the JSON text.

    The turn is appended to ``session`` only when a JSON object came back.
    """
    key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
    if not key:
        raise CredentialsMissing(f"set {API_KEY_ENV} to use a language model")
    transport = transport or https_transport()
    payload = {
        "model": session.model_id,
        "temperature": session.temperature,
        "messages": session.messages(user_prompt),
    }
    raw = _reply_text(transport(payload, key))
    text = strip_envelope(raw)
    try:
        json.loads(text)
    except ValueError as exc:
        raise ReplyError(f"reply is not valid JSON ({exc})", raw) from exc
    session.turns.append((user_prompt, text))
    return text


def replay_transport(replies: list[str]) -> Transport:
    """Transport that answers with canned assistant texts, in order."""
    queue = list(replies)

    def send(payload: dict[str, Any], api_key: str) -> str:
        if not queue:
            raise TransportError("no canned reply left")
        content = queue.pop(0)
        return json.dumps({"choices": [{"message": {"role": "assistant", "content": content}}]})

    return send
