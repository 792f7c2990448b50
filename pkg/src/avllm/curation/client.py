"""Generation clients: an HTTP service client and an offline deterministic mock."""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
import urllib.error
import urllib.request
from typing import Protocol

import numpy as np

from ..config import ClientConfig


class TransportError(RuntimeError):
    """The service could not be reached after all retries; safe to retry later."""

    retryable = True


class GenerationClient(Protocol):
    def complete(self, prompt: str, max_tokens: int) -> str: ...


class HTTPClient:
    """POST {"prompt", "max_tokens"} and read {"text"}; bearer token from an env var."""

    def __init__(self, cfg: ClientConfig, sleep=time.sleep):
        self.cfg = cfg
        self.sleep = sleep

    def _request(self, prompt: str, max_tokens: int) -> urllib.request.Request:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.cfg.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = json.dumps({"prompt": prompt, "max_tokens": max_tokens}).encode()
        return urllib.request.Request(self.cfg.endpoint, data=body, headers=headers, method="POST")

    def complete(self, prompt: str, max_tokens: int) -> str:
        last: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            try:
                with urllib.request.urlopen(self._request(prompt, max_tokens), timeout=self.cfg.timeout) as resp:
                    doc = json.loads(resp.read().decode())
                if not isinstance(doc, dict) or not isinstance(doc.get("text"), str):
                    raise ValueError(f"service reply lacks a string 'text' field: {str(doc)[:200]}")
                return doc["text"]
            except urllib.error.HTTPError as e:
                if e.code < 500 and e.code != 429:
                    raise TransportError(f"service rejected the request with HTTP {e.code}") from e
                last = e
            except (urllib.error.URLError, TimeoutError, ConnectionError) as e:
                last = e
            if attempt < self.cfg.max_retries:
                self.sleep(0.5 * 2**attempt)
        raise TransportError(f"generation service unreachable after {self.cfg.max_retries + 1} attempts: {last}")


# -- mock --------------------------------------------------------------------

_FRAME = re.compile(r"^frame \d+: (.+)$", re.MULTILINE)
_SEGMENT = re.compile(r"^segment \d+: (.+)$", re.MULTILINE)
_OBJ = re.compile(r"^(?:a|an|the) (.+?)(?: (?:on|in) the (\w+))?$")
_SOUND = re.compile(r"^(?:a|an|the) (.+?) sound$")


def _seeded_rng(seed: int, prompt: str) -> np.random.Generator:
    h = hashlib.sha256(f"{seed}\x00{prompt}".encode()).digest()
    return np.random.default_rng(int.from_bytes(h[:8], "little"))


def _place(where: str) -> str:
    return "in the center" if where == "center" else f"on the {where}"


def _norm_words(s: str) -> set[str]:
    return set(re.sub(r"[^\w\s]", " ", s.lower()).split()) - {"a", "an", "the"}


class MockClient:
    """Offline stand-in for the generation service, deterministic per (seed, prompt).

    It reads the CONTEXT caption lines, picks the task from the REQUIREMENT
    wording, and answers judge prompts from word overlap.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.calls = 0

    def complete(self, prompt: str, max_tokens: int) -> str:
        self.calls += 1
        rng = _seeded_rng(self.seed, prompt)
        if "Reply with a single integer" in prompt:
            return self._judge(prompt)
        frames = _FRAME.findall(prompt)
        segments = _SEGMENT.findall(prompt)
        obj, start, end = self._visual(frames)
        sound = self._sound(segments)
        if "multi-turn conversation" in prompt:
            return self._conversation(rng, obj, start, end, sound, len(segments))
        if "needs reasoning" in prompt:
            return self._reasoning(rng, obj, start, end, sound)
        return self._caption(obj, start, end, sound)

    @staticmethod
    def _visual(frames: list[str]):
        if not frames:
            return None, None, None
        m0, m1 = _OBJ.match(frames[0].strip()), _OBJ.match(frames[-1].strip())
        obj = m0.group(1) if m0 else frames[0].strip().rstrip(".")
        return obj, (m0.group(2) if m0 else None), (m1.group(2) if m1 else None)

    @staticmethod
    def _sound(segments: list[str]):
        if not segments:
            return None
        m = _SOUND.match(segments[0].strip())
        return m.group(1) if m else segments[0].strip().rstrip(".")

    @staticmethod
    def _conversation(rng, obj, start, end, sound, k) -> str:
        if obj and sound:
            first = ("What is shown and heard?", f"{obj} and {sound}")
        elif obj:
            first = ("What object is shown?", obj)
        else:
            first = ("What sound is heard?", sound)
        follow = []
        if obj and start:
            follow.append(("Where is it at the start?", f"{_place(start)}."))
        if obj and end:
            follow.append(("Where is it at the end?", f"{_place(end)}."))
        if sound:
            follow.append(("Does the sound change?", "no, it stays steady."))
            follow.append(("How many segments contain the sound?", f"{k}."))
        turns = [first]
        if follow:
            turns.append(follow[int(rng.integers(len(follow)))])
        return "\n".join(f"HUMAN: {q}\nASSISTANT: {a}" for q, a in turns)

    @staticmethod
    def _reasoning(rng, obj, start, end, sound) -> str:
        if obj and sound:
            q, a = f"Could the {sound} come from the {obj}?", f"they appear together, so the {sound} may come from the {obj}."
        elif obj:
            moved = start is not None and end is not None and start != end
            q = f"Is the {obj} moving?"
            a = f"yes, it starts on the {start} and ends on the {end}, so it moves." if moved else "it stays in one place, so it may be still."
        else:
            q, a = f"Why does the {sound} sound steady?", f"a {sound} keeps one pitch, so the tone does not change."
        return f"HUMAN: {q}\nASSISTANT: {a}"

    @staticmethod
    def _caption(obj, start, end, sound) -> str:
        parts = []
        if obj:
            parts.append(f"a {obj} moves from the {start} to the {end}" if start and end else f"a {obj} appears")
        if sound:
            parts.append(f"a {sound} sound plays")
        return " while ".join(parts) + "."

    @staticmethod
    def _judge(prompt: str) -> str:
        ref = re.search(r"^Reference answer: (.*)$", prompt, re.MULTILINE)
        pred = re.search(r"^Predicted answer: (.*)$", prompt, re.MULTILINE)
        r, p = _norm_words(ref.group(1) if ref else ""), _norm_words(pred.group(1) if pred else "")
        if r and r == p:
            return "5"
        return "3" if r & p else "1"


def make_client(cfg: ClientConfig, mock: bool, seed: int = 0) -> GenerationClient:
    return MockClient(seed) if mock else HTTPClient(cfg)
