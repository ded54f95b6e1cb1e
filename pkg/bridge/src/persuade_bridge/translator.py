"""Translator side of the JSON-lines bridge protocol.

The server emits one handshake line (tool kind, model id, version, supported
directions), then answers each {"text", "source", "target"} request with
{"text": ...} or {"error": ...}.  Malformed or undeclared requests produce
error objects; the process stays alive until stdin closes.  One request is
in flight at a time; run multiple processes for parallelism.
"""

from __future__ import annotations

import json
import sys
from typing import IO, Callable

from persuade_bridge import BridgeError, __version__
from persuade_bridge.wire import ISO_CODES


def echo_translate(text: str, source: str, target: str) -> str:
    return text


def tag_translate(text: str, source: str, target: str) -> str:
    return f"({source}>{target}) {text}"


def marian_translate_factory() -> Callable[[str, str, str], str]:
    """Front the public MarianMT checkpoints, one per direction, lazily."""
    try:
        from transformers import MarianMTModel, MarianTokenizer
    except ImportError as exc:
        raise BridgeError(
            "transformers is not installed; use --mode echo/tag or install persuade-bridge[hf]"
        ) from exc

    cache: dict[tuple[str, str], tuple] = {}

    def translate(text: str, source: str, target: str) -> str:
        key = (source, target)
        if key not in cache:
            name = f"Helsinki-NLP/opus-mt-{ISO_CODES[source]}-{ISO_CODES[target]}"
            try:
                cache[key] = (MarianTokenizer.from_pretrained(name), MarianMTModel.from_pretrained(name))
            except Exception as exc:
                raise BridgeError(f"cannot load MT model {name!r}: {exc}") from exc
        tokenizer, model = cache[key]
        batch = tokenizer([text], return_tensors="pt", truncation=True)
        generated = model.generate(**batch)
        return tokenizer.decode(generated[0], skip_special_tokens=True)

    return translate


MODES: dict[str, Callable[[], Callable[[str, str, str], str]]] = {
    "echo": lambda: echo_translate,
    "tag": lambda: tag_translate,
    "marian": marian_translate_factory,
}


def serve_translation(
    directions: frozenset[tuple[str, str]],
    mode: str = "echo",
    model_id: str | None = None,
    stdin: IO[str] | None = None,
    stdout: IO[str] | None = None,
) -> int:
    """Run the protocol loop; returns the number of successful translations."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    if mode not in MODES:
        raise BridgeError(f"unknown mode {mode!r}; expected one of {sorted(MODES)}")
    translate = MODES[mode]()

    handshake = {
        "tool": "translator",
        "model": model_id or f"{mode}-translator",
        "version": __version__,
        "directions": sorted([s, t] for s, t in directions),
    }
    stdout.write(json.dumps(handshake, ensure_ascii=False) + "\n")
    stdout.flush()

    served = 0
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            text = request["text"]
            source, target = request["source"], request["target"]
        except (json.JSONDecodeError, KeyError, TypeError):
            stdout.write(json.dumps({"error": "malformed request"}) + "\n")
            stdout.flush()
            continue
        if (source, target) not in directions:
            stdout.write(
                json.dumps({"error": f"direction {source}->{target} not declared"}) + "\n"
            )
            stdout.flush()
            continue
        try:
            result = translate(text, source, target)
            if not result:
                raise BridgeError("empty translation")
            stdout.write(json.dumps({"text": result}, ensure_ascii=False) + "\n")
            served += 1
        except BridgeError as exc:
            stdout.write(json.dumps({"error": str(exc)}) + "\n")
        stdout.flush()
    return served
