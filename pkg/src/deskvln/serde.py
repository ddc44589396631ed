"""Small helpers for deterministic file output and seeded randomness."""
from __future__ import annotations

import hashlib
import json
import os
import random
from typing import Any


def dumps_compact(obj: Any) -> str:
    # Insertion order of dict keys is the canonical field order; floats go
    # through repr so a load/dump cycle is byte-identical.
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True)


def dump_jsonl(records: list[dict]) -> str:
    return "".join(dumps_compact(r) + "\n" for r in records)


def load_jsonl(text: str) -> list[dict]:
    out = []
    for line in text.splitlines():
        if line.strip():
            out.append(json.loads(line))
    return out


def atomic_write_text(path: str, text: str) -> None:
    """Write then rename, so readers never observe a partial file."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def stable_rng(root_seed: int, *names: str) -> random.Random:
    """Named sub-generator: the same (root seed, names) always yields the
    same stream, independent of scheduling or worker count."""
    key = "/".join([str(root_seed), *names]).encode("utf-8")
    digest = hashlib.sha256(key).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def stable_seed(root_seed: int, *names: str) -> int:
    key = "/".join([str(root_seed), *names]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")
