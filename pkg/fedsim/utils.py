from __future__ import annotations

import hashlib
import json
import math
from typing import Any

import numpy as np


def _part_to_int(part: Any) -> int:
    if isinstance(part, (int, np.integer)) and not isinstance(part, bool):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.blake2b(str(part).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(*parts: Any) -> np.random.SeedSequence:
    """Sequência de sementes estável a partir de ints e strings (ids de cliente, rodadas...).

    Strings passam por blake2b, nunca por `hash()`: o resultado não depende
    do PYTHONHASHSEED nem do processo.
    """
    return np.random.SeedSequence([_part_to_int(p) for p in parts])


def make_rng(*parts: Any) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_jsonable)


def config_hash(data: dict) -> str:
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    raise TypeError(f"não serializável em JSON: {type(value).__name__}")


def to_jsonable(value: Any) -> Any:
    return json.loads(json.dumps(value, default=_jsonable))
