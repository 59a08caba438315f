"""Seeded RNG derivation and deterministic JSON serialization helpers."""

import json

import numpy as np

_U64 = (1 << 64) - 1


def derive_rng(*keys: int) -> np.random.Generator:
    """Independent generator for a tuple of integer keys.

    Keys are masked to 64 bits so arbitrary Python ints are accepted; the
    stream depends on nothing but the key tuple.
    """
    return np.random.default_rng([int(k) & _U64 for k in keys])


def round9(x: float) -> float:
    """Round to 9 significant digits for platform-stable serialization."""
    return float(f"{float(x):.9g}")


def dump_json(path, obj) -> None:
    """Write JSON with a fixed layout so reruns are byte-identical."""
    with open(path, "w", encoding="ascii") as f:
        json.dump(obj, f, indent=1, sort_keys=False)
        f.write("\n")


def load_json(path):
    with open(path, "r", encoding="ascii") as f:
        return json.load(f)
