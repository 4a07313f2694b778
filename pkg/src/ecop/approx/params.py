"""Flat parameter vectors with a named-block layout, plus checkpoint IO."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Block:
    name: str
    start: int
    stop: int
    shape: tuple


class Layout:
    def __init__(self, blocks: list[tuple[str, tuple]]):
        self.blocks: dict[str, Block] = {}
        offset = 0
        for name, shape in blocks:
            if name in self.blocks:
                raise ValueError(f"duplicate block {name!r}")
            size = int(np.prod(shape))
            self.blocks[name] = Block(name, offset, offset + size, tuple(int(n) for n in shape))
            offset += size
        self.size = offset

    def __getitem__(self, name: str) -> Block:
        return self.blocks[name]

    def __iter__(self):
        return iter(self.blocks.values())

    def __eq__(self, other):
        return isinstance(other, Layout) and list(self.blocks.values()) == list(other.blocks.values())

    def view(self, theta, name: str):
        """Slice and reshape one block; works for arrays and autodiff Vars."""
        b = self.blocks[name]
        return theta[b.start:b.stop].reshape(b.shape)

    def to_list(self) -> list:
        return [[b.name, b.start, b.stop, list(b.shape)] for b in self]

    @classmethod
    def from_list(cls, items) -> "Layout":
        layout = cls([(name, tuple(shape)) for name, _, _, shape in items])
        if layout.to_list() != [[n, s, e, list(sh)] for n, s, e, sh in items]:
            raise ValueError("inconsistent layout descriptor")
        return layout


@dataclass(frozen=True)
class ParamVector:
    """Immutable snapshot of a flat parameter vector."""

    values: np.ndarray
    layout: Layout

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.shape != (self.layout.size,):
            raise ValueError(f"expected {self.layout.size} parameters, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.layout.size

    def block(self, name: str) -> np.ndarray:
        return self.layout.view(self.values, name)

    def replace(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(values, self.layout)


def save_checkpoint(path, params: ParamVector, meta: dict) -> None:
    doc = {
        "format": "ecop-checkpoint",
        "version": 1,
        "meta": meta,
        "layout": params.layout.to_list(),
        "values": params.values.tolist(),
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_checkpoint(path) -> tuple[ParamVector, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "ecop-checkpoint":
        raise ValueError(f"{path} is not a checkpoint file")
    layout = Layout.from_list(doc["layout"])
    return ParamVector(np.array(doc["values"], dtype=np.float64), layout), doc["meta"]
