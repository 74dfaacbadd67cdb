"""Rule-keyed learnable modules and tree-shaped composition.

One module per production rule (key "LHS -> A B"), plus one per POS tag at
the bottom layer. A module maps the concatenation of its constituents'
embeddings, shape (1, fan_in * dim), to a (1, dim) output.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import autodiff
from .autodiff import Node, Tape
from .errors import CheckpointError, LeafCountMismatch, MissingModule, ShapeMismatch
from .trees import ProductionRule, Tree


class Architecture(str, Enum):
    """Internal module architecture: one affine map, affine + ReLU, or
    affine + ReLU + affine."""

    LINEAR = "linear"
    NONLIN = "nonlin"
    DOUBLE = "double"


_ARCH_TAGS = {Architecture.LINEAR: 0, Architecture.NONLIN: 1, Architecture.DOUBLE: 2}
_TAG_ARCHS = {v: k for k, v in _ARCH_TAGS.items()}


@dataclass
class ModuleParams:
    """Weights of one module. ``w1`` is (dim, fan_in*dim); the double
    architecture adds a (dim, dim) second layer. Hidden width equals dim."""

    rule_key: str
    arch: Architecture
    fan_in: int
    dim: int
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray | None = None
    b2: np.ndarray | None = None

    def parameter_count(self) -> int:
        count = self.w1.size + self.b1.size
        if self.w2 is not None:
            count += self.w2.size + self.b2.size
        return count

    def parameters(self) -> dict:
        out = {(self.rule_key, "w1"): self.w1, (self.rule_key, "b1"): self.b1}
        if self.w2 is not None:
            out[(self.rule_key, "w2")] = self.w2
            out[(self.rule_key, "b2")] = self.b2
        return out

    def set_parameters(self, params: dict) -> None:
        self.w1 = params[(self.rule_key, "w1")]
        self.b1 = params[(self.rule_key, "b1")]
        if self.w2 is not None:
            self.w2 = params[(self.rule_key, "w2")]
            self.b2 = params[(self.rule_key, "b2")]


def _derived_rng(rule_key: str, seed: int) -> np.random.Generator:
    # hash of (seed, rule_key) so init is independent of encounter order
    digest = hashlib.blake2b(f"{seed}\x00{rule_key}".encode(), digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


def init_module(rule_key: str, fan_in: int, arch: Architecture, dim: int, seed: int) -> ModuleParams:
    """Uniform(-1/sqrt(fan), +1/sqrt(fan)) weights, zero biases,
    deterministic in (rule_key, seed)."""
    if fan_in < 1 or dim < 1:
        raise ValueError("fan_in and dim must be >= 1")
    rng = _derived_rng(rule_key, seed)
    in_dim = fan_in * dim
    bound1 = 1.0 / np.sqrt(in_dim)
    w1 = rng.uniform(-bound1, bound1, size=(dim, in_dim))
    b1 = np.zeros((1, dim))
    w2 = b2 = None
    if arch is Architecture.DOUBLE:
        bound2 = 1.0 / np.sqrt(dim)
        w2 = rng.uniform(-bound2, bound2, size=(dim, dim))
        b2 = np.zeros((1, dim))
    return ModuleParams(rule_key, arch, fan_in, dim, w1, b1, w2, b2)


def module_forward(params: ModuleParams, x: Node, tape: Tape) -> Node:
    """Apply one module on the tape; input length must be fan_in * dim."""
    if x.value.shape != (1, params.fan_in * params.dim):
        raise ShapeMismatch(
            f"module {params.rule_key!r} expects (1, {params.fan_in * params.dim}), "
            f"got {x.value.shape}"
        )
    w1 = tape.parameter(params.w1, (params.rule_key, "w1"))
    b1 = tape.parameter(params.b1, (params.rule_key, "b1"))
    h = autodiff.affine(w1, b1, x, tape)
    if params.arch is Architecture.LINEAR:
        return h
    h = autodiff.relu(h, tape)
    if params.arch is Architecture.NONLIN:
        return h
    w2 = tape.parameter(params.w2, (params.rule_key, "w2"))
    b2 = tape.parameter(params.b2, (params.rule_key, "b2"))
    return autodiff.affine(w2, b2, h, tape)


def module_apply(params: ModuleParams, x: np.ndarray) -> np.ndarray:
    """Tape-free forward pass, for evaluation paths that need no gradients."""
    if x.shape != (1, params.fan_in * params.dim):
        raise ShapeMismatch(
            f"module {params.rule_key!r} expects (1, {params.fan_in * params.dim}), "
            f"got {x.shape}"
        )
    h = x @ params.w1.T + params.b1
    if params.arch is Architecture.LINEAR:
        return h
    h = np.maximum(h, 0.0)
    if params.arch is Architecture.NONLIN:
        return h
    return h @ params.w2.T + params.b2


@dataclass
class ModuleRegistry:
    """All modules of one model; members share ``dim`` and ``arch``.

    ``pos_layer`` controls whether leaf embeddings pass through POS-tag
    modules before composition.
    """

    dim: int
    arch: Architecture
    seed: int = 0
    pos_layer: bool = True
    modules: dict = field(default_factory=dict)

    def get(self, rule_key: str) -> ModuleParams:
        try:
            return self.modules[rule_key]
        except KeyError:
            raise MissingModule(rule_key) from None

    def get_or_create(self, rule_key: str, fan_in: int) -> ModuleParams:
        mod = self.modules.get(rule_key)
        if mod is None:
            mod = init_module(rule_key, fan_in, self.arch, self.dim, self.seed)
            self.modules[rule_key] = mod
        return mod

    def count_parameters(self) -> int:
        return sum(m.parameter_count() for m in self.modules.values())

    def parameters(self) -> dict:
        out: dict = {}
        for mod in self.modules.values():
            out.update(mod.parameters())
        return out

    def apply_updates(self, params: dict) -> None:
        """Write back a (possibly partial) keyed parameter dict."""
        touched = {key[0] for key in params}
        for rule_key in touched:
            mod = self.modules[rule_key]
            current = mod.parameters()
            current.update({k: v for k, v in params.items() if k[0] == rule_key})
            mod.set_parameters(current)


def compose_sentence(
    tree: Tree,
    word_embeddings: list,
    registry: ModuleRegistry,
    tape: Tape,
    strict: bool = False,
) -> Node:
    """Bottom-up evaluation of a sentence's module net on the tape.

    ``word_embeddings`` are (1, dim) vectors in left-to-right leaf order.
    Missing modules raise MissingModule when ``strict``; otherwise they are
    initialized lazily and added to the registry.
    """
    n_leaves = len(tree.leaves())
    if len(word_embeddings) != n_leaves:
        raise LeafCountMismatch(
            f"{len(word_embeddings)} embeddings for {n_leaves} leaves"
        )
    embeddings = [autodiff.as_tensor(v) for v in word_embeddings]
    for vec in embeddings:
        if vec.shape != (1, registry.dim):
            raise ShapeMismatch(
                f"word embedding shape {vec.shape}, expected (1, {registry.dim})"
            )
    cursor = iter(embeddings)

    def lookup(rule_key: str, fan_in: int) -> ModuleParams:
        if strict:
            return registry.get(rule_key)
        return registry.get_or_create(rule_key, fan_in)

    def rec(node: Tree) -> Node:
        if node.is_preterminal:
            leaf = tape.constant(next(cursor))
            if not registry.pos_layer:
                return leaf
            return module_forward(lookup(node.label, 1), leaf, tape)
        outputs = [rec(child) for child in node.children]
        rule = ProductionRule(node.label, tuple(c.label for c in node.children))
        x = autodiff.concat(outputs, tape)
        return module_forward(lookup(rule.text, len(outputs)), x, tape)

    return rec(tree)


# ---------------------------------------------------------------------------
# checkpoint format: little-endian binary
#   magic "SYNM", version u32, arch tag u8, dim u32, module count u32;
#   per module: key length u16 + UTF-8 key, fan_in u16,
#   then w1, b1 (, w2, b2) as row-major f32.

_MAGIC = b"SYNM"
_VERSION = 1


def save_checkpoint(registry: ModuleRegistry, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IBII", _VERSION, _ARCH_TAGS[registry.arch],
                             registry.dim, len(registry.modules)))
        for rule_key in sorted(registry.modules):
            mod = registry.modules[rule_key]
            key_bytes = rule_key.encode("utf-8")
            fh.write(struct.pack("<H", len(key_bytes)))
            fh.write(key_bytes)
            fh.write(struct.pack("<H", mod.fan_in))
            arrays = [mod.w1, mod.b1]
            if mod.arch is Architecture.DOUBLE:
                arrays += [mod.w2, mod.b2]
            for arr in arrays:
                fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path, pos_layer: bool | None = None) -> ModuleRegistry:
    """Load a registry; f32 payloads are widened to f64.

    ``pos_layer`` defaults to inferring from the keys: any key that is not a
    production text means POS modules were in use.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    version, arch_tag, dim, count = struct.unpack_from("<IBII", blob, 4)
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    if arch_tag not in _TAG_ARCHS:
        raise CheckpointError(f"{path}: unknown architecture tag {arch_tag}")
    arch = _TAG_ARCHS[arch_tag]
    offset = 4 + struct.calcsize("<IBII")
    modules: dict = {}
    for _ in range(count):
        (key_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        rule_key = blob[offset:offset + key_len].decode("utf-8")
        offset += key_len
        (fan_in,) = struct.unpack_from("<H", blob, offset)
        offset += 2

        def take(rows, cols):
            nonlocal offset
            n = rows * cols
            arr = np.frombuffer(blob, dtype="<f4", count=n, offset=offset)
            offset += 4 * n
            return arr.astype(np.float64).reshape(rows, cols)

        w1 = take(dim, fan_in * dim)
        b1 = take(1, dim)
        w2 = b2 = None
        if arch is Architecture.DOUBLE:
            w2 = take(dim, dim)
            b2 = take(1, dim)
        modules[rule_key] = ModuleParams(rule_key, arch, fan_in, dim, w1, b1, w2, b2)
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    if pos_layer is None:
        pos_layer = not modules or any(" -> " not in key for key in modules)
    return ModuleRegistry(dim=dim, arch=arch, seed=0, pos_layer=pos_layer, modules=modules)
