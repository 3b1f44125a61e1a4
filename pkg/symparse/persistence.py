"""
Binary model container.

Layout (little-endian throughout):

    magic        4 bytes  b"PSYM"
    version      u32      FORMAT_VERSION
    cell_size    u32
    feature_dim  u32
    root_bias    f64
    sections     TREE, SYMB, FILT, CTXT in that order, each
                 tag (4 bytes) + payload length (u64) + payload

TREE  u32 n_parts, u32 root_id; per part: u32 id, u8 level, u32 box_w, u32 box_h,
      u32 n_joints, u32 joints[n], u16 name length, utf-8 name;
      u32 n_edges; per edge u32 parent, u32 child
SYMB  u32 n_parts; per part: u32 part_id, u32 n; per symbol u32 geometric_type,
      u32 visual_category
FILT  u32 n_parts; per part: u32 part_id, u32 rows, u32 cols, f64 weights[rows*cols]
CTXT  u32 n_edges; per edge: u32 parent, u32 child, u32 n_pairs; per pair:
      u32 s_i, u32 s_j, f64 w[4], f64 bias, f64 anchor_x, f64 anchor_y, u32 count

Incompatible symbol pairs are simply absent from CTXT.
"""

from __future__ import annotations

import struct
from typing import Dict, List, Tuple

import numpy as np

from .context import ContextTable, PairContext
from .errors import ModelFormatError, ModelVersionError
from .fileio import PathLike, atomic_write_bytes
from .model import ModelParams, SymbolId
from .skeleton import Level, PartDef, SkeletonTree

MAGIC = b"PSYM"
FORMAT_VERSION = 1
SECTIONS = (b"TREE", b"SYMB", b"FILT", b"CTXT")

_LEVELS = (Level.HIGH, Level.MID, Level.JOINT)


def _u32(v: int) -> bytes:
    return struct.pack("<I", int(v))


def _f64s(values) -> bytes:
    return np.asarray(values, dtype="<f8").tobytes()


def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload


def _tree_payload(tree: SkeletonTree) -> bytes:
    out = [_u32(len(tree.parts)), _u32(tree.root_id)]
    for part in tree.parts:
        name = part.name.encode("utf-8")
        out += [
            _u32(part.part_id),
            struct.pack("<B", _LEVELS.index(part.level)),
            _u32(part.box_size[0]),
            _u32(part.box_size[1]),
            _u32(len(part.constituent_joints)),
            *(_u32(j) for j in part.constituent_joints),
            struct.pack("<H", len(name)),
            name,
        ]
    out.append(_u32(len(tree.edges)))
    out += [_u32(p) + _u32(c) for p, c in tree.edges]
    return b"".join(out)


def encode_model(params: ModelParams) -> bytes:
    tree = params.tree
    symb = [_u32(len(tree.parts))]
    filt = [_u32(len(tree.parts))]
    for part in tree.parts:
        pid = part.part_id
        syms = params.symbols[pid]
        symb.append(_u32(pid) + _u32(len(syms)))
        symb += [_u32(s.geometric_type) + _u32(s.visual_category) for s in syms]
        bank = params.filters[pid]
        filt.append(_u32(pid) + _u32(bank.shape[0]) + _u32(bank.shape[1]) + _f64s(bank.ravel()))
    ctxt = [_u32(len(params.context.edges))]
    for edge in params.context.edges:
        pairs = params.context.finite_pairs(edge)
        ctxt.append(_u32(edge[0]) + _u32(edge[1]) + _u32(len(pairs)))
        for (s_i, s_j), ctx in pairs:
            ctxt.append(
                _u32(s_i)
                + _u32(s_j)
                + _f64s([*ctx.weights, ctx.bias, ctx.anchor[0], ctx.anchor[1]])
                + _u32(ctx.count)
            )
    header = (
        MAGIC
        + _u32(FORMAT_VERSION)
        + _u32(params.cell_size)
        + _u32(params.feature_dim)
        + _f64s([params.root_bias])
    )
    payloads = (_tree_payload(tree), b"".join(symb), b"".join(filt), b"".join(ctxt))
    return header + b"".join(_section(tag, body) for tag, body in zip(SECTIONS, payloads))


class _Reader:
    def __init__(self, raw: bytes, what: str) -> None:
        self.raw = raw
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise ModelFormatError(f"truncated model file in {self.what}")
        chunk = self.raw[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64s(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64)

    def done(self) -> None:
        if self.pos != len(self.raw):
            raise ModelFormatError(f"{len(self.raw) - self.pos} trailing bytes in {self.what}")


def _read_tree(r: _Reader) -> SkeletonTree:
    n_parts, root = r.u32(), r.u32()
    parts: List[PartDef] = []
    for _ in range(n_parts):
        pid = r.u32()
        level_code = r.u8()
        if level_code >= len(_LEVELS):
            raise ModelFormatError(f"unknown part level {level_code}")
        box = (r.u32(), r.u32())
        joints = tuple(r.u32() for _ in range(r.u32()))
        name = r.take(r.u16()).decode("utf-8")
        parts.append(PartDef(pid, name, _LEVELS[level_code], box, joints))
    edges = tuple((r.u32(), r.u32()) for _ in range(r.u32()))
    r.done()
    return SkeletonTree(parts=tuple(parts), edges=edges, root_id=root)


def decode_model(raw: bytes) -> ModelParams:
    head = _Reader(raw, "header")
    if head.take(4) != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    version = head.u32()
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"model version mismatch: file has {version}, expected {FORMAT_VERSION}")
    cell_size, feature_dim = head.u32(), head.u32()
    root_bias = float(head.f64s(1)[0])
    bodies: Dict[bytes, _Reader] = {}
    for tag in SECTIONS:
        got = head.take(4)
        if got != tag:
            raise ModelFormatError(f"expected section {tag.decode()}, found {got!r}")
        bodies[tag] = _Reader(head.take(head.u64()), tag.decode())
    head.done()

    tree = _read_tree(bodies[b"TREE"])

    r = bodies[b"SYMB"]
    symbols: Dict[int, Tuple[SymbolId, ...]] = {}
    for _ in range(r.u32()):
        pid, n = r.u32(), r.u32()
        symbols[pid] = tuple(SymbolId(pid, r.u32(), r.u32()) for _ in range(n))
    r.done()

    r = bodies[b"FILT"]
    filters: Dict[int, np.ndarray] = {}
    for _ in range(r.u32()):
        pid, rows, cols = r.u32(), r.u32(), r.u32()
        filters[pid] = r.f64s(rows * cols).reshape(rows, cols)
    r.done()

    r = bodies[b"CTXT"]
    pairs: Dict[Tuple[int, int], Dict[Tuple[int, int], PairContext]] = {}
    for _ in range(r.u32()):
        edge = (r.u32(), r.u32())
        entries: Dict[Tuple[int, int], PairContext] = {}
        for _ in range(r.u32()):
            s_i, s_j = r.u32(), r.u32()
            vals = r.f64s(7)
            entries[(s_i, s_j)] = PairContext(
                weights=vals[:4].copy(), bias=float(vals[4]), anchor=(float(vals[5]), float(vals[6])), count=r.u32()
            )
        pairs[edge] = entries
    r.done()

    if sorted(pairs) != sorted(tree.edges):
        raise ModelFormatError("context edges do not match the tree")
    context = ContextTable(n_symbols={pid: len(s) for pid, s in symbols.items()}, pairs=pairs)
    return ModelParams(
        tree=tree,
        symbols=symbols,
        filters=filters,
        context=context,
        root_bias=root_bias,
        cell_size=cell_size,
        feature_dim=feature_dim,
    )


def save_model(params: ModelParams, path: PathLike) -> None:
    atomic_write_bytes(path, encode_model(params))


def load_model(path: PathLike) -> ModelParams:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model {path}: {exc}") from exc
    return decode_model(raw)
