"""Block file decoding and main-chain selection.

Raw block files are a sequence of records (network magic, little-endian
payload length, payload) with optional trailing zero padding. Blocks in
the files are not height-ordered, so we index headers first and follow
``prev_hash`` links from the genesis block; stale forks and orphans are
discarded in favor of the longest stored chain.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator

from .errors import BrokenChain, MalformedBlockFile, MissingGenesis, TruncatedInput
from .wire import (
    HEADER_SIZE,
    MAINNET_MAGIC,
    Block,
    BlockHeader,
    parse_block,
    parse_block_header,
)

_LEN = struct.Struct("<I")
GENESIS_PREV = b"\x00" * 32


@dataclass
class BlockFile:
    """One raw block file, backed by a path or by in-memory bytes."""

    path: str | None = None
    data: bytes | None = None

    @classmethod
    def from_path(cls, path: str | os.PathLike) -> "BlockFile":
        return cls(path=os.fspath(path))

    @classmethod
    def from_bytes(cls, data: bytes) -> "BlockFile":
        return cls(data=data)

    def open(self) -> BinaryIO:
        if self.data is not None:
            return io.BytesIO(self.data)
        if self.path is None:
            raise ValueError("BlockFile has neither path nor data")
        return open(self.path, "rb")

    @property
    def name(self) -> str:
        return self.path if self.path is not None else "<bytes>"


@dataclass
class BlockLocation:
    """Header-index entry: where a block payload lives and how it links."""

    block_hash: bytes
    prev_hash: bytes
    timestamp: int
    file_index: int
    offset: int     # payload start within the file
    length: int     # payload length
    header: BlockHeader


def scan_block_file(blockfile: BlockFile, file_index: int,
                    magic: bytes = MAINNET_MAGIC) -> Iterator[BlockLocation]:
    """Yield header-index entries for every record in one block file.

    Only the 88 framing+header bytes of each record are read; transaction
    payloads are skipped with seeks.
    """
    with blockfile.open() as fh:
        while True:
            pos = fh.tell()
            frame = fh.read(8)
            if not frame:
                return
            if frame[:4] != magic:
                if not any(frame[:4]):
                    # Trailing zero padding; nothing further in this file.
                    return
                raise MalformedBlockFile(
                    f"{blockfile.name}: bad magic {frame[:4].hex()} at offset {pos}"
                )
            if len(frame) < 8:
                raise TruncatedInput(f"{blockfile.name}: truncated record length")
            (length,) = _LEN.unpack(frame[4:])
            header_bytes = fh.read(HEADER_SIZE)
            if length < HEADER_SIZE or len(header_bytes) < HEADER_SIZE:
                raise TruncatedInput(f"{blockfile.name}: truncated block header")
            header = parse_block_header(header_bytes)
            yield BlockLocation(
                block_hash=header.block_hash,
                prev_hash=header.prev_hash,
                timestamp=header.timestamp,
                file_index=file_index,
                offset=pos + 8,
                length=length,
                header=header,
            )
            fh.seek(pos + 8 + length)


def index_block_files(files: Iterable[BlockFile],
                      magic: bytes = MAINNET_MAGIC) -> list[BlockLocation]:
    entries: list[BlockLocation] = []
    for i, bf in enumerate(files):
        entries.extend(scan_block_file(bf, i, magic))
    return entries


def select_main_chain(entries: list[BlockLocation],
                      height_limit: int | None = None) -> list[BlockLocation]:
    """Order blocks 0..height-1 along the longest stored chain.

    Forks are resolved toward the deepest tip (ties broken by smallest
    block hash, for determinism). With a finite ``height_limit`` the chain
    must reach it; the result is truncated to exactly that many blocks.
    """
    by_hash: dict[bytes, BlockLocation] = {}
    for e in entries:
        by_hash.setdefault(e.block_hash, e)

    children: dict[bytes, list[bytes]] = {}
    genesis: BlockLocation | None = None
    for e in by_hash.values():
        if e.prev_hash == GENESIS_PREV:
            if genesis is None or e.block_hash < genesis.block_hash:
                genesis = e
        else:
            children.setdefault(e.prev_hash, []).append(e.block_hash)
    if genesis is None:
        raise MissingGenesis("no block with an all-zero prev_hash")

    # BFS from genesis; the last layer reached holds the deepest tips.
    depth: dict[bytes, int] = {genesis.block_hash: 0}
    frontier = [genesis.block_hash]
    best_tip = genesis.block_hash
    best_depth = 0
    while frontier:
        nxt = []
        for h in frontier:
            for child in children.get(h, ()):
                if child in depth:
                    continue
                d = depth[h] + 1
                depth[child] = d
                if d > best_depth or (d == best_depth and child < best_tip):
                    best_depth, best_tip = d, child
                nxt.append(child)
        frontier = nxt

    chain: list[BlockLocation] = []
    cursor = best_tip
    while True:
        loc = by_hash[cursor]
        chain.append(loc)
        if loc.prev_hash == GENESIS_PREV:
            break
        cursor = loc.prev_hash
    chain.reverse()

    if height_limit is not None:
        if len(chain) < height_limit:
            raise BrokenChain(
                f"no block extends height {len(chain) - 1}; "
                f"limit {height_limit}, stored chain has {len(chain)}"
            )
        chain = chain[:height_limit]
    return chain


def read_block(blockfile: BlockFile, loc: BlockLocation) -> Block:
    with blockfile.open() as fh:
        fh.seek(loc.offset)
        payload = fh.read(loc.length)
    if len(payload) < loc.length:
        raise TruncatedInput(f"{blockfile.name}: truncated block payload")
    block, _ = parse_block(payload)
    return block


def iter_chain_blocks(files: list[BlockFile], chain: list[BlockLocation]) -> Iterator[tuple[int, Block]]:
    """Stream (height, block) along the chain, stamping tx block heights."""
    handles: dict[int, BinaryIO] = {}
    try:
        for height, loc in enumerate(chain):
            fh = handles.get(loc.file_index)
            if fh is None:
                fh = files[loc.file_index].open()
                handles[loc.file_index] = fh
            fh.seek(loc.offset)
            payload = fh.read(loc.length)
            if len(payload) < loc.length:
                raise TruncatedInput(
                    f"{files[loc.file_index].name}: truncated block payload"
                )
            block, _ = parse_block(payload)
            for tx in block.transactions:
                tx.block_height = height
            yield height, block
    finally:
        for fh in handles.values():
            fh.close()


def build_main_chain(files: list[BlockFile], height_limit: int | None = None,
                     magic: bytes = MAINNET_MAGIC) -> list[tuple[int, Block]]:
    """Materialize the main chain as (height, block) pairs.

    Convenience wrapper over index/select/iterate for fixture-scale
    inputs; large runs should stream via ``iter_chain_blocks``.
    """
    entries = index_block_files(files, magic)
    chain = select_main_chain(entries, height_limit)
    return list(iter_chain_blocks(files, chain))
