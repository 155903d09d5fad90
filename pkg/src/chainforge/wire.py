"""Wire-format primitives: compact sizes, transactions, block headers, blocks.

All hashes are kept in internal byte order (as they appear on the wire).
Use ``txid_hex`` / ``hash_hex`` style helpers for the conventional
reversed-hex display form.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

from .errors import MalformedTransaction, TruncatedInput

MAINNET_MAGIC = bytes.fromhex("f9beb4d9")
COINBASE_PREV_TXID = b"\x00" * 32
COINBASE_PREV_VOUT = 0xFFFFFFFF
MAX_SATOSHIS = 2_100_000_000_000_000  # 21M BTC in satoshis

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_I32 = struct.Struct("<i")
_OUTPOINT = struct.Struct("<32sI")


def double_sha256(data: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def decode_compact_size(buf: bytes, offset: int = 0) -> tuple[int, int]:
    """Decode a compact-size integer at ``offset``.

    Returns ``(value, consumed)`` where ``consumed`` counts the encoding
    bytes (1, 3, 5, or 9).
    """
    if offset >= len(buf):
        raise TruncatedInput("compact size: empty slice")
    first = buf[offset]
    if first < 0xFD:
        return first, 1
    if first == 0xFD:
        width, consumed, unpack = 2, 3, _U16.unpack_from
    elif first == 0xFE:
        width, consumed, unpack = 4, 5, _U32.unpack_from
    else:
        width, consumed, unpack = 8, 9, _U64.unpack_from
    if offset + 1 + width > len(buf):
        raise TruncatedInput("compact size: truncated payload")
    return unpack(buf, offset + 1)[0], consumed


def encode_compact_size(value: int) -> bytes:
    if value < 0xFD:
        return bytes([value])
    if value <= 0xFFFF:
        return b"\xfd" + _U16.pack(value)
    if value <= 0xFFFFFFFF:
        return b"\xfe" + _U32.pack(value)
    return b"\xff" + _U64.pack(value)


@dataclass
class TxInput:
    prev_txid: bytes
    prev_vout: int
    unlock_script: bytes
    sequence: int


@dataclass
class TxOutput:
    value: int
    lock_script: bytes


@dataclass
class RawTransaction:
    version: int
    inputs: list[TxInput]
    outputs: list[TxOutput]
    locktime: int
    # One byte-stack list per input when the tx was serialized in witness
    # form; None for legacy form. All-empty stacks still round-trip.
    witness: list[list[bytes]] | None = None
    txid: bytes = b""
    block_height: int = 0

    @property
    def is_coinbase(self) -> bool:
        return (
            len(self.inputs) == 1
            and self.inputs[0].prev_txid == COINBASE_PREV_TXID
            and self.inputs[0].prev_vout == COINBASE_PREV_VOUT
        )

    @property
    def txid_hex(self) -> str:
        return self.txid[::-1].hex()

    def serialize(self, include_witness: bool = True) -> bytes:
        parts = [_I32.pack(self.version)]
        has_witness = include_witness and self.witness is not None
        if has_witness:
            parts.append(b"\x00\x01")
        parts.append(encode_compact_size(len(self.inputs)))
        for txin in self.inputs:
            parts.append(_OUTPOINT.pack(txin.prev_txid, txin.prev_vout))
            parts.append(encode_compact_size(len(txin.unlock_script)))
            parts.append(txin.unlock_script)
            parts.append(_U32.pack(txin.sequence))
        parts.append(encode_compact_size(len(self.outputs)))
        for txout in self.outputs:
            parts.append(_U64.pack(txout.value))
            parts.append(encode_compact_size(len(txout.lock_script)))
            parts.append(txout.lock_script)
        if has_witness:
            for stack in self.witness:
                parts.append(encode_compact_size(len(stack)))
                for item in stack:
                    parts.append(encode_compact_size(len(item)))
                    parts.append(item)
        parts.append(_U32.pack(self.locktime))
        return b"".join(parts)

    def compute_txid(self) -> bytes:
        """Txid over the legacy serialization; witness data never contributes."""
        return double_sha256(self.serialize(include_witness=False))


def parse_transaction(buf: bytes, offset: int = 0) -> tuple[RawTransaction, int]:
    """Parse one serialized transaction starting at ``offset``.

    Handles both legacy and witness (marker 0x00, flag 0x01) forms.
    Returns the transaction and the number of bytes consumed.
    """
    start = offset
    n = len(buf)
    if offset + 4 > n:
        raise TruncatedInput("transaction: version")
    version = _I32.unpack_from(buf, offset)[0]
    offset += 4

    witness_form = False
    if offset < n and buf[offset] == 0x00:
        # Legacy transactions always have >= 1 input, so a zero byte here
        # can only be the segwit marker.
        if offset + 2 > n:
            raise TruncatedInput("transaction: marker/flag")
        if buf[offset + 1] != 0x01:
            raise MalformedTransaction(
                f"witness flag 0x{buf[offset + 1]:02x} != 0x01"
            )
        witness_form = True
        offset += 2

    in_count, used = decode_compact_size(buf, offset)
    offset += used
    if in_count == 0:
        raise MalformedTransaction("zero inputs")
    inputs = []
    for _ in range(in_count):
        if offset + 36 > n:
            raise TruncatedInput("transaction: outpoint")
        prev_txid, prev_vout = _OUTPOINT.unpack_from(buf, offset)
        offset += 36
        script_len, used = decode_compact_size(buf, offset)
        offset += used
        if offset + script_len + 4 > n:
            raise TruncatedInput("transaction: input script")
        unlock_script = buf[offset:offset + script_len]
        offset += script_len
        sequence = _U32.unpack_from(buf, offset)[0]
        offset += 4
        inputs.append(TxInput(prev_txid, prev_vout, unlock_script, sequence))

    out_count, used = decode_compact_size(buf, offset)
    offset += used
    outputs = []
    for _ in range(out_count):
        if offset + 8 > n:
            raise TruncatedInput("transaction: output value")
        value = _U64.unpack_from(buf, offset)[0]
        offset += 8
        script_len, used = decode_compact_size(buf, offset)
        offset += used
        if offset + script_len > n:
            raise TruncatedInput("transaction: output script")
        outputs.append(TxOutput(value, buf[offset:offset + script_len]))
        offset += script_len

    witness = None
    if witness_form:
        witness = []
        for _ in range(in_count):
            item_count, used = decode_compact_size(buf, offset)
            offset += used
            stack = []
            for _ in range(item_count):
                item_len, used = decode_compact_size(buf, offset)
                offset += used
                if offset + item_len > n:
                    raise TruncatedInput("transaction: witness item")
                stack.append(buf[offset:offset + item_len])
                offset += item_len
            witness.append(stack)

    if offset + 4 > n:
        raise TruncatedInput("transaction: locktime")
    locktime = _U32.unpack_from(buf, offset)[0]
    offset += 4

    tx = RawTransaction(version, inputs, outputs, locktime, witness)
    if witness_form:
        tx.txid = double_sha256(tx.serialize(include_witness=False))
    else:
        tx.txid = double_sha256(buf[start:offset])
    return tx, offset - start


HEADER_SIZE = 80
_HEADER = struct.Struct("<i32s32sIII")


@dataclass
class BlockHeader:
    version: int
    prev_hash: bytes
    merkle_root: bytes
    timestamp: int
    bits: int
    nonce: int

    def serialize(self) -> bytes:
        return _HEADER.pack(
            self.version, self.prev_hash, self.merkle_root,
            self.timestamp, self.bits, self.nonce,
        )

    @property
    def block_hash(self) -> bytes:
        return double_sha256(self.serialize())

    @property
    def hash_hex(self) -> str:
        return self.block_hash[::-1].hex()


def parse_block_header(buf: bytes, offset: int = 0) -> BlockHeader:
    if offset + HEADER_SIZE > len(buf):
        raise TruncatedInput("block header")
    return BlockHeader(*_HEADER.unpack_from(buf, offset))


@dataclass
class Block:
    header: BlockHeader
    transactions: list[RawTransaction] = field(default_factory=list)

    @property
    def block_hash(self) -> bytes:
        return self.header.block_hash

    def serialize(self) -> bytes:
        parts = [self.header.serialize(), encode_compact_size(len(self.transactions))]
        parts.extend(tx.serialize() for tx in self.transactions)
        return b"".join(parts)


def parse_block(buf: bytes, offset: int = 0) -> tuple[Block, int]:
    """Parse a full block (header + transactions) starting at ``offset``."""
    start = offset
    header = parse_block_header(buf, offset)
    offset += HEADER_SIZE
    tx_count, used = decode_compact_size(buf, offset)
    offset += used
    transactions = []
    for _ in range(tx_count):
        tx, consumed = parse_transaction(buf, offset)
        offset += consumed
        transactions.append(tx)
    return Block(header, transactions), offset - start


def merkle_root(txids: list[bytes]) -> bytes:
    """Merkle root over txids in internal byte order (duplicates last on odd)."""
    if not txids:
        return b"\x00" * 32
    level = list(txids)
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [
            double_sha256(level[i] + level[i + 1])
            for i in range(0, len(level), 2)
        ]
    return level[0]
