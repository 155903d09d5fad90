"""Input resolution and the intermediate transaction streams.

Walking the main chain in order, every value-bearing output registers
its locking script (dense slots in first-appearance order) and parks
(value, slot) in the UTXO set; inputs pop their funding entry. Zero-value
outputs are tracked only so their later spend resolves, but carry no
script and are dropped from resolved inputs.

Two framed binary files decouple the pipeline stages: a transaction
stream (height + raw bytes per transaction, in chain order) and a
resolved stream (per transaction: height, filter flags, and the
(value, slot) pairs of its inputs and outputs).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator

from .errors import TruncatedInput, UnresolvedInput
from .filters import CoinJoinConfig, ColoredProtocol, evaluate
from .script import script_id
from .wire import RawTransaction, parse_transaction

_TX_FRAME = struct.Struct("<II")           # height, payload length
_RESOLVED_HEAD = struct.Struct("<IBII")    # height, flags, n_in, n_out
_PAIR = struct.Struct("<qq")               # value, slot

FLAG_COINBASE = 1
FLAG_COINJOIN = 2
FLAG_COLORED = 4


class ScriptRegistry:
    """Dense slot per canonical script id, in first-appearance order."""

    __slots__ = ("ids", "index")

    def __init__(self) -> None:
        self.ids: list[bytes] = []
        self.index: dict[bytes, int] = {}

    def __len__(self) -> int:
        return len(self.ids)

    def slot_for(self, sid: bytes) -> int:
        slot = self.index.get(sid)
        if slot is None:
            slot = len(self.ids)
            self.index[sid] = slot
            self.ids.append(sid)
        return slot

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            for sid in self.ids:
                fh.write(sid)

    @classmethod
    def load(cls, path) -> "ScriptRegistry":
        with open(path, "rb") as fh:
            data = fh.read()
        if len(data) % 33:
            raise TruncatedInput(f"{path}: not a multiple of 33 bytes")
        reg = cls()
        reg.ids = [data[i:i + 33] for i in range(0, len(data), 33)]
        reg.index = {sid: slot for slot, sid in enumerate(reg.ids)}
        return reg


class UtxoSet:
    """Unspent (txid, vout) → (value, slot); spending pops the entry."""

    __slots__ = ("_live",)

    def __init__(self) -> None:
        self._live: dict[bytes, tuple[int, int]] = {}

    def __len__(self) -> int:
        return len(self._live)

    @staticmethod
    def _key(txid: bytes, vout: int) -> bytes:
        return txid + vout.to_bytes(4, "little")

    def add(self, txid: bytes, vout: int, value: int, slot: int) -> None:
        self._live[self._key(txid, vout)] = (value, slot)

    def spend(self, txid: bytes, vout: int) -> tuple[int, int]:
        entry = self._live.pop(self._key(txid, vout), None)
        if entry is None:
            raise UnresolvedInput(
                f"spend of unknown output {txid[::-1].hex()}:{vout}")
        return entry


@dataclass
class ResolvedTx:
    height: int
    is_coinbase: bool
    coinjoin: bool
    colored: bool
    inputs: list[tuple[int, int]]    # (value, slot), zero-value spends dropped
    outputs: list[tuple[int, int]]   # (value, slot), zero-value outputs dropped

    @property
    def excluded(self) -> bool:
        return self.coinjoin or self.colored


def resolve_stream(txs: Iterable[tuple[int, RawTransaction]],
                   registry: ScriptRegistry,
                   utxo: UtxoSet,
                   coinjoin_cfg: CoinJoinConfig | None = None,
                   colored: tuple[str, ...] = ("open_assets", "omni", "epobc"),
                   ) -> Iterator[ResolvedTx]:
    """Resolve a (height, transaction) stream in chain order."""
    cj_cfg = coinjoin_cfg if coinjoin_cfg is not None else CoinJoinConfig()
    protocols = tuple(ColoredProtocol[name] for name in colored)
    for height, tx in txs:
        if tx.is_coinbase:
            inputs: list[tuple[int, int]] = []
        else:
            inputs = []
            for txin in tx.inputs:
                value, slot = utxo.spend(txin.prev_txid, txin.prev_vout)
                if slot >= 0:
                    inputs.append((value, slot))

        txid = tx.txid
        outputs: list[tuple[int, int]] = []
        for vout, txo in enumerate(tx.outputs):
            if txo.value > 0:
                slot = registry.slot_for(script_id(txo.lock_script))
                utxo.add(txid, vout, txo.value, slot)
                outputs.append((txo.value, slot))
            else:
                utxo.add(txid, vout, 0, -1)

        verdict = evaluate(tx, cj_cfg, [slot for _, slot in inputs],
                           enabled_colored=protocols)
        yield ResolvedTx(height, tx.is_coinbase, verdict.is_coinjoin,
                         verdict.colored_protocol != 0, inputs, outputs)


# -- framed streams -----------------------------------------------------------


def write_tx_frame(fh: BinaryIO, height: int, raw: bytes) -> None:
    fh.write(_TX_FRAME.pack(height, len(raw)))
    fh.write(raw)


def iter_tx_frames(path, parse: bool = True,
                   ) -> Iterator[tuple[int, "RawTransaction | bytes"]]:
    """Yield (height, transaction) from a transaction stream file.

    With ``parse`` false the raw payload bytes are yielded instead.
    """
    with open(path, "rb") as fh:
        while True:
            head = fh.read(_TX_FRAME.size)
            if not head:
                return
            if len(head) < _TX_FRAME.size:
                raise TruncatedInput(f"{path}: torn frame header")
            height, length = _TX_FRAME.unpack(head)
            raw = fh.read(length)
            if len(raw) < length:
                raise TruncatedInput(f"{path}: torn frame payload")
            if parse:
                tx, consumed = parse_transaction(raw)
                if consumed != length:
                    raise TruncatedInput(
                        f"{path}: frame at height {height} has trailing bytes")
                tx.block_height = height
                yield height, tx
            else:
                yield height, raw


def write_resolved(fh: BinaryIO, rtx: ResolvedTx) -> None:
    flags = (FLAG_COINBASE * rtx.is_coinbase
             | FLAG_COINJOIN * rtx.coinjoin
             | FLAG_COLORED * rtx.colored)
    fh.write(_RESOLVED_HEAD.pack(rtx.height, flags,
                                 len(rtx.inputs), len(rtx.outputs)))
    for value, slot in rtx.inputs:
        fh.write(_PAIR.pack(value, slot))
    for value, slot in rtx.outputs:
        fh.write(_PAIR.pack(value, slot))


def iter_resolved(path) -> Iterator[ResolvedTx]:
    with open(path, "rb") as fh:
        while True:
            head = fh.read(_RESOLVED_HEAD.size)
            if not head:
                return
            if len(head) < _RESOLVED_HEAD.size:
                raise TruncatedInput(f"{path}: torn record header")
            height, flags, n_in, n_out = _RESOLVED_HEAD.unpack(head)
            body = fh.read(_PAIR.size * (n_in + n_out))
            if len(body) < _PAIR.size * (n_in + n_out):
                raise TruncatedInput(f"{path}: torn record body")
            pairs = [_PAIR.unpack_from(body, i * _PAIR.size)
                     for i in range(n_in + n_out)]
            yield ResolvedTx(height,
                             bool(flags & FLAG_COINBASE),
                             bool(flags & FLAG_COINJOIN),
                             bool(flags & FLAG_COLORED),
                             pairs[:n_in], pairs[n_in:])
