"""CoinJoin and colored-coin detection.

Flagged transactions are excluded both from script clustering and from
edge construction. The CoinJoin rule is the equal-output-value pattern
with configurable thresholds; the thresholds are stand-ins for heuristics
published elsewhere and are documented as such in the README.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import IntEnum
from typing import Collection, Iterable

from .script import OP_RETURN
from .wire import RawTransaction

OPEN_ASSETS_MARKER = bytes.fromhex("4f410100")
OMNI_MARKER = b"omni"
EPOBC_GENESIS_TAG = 0b100101
EPOBC_TRANSFER_TAG = 0b110011


class ColoredProtocol(IntEnum):
    none = 0
    open_assets = 1
    omni = 2
    epobc = 3


@dataclass(frozen=True)
class FilterVerdict:
    is_coinjoin: bool = False
    colored_protocol: ColoredProtocol = ColoredProtocol.none
    reason: str = ""

    @property
    def excluded(self) -> bool:
        return self.is_coinjoin or self.colored_protocol != ColoredProtocol.none


@dataclass(frozen=True)
class CoinJoinConfig:
    min_equal_outputs: int = 3
    min_distinct_input_scripts: int = 3
    min_equal_value: int = 10_000

    def __post_init__(self) -> None:
        if min(self.min_equal_outputs, self.min_distinct_input_scripts,
               self.min_equal_value) < 1:
            raise ValueError("all CoinJoin thresholds must be >= 1")


def detect_coinjoin(tx: RawTransaction, cfg: CoinJoinConfig,
                    input_script_ids: Collection[bytes]) -> bool:
    """Equal-output-value CoinJoin pattern.

    True iff some output value >= ``min_equal_value`` repeats at least
    ``min_equal_outputs`` times and the inputs are funded by at least
    ``min_distinct_input_scripts`` distinct locking scripts.

    ``input_script_ids`` are the identities of the funding outputs'
    scripts; the raw transaction alone does not carry them.
    """
    if tx.is_coinbase:
        return False
    if len(set(input_script_ids)) < cfg.min_distinct_input_scripts:
        return False
    counts = Counter(out.value for out in tx.outputs
                     if out.value >= cfg.min_equal_value)
    return any(c >= cfg.min_equal_outputs for c in counts.values())


def _op_return_payload(script: bytes) -> bytes | None:
    """Data pushed immediately after a leading OP_RETURN, if well-formed."""
    if len(script) < 2 or script[0] != OP_RETURN:
        return None
    op = script[1]
    if 1 <= op <= 0x4B:
        start, length = 2, op
    elif op == 0x4C and len(script) >= 3:
        start, length = 3, script[2]
    elif op == 0x4D and len(script) >= 4:
        start, length = 4, int.from_bytes(script[2:4], "little")
    elif op == 0x4E and len(script) >= 6:
        start, length = 6, int.from_bytes(script[2:6], "little")
    else:
        return None
    if start + length > len(script):
        return None
    return script[start:start + length]


def detect_colored(tx: RawTransaction,
                   enabled: Iterable[ColoredProtocol] = (
                       ColoredProtocol.open_assets,
                       ColoredProtocol.omni,
                       ColoredProtocol.epobc,
                   )) -> ColoredProtocol:
    """Identify colored-coin protocol markers.

    Open Assets and Omni tag an OP_RETURN payload; EPOBC tags the low six
    bits of the first input's sequence field. When several markers are
    present the first protocol in declaration order wins.
    """
    enabled = set(enabled)
    payloads = [
        p for p in (_op_return_payload(out.lock_script) for out in tx.outputs)
        if p is not None
    ]
    if ColoredProtocol.open_assets in enabled:
        if any(p.startswith(OPEN_ASSETS_MARKER) for p in payloads):
            return ColoredProtocol.open_assets
    if ColoredProtocol.omni in enabled:
        if any(p.startswith(OMNI_MARKER) for p in payloads):
            return ColoredProtocol.omni
    if ColoredProtocol.epobc in enabled and tx.inputs and not tx.is_coinbase:
        tag = tx.inputs[0].sequence & 0x3F
        if tag in (EPOBC_GENESIS_TAG, EPOBC_TRANSFER_TAG):
            return ColoredProtocol.epobc
    return ColoredProtocol.none


def evaluate(tx: RawTransaction, cfg: CoinJoinConfig,
             input_script_ids: Collection[bytes],
             enabled_colored: Iterable[ColoredProtocol] = (
                 ColoredProtocol.open_assets,
                 ColoredProtocol.omni,
                 ColoredProtocol.epobc,
             )) -> FilterVerdict:
    """Combined verdict; a transaction may be both coinjoin and colored."""
    coinjoin = False if tx.is_coinbase else detect_coinjoin(tx, cfg, input_script_ids)
    colored = detect_colored(tx, enabled_colored)
    reasons = []
    if coinjoin:
        reasons.append("equal-output-values")
    if colored == ColoredProtocol.open_assets:
        reasons.append("op_return marker 4f410100")
    elif colored == ColoredProtocol.omni:
        reasons.append("op_return marker 6f6d6e69")
    elif colored == ColoredProtocol.epobc:
        reasons.append("epobc sequence tag")
    return FilterVerdict(coinjoin, colored, ";".join(reasons))
