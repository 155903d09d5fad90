"""Locking-script classification, canonical script ids, and address codecs.

A script id is a stable 33-byte join key: one kind tag byte followed by
the SHA-256 of the raw script bytes. Classification is a pure, total
function of the script bytes; anything outside the recognized templates
(including taproot, which postdates the supported height range) is
``nonstandard``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from enum import IntEnum

from .errors import InvalidAddress
from .wire import double_sha256

OP_DUP = 0x76
OP_HASH160 = 0xA9
OP_EQUAL = 0x87
OP_EQUALVERIFY = 0x88
OP_CHECKSIG = 0xAC
OP_CHECKMULTISIG = 0xAE
OP_RETURN = 0x6A
OP_0 = 0x00
OP_1 = 0x51
OP_16 = 0x60


class ScriptKind(IntEnum):
    nonstandard = 0
    p2pk = 1
    p2pkh = 2
    p2sh = 3
    p2wpkh = 4
    p2wsh = 5
    bare_multisig = 6
    op_return = 7


@dataclass(frozen=True)
class ScriptDescriptor:
    script_bytes: bytes
    kind: ScriptKind
    script_id: bytes


# RIPEMD-160 per the original Dobbertin/Bosselaers/Preneel definition.
# OpenSSL 3 moved the algorithm to its legacy provider, so hashlib.new()
# raises on many current systems; this fallback only ever sees 32-byte
# inputs (one compression call), so pure Python is plenty.

_RMD_R1 = (
    0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15,
    7, 4, 13, 1, 10, 6, 15, 3, 12, 0, 9, 5, 2, 14, 11, 8,
    3, 10, 14, 4, 9, 15, 8, 1, 2, 7, 0, 6, 13, 11, 5, 12,
    1, 9, 11, 10, 0, 8, 12, 4, 13, 3, 7, 15, 14, 5, 6, 2,
    4, 0, 5, 9, 7, 12, 2, 10, 14, 1, 3, 8, 11, 6, 15, 13,
)
_RMD_R2 = (
    5, 14, 7, 0, 9, 2, 11, 4, 13, 6, 15, 8, 1, 10, 3, 12,
    6, 11, 3, 7, 0, 13, 5, 10, 14, 15, 8, 12, 4, 9, 1, 2,
    15, 5, 1, 3, 7, 14, 6, 9, 11, 8, 12, 2, 10, 0, 4, 13,
    8, 6, 4, 1, 3, 11, 15, 0, 5, 12, 2, 13, 9, 7, 10, 14,
    12, 15, 10, 4, 1, 5, 8, 7, 6, 2, 13, 14, 0, 3, 9, 11,
)
_RMD_S1 = (
    11, 14, 15, 12, 5, 8, 7, 9, 11, 13, 14, 15, 6, 7, 9, 8,
    7, 6, 8, 13, 11, 9, 7, 15, 7, 12, 15, 9, 11, 7, 13, 12,
    11, 13, 6, 7, 14, 9, 13, 15, 14, 8, 13, 6, 5, 12, 7, 5,
    11, 12, 14, 15, 14, 15, 9, 8, 9, 14, 5, 6, 8, 6, 5, 12,
    9, 15, 5, 11, 6, 8, 13, 12, 5, 12, 13, 14, 11, 8, 5, 6,
)
_RMD_S2 = (
    8, 9, 9, 11, 13, 15, 15, 5, 7, 7, 8, 11, 14, 14, 12, 6,
    9, 13, 15, 7, 12, 8, 9, 11, 7, 7, 12, 7, 6, 15, 13, 11,
    9, 7, 15, 11, 8, 6, 6, 14, 12, 13, 5, 14, 13, 13, 7, 5,
    15, 5, 8, 11, 14, 14, 6, 14, 6, 9, 12, 9, 12, 5, 15, 8,
    8, 5, 12, 9, 12, 5, 14, 6, 8, 13, 6, 5, 15, 13, 11, 11,
)
_RMD_K1 = (0x00000000, 0x5A827999, 0x6ED9EBA1, 0x8F1BBCDC, 0xA953FD4E)
_RMD_K2 = (0x50A28BE6, 0x5C4DD124, 0x6D703EF3, 0x7A6D76E9, 0x00000000)


def _rmd_f(j: int, x: int, y: int, z: int) -> int:
    if j < 16:
        return x ^ y ^ z
    if j < 32:
        return (x & y) | (~x & z)
    if j < 48:
        return (x | ~y) ^ z
    if j < 64:
        return (x & z) | (y & ~z)
    return x ^ (y | ~z)


def _rol(x: int, n: int) -> int:
    return ((x << n) | (x >> (32 - n))) & 0xFFFFFFFF


def ripemd160(data: bytes) -> bytes:
    h = [0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0]
    padded = data + b"\x80" + b"\x00" * ((55 - len(data)) % 64)
    padded += (8 * len(data)).to_bytes(8, "little")
    for off in range(0, len(padded), 64):
        x = struct.unpack_from("<16I", padded, off)
        a1, b1, c1, d1, e1 = h
        a2, b2, c2, d2, e2 = h
        for j in range(80):
            t = _rol((a1 + _rmd_f(j, b1, c1, d1) + x[_RMD_R1[j]]
                      + _RMD_K1[j // 16]) & 0xFFFFFFFF, _RMD_S1[j])
            a1, e1, d1, c1, b1 = e1, d1, _rol(c1, 10), b1, (t + e1) & 0xFFFFFFFF
            t = _rol((a2 + _rmd_f(79 - j, b2, c2, d2) + x[_RMD_R2[j]]
                      + _RMD_K2[j // 16]) & 0xFFFFFFFF, _RMD_S2[j])
            a2, e2, d2, c2, b2 = e2, d2, _rol(c2, 10), b2, (t + e2) & 0xFFFFFFFF
        h = [(h[1] + c1 + d2) & 0xFFFFFFFF,
             (h[2] + d1 + e2) & 0xFFFFFFFF,
             (h[3] + e1 + a2) & 0xFFFFFFFF,
             (h[4] + a1 + b2) & 0xFFFFFFFF,
             (h[0] + b1 + c2) & 0xFFFFFFFF]
    return struct.pack("<5I", *h)


try:
    hashlib.new("ripemd160", b"")
    _HAVE_NATIVE_RIPEMD = True
except ValueError:
    _HAVE_NATIVE_RIPEMD = False


def hash160(data: bytes) -> bytes:
    inner = hashlib.sha256(data).digest()
    if _HAVE_NATIVE_RIPEMD:
        return hashlib.new("ripemd160", inner).digest()
    return ripemd160(inner)


def _is_pubkey(data: bytes) -> bool:
    if len(data) == 33:
        return data[0] in (0x02, 0x03)
    if len(data) == 65:
        return data[0] in (0x04, 0x06, 0x07)
    return False


def _classify(script: bytes) -> ScriptKind:
    n = len(script)
    if n == 0:
        return ScriptKind.nonstandard
    first = script[0]
    if first == OP_RETURN:
        return ScriptKind.op_return
    if (
        n == 25
        and first == OP_DUP
        and script[1] == OP_HASH160
        and script[2] == 20
        and script[23] == OP_EQUALVERIFY
        and script[24] == OP_CHECKSIG
    ):
        return ScriptKind.p2pkh
    if n == 23 and first == OP_HASH160 and script[1] == 20 and script[22] == OP_EQUAL:
        return ScriptKind.p2sh
    if n == 22 and first == OP_0 and script[1] == 20:
        return ScriptKind.p2wpkh
    if n == 34 and first == OP_0 and script[1] == 32:
        return ScriptKind.p2wsh
    if (
        n in (35, 67)
        and first == n - 2
        and script[-1] == OP_CHECKSIG
        and _is_pubkey(script[1:-1])
    ):
        return ScriptKind.p2pk
    if (
        n >= 37  # OP_1 + one 33-byte key push + OP_1 + OP_CHECKMULTISIG
        and OP_1 <= first <= OP_16
        and script[-1] == OP_CHECKMULTISIG
        and OP_1 <= script[-2] <= OP_16
    ):
        m = first - OP_1 + 1
        k = script[-2] - OP_1 + 1
        if m <= k:
            keys = 0
            pos = 1
            end = n - 2
            while pos < end:
                push = script[pos]
                if push not in (33, 65) or pos + 1 + push > end:
                    return ScriptKind.nonstandard
                if not _is_pubkey(script[pos + 1:pos + 1 + push]):
                    return ScriptKind.nonstandard
                keys += 1
                pos += 1 + push
            if pos == end and keys == k:
                return ScriptKind.bare_multisig
    return ScriptKind.nonstandard


def classify_script(script_bytes: bytes) -> ScriptDescriptor:
    kind = _classify(script_bytes)
    sid = bytes([kind]) + hashlib.sha256(script_bytes).digest()
    return ScriptDescriptor(script_bytes, kind, sid)


def script_id(script_bytes: bytes) -> bytes:
    """33-byte id (kind tag + SHA-256) of the raw script bytes."""
    return bytes([_classify(script_bytes)]) + hashlib.sha256(script_bytes).digest()


# --- script template builders ------------------------------------------------

def p2pkh_script(h160: bytes) -> bytes:
    return bytes([OP_DUP, OP_HASH160, 20]) + h160 + bytes([OP_EQUALVERIFY, OP_CHECKSIG])


def p2sh_script(h160: bytes) -> bytes:
    return bytes([OP_HASH160, 20]) + h160 + bytes([OP_EQUAL])


def p2pk_script(pubkey: bytes) -> bytes:
    return bytes([len(pubkey)]) + pubkey + bytes([OP_CHECKSIG])


def witness_script(version: int, program: bytes) -> bytes:
    opcode = OP_0 if version == 0 else OP_1 + version - 1
    return bytes([opcode, len(program)]) + program


# --- base58check --------------------------------------------------------------

_B58_ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_B58_INDEX = {c: i for i, c in enumerate(_B58_ALPHABET)}


def base58check_encode(payload: bytes) -> str:
    data = payload + double_sha256(payload)[:4]
    leading = len(data) - len(data.lstrip(b"\x00"))
    num = int.from_bytes(data, "big")
    out = []
    while num:
        num, rem = divmod(num, 58)
        out.append(_B58_ALPHABET[rem])
    return "1" * leading + "".join(reversed(out))


def base58check_decode(text: str) -> bytes:
    num = 0
    for ch in text:
        idx = _B58_INDEX.get(ch)
        if idx is None:
            raise InvalidAddress(f"invalid base58 character {ch!r}")
        num = num * 58 + idx
    raw = num.to_bytes((num.bit_length() + 7) // 8, "big")
    leading = len(text) - len(text.lstrip("1"))
    raw = b"\x00" * leading + raw
    if len(raw) < 5:
        raise InvalidAddress("base58 payload too short")
    payload, checksum = raw[:-4], raw[-4:]
    if double_sha256(payload)[:4] != checksum:
        raise InvalidAddress("base58 checksum mismatch")
    return payload


# --- bech32 / bech32m (BIP-173 / BIP-350) -------------------------------------

_BECH32_CHARSET = "qpzry9x8gf2tvdw0s3jn54khce6mua7l"
_BECH32_INDEX = {c: i for i, c in enumerate(_BECH32_CHARSET)}
_BECH32M_CONST = 0x2BC830A3


def _bech32_polymod(values: list[int]) -> int:
    gen = (0x3B6A57B2, 0x26508E6D, 0x1EA119FA, 0x3D4233DD, 0x2A1462B3)
    chk = 1
    for v in values:
        top = chk >> 25
        chk = (chk & 0x1FFFFFF) << 5 ^ v
        for i in range(5):
            chk ^= gen[i] if ((top >> i) & 1) else 0
    return chk


def _bech32_hrp_expand(hrp: str) -> list[int]:
    return [ord(c) >> 5 for c in hrp] + [0] + [ord(c) & 31 for c in hrp]


def _convertbits(data, frombits: int, tobits: int, pad: bool) -> list[int] | None:
    acc = 0
    bits = 0
    ret = []
    maxv = (1 << tobits) - 1
    for value in data:
        acc = (acc << frombits) | value
        bits += frombits
        while bits >= tobits:
            bits -= tobits
            ret.append((acc >> bits) & maxv)
    if pad:
        if bits:
            ret.append((acc << (tobits - bits)) & maxv)
    elif bits >= frombits or ((acc << (tobits - bits)) & maxv):
        return None
    return ret


def bech32_decode(addr: str, hrp: str = "bc") -> tuple[int, bytes]:
    """Decode a segwit address; returns (witness_version, program)."""
    if addr != addr.lower() and addr != addr.upper():
        raise InvalidAddress("mixed-case bech32 string")
    text = addr.lower()
    pos = text.rfind("1")
    if pos < 1 or pos + 7 > len(text) or len(text) > 90:
        raise InvalidAddress("malformed bech32 string")
    got_hrp, data_part = text[:pos], text[pos + 1:]
    if got_hrp != hrp:
        raise InvalidAddress(f"unexpected bech32 prefix {got_hrp!r}")
    try:
        data = [_BECH32_INDEX[c] for c in data_part]
    except KeyError:
        raise InvalidAddress("invalid bech32 character") from None
    check = _bech32_polymod(_bech32_hrp_expand(hrp) + data)
    version = data[0]
    if version == 0:
        if check != 1:
            raise InvalidAddress("bech32 checksum mismatch")
    elif check != _BECH32M_CONST:
        raise InvalidAddress("bech32m checksum mismatch")
    if version > 16:
        raise InvalidAddress(f"invalid witness version {version}")
    program = _convertbits(data[1:-6], 5, 8, pad=False)
    if program is None or not 2 <= len(program) <= 40:
        raise InvalidAddress("invalid witness program")
    if version == 0 and len(program) not in (20, 32):
        raise InvalidAddress("invalid v0 program length")
    return version, bytes(program)


def bech32_encode(version: int, program: bytes, hrp: str = "bc") -> str:
    data = [version] + _convertbits(program, 8, 5, pad=True)
    const = 1 if version == 0 else _BECH32M_CONST
    values = _bech32_hrp_expand(hrp) + data
    polymod = _bech32_polymod(values + [0] * 6) ^ const
    checksum = [(polymod >> 5 * (5 - i)) & 31 for i in range(6)]
    return hrp + "1" + "".join(_BECH32_CHARSET[d] for d in data + checksum)


# --- address <-> scripts -------------------------------------------------------

P2PKH_VERSION = 0x00
P2SH_VERSION = 0x05


def _is_hex_pubkey(address: str) -> bytes | None:
    if len(address) not in (66, 130):
        return None
    try:
        raw = bytes.fromhex(address)
    except ValueError:
        return None
    return raw if _is_pubkey(raw) else None


def address_to_scripts(address: str, hrp: str = "bc") -> list[bytes]:
    """All locking-script templates spendable by ``address``.

    A hash address yields its single template; a hex public key yields
    both its pay-to-pubkey and pay-to-pubkey-hash forms.
    """
    if not address:
        raise InvalidAddress("empty address")
    pubkey = _is_hex_pubkey(address)
    if pubkey is not None:
        return [p2pk_script(pubkey), p2pkh_script(hash160(pubkey))]
    if address.lower().startswith(hrp + "1"):
        version, program = bech32_decode(address, hrp)
        return [witness_script(version, program)]
    payload = base58check_decode(address)
    if len(payload) != 21:
        raise InvalidAddress(f"unexpected base58 payload length {len(payload)}")
    if payload[0] == P2PKH_VERSION:
        return [p2pkh_script(payload[1:])]
    if payload[0] == P2SH_VERSION:
        return [p2sh_script(payload[1:])]
    raise InvalidAddress(f"unsupported address version 0x{payload[0]:02x}")


def address_to_script_ids(address: str, hrp: str = "bc") -> set[bytes]:
    return {script_id(s) for s in address_to_scripts(address, hrp)}


def script_to_address(script: bytes, hrp: str = "bc") -> str | None:
    """Canonical address form of a locking script, if one exists.

    Pay-to-pubkey scripts are rendered as the hex public key (their
    spendable identity); nonstandard and data-carrier scripts have none.
    """
    kind = _classify(script)
    if kind == ScriptKind.p2pkh:
        return base58check_encode(bytes([P2PKH_VERSION]) + script[3:23])
    if kind == ScriptKind.p2sh:
        return base58check_encode(bytes([P2SH_VERSION]) + script[2:22])
    if kind == ScriptKind.p2wpkh:
        return bech32_encode(0, script[2:22], hrp)
    if kind == ScriptKind.p2wsh:
        return bech32_encode(0, script[2:34], hrp)
    if kind == ScriptKind.p2pk:
        return script[1:-1].hex()
    return None
