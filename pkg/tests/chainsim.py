"""Synthetic block-file builder with a ground-truth transaction log.

Assembles wire bytes (compact sizes, transactions, headers, merkle
roots, file framing) with its own struct/hashlib code on purpose: the
package under test never touches these bytes before the parser sees
them, so round-trip and txid checks are against an independent encoder.

The ground truth records, per transaction in chain order, the resolved
(value, script) pairs of its inputs and outputs plus the first input's
sequence field. That is everything a reference graph construction needs;
it deliberately does not record any *derived* judgement (coinjoin,
colored, clusters) so those come out of the oracle, not the fixture.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass, field

MAGIC = bytes.fromhex("f9beb4d9")
COINBASE_NULL = b"\x00" * 32
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_HEADER = struct.Struct("<i32s32sIII")


def dsha(data: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def cs(n: int) -> bytes:
    if n < 0xFD:
        return bytes([n])
    if n <= 0xFFFF:
        return b"\xfd" + struct.pack("<H", n)
    if n <= 0xFFFFFFFF:
        return b"\xfe" + _U32.pack(n)
    return b"\xff" + _U64.pack(n)


def _tag(kind: str, n: int, size: int) -> bytes:
    return hashlib.sha256(f"{kind}:{n}".encode()).digest()[:size]


# -- script factories --------------------------------------------------------

def p2pkh(n: int) -> bytes:
    return b"\x76\xa9\x14" + _tag("pkh", n, 20) + b"\x88\xac"


def p2sh(n: int) -> bytes:
    return b"\xa9\x14" + _tag("sh", n, 20) + b"\x87"


def p2wpkh(n: int) -> bytes:
    return b"\x00\x14" + _tag("wpkh", n, 20)


def p2wsh(n: int) -> bytes:
    return b"\x00\x20" + _tag("wsh", n, 32)


def p2pk(n: int) -> bytes:
    key = b"\x02" + _tag("pk", n, 32)
    return bytes([len(key)]) + key + b"\xac"


def multisig(n: int) -> bytes:
    k1 = b"\x02" + _tag("ms-a", n, 32)
    k2 = b"\x03" + _tag("ms-b", n, 32)
    # 1-of-2: OP_1 <k1> <k2> OP_2 OP_CHECKMULTISIG
    return b"\x51" + bytes([len(k1)]) + k1 + bytes([len(k2)]) + k2 + b"\x52\xae"


def junk(n: int) -> bytes:
    return b"\x6b\x6c" + _tag("junk", n, 6)


def op_return(data: bytes) -> bytes:
    assert len(data) <= 0x4B
    return b"\x6a" + bytes([len(data)]) + data


SCRIPT_KINDS = (p2pkh, p2sh, p2wpkh, p2wsh, p2pk, multisig, junk)


@dataclass
class TxTruth:
    height: int
    coinbase: bool
    inputs: list[tuple[int, bytes]]     # resolved (value, script)
    outputs: list[tuple[int, bytes]]    # (value, script) as serialized
    first_sequence: int
    txid: bytes                         # internal byte order
    raw: bytes
    message: bytes = b""                # coinbase unlock payload


@dataclass
class Sim:
    start_time: int = 1_600_000_000
    version: int = 2
    records: list[bytes] = field(default_factory=list)   # framed blocks
    truth: list[TxTruth] = field(default_factory=list)
    tip: bytes = COINBASE_NULL
    prev_tip: bytes = COINBASE_NULL
    height: int = 0

    def __post_init__(self) -> None:
        self._utxo: dict[tuple[bytes, int], tuple[int, bytes]] = {}
        self._pending_raw: list[bytes] = []
        self._pending_truth: list[TxTruth] = []

    # -- transaction building -------------------------------------------

    def _assemble(self, inputs: list[tuple[bytes, int, bytes, int]],
                  outputs: list[tuple[int, bytes]],
                  witness: list[list[bytes]] | None,
                  locktime: int = 0) -> tuple[bytes, bytes]:
        """Returns (raw, txid); txid always over the legacy form."""
        core_in = [cs(len(inputs))]
        for prev_txid, vout, unlock, seq in inputs:
            core_in += [prev_txid, _U32.pack(vout), cs(len(unlock)), unlock,
                        _U32.pack(seq)]
        core_out = [cs(len(outputs))]
        for value, script in outputs:
            core_out += [_U64.pack(value), cs(len(script)), script]
        version = struct.pack("<i", self.version)
        tail = _U32.pack(locktime)
        legacy = b"".join([version] + core_in + core_out + [tail])
        if witness is None:
            return legacy, dsha(legacy)
        wit_parts = []
        for stack in witness:
            wit_parts.append(cs(len(stack)))
            for item in stack:
                wit_parts += [cs(len(item)), item]
        raw = b"".join([version, b"\x00\x01"] + core_in + core_out
                       + wit_parts + [tail])
        return raw, dsha(legacy)

    def tx(self, spends: list[tuple[bytes, int]],
           outputs: list[tuple[int, bytes]],
           sequences: list[int] | None = None,
           segwit: bool = False,
           unlock: bytes = b"\x51") -> bytes:
        """Spend existing outpoints; returns the new txid."""
        seqs = sequences or [0xFFFFFFFF] * len(spends)
        resolved = []
        inputs = []
        for (prev, vout), seq in zip(spends, seqs):
            value, script = self._utxo.pop((prev, vout))
            resolved.append((value, script))
            inputs.append((prev, vout, unlock, seq))
        witness = [[b"\x01" * 33, b"\x02" * 16] for _ in spends] if segwit \
            else None
        raw, txid = self._assemble(inputs, outputs, witness)
        for vout, (value, script) in enumerate(outputs):
            self._utxo[(txid, vout)] = (value, script)
        self._pending_raw.append(raw)
        self._pending_truth.append(TxTruth(
            self.height, False, resolved, list(outputs), seqs[0], txid, raw))
        return txid

    def coinbase(self, outputs: list[tuple[int, bytes]],
                 message: bytes = b"") -> bytes:
        inputs = [(COINBASE_NULL, 0xFFFFFFFF, message, 0xFFFFFFFF)]
        raw, txid = self._assemble(inputs, outputs, None)
        for vout, (value, script) in enumerate(outputs):
            self._utxo[(txid, vout)] = (value, script)
        self._pending_raw.append(raw)
        self._pending_truth.append(TxTruth(
            self.height, True, [], list(outputs), 0xFFFFFFFF, txid, raw,
            message))
        return txid

    # -- block building ---------------------------------------------------

    def _merkle(self, txids: list[bytes]) -> bytes:
        level = list(txids)
        while len(level) > 1:
            if len(level) % 2:
                level.append(level[-1])
            level = [dsha(level[i] + level[i + 1])
                     for i in range(0, len(level), 2)]
        return level[0]

    def _block_bytes(self, prev: bytes, txs: list[bytes],
                     txids: list[bytes], nonce: int) -> tuple[bytes, bytes]:
        header = _HEADER.pack(self.version, prev, self._merkle(txids),
                              self.start_time + 600 * self.height,
                              0x207FFFFF, nonce)
        payload = header + cs(len(txs)) + b"".join(txs)
        return MAGIC + _U32.pack(len(payload)) + payload, dsha(header)

    def seal(self, nonce: int = 0) -> bytes:
        assert self._pending_raw, "a block needs at least a coinbase"
        txids = [t.txid for t in self._pending_truth]
        record, block_hash = self._block_bytes(
            self.tip, self._pending_raw, txids, nonce)
        self.records.append(record)
        self.truth.extend(self._pending_truth)
        self._pending_raw, self._pending_truth = [], []
        self.prev_tip, self.tip = self.tip, block_hash
        self.height += 1
        return block_hash

    def orphan(self, nonce: int = 0xDEAD) -> bytes:
        """Emit a stale sibling of the last sealed block.

        Its coinbase spends to nowhere relevant and never enters the
        ground truth; chain selection must drop it.
        """
        assert self.height > 0
        inputs = [(COINBASE_NULL, 0xFFFFFFFF, b"orphan", 0xFFFFFFFF)]
        raw, txid = self._assemble(inputs, [(5_000_000_000, p2pkh(999_999))],
                                   None)
        saved = self.height
        self.height -= 1  # stamp the sibling with its competitor's time
        record, block_hash = self._block_bytes(self.prev_tip, [raw], [txid],
                                               nonce)
        self.height = saved
        self.records.append(record)
        return block_hash

    def file_bytes(self, pad: int = 0) -> bytes:
        return b"".join(self.records) + b"\x00" * pad

    @staticmethod
    def split_padded(data: bytes, pad: int = 128) -> list[bytes]:
        """Split a record stream near the middle, on a record boundary,
        padding the first half with zeros the way truncated files are."""
        off, cut = 0, 0
        while off < len(data) and data[off:off + 4] == MAGIC:
            length = _U32.unpack_from(data, off + 4)[0]
            off += 8 + length
            if cut == 0 and off >= len(data) // 2:
                cut = off
        return [data[:cut] + b"\x00" * pad, data[cut:]]

    def spendable(self) -> dict[tuple[bytes, int], tuple[int, bytes]]:
        return dict(self._utxo)


# -- the standard fixture ------------------------------------------------------


@dataclass
class Fixture:
    file_bytes: bytes
    truth: list[TxTruth]
    blocks: int
    block_hashes: list[str]             # display hex, by height
    coinjoin_txids: list[bytes]
    colored_txids: dict[str, bytes]
    orphan_hash: bytes
    patterns: list[tuple[str, str]]     # (substring, entity)
    pool_scripts: dict[str, bytes]      # entity -> payout script
    block_times: list[int]


class _Wallet:
    """Per-actor outpoint tracking on top of Sim."""

    def __init__(self, sim: Sim, rng: random.Random, n_actors: int) -> None:
        self.sim = sim
        self.rng = rng
        self.scripts: list[list[bytes]] = []
        self.funds: list[list[tuple[bytes, int, int]]] = []  # (txid, vout, value)
        self._next_script = 0
        for a in range(n_actors):
            self.scripts.append([self.fresh_script() for _ in range(3)])
            self.funds.append([])

    def fresh_script(self) -> bytes:
        kind = SCRIPT_KINDS[self._next_script % len(SCRIPT_KINDS)]
        self._next_script += 1
        return kind(self._next_script)

    def script_of(self, actor: int) -> bytes:
        if self.rng.random() < 0.25:
            s = self.fresh_script()
            self.scripts[actor].append(s)
            return s
        return self.rng.choice(self.scripts[actor])

    def credit(self, actor: int, txid: bytes, vout: int, value: int) -> None:
        self.funds[actor].append((txid, vout, value))

    def take(self, actor: int, k: int) -> list[tuple[bytes, int, int]]:
        take, rest = self.funds[actor][:k], self.funds[actor][k:]
        self.funds[actor] = rest
        return take

    def take_big(self, actor: int, amount: int) -> tuple[bytes, int, int] | None:
        for i, (t, v, val) in enumerate(self.funds[actor]):
            if val >= amount:
                return self.funds[actor].pop(i)
        return None


def build_fixture(seed: int = 11, blocks: int = 200) -> Fixture:
    rng = random.Random(seed)
    sim = Sim()
    n_actors = 24
    w = _Wallet(sim, rng, n_actors)
    miners = [0, 1, 2, 3]
    messages = {0: b"\x03abc/AlphaPool/", 1: b"mined by beta.pool 2020",
                2: b"\x07" + bytes(range(7)), 3: b"nothing to see"}
    patterns = [("AlphaPool", "Alpha Pool"), ("beta.pool", "Beta Pool")]
    coinjoins: list[bytes] = []
    colored: dict[str, bytes] = {}
    hashes: list[str] = []
    orphan_hash = b""
    pool_scripts = {"Alpha Pool": w.scripts[0][0],
                    "Beta Pool": w.scripts[1][0]}

    def pay(actor: int, n_inputs: int, recipients: list[int],
            amounts: list[int], fee: int, segwit: bool = False,
            extra_outputs: list[tuple[int, bytes]] | None = None,
            sequences: list[int] | None = None) -> bytes | None:
        chosen = w.take(actor, n_inputs)
        total = sum(v for _, _, v in chosen)
        need = sum(amounts) + fee
        if total < need:
            w.funds[actor] = chosen + w.funds[actor]
            return None
        outs = [(amt, w.script_of(r)) for r, amt in zip(recipients, amounts)]
        change = total - need
        if change:
            outs.append((change, w.script_of(actor)))
        if extra_outputs:
            outs.extend(extra_outputs)
        txid = sim.tx([(t, v) for t, v, _ in chosen], outs,
                      sequences=sequences, segwit=segwit)
        for vout, (value, _) in enumerate(outs):
            owner = None
            if vout < len(recipients):
                owner = recipients[vout]
            elif change and vout == len(recipients):
                owner = actor
            if owner is not None and value > 0:
                w.credit(owner, txid, vout, value)
        return txid

    def force_pay(to: int, amount: int) -> bytes | None:
        """Fund an actor from whoever can afford it (miners usually can)."""
        for actor in range(n_actors):
            pick = w.take_big(actor, amount + 600)
            if pick is None:
                continue
            t, v, val = pick
            txid = sim.tx([(t, v)], [(amount, w.script_of(to)),
                                     (val - amount - 600, w.script_of(actor))])
            w.credit(to, txid, 0, amount)
            w.credit(actor, txid, 1, val - amount - 600)
            return txid
        return None

    for h in range(blocks):
        miner = miners[h % 4]
        cb_script = w.scripts[miner][0] if h % 3 else w.script_of(miner)
        # Height in the message keeps coinbase txids distinct (the
        # protocol mandates the same thing for the same reason).
        txid = sim.coinbase([(5_000_000_000, cb_script)],
                            b"%d:" % h + messages[miner])
        w.credit(miner, txid, 0, 5_000_000_000)

        if h == 0:
            hashes.append(sim.seal(rng.getrandbits(32))[::-1].hex())
            continue

        for _ in range(rng.randint(3, 6)):
            actor = rng.randrange(n_actors)
            if not w.funds[actor]:
                continue
            k = min(len(w.funds[actor]), rng.choice((1, 1, 1, 2, 2, 3)))
            n_rcpt = rng.choice((1, 1, 2))
            rcpts = [rng.randrange(n_actors) for _ in range(n_rcpt)]
            avail = sum(v for _, _, v in w.funds[actor][:k])
            if avail < 20_000:
                continue
            amounts = [rng.randrange(5_000, max(6_000, avail // (n_rcpt + 1)))
                       for _ in range(n_rcpt)]
            fee = rng.choice((0, 200, 200, 1_000))
            extra = None
            if rng.random() < 0.12:
                extra = [(0, op_return(_tag("memo", h, 12)))]
            pay(actor, k, rcpts, amounts, fee,
                segwit=rng.random() < 0.2, extra_outputs=extra)

        # Planted structural cases at fixed heights. Funding blocks come
        # a few heights ahead so the plants never starve.
        if h == 38:
            force_pay(4, 50_000)
            force_pay(6, 30_000)
        if h == 40:
            pick = w.take_big(4, 10_000)
            if pick:
                t, v, val = pick
                twice = w.scripts[5][0]   # same script paid twice
                half = (val - 400) // 2
                txid = sim.tx([(t, v)], [(half, twice), (half, twice),
                                         (val - 400 - 2 * half, w.script_of(4))])
                w.credit(5, txid, 0, half)
                w.credit(5, txid, 1, half)
        if h == 50:
            pick = w.take_big(6, 2_000)
            if pick:
                t, v, val = pick
                # Fee-less send-to-self on the very same script: every
                # net is zero, so no transfer events may come out.
                same = sim.spendable()[(t, v)][1]
                txid = sim.tx([(t, v)], [(val, same)])
                w.credit(6, txid, 0, val)
        if h == 58:
            force_pay(7, 15_000)
            force_pay(8, 80_000)
        if h == 60:
            pa, pb = w.take_big(7, 5_000), w.take_big(8, 40_000)
            if pa and pb:
                ta, va, vala = pa
                tb, vb, valb = pb
                back = vala + 20_000   # input party 7 nets +20k: a recipient
                rest = valb - 20_000 - 1_000
                txid = sim.tx([(ta, va), (tb, vb)],
                              [(back, w.scripts[7][0]), (rest, w.scripts[9][0])])
                w.credit(7, txid, 0, back)
                w.credit(9, txid, 1, rest)
        if h == 95:
            for m in (10, 11, 12, 13):
                force_pay(m, 700_000)
        if h == 100:
            members = (10, 11, 12, 13)
            picks = [w.take_big(m, 510_000) for m in members]
            if all(picks):
                spends = [(t, v) for t, v, _ in picks]
                outs = [(500_000, w.fresh_script()) for _ in members]
                outs += [(val - 500_000 - 250, w.script_of(m))
                         for (_, _, val), m in zip(picks, members)]
                txid = sim.tx(spends, outs)
                coinjoins.append(txid)
                for vout, m in enumerate(members):
                    w.credit(m, txid, vout, 500_000)
                for vout, ((_, _, val), m) in enumerate(zip(picks, members)):
                    w.credit(m, txid, len(members) + vout,
                             val - 500_000 - 250)
        if h == 105:
            force_pay(14, 60_000)
            force_pay(15, 50_000)
            force_pay(16, 40_000)
            force_pay(18, 35_000)
        if h == 110:
            pick = w.take_big(14, 41_000)
            if pick:
                t, v, val = pick
                marker = op_return(bytes.fromhex("4f410100") + b"\x01\x02")
                txid = sim.tx([(t, v)], [(40_000, w.script_of(15)),
                                         (val - 40_500, w.script_of(14)),
                                         (0, marker)])
                colored["open_assets"] = txid
                w.credit(15, txid, 0, 40_000)
                w.credit(14, txid, 1, val - 40_500)
        if h == 112:
            pick = w.take_big(15, 31_000)
            if pick:
                t, v, val = pick
                marker = op_return(b"omni" + b"\x00\x00\x00\x00\x00\x1f")
                txid = sim.tx([(t, v)], [(30_000, w.script_of(16)),
                                         (val - 30_500, w.script_of(15)),
                                         (0, marker)])
                colored["omni"] = txid
                w.credit(16, txid, 0, 30_000)
                w.credit(15, txid, 1, val - 30_500)
        if h == 114:
            pick = w.take_big(16, 5_000)
            if pick:
                t, v, val = pick
                txid = sim.tx([(t, v)], [(val - 300, w.script_of(17))],
                              sequences=[0xFFFFFF25])
                colored["epobc"] = txid
                w.credit(17, txid, 0, val - 300)
        if h == 116:
            pick = w.take_big(18, 10_000)
            if pick:
                t, v, val = pick
                burn = op_return(b"burned value")   # 546 sat to a data script
                txid = sim.tx([(t, v)], [(546, burn),
                                         (val - 546 - 200, w.script_of(18))])
                w.credit(18, txid, 1, val - 546 - 200)
        if h == 120:
            k = min(len(w.funds[19]), 5)
            if k >= 2:
                chosen = w.take(19, k)
                total = sum(v for _, _, v in chosen)
                if total > 2_000:
                    txid = sim.tx([(t, v) for t, v, _ in chosen],
                                  [(total - 900, w.scripts[20][0])])
                    w.credit(20, txid, 0, total - 900)
        if h == 125:
            pick = w.take_big(0, 600_800)
            if pick:
                t, v, val = pick
                outs = [(90_000, w.script_of(21 - i)) for i in range(6)]
                outs.append((val - 540_000 - 777, w.script_of(0)))
                txid = sim.tx([(t, v)], outs)
                for i in range(6):
                    w.credit(21 - i, txid, i, 90_000)
                w.credit(0, txid, 6, val - 540_000 - 777)
        if h == 134:
            for m in (2, 3, 4):
                force_pay(m, 30_000)
        if h == 135:
            picks = [w.take_big(m, 26_000) for m in (2, 3, 4)]
            if all(picks):
                # CoinJoin shape and an Omni marker at once.
                marker = op_return(b"omni\x01\x02\x03")
                outs = [(25_000, w.fresh_script()) for _ in picks]
                outs.append((0, marker))
                txid = sim.tx([(t, v) for t, v, _ in picks], outs)
                colored["omni_coinjoin"] = txid

        hashes.append(sim.seal(rng.getrandbits(32))[::-1].hex())
        if h == 101:
            orphan_hash = sim.orphan()

    assert coinjoins and len(colored) >= 3 and orphan_hash
    return Fixture(sim.file_bytes(pad=64), sim.truth, blocks, hashes,
                   coinjoins, colored, orphan_hash, patterns, pool_scripts,
                   [sim.start_time + 600 * h for h in range(blocks)])


# -- throughput fixture --------------------------------------------------------


def write_bulk_chain(path, n_blocks: int = 1000, txs_per_block: int = 1000,
                     pool: int = 200_000, seed: int = 7) -> int:
    """Stream a large single-file chain to disk; returns transactions written.

    Kept deliberately simple (p2pkh only, 1-in-2-out spends) so generation
    itself stays well under the runtime being measured downstream.
    """
    rng = random.Random(seed)
    scripts = [b"\x76\xa9\x14" + hashlib.sha256(b"p:%d" % i).digest()[:20]
               + b"\x88\xac" for i in range(pool)]
    frags = [b"\x19" + s for s in scripts]
    version = struct.pack("<i", 2)
    tail = _U32.pack(0)
    seq = _U32.pack(0xFFFFFFFE)
    unlock = b"\x01\x51"
    # Every 8th transaction merges two outpoints, so spends outpace
    # births by 125 per 1000; wide coinbases (125 outputs) keep the
    # outpoint supply exactly level.
    cb_fanout = 125
    cb_out = b"".join(_U64.pack(40_000_000) + frags[i % pool]
                      for i in range(cb_fanout))
    wallet: list[tuple[bytes, bytes, int]] = []  # (txid, vout_le, value)
    wallet_at = 0
    tip = COINBASE_NULL
    n_tx = 0
    with open(path, "wb") as fh:
        for h in range(n_blocks):
            txs: list[bytes] = []
            txids: list[bytes] = []
            msg = b"blk%d" % h
            cb = (version + b"\x01" + COINBASE_NULL + b"\xff\xff\xff\xff"
                  + cs(len(msg)) + msg + b"\xff\xff\xff\xff"
                  + cs(cb_fanout) + cb_out + tail)
            txid = dsha(cb)
            txs.append(cb)
            txids.append(txid)
            for vout in range(cb_fanout):
                wallet.append((txid, _U32.pack(vout), 40_000_000))
            n_tx += 1
            for i in range(txs_per_block):
                two = i % 8 == 7 and wallet_at + 1 < len(wallet)
                if wallet_at + (1 if two else 0) >= len(wallet):
                    break
                prev1, pv1, v1 = wallet[wallet_at]
                wallet_at += 1
                total = v1
                ins = prev1 + pv1 + unlock + seq
                n_in = b"\x01"
                if two:
                    prev2, pv2, v2 = wallet[wallet_at]
                    wallet_at += 1
                    total += v2
                    ins += prev2 + pv2 + unlock + seq
                    n_in = b"\x02"
                # Linear drain (dead 1000-sat output + 500 fee) keeps
                # lineages alive for arbitrarily many generations.
                a = total - 1_500
                sa, sb = rng.randrange(pool), rng.randrange(pool)
                tx = (version + n_in + ins
                      + b"\x02" + _U64.pack(a) + frags[sa]
                      + _U64.pack(1_000) + frags[sb] + tail)
                txid = dsha(tx)
                txs.append(tx)
                txids.append(txid)
                wallet.append((txid, b"\x00\x00\x00\x00", a))
                n_tx += 1
            level = txids
            while len(level) > 1:
                if len(level) % 2:
                    level.append(level[-1])
                level = [dsha(level[i] + level[i + 1])
                         for i in range(0, len(level), 2)]
            header = _HEADER.pack(2, tip, level[0],
                                  1_600_000_000 + 600 * h, 0x207FFFFF, h)
            payload = header + cs(len(txs)) + b"".join(txs)
            fh.write(MAGIC + _U32.pack(len(payload)) + payload)
            tip = dsha(header)
    return n_tx
