#!/usr/bin/env python3
"""Independent feature-extraction oracle for the fixture corpus.

Parses corpus.hex with its own decoder, builds the opcode vocabulary, the raw
per-outpoint feature vectors and the fitted scaler parameters, and writes
corpus_features.json for the C++ tests to compare against.

    python3 oracle_features.py
"""
import json
import math
import os
import statistics
import struct

HERE = os.path.dirname(os.path.abspath(__file__))
VOCAB_SIZE = 75


class Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ValueError("truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def varint(self):
        first = self.take(1)[0]
        if first < 0xFD:
            return first
        width = {0xFD: 2, 0xFE: 4, 0xFF: 8}[first]
        return int.from_bytes(self.take(width), "little")


def parse_tx(raw):
    r = Reader(raw)
    version = struct.unpack("<i", r.take(4))[0]
    inputs = []
    for _ in range(r.varint()):
        prev = r.take(32)
        vout = struct.unpack("<I", r.take(4))[0]
        script = r.take(r.varint())
        seq = struct.unpack("<I", r.take(4))[0]
        inputs.append((prev, vout, script, seq))
    outputs = []
    for _ in range(r.varint()):
        amount = struct.unpack("<Q", r.take(8))[0]
        outputs.append((amount, r.take(r.varint())))
    locktime = struct.unpack("<I", r.take(4))[0]
    assert r.pos == len(raw)
    return {"version": version, "inputs": inputs, "outputs": outputs, "locktime": locktime}


def tokens(script):
    """Yields ("op", code) / ("push", payload) / ("err", rest)."""
    i = 0
    while i < len(script):
        c = script[i]
        if 1 <= c <= 0x4B:
            n, head = c, 1
        elif c in (0x4C, 0x4D, 0x4E):
            w = {0x4C: 1, 0x4D: 2, 0x4E: 4}[c]
            if i + 1 + w > len(script):
                yield ("err", script[i:])
                return
            n, head = int.from_bytes(script[i + 1:i + 1 + w], "little"), 1 + w
        else:
            yield ("op", c)
            i += 1
            continue
        if i + head + n > len(script):
            yield ("err", script[i:])
            return
        yield ("push", script[i + head:i + head + n])
        i += head + n


def is_p2pkh_lock(script):
    t = list(tokens(script))
    return (len(t) == 5 and t[0] == ("op", 0x76) and t[1] == ("op", 0xA9) and t[2][0] == "push"
            and len(t[2][1]) == 20 and t[3] == ("op", 0x88) and t[4] == ("op", 0xAC))


def is_p2pkh_unlock(script):
    t = list(tokens(script))
    return len(t) == 2 and t[0][0] == "push" and t[1][0] == "push" and len(t[1][1]) in (33, 65)


def build_vocab(txs):
    counts = [0] * 256
    for tx in txs:
        for _, script in tx["outputs"]:
            for kind, v in tokens(script):
                if kind == "op":
                    counts[v] += 1
    ranked = sorted((c for c in range(256) if counts[c] > 0), key=lambda c: (-counts[c], c))
    return ranked[:VOCAB_SIZE]


def global_features(tx):
    amounts = [a for a, _ in tx["outputs"]]
    g = [float(len(tx["inputs"])), float(len(amounts))]
    if amounts:
        srt = sorted(amounts)
        counts = {}
        for a in srt:
            counts[a] = counts.get(a, 0) + 1
        best = max(counts.values())
        mode = min(a for a, c in counts.items() if c == best)
        g += [float(sum(amounts)), float(max(amounts)), float(min(amounts)), sum(amounts) / len(amounts),
              float(mode), float(statistics.median(amounts)), statistics.pstdev([float(a) for a in amounts])]
    else:
        g += [0.0] * 7
    script_bytes = sum(len(s) for _, _, s, _ in tx["inputs"]) + sum(len(s) for _, s in tx["outputs"])
    g.append(float(script_bytes))
    unlock = [2.0 if is_p2pkh_unlock(i[2]) else 1.0 for i in tx["inputs"][:5]]
    lock = [2.0 if is_p2pkh_lock(o[1]) else 1.0 for o in tx["outputs"][:5]]
    g += unlock + [0.0] * (5 - len(unlock))
    g += lock + [0.0] * (5 - len(lock))
    return g


def outpoint_features(tx, vout, vocab):
    amount, script = tx["outputs"][vout]
    bag = [0.0] * (len(vocab) + 1)
    for kind, v in tokens(script):
        if kind == "op":
            bag[vocab.index(v) if v in vocab else len(vocab)] = 1.0
    pe = []
    for i in range(5):
        angle = vout / (10000.0 ** (2 * i / 10))
        pe += [math.sin(angle), math.cos(angle)]
    return global_features(tx) + bag + [float(len(script)), float(amount)] + pe


def main():
    from hashlib import sha256

    with open(os.path.join(HERE, "corpus.hex")) as f:
        raws = [bytes.fromhex(line.strip()) for line in f if line.strip()]
    txs = [parse_tx(r) for r in raws]
    vocab = build_vocab(txs)
    rows = []
    for raw, tx in zip(raws, txs):
        txid = sha256(sha256(raw).digest()).digest()[::-1].hex()
        for v in range(len(tx["outputs"])):
            rows.append({"txid": txid, "vout": v, "values": outpoint_features(tx, v, vocab)})

    d = len(rows[0]["values"])
    bag = len(vocab) + 1
    log_dims = list(range(2, 10)) + [20 + bag, 21 + bag]
    shift, scale = [], []
    for c in range(d):
        col = [r["values"][c] for r in rows]
        if c in log_dims:
            col = [math.log1p(x) for x in col]
        mean = math.fsum(col) / len(col)
        sd = math.sqrt(math.fsum((x - mean) ** 2 for x in col) / len(col))
        shift.append(mean)
        scale.append(sd if sd >= 1e-12 else 1.0)

    out = {"vocab": vocab, "dimension": d, "log1p_dimensions": log_dims, "shift": shift, "scale": scale,
           "rows": rows}
    with open(os.path.join(HERE, "corpus_features.json"), "w") as f:
        json.dump(out, f, indent=0)
        f.write("\n")
    print(f"{len(rows)} outpoints, vocabulary {len(vocab)}, dimension {d}")


if __name__ == "__main__":
    main()
