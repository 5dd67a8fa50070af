"""Sentence-pair formatting, target-only loss masks, sequence packing, shards.

A tokenized sentence pair is laid out as

    SOURCE </src> <tgt_lang> <src_lang> <dom> TARGET <eos>

where everything the model must *predict* is loss-bearing: the source
language token, the domain token, the target tokens, and the closing <eos>.
The source, </src>, and the target-language token are inputs and carry no
loss. Formatted samples are packed back-to-back into fixed-length training
sequences, so in the training distribution every source (except the very
first of a stream) is preceded by the <eos> that closed the previous sample.
`inference_prefix` reproduces that context at inference time by prefixing
<eos> (on by default); without it, generation quality degrades because the
model never saw a source that did not follow an <eos>.

Packing policies:
  - split: overflow tokens (and their mask bits) carry into the next
    sequence; nothing is dropped and only the final sequence is padded.
  - droptail: a sample that does not fit in the current sequence starts a
    fresh one, the remainder is padded; samples longer than seq_len are
    rejected and counted, never truncated.

Shard files are little-endian: magic "PKSH", version u32 = 1, seq_len u32,
vocab_size u32, sequence count u64, policy u8 (0 = split, 1 = droptail);
then per sequence seq_len u32 token ids followed by ceil(seq_len / 8) mask
bytes, LSB-first. Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    InvalidInput,
    MagicMismatch,
    TruncatedShard,
    UnknownControlToken,
    VersionMismatch,
)

MAGIC = b"PKSH"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIQB")
_POLICY_CODES = {"split": 0, "droptail": 1}
_POLICY_NAMES = {v: k for k, v in _POLICY_CODES.items()}


@dataclass(frozen=True)
class SpecialTokenRegistry:
    """Reserved control-token ids plus the vocabulary bound they live under."""

    end_of_source_id: int
    end_of_sequence_id: int
    pad_id: int
    language_ids: dict[str, int]
    domain_ids: dict[str, int]
    vocab_size: int

    def __post_init__(self):
        if not self.language_ids or not self.domain_ids:
            raise InvalidInput("registry needs at least one language and one domain")
        ids = [self.end_of_source_id, self.end_of_sequence_id, self.pad_id]
        ids += list(self.language_ids.values()) + list(self.domain_ids.values())
        if len(set(ids)) != len(ids):
            raise InvalidInput("registry token ids must be distinct")
        if min(ids) < 0 or max(ids) >= self.vocab_size:
            raise InvalidInput(f"registry ids must lie in [0, {self.vocab_size})")

    def language_id(self, code: str) -> int:
        try:
            return self.language_ids[code]
        except KeyError:
            raise UnknownControlToken(f"unknown language code {code!r}") from None

    def domain_id(self, name: str) -> int:
        try:
            return self.domain_ids[name]
        except KeyError:
            raise UnknownControlToken(f"unknown domain {name!r}") from None


@dataclass(frozen=True)
class SamplePair:
    source_tokens: tuple[int, ...]
    target_tokens: tuple[int, ...]
    source_lang: str
    target_lang: str
    domain: str

    def __post_init__(self):
        object.__setattr__(self, "source_tokens", tuple(self.source_tokens))
        object.__setattr__(self, "target_tokens", tuple(self.target_tokens))


@dataclass(frozen=True)
class FormattedSample:
    """Token ids plus a same-length loss mask (True = position carries loss)."""

    tokens: tuple[int, ...]
    loss_mask: tuple[bool, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.loss_mask):
            raise InvalidInput("tokens and loss_mask must have equal length")

    def __len__(self) -> int:
        return len(self.tokens)


def _check_content(tokens: tuple[int, ...], what: str, registry: SpecialTokenRegistry, banned: dict[int, str]) -> None:
    if not tokens:
        raise InvalidInput(f"{what} must be non-empty")
    for tok in tokens:
        if not 0 <= tok < registry.vocab_size:
            raise InvalidInput(f"{what} token {tok} outside vocabulary [0, {registry.vocab_size})")
        if tok in banned:
            raise InvalidInput(f"{what} must not contain the {banned[tok]} token (id {tok})")


def format_sample(pair: SamplePair, registry: SpecialTokenRegistry) -> FormattedSample:
    """Lay out one pair and its target-only loss mask.

    The source may not contain </src> or <eos> and the target may not contain
    <eos>: role decoding scans for those two delimiters, so embedded copies
    would corrupt sample boundaries.
    """
    eosrc, eos = registry.end_of_source_id, registry.end_of_sequence_id
    _check_content(pair.source_tokens, "source", registry, {eosrc: "</src>", eos: "<eos>"})
    _check_content(pair.target_tokens, "target", registry, {eos: "<eos>"})
    tgt_lang = registry.language_id(pair.target_lang)
    src_lang = registry.language_id(pair.source_lang)
    dom = registry.domain_id(pair.domain)

    tokens = pair.source_tokens + (eosrc, tgt_lang, src_lang, dom) + pair.target_tokens + (eos,)
    mask = (
        (False,) * len(pair.source_tokens)
        + (False, False, True, True)
        + (True,) * len(pair.target_tokens)
        + (True,)
    )
    return FormattedSample(tokens=tokens, loss_mask=mask)


def inference_prefix(
    source_tokens: Iterable[int],
    target_lang: str,
    registry: SpecialTokenRegistry,
    *,
    source_lang: str | None = None,
    domain: str | None = None,
    eos_prefix: bool = True,
) -> tuple[int, ...]:
    """Prompt tokens for generation: [<eos>]? source </src> tgt_lang [src_lang]? [dom]?.

    eos_prefix (default on) reproduces the packed training context, where
    every source follows the previous sample's <eos>.
    """
    source = tuple(source_tokens)
    eosrc, eos = registry.end_of_source_id, registry.end_of_sequence_id
    _check_content(source, "source", registry, {eosrc: "</src>", eos: "<eos>"})
    out = (eos,) if eos_prefix else ()
    out += source + (eosrc, registry.language_id(target_lang))
    if source_lang is not None:
        out += (registry.language_id(source_lang),)
    if domain is not None:
        out += (registry.domain_id(domain),)
    return out


class PackedShard:
    """Fixed-length packed sequences with per-position loss masks."""

    def __init__(self, seq_len: int, vocab_size: int, policy: str, tokens: np.ndarray, masks: np.ndarray):
        if policy not in _POLICY_CODES:
            raise InvalidInput(f"unknown policy {policy!r}")
        tokens = np.asarray(tokens, dtype=np.uint32).reshape(-1, seq_len)
        masks = np.asarray(masks, dtype=bool).reshape(-1, seq_len)
        if tokens.shape != masks.shape:
            raise InvalidInput("token and mask arrays must have the same shape")
        self.seq_len = int(seq_len)
        self.vocab_size = int(vocab_size)
        self.policy = policy
        self.tokens = tokens
        self.masks = masks

    @property
    def n_sequences(self) -> int:
        return self.tokens.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PackedShard):
            return NotImplemented
        return (
            self.seq_len == other.seq_len
            and self.vocab_size == other.vocab_size
            and self.policy == other.policy
            and np.array_equal(self.tokens, other.tokens)
            and np.array_equal(self.masks, other.masks)
        )

    def __repr__(self) -> str:
        return (
            f"PackedShard(seq_len={self.seq_len}, vocab_size={self.vocab_size}, "
            f"policy={self.policy!r}, n_sequences={self.n_sequences})"
        )


@dataclass(frozen=True)
class PackResult:
    """A packed shard plus the bookkeeping the packing run produced."""

    shard: PackedShard
    n_packed: int
    n_skipped: int
    skipped_lengths: tuple[int, ...] = field(default_factory=tuple)


def pack(
    samples: Iterable[FormattedSample],
    seq_len: int,
    policy: str,
    registry: SpecialTokenRegistry,
    *,
    lead_eos: bool = False,
) -> PackResult:
    """Concatenate formatted samples into fixed-length sequences.

    lead_eos emits a single loss-masked <eos> before the first sample so
    even the first source follows an <eos>; off by default (the first sample
    of a training stream historically gets no prefix).
    """
    if seq_len < 2:
        raise InvalidInput("seq_len must be >= 2")
    if policy not in _POLICY_CODES:
        raise InvalidInput(f"unknown policy {policy!r} (expected 'split' or 'droptail')")

    buf_tokens: list[int] = []
    buf_mask: list[bool] = []
    if lead_eos:
        buf_tokens.append(registry.end_of_sequence_id)
        buf_mask.append(False)

    seq_tokens: list[list[int]] = []
    seq_masks: list[list[bool]] = []
    n_packed = 0
    skipped: list[int] = []
    pad = registry.pad_id

    def _flush_padded() -> None:
        if not buf_tokens:
            return
        fill = seq_len - len(buf_tokens)
        seq_tokens.append(buf_tokens + [pad] * fill)
        seq_masks.append(buf_mask + [False] * fill)
        buf_tokens.clear()
        buf_mask.clear()

    for sample in samples:
        if policy == "droptail":
            if len(sample) > seq_len:
                skipped.append(len(sample))
                continue
            if len(buf_tokens) + len(sample) > seq_len:
                _flush_padded()
            buf_tokens.extend(sample.tokens)
            buf_mask.extend(sample.loss_mask)
            n_packed += 1
            if len(buf_tokens) == seq_len:
                _flush_padded()
        else:
            buf_tokens.extend(sample.tokens)
            buf_mask.extend(sample.loss_mask)
            n_packed += 1
            while len(buf_tokens) >= seq_len:
                seq_tokens.append(buf_tokens[:seq_len])
                seq_masks.append(buf_mask[:seq_len])
                del buf_tokens[:seq_len]
                del buf_mask[:seq_len]
    _flush_padded()

    n_seq = len(seq_tokens)
    tokens = np.array(seq_tokens, dtype=np.uint32).reshape(n_seq, seq_len)
    masks = np.array(seq_masks, dtype=bool).reshape(n_seq, seq_len)
    shard = PackedShard(seq_len=seq_len, vocab_size=registry.vocab_size, policy=policy, tokens=tokens, masks=masks)
    return PackResult(shard=shard, n_packed=n_packed, n_skipped=len(skipped), skipped_lengths=tuple(skipped))


def write_shard(shard: PackedShard, path: str | Path) -> None:
    """Serialize atomically: temp file in the target directory, then rename."""
    path = Path(path)
    header = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        shard.seq_len,
        shard.vocab_size,
        shard.n_sequences,
        _POLICY_CODES[shard.policy],
    )
    mask_bytes = np.packbits(shard.masks, axis=1, bitorder="little") if shard.n_sequences else None
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            for i in range(shard.n_sequences):
                fh.write(shard.tokens[i].astype("<u4").tobytes())
                fh.write(mask_bytes[i].tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_shard(path: str | Path) -> PackedShard:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        if data[:4] != MAGIC:
            raise MagicMismatch(f"{path}: not a shard file")
        raise TruncatedShard(f"{path}: incomplete header ({len(data)} bytes)")
    magic, version, seq_len, vocab, count, policy_code = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MagicMismatch(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: unsupported shard version {version}")
    if policy_code not in _POLICY_NAMES:
        raise InvalidInput(f"{path}: unknown policy code {policy_code}")

    mask_stride = (seq_len + 7) // 8
    body = count * (4 * seq_len + mask_stride)
    if len(data) != _HEADER.size + body:
        raise TruncatedShard(
            f"{path}: expected {_HEADER.size + body} bytes for {count} sequences, found {len(data)}"
        )

    tokens = np.empty((count, seq_len), dtype=np.uint32)
    masks = np.empty((count, seq_len), dtype=bool)
    off = _HEADER.size
    for i in range(count):
        tokens[i] = np.frombuffer(data, dtype="<u4", count=seq_len, offset=off)
        off += 4 * seq_len
        packed = np.frombuffer(data, dtype=np.uint8, count=mask_stride, offset=off)
        masks[i] = np.unpackbits(packed, bitorder="little")[:seq_len].astype(bool)
        off += mask_stride
    return PackedShard(
        seq_len=seq_len, vocab_size=vocab, policy=_POLICY_NAMES[policy_code], tokens=tokens, masks=masks
    )


@dataclass(frozen=True)
class ShardStats:
    total_tokens: int
    loss_tokens: int
    pad_tokens: int
    samples_started: int

    @property
    def loss_fraction(self) -> float:
        content = self.total_tokens - self.pad_tokens
        return self.loss_tokens / content if content else 0.0


def shard_stats(shard: PackedShard) -> ShardStats:
    """Exact token bookkeeping for a packer-produced shard.

    Padding is positional: every sample ends with a loss-bearing <eos>, so
    pad is the mask-false tail after a sequence's last loss position: in
    every sequence under droptail, and only in the final sequence under
    split (earlier split sequences end mid-sample and carry no pad). A
    sample count needs no registry either: each sample's mask is a false
    block then a true block, so samples = rising edges in the concatenated
    mask stream.
    """
    n_seq, seq_len = shard.masks.shape
    total = n_seq * seq_len
    loss = int(shard.masks.sum())
    if n_seq == 0:
        return ShardStats(0, 0, 0, 0)

    if shard.policy == "droptail":
        pad = sum(_tail_pad_row(shard.masks[i]) for i in range(n_seq))
    else:
        pad = _tail_pad_row(shard.masks[-1])

    flat = shard.masks.reshape(-1)
    rising = int(flat[0]) + int(np.count_nonzero(flat[1:] & ~flat[:-1]))
    return ShardStats(total_tokens=total, loss_tokens=loss, pad_tokens=pad, samples_started=rising)


def decode_samples(shard: PackedShard, registry: SpecialTokenRegistry) -> list[SamplePair]:
    """Reconstruct the original pairs from token positions alone.

    Scan to </src>, read the three fixed control slots, then scan to <eos>.
    Inverts format_sample + pack exactly for shards this package produced.
    """
    lang_of = {v: k for k, v in registry.language_ids.items()}
    dom_of = {v: k for k, v in registry.domain_ids.items()}
    eosrc, eos = registry.end_of_source_id, registry.end_of_sequence_id

    streams: list[np.ndarray]
    if shard.policy == "droptail":
        streams = [shard.tokens[i][: shard.seq_len - _tail_pad_row(shard.masks[i])] for i in range(shard.n_sequences)]
    else:
        flat_tokens = shard.tokens.reshape(-1)
        flat_masks = shard.masks.reshape(-1)
        true_pos = np.flatnonzero(flat_masks)
        end = int(true_pos[-1]) + 1 if true_pos.size else 0
        streams = [flat_tokens[:end]]

    pairs: list[SamplePair] = []
    for stream in streams:
        toks = stream.tolist()
        pos = 0
        if toks and toks[0] == eos:
            pos = 1  # lead_eos stream prefix
        while pos < len(toks):
            try:
                sep = toks.index(eosrc, pos)
            except ValueError:
                raise InvalidInput("stream ends mid-sample: no </src> found") from None
            source = tuple(toks[pos:sep])
            if sep + 3 >= len(toks):
                raise InvalidInput("stream ends mid-sample: control slots truncated")
            tgt_lang, src_lang, dom = toks[sep + 1], toks[sep + 2], toks[sep + 3]
            try:
                goal = toks.index(eos, sep + 4)
            except ValueError:
                raise InvalidInput("stream ends mid-sample: no <eos> found") from None
            target = tuple(toks[sep + 4 : goal])
            if tgt_lang not in lang_of or src_lang not in lang_of:
                raise InvalidInput(f"control slot holds non-language token ({tgt_lang}, {src_lang})")
            if dom not in dom_of:
                raise InvalidInput(f"control slot holds non-domain token ({dom})")
            if not source or not target:
                raise InvalidInput("decoded an empty source or target")
            pairs.append(
                SamplePair(
                    source_tokens=source,
                    target_tokens=target,
                    source_lang=lang_of[src_lang],
                    target_lang=lang_of[tgt_lang],
                    domain=dom_of[dom],
                )
            )
            pos = goal + 1
    return pairs


def _tail_pad_row(mask_row: np.ndarray) -> int:
    true_pos = np.flatnonzero(mask_row)
    return mask_row.size if true_pos.size == 0 else mask_row.size - 1 - int(true_pos[-1])


def load_registry(path: str | Path) -> SpecialTokenRegistry:
    """Registry JSON: end_of_source, end_of_sequence, pad, languages, domains, vocab_size."""
    raw = json.loads(Path(path).read_text())
    try:
        return SpecialTokenRegistry(
            end_of_source_id=int(raw["end_of_source"]),
            end_of_sequence_id=int(raw["end_of_sequence"]),
            pad_id=int(raw["pad"]),
            language_ids={str(k): int(v) for k, v in raw["languages"].items()},
            domain_ids={str(k): int(v) for k, v in raw["domains"].items()},
            vocab_size=int(raw["vocab_size"]),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise InvalidInput(f"{path}: bad registry: {exc}") from exc


def load_samples_jsonl(path: str | Path) -> Iterator[SamplePair]:
    """JSON-lines records: source_tokens, target_tokens, source_lang, target_lang, domain."""
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                yield SamplePair(
                    source_tokens=tuple(int(t) for t in raw["source_tokens"]),
                    target_tokens=tuple(int(t) for t in raw["target_tokens"]),
                    source_lang=str(raw["source_lang"]),
                    target_lang=str(raw["target_lang"]),
                    domain=str(raw["domain"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidInput(f"{path}:{lineno}: bad sample record: {exc}") from exc
