"""Exact parameter counting and analytic FLOP estimation for decoder-only models.

Parameter attribution, with d the hidden dim, L the layer count, and V' the
vocab size padded up to a multiple of 512:

    embedding           V' * d          (input table only)
    per layer           12 d^2 + 13 d   = attention (4d^2 + 4d)
                                        + feed-forward, 4x expansion (8d^2 + 5d)
                                        + two layer-norms (4d)
    final layer-norm    2 d
    output head         V' * d          (untied; counted as non-embedding)

so non_embedding = L * (12 d^2 + 13 d) + 2 d + V' * d. The untied head
inside non_embedding is the unique attribution reproducing the reference
model family exactly.

FLOP accounting offers two modes:
  - Exact: forward_per_token = 2 * (L * 12 d^2 + V' * d) + 4 * L * d * ctx,
    i.e. two FLOPs per matmul weight plus the attention score/value-mixing
    terms at an average context length ctx (default s/2 for causal training
    on sequences of length s).
  - SixND: the standard 6 * N_non_embedding FLOPs per trained token.
Training cost is 3x forward in both (backward pass ~ 2x forward).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import InvalidComparison, InvalidInput

VOCAB_PAD_MULTIPLE = 512


@dataclass(frozen=True)
class ModelArch:
    """Decoder-only architecture hyperparameters."""

    name: str
    layers: int
    dim: int
    heads: int
    vocab_size: int = 100_000
    seq_len: int = 512
    tied_embeddings: bool = False

    def __post_init__(self):
        if self.layers < 1:
            raise InvalidInput(f"{self.name}: layers must be >= 1")
        if self.dim < 1 or self.heads < 1 or self.vocab_size < 1 or self.seq_len < 1:
            raise InvalidInput(f"{self.name}: dims, heads, vocab and seq_len must be positive")
        if self.dim % self.heads != 0:
            raise InvalidInput(f"{self.name}: dim {self.dim} not divisible by heads {self.heads}")


@dataclass(frozen=True)
class ParamCount:
    embedding: int
    non_embedding: int
    padded_vocab: int

    @property
    def total(self) -> int:
        return self.embedding + self.non_embedding


@dataclass(frozen=True)
class FlopEstimate:
    """Analytic FLOP numbers for one architecture in one accounting mode."""

    forward_per_token: float
    train_per_token: float
    mode: str
    seq_len: int

    @property
    def forward_per_sample(self) -> float:
        return self.forward_per_token * self.seq_len

    @property
    def train_per_sample(self) -> float:
        return self.train_per_token * self.seq_len

    def train_total(self, tokens: float) -> float:
        return self.train_per_token * tokens


def pad_vocab(v: int, multiple: int = VOCAB_PAD_MULTIPLE) -> int:
    """Smallest multiple of `multiple` that is >= v."""
    if v < 1 or multiple < 1:
        raise InvalidInput("vocab size and padding multiple must be >= 1")
    return ((v + multiple - 1) // multiple) * multiple


def param_count(arch: ModelArch) -> ParamCount:
    d, big_l = arch.dim, arch.layers
    v_pad = pad_vocab(arch.vocab_size)
    per_layer = 12 * d * d + 13 * d
    head = 0 if arch.tied_embeddings else v_pad * d
    return ParamCount(
        embedding=v_pad * d,
        non_embedding=big_l * per_layer + 2 * d + head,
        padded_vocab=v_pad,
    )


def flops(arch: ModelArch, mode: str = "sixnd", avg_context: float | None = None) -> FlopEstimate:
    """FLOP estimate per token; `mode` is "exact" or "sixnd".

    avg_context applies to exact mode only and defaults to seq_len / 2, the
    mean causal context within one training sequence.
    """
    mode = mode.lower()
    pc = param_count(arch)
    if mode == "sixnd":
        train = 6.0 * pc.non_embedding
        fwd = train / 3.0
    elif mode == "exact":
        if avg_context is None:
            avg_context = arch.seq_len / 2
        d, big_l = arch.dim, arch.layers
        head = 0 if arch.tied_embeddings else pc.padded_vocab * d
        matmul_params = big_l * 12 * d * d + head
        fwd = 2.0 * matmul_params + 4.0 * big_l * d * avg_context
        train = 3.0 * fwd
    else:
        raise InvalidInput(f"unknown FLOP mode {mode!r} (expected 'exact' or 'sixnd')")
    return FlopEstimate(forward_per_token=fwd, train_per_token=train, mode=mode, seq_len=arch.seq_len)


@dataclass(frozen=True)
class ScalingRow:
    name: str
    layers: int
    dim: int
    non_embedding: int
    embedding: int
    train_flops_per_sample: float
    relative_flops: float
    note: str = ""


def scaling_table(base: ModelArch, variants: list[ModelArch], mode: str = "sixnd") -> list[ScalingRow]:
    """Side-by-side width/depth comparison rows, FLOPs relative to `base`.

    All variants must share vocab and sequence length with the base model;
    otherwise per-sample FLOPs are not comparable.
    """
    rows = []
    base_est = flops(base, mode)
    for arch in [base] + list(variants):
        if arch.vocab_size != base.vocab_size or arch.seq_len != base.seq_len:
            raise InvalidComparison(
                f"{arch.name}: vocab/seq_len ({arch.vocab_size}/{arch.seq_len}) differ from "
                f"base ({base.vocab_size}/{base.seq_len})"
            )
        pc = param_count(arch)
        est = flops(arch, mode)
        rows.append(
            ScalingRow(
                name=arch.name,
                layers=arch.layers,
                dim=arch.dim,
                non_embedding=pc.non_embedding,
                embedding=pc.embedding,
                train_flops_per_sample=est.train_per_sample,
                relative_flops=est.train_per_token / base_est.train_per_token,
                note=PRESET_NOTES.get(arch.name, ""),
            )
        )
    return rows


def format_scaling_table(rows: list[ScalingRow]) -> str:
    """Aligned-text rendering of scaling_table rows."""
    header = ("model", "layers", "dim", "non-embedding", "embedding", "train FLOP/sample", "rel FLOP")
    cells = [header]
    for r in rows:
        cells.append(
            (
                r.name,
                str(r.layers),
                str(r.dim),
                f"{r.non_embedding:,}",
                f"{r.embedding:,}",
                f"{r.train_flops_per_sample:.4e}",
                f"{r.relative_flops:.3f}",
            )
        )
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    notes = [f"note ({r.name}): {r.note}" for r in rows if r.note]
    return "\n".join(lines + notes)


# Reference family: six base sizes plus four width/depth variants of the
# smallest, all with a 100k vocab padded to 100,352 and 512-token sequences.
PRESETS: dict[str, ModelArch] = {
    a.name: a
    for a in [
        ModelArch("70m", layers=6, dim=512, heads=8),
        ModelArch("160m", layers=12, dim=768, heads=16),
        ModelArch("410m", layers=24, dim=1024, heads=16),
        ModelArch("610m", layers=16, dim=1536, heads=16),
        ModelArch("1b", layers=16, dim=2048, heads=8),
        ModelArch("6.9b", layers=32, dim=4096, heads=32),
        ModelArch("70m-d768", layers=6, dim=768, heads=8),
        ModelArch("70m-12l", layers=12, dim=512, heads=8),
        ModelArch("70m-d1024", layers=6, dim=1024, heads=8),
        ModelArch("70m-24l", layers=24, dim=512, heads=8),
    ]
}

# The widely circulated non-embedding figure of 178,339,840 for the 12-layer
# d=512 variant belongs to the 6-layer d=1024 variant instead; the
# architecture formula gives 89,209,856 and that value is used here.
PRESET_NOTES: dict[str, str] = {
    "70m-12l": (
        "non-embedding count 89,209,856 comes from the architecture formula; "
        "a sometimes-quoted figure of 178,339,840 for this variant matches the "
        "d=1024 variant and is inconsistent with every other row"
    ),
}

# Names of the six base presets, smallest to largest.
BASE_PRESETS = ("70m", "160m", "410m", "610m", "1b", "6.9b")
SCALED_PRESETS = ("70m-d768", "70m-12l", "70m-d1024", "70m-24l")

_PRESET_ALIASES = {f"pythia{name}": name for name in BASE_PRESETS}


def get_preset(name: str) -> ModelArch:
    """Look up a preset by name; pythia-prefixed aliases map to the base sizes."""
    key = name.lower().replace("pythia-", "pythia")
    key = _PRESET_ALIASES.get(key, key)
    try:
        return PRESETS[key]
    except KeyError:
        raise InvalidInput(
            f"unknown architecture preset {name!r}; known: {', '.join(PRESETS)}"
        ) from None


def arch_from_dict(raw: dict) -> ModelArch:
    """Build a ModelArch from a JSON-style dict of the dataclass fields."""
    try:
        return ModelArch(
            name=str(raw["name"]),
            layers=int(raw["layers"]),
            dim=int(raw["dim"]),
            heads=int(raw["heads"]),
            vocab_size=int(raw.get("vocab_size", 100_000)),
            seq_len=int(raw.get("seq_len", 512)),
            tied_embeddings=bool(raw.get("tied_embeddings", False)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"bad architecture record {raw!r}: {exc}") from exc


def with_name(arch: ModelArch, name: str) -> ModelArch:
    return replace(arch, name=name)
