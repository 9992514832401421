"""Synthetic bandit-MT tasks with a controllable domain shift, plus the text
filters used to prepare real data.

Each instance is generated from its own ``(seed, index)`` stream, so any
slice of a dataset can be regenerated independently and in parallel.

Candidate construction: a hidden in-domain scorer ``w_in`` ranks the latent
feature vectors; the top-ranked candidate *is* the reference and lower-ranked
candidates are increasingly heavy edits of it, so BLEU feedback tracks
``w_in``. The seed model ``w_out`` is ``w_in`` rotated by ``shift * pi``.
Two extra features are appended: a noisy BLEU proxy and a constant bias.
"""
from __future__ import annotations

import json
import math
import re
import unicodedata
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .bleu import smoothed_sentence_bleu
from .data import Candidate, Instance

N_EXTRA_FEATURES = 2  # bleu proxy, bias


class TaskSpecError(ValueError):
    pass


@dataclass
class TaskSpec:
    vocab_size: int = 40
    min_len: int = 4
    max_len: int = 12
    n_candidates: int = 20
    dim: int = 10
    noise: float = 0.2
    seed: int = 42
    shift: float = 0.5
    weight_scale: float = 4.0
    proxy_noise: float = 0.25
    w_in: Optional[list] = None
    w_out: Optional[list] = None

    def __post_init__(self):
        problems = self.validate()
        if problems:
            raise TaskSpecError("; ".join(problems))
        if self.w_in is None or self.w_out is None:
            w_in, w_out = _domain_weights(self)
            self.w_in = w_in.tolist() if self.w_in is None else list(self.w_in)
            self.w_out = w_out.tolist() if self.w_out is None else list(self.w_out)
        for name in ("w_in", "w_out"):
            if len(getattr(self, name)) != self.dim:
                raise TaskSpecError(f"{name} must have length dim={self.dim}")

    def validate(self) -> list[str]:
        problems = []
        if self.dim < N_EXTRA_FEATURES + 1:
            problems.append(f"dim must be >= {N_EXTRA_FEATURES + 1}")
        if self.min_len < 4:
            problems.append("min_len must be >= 4 so an exact match can score 1.0")
        if self.max_len < self.min_len:
            problems.append("max_len < min_len")
        if self.n_candidates < 2:
            problems.append("n_candidates must be >= 2")
        if not 0.0 <= self.noise <= 1.0:
            problems.append("noise must be in [0, 1]")
        if self.vocab_size < 2:
            problems.append("vocab_size must be >= 2")
        elif self.vocab_size ** self.min_len < self.n_candidates:
            problems.append(
                f"infeasible: {self.n_candidates} candidates but only "
                f"{self.vocab_size}**{self.min_len} distinct sequences"
            )
        return problems

    @property
    def latent_dim(self) -> int:
        return self.dim - N_EXTRA_FEATURES

    @classmethod
    def from_json(cls, path) -> "TaskSpec":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise TaskSpecError(f"unknown task spec fields: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        return asdict(self)


def _domain_weights(spec: TaskSpec) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([spec.seed, 2**31 - 1])
    a = rng.standard_normal(spec.latent_dim)
    a /= np.linalg.norm(a)
    b = rng.standard_normal(spec.latent_dim)
    b -= a * (a @ b)
    b /= np.linalg.norm(b)
    angle = spec.shift * math.pi
    latent_in = spec.weight_scale * a
    latent_out = spec.weight_scale * (math.cos(angle) * a + math.sin(angle) * b)
    pad = np.zeros(N_EXTRA_FEATURES)
    return np.concatenate([latent_in, pad]), np.concatenate([latent_out, pad])


def _distinct_edit(rng, base, n_edits, vocab_size, taken, attempts=200):
    for _ in range(attempts):
        toks = list(base)
        for _ in range(n_edits):
            if len(toks) > 4 and rng.random() < 0.25:
                del toks[rng.integers(len(toks))]
            else:
                toks[rng.integers(len(toks))] = f"en{rng.integers(vocab_size)}"
        key = tuple(toks)
        if key not in taken:
            taken.add(key)
            return toks
    raise TaskSpecError("could not draw distinct candidates; enlarge vocab_size or lengths")


def generate_instance(spec: TaskSpec, index: int) -> Instance:
    rng = np.random.default_rng([spec.seed, index])
    n = spec.n_candidates
    length = int(rng.integers(spec.min_len, spec.max_len + 1))
    source = [f"de{t}" for t in rng.integers(spec.vocab_size, size=length)]
    best_tokens = [f"en{t}" for t in rng.integers(spec.vocab_size, size=length)]

    latent = rng.uniform(-1.0, 1.0, size=(n, spec.latent_dim))
    quality = latent @ np.asarray(spec.w_in[: spec.latent_dim])
    order = np.argsort(-quality, kind="stable")

    taken = {tuple(best_tokens)}
    tokens = [None] * n
    tokens[order[0]] = best_tokens
    for rank in range(1, n):
        n_edits = max(1, round(length * rank / (n - 1)))
        tokens[order[rank]] = _distinct_edit(rng, best_tokens, n_edits, spec.vocab_size, taken)

    corrupt = rng.random() < spec.noise
    if corrupt:
        # non-literal reference: an edited copy of a lower-ranked candidate,
        # built from tokens no candidate uses
        src = tokens[order[rng.integers(1, n)]]
        reference = list(src)
        n_edits = max(1, round(0.25 * len(reference)))
        for pos in rng.choice(len(reference), size=n_edits, replace=False):
            reference[pos] = f"pe{rng.integers(spec.vocab_size)}"
    else:
        reference = best_tokens

    candidates = []
    for i in range(n):
        proxy = 2.0 * smoothed_sentence_bleu(tokens[i], best_tokens) - 1.0
        proxy = float(np.clip(proxy + spec.proxy_noise * rng.standard_normal(), -1.0, 1.0))
        feats = np.concatenate([latent[i], [proxy, 1.0]])
        candidates.append(Candidate(tokens[i], feats))
    return Instance(id=f"{spec.seed}-{index}", source=source, reference=reference, candidates=candidates)


def generate_task(spec: TaskSpec, count: int, start: int = 0) -> list[Instance]:
    if count < 1:
        raise TaskSpecError("count must be >= 1")
    return [generate_instance(spec, start + i) for i in range(count)]


# -- data preparation filters -------------------------------------------------

_NUMERAL = re.compile(r"^\d+(?:\.\d+)?$")
_DECIMAL_COMMA = re.compile(r"(?<=\d),(?=\d)")
_TOKEN = re.compile(r"\d+(?:\.\d+)+|\w+|[^\w\s]")

# unicode punctuation -> ASCII
PUNCT_MAP = {
    "“": '"', "”": '"', "„": '"', "«": '"', "»": '"',
    "‘": "'", "’": "'", "‚": "'", "‹": "'", "›": "'",
    "\u2013": "-", "\u2014": "-", "−": "-",
    "…": "...",
    " ": " ", " ": " ", " ": " ",
    "，": ",", "、": ",", "：": ":", "；": ";",
    "！": "!", "？": "?", "（": "(", "）": ")",
}
_PUNCT_TABLE = str.maketrans(PUNCT_MAP)


def numeral_filter(source) -> bool:
    """Keep a source unless two or more of its tokens are numerals."""
    return sum(1 for tok in source if _NUMERAL.match(tok)) < 2


def normalize_decimal_delimiters(text: str) -> str:
    return _DECIMAL_COMMA.sub(".", text)


def preprocess(text: str) -> list[str]:
    text = unicodedata.normalize("NFC", text).translate(_PUNCT_TABLE)
    text = "".join(ch for ch in text if ch.isprintable() or ch.isspace())
    return _TOKEN.findall(text.lower())
