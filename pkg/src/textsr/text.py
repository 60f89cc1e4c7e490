"""Caption tokenization and the recurrent text encoder.

Captions are lowercased, punctuation-stripped, whitespace-split, then
encoded by a single-layer bidirectional LSTM. The two directions are
summed so per-word features keep width D; PAD positions are exactly zero.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .errors import ConfigurationError, EmptyCaptionError

PAD = 0
UNK = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_CLEAN = re.compile(r"[^a-z0-9\s]")


def clean_words(caption: str) -> list:
    text = _CLEAN.sub(" ", caption.lower())
    return text.split()


class Vocabulary:
    def __init__(self, token_to_index: dict):
        self.token_to_index = dict(token_to_index)
        self.token_to_index.setdefault(PAD_TOKEN, PAD)
        self.token_to_index.setdefault(UNK_TOKEN, UNK)
        size = max(self.token_to_index.values()) + 1
        self.index_to_token = [""] * size
        for token, index in self.token_to_index.items():
            self.index_to_token[index] = token

    def __len__(self):
        return len(self.index_to_token)

    def __contains__(self, token):
        return token in self.token_to_index

    def index(self, token: str) -> int:
        return self.token_to_index.get(token, UNK)

    def words(self) -> list:
        """Non-reserved tokens in index order."""
        return self.index_to_token[2:]

    def to_json(self) -> dict:
        return dict(self.token_to_index)

    @classmethod
    def from_json(cls, data: dict) -> "Vocabulary":
        return cls({token: int(index) for token, index in data.items()})

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=2)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def build_vocab(captions: list, min_count: int = 1) -> Vocabulary:
    if not captions:
        raise ConfigurationError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for caption in captions:
        counts.update(clean_words(caption))
    kept = sorted(
        (token for token, count in counts.items() if count >= min_count),
        key=lambda token: (-counts[token], token),
    )
    mapping = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
    for offset, token in enumerate(kept):
        mapping[token] = 2 + offset
    return Vocabulary(mapping)


@dataclass
class TokenizedCaption:
    ids: np.ndarray       # (t_max,) int64, PAD-right
    length: int
    words: list           # the real (cleaned, truncated) words


def tokenize(caption: str, vocab: Vocabulary, t_max: int = 16) -> TokenizedCaption:
    if t_max < 1:
        raise ConfigurationError(f"t_max must be >= 1, got {t_max}")
    words = clean_words(caption)
    if not words:
        raise EmptyCaptionError(f"caption {caption!r} has no tokens after cleaning")
    words = words[:t_max]
    ids = np.full(t_max, PAD, dtype=np.int64)
    for i, word in enumerate(words):
        ids[i] = vocab.index(word)
    return TokenizedCaption(ids=ids, length=len(words), words=words)


@dataclass
class TextFeatures:
    words: torch.Tensor      # (D, T) with PAD columns exactly zero
    sentence: torch.Tensor   # (D,)
    length: int


class TextEncoder(nn.Module):
    """Embedding + single-layer bidirectional LSTM; direction outputs summed."""

    def __init__(self, vocab_size: int, dim: int = 64):
        super().__init__()
        self.dim = dim
        self.embedding = nn.Embedding(vocab_size, dim, padding_idx=PAD)
        self.rnn = nn.LSTM(dim, dim, num_layers=1, bidirectional=True, batch_first=True)

    def forward(self, ids: torch.Tensor, lengths: torch.Tensor):
        """ids (B, T) int64, lengths (B,) -> word features (B, D, T), sentence (B, D)."""
        if (lengths < 1).any():
            raise EmptyCaptionError("every caption in a batch needs at least one token")
        t_max = ids.shape[1]
        emb = self.embedding(ids)
        packed = pack_padded_sequence(
            emb, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        out, (h_n, _) = self.rnn(packed)
        out, _ = pad_packed_sequence(out, batch_first=True, total_length=t_max)
        words = out[..., : self.dim] + out[..., self.dim :]
        sentence = h_n[0] + h_n[1]
        return words.transpose(1, 2), sentence

    def encode(self, tokens: TokenizedCaption) -> TextFeatures:
        ids = torch.as_tensor(tokens.ids, dtype=torch.long).unsqueeze(0)
        lengths = torch.tensor([tokens.length], dtype=torch.long)
        words, sentence = self(ids, lengths)
        return TextFeatures(words=words[0], sentence=sentence[0], length=tokens.length)


def encode_batch(encoder: TextEncoder, captions: list, vocab: Vocabulary, t_max: int):
    """Tokenize and encode a list of caption strings."""
    tokens = [tokenize(c, vocab, t_max) for c in captions]
    ids = torch.as_tensor(np.stack([t.ids for t in tokens]), dtype=torch.long)
    lengths = torch.tensor([t.length for t in tokens], dtype=torch.long)
    words, sentences = encoder(ids, lengths)
    return words, sentences, lengths
