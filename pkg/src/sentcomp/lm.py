"""Trigram language model with interpolated Kneser-Ney smoothing.

Counts are taken over sentences padded as ``<s> <s> w1 ... wn </s>``, so the
first word of a sentence is predicted from the double-start context and
``P(w | start)`` is a bigram estimate on raw start counts.  Every lower order
uses continuation counts, and the unigram level interpolates with a uniform
floor over the predictable vocabulary so that no query returns zero.

Model files are plain text::

    # sentcomp-trigram v1
    discount 0.75
    lowercase 1
    <u> <v> <w> <count>
    ...

Only trigram counts are stored; every other table is derived from them, so a
dump round-trips bit-exactly.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

START = "<s>"
END = "</s>"
UNK = "<unk>"
RESERVED = frozenset({START, END, UNK})
DEFAULT_DISCOUNT = 0.75
FORMAT_HEADER = "# sentcomp-trigram v1"


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.tokens:
            raise CorpusError("sentence must contain at least one token")
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise CorpusError(f"invalid token {tok!r}")
            if tok in RESERVED:
                raise CorpusError(f"reserved token {tok!r} inside sentence")

    @classmethod
    def from_text(cls, text: str) -> "Sentence":
        return cls(tuple(text.split()))

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


@dataclass(frozen=True)
class AugmentedSentence:
    """Sentence with the start token at position 0 and end token at n+1."""

    tokens: tuple[str, ...]
    n: int

    def word(self, i: int) -> str:
        return self.tokens[i]

    @property
    def words(self) -> tuple[str, ...]:
        return self.tokens[1:-1]


def augment(s: Sentence) -> AugmentedSentence:
    return AugmentedSentence((START,) + tuple(s.tokens) + (END,), len(s.tokens))


def read_corpus(path, lowercase: bool = True) -> tuple[list[Sentence], int]:
    """Read one whitespace-tokenized sentence per line.

    Returns the sentences and the number of blank lines skipped.
    """
    sentences = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tokens = line.split()
            if not tokens:
                skipped += 1
                continue
            if lowercase:
                tokens = [t.lower() for t in tokens]
            sentences.append(Sentence(tuple(tokens)))
    if skipped:
        log.warning("skipped %d blank line(s) in %s", skipped, path)
    return sentences, skipped


def load_corpus(path, lowercase: bool = True) -> list[Sentence]:
    return read_corpus(path, lowercase)[0]


def _padded(tokens: Sequence[str]) -> list[str]:
    return [START, START, *tokens, END]


@dataclass
class NgramCounts:
    """Raw trigram counts plus the tables derived from them."""

    trigram: dict[tuple[str, str, str], int]
    bigram: dict[tuple[str, str], int] = field(default_factory=dict)
    unigram: dict[str, int] = field(default_factory=dict)
    vocabulary: frozenset[str] = frozenset()
    # trigram level: c(u v .) and N1+(u v .)
    context3_total: dict[tuple[str, str], int] = field(default_factory=dict)
    context3_types: dict[tuple[str, str], int] = field(default_factory=dict)
    # bigram level, continuation: N1+(. v w), N1+(. v .), N1+ of distinct w after v
    cont2: dict[tuple[str, str], int] = field(default_factory=dict)
    cont2_total: dict[str, int] = field(default_factory=dict)
    cont2_types: dict[str, int] = field(default_factory=dict)
    # unigram level, continuation: N1+(. w), N1+(. .), distinct w
    cont1: dict[str, int] = field(default_factory=dict)
    cont1_total: int = 0
    cont1_types: int = 0

    @classmethod
    def from_trigrams(cls, trigram: dict[tuple[str, str, str], int]) -> "NgramCounts":
        trigram = {k: v for k, v in trigram.items() if v > 0}
        bigram: Counter = Counter()
        unigram: Counter = Counter()
        ctx_total: Counter = Counter()
        ctx_types: Counter = Counter()
        cont2: Counter = Counter()
        for (u, v, w), c in trigram.items():
            bigram[(v, w)] += c
            unigram[w] += c
            ctx_total[(u, v)] += c
            ctx_types[(u, v)] += 1
            cont2[(v, w)] += 1
        cont2_total: Counter = Counter()
        cont2_types: Counter = Counter()
        cont1: Counter = Counter()
        for (v, w) in cont2:
            cont2_total[v] += cont2[(v, w)]
            cont2_types[v] += 1
            cont1[w] += 1
        vocab = {tok for key in trigram for tok in key} | {START, END, UNK}
        return cls(
            trigram=dict(trigram),
            bigram=dict(bigram),
            unigram=dict(unigram),
            vocabulary=frozenset(vocab),
            context3_total=dict(ctx_total),
            context3_types=dict(ctx_types),
            cont2=dict(cont2),
            cont2_total=dict(cont2_total),
            cont2_types=dict(cont2_types),
            cont1=dict(cont1),
            cont1_total=sum(cont1.values()),
            cont1_types=len(cont1),
        )


class TrigramModel:
    """Interpolated Kneser-Ney trigram model. Immutable after construction."""

    def __init__(self, counts: NgramCounts, discount: float = DEFAULT_DISCOUNT,
                 lowercase: bool = True):
        if not 0.0 < discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {discount}")
        self.counts = counts
        self.discount = discount
        self.lowercase = lowercase
        # every token that can be predicted, <s> excluded
        self.predictable = tuple(sorted(counts.vocabulary - {START}))
        self.V = len(self.predictable)

    @classmethod
    def from_trigram_counts(cls, trigram, discount=DEFAULT_DISCOUNT, lowercase=True):
        return cls(NgramCounts.from_trigrams(dict(trigram)), discount, lowercase)

    def _norm(self, tok: str) -> str:
        if tok in RESERVED:
            return tok
        if self.lowercase:
            tok = tok.lower()
        return tok if tok in self.counts.vocabulary else UNK

    # -- the three interpolation levels --------------------------------------

    def _p1(self, w: str) -> float:
        c = self.counts
        D = self.discount
        floor = 1.0 / self.V
        if c.cont1_total == 0:
            return floor
        top = max(c.cont1.get(w, 0) - D, 0.0) / c.cont1_total
        return top + D * c.cont1_types / c.cont1_total * floor

    def _p2(self, v: str, w: str) -> float:
        c = self.counts
        total = c.cont2_total.get(v, 0)
        if total == 0:
            return self._p1(w)
        D = self.discount
        top = max(c.cont2.get((v, w), 0) - D, 0.0) / total
        return top + D * c.cont2_types[v] / total * self._p1(w)

    def _p3(self, u: str, v: str, w: str) -> float:
        c = self.counts
        total = c.context3_total.get((u, v), 0)
        if total == 0:
            return self._p2(v, w)
        D = self.discount
        top = max(c.trigram.get((u, v, w), 0) - D, 0.0) / total
        return top + D * c.context3_types[(u, v)] / total * self._p2(v, w)

    # -- public queries -------------------------------------------------------

    def prob(self, u: str, v: str, w: str) -> float:
        """P(w | u, v) on internal tokens (``<s>`` allowed in the context)."""
        return self._p3(self._norm(u), self._norm(v), self._norm(w))

    def prob_start(self, w: str) -> float:
        """P(w | start): the first word of a sentence."""
        return self._p3(START, START, self._norm(w))

    def prob_trigram(self, u: str, v: str, w: str) -> float:
        """P(w | u, v).  ``u`` may be the start token."""
        return self._p3(self._norm(u), self._norm(v), self._norm(w))

    def prob_end(self, u: str, v: str) -> float:
        """P(end | u, v): probability that ``u v`` closes a sentence."""
        return self._p3(self._norm(u), self._norm(v), END)

    def contexts(self) -> list[tuple[str, str]]:
        return sorted(self.counts.context3_total)

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        lines = [FORMAT_HEADER, f"discount {self.discount!r}",
                 f"lowercase {int(self.lowercase)}"]
        for (u, v, w), cnt in sorted(self.counts.trigram.items()):
            lines.append(f"{u} {v} {w} {cnt}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TrigramModel":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if header != FORMAT_HEADER:
                raise CorpusError(f"{path}: not a trigram model file ({header!r})")
            discount = DEFAULT_DISCOUNT
            lowercase = True
            trigram = {}
            for lineno, line in enumerate(fh, start=2):
                parts = line.split()
                if not parts:
                    continue
                if parts[0] == "discount" and len(parts) == 2:
                    discount = float(parts[1])
                elif parts[0] == "lowercase" and len(parts) == 2:
                    lowercase = bool(int(parts[1]))
                elif len(parts) == 4:
                    trigram[(parts[0], parts[1], parts[2])] = int(parts[3])
                else:
                    raise CorpusError(f"{path}:{lineno}: malformed line {line!r}")
        return cls.from_trigram_counts(trigram, discount, lowercase)

    def __eq__(self, other):
        if not isinstance(other, TrigramModel):
            return NotImplemented
        return (self.discount == other.discount and self.lowercase == other.lowercase
                and self.counts.trigram == other.counts.trigram)

    def __repr__(self):
        return (f"TrigramModel(V={self.V}, trigrams={len(self.counts.trigram)}, "
                f"discount={self.discount})")


def count_trigrams(corpus: Iterable[Sentence]) -> dict[tuple[str, str, str], int]:
    counts: defaultdict = defaultdict(int)
    for s in corpus:
        toks = _padded(s.tokens)
        for i in range(len(toks) - 2):
            counts[(toks[i], toks[i + 1], toks[i + 2])] += 1
    return dict(counts)


def train(corpus: Sequence[Sentence], discount: float = DEFAULT_DISCOUNT,
          lowercase: bool = True) -> TrigramModel:
    if not corpus:
        raise CorpusError("cannot train on an empty corpus")
    if lowercase:
        corpus = [Sentence(tuple(t.lower() for t in s.tokens)) for s in corpus]
    return TrigramModel.from_trigram_counts(count_trigrams(corpus), discount, lowercase)
