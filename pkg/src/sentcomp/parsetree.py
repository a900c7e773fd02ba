"""Bracketed constituency trees, compression labels and variable fixing.

Trees use Penn Treebank bracketing; a preterminal such as ``(DT The)`` is a
leaf node carrying the word and its 1-based position in the sentence.  Each
node can be given a label in {0, 1, 2}:

* 0 -- the node is deleted,
* 1 -- the node is kept,
* 2 -- the solver decides.

A word whose path to the root contains a 0 is fixed out of the compression;
a word whose path is all 1 belongs to the sentence trunk and is fixed in.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator

DELETE, KEEP, FREE = 0, 1, 2
PHRASE_SYMBOLS = ("PP", "SBAR")

_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")


class TreeParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


@dataclass(eq=False)
class Node:
    symbol: str
    children: tuple["Node", ...] = ()
    word: str | None = None
    position: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.word is not None

    def leaves(self) -> list["Node"]:
        if self.is_leaf:
            return [self]
        out = []
        for ch in self.children:
            out.extend(ch.leaves())
        return out

    def walk(self) -> Iterator["Node"]:
        yield self
        for ch in self.children:
            yield from ch.walk()

    def to_bracketed(self) -> str:
        if self.is_leaf:
            return f"({self.symbol} {self.word})"
        return "(" + self.symbol + " " + " ".join(c.to_bracketed() for c in self.children) + ")"


@dataclass(eq=False)
class ParseTree:
    root: Node
    _parent: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._parent = {}
        for node in self.root.walk():
            for ch in node.children:
                self._parent[id(ch)] = node

    @property
    def leaves(self) -> list[Node]:
        return self.root.leaves()

    @property
    def words(self) -> list[str]:
        return [leaf.word for leaf in self.leaves]

    @property
    def n(self) -> int:
        return len(self.leaves)

    def parent(self, node: Node) -> Node | None:
        return self._parent.get(id(node))

    def path_to_root(self, node: Node) -> list[Node]:
        path = [node]
        while (p := self.parent(path[-1])) is not None:
            path.append(p)
        return path

    def nodes(self) -> list[Node]:
        return list(self.root.walk())

    def to_bracketed(self) -> str:
        return self.root.to_bracketed()

    def __str__(self):
        return self.to_bracketed()


def parse_bracketed(text: str) -> ParseTree:
    """Parse one Penn-style bracketed tree.

    An unlabeled outer wrapper ``( (S ...) )`` is accepted and dropped.

    >>> parse_bracketed("(S (X a) (Y b))").words
    ['a', 'b']
    """
    tokens = [(m.group(), m.start()) for m in _TOKEN_RE.finditer(text)]
    if not tokens:
        raise TreeParseError("empty input", 0)
    pos = 0
    counter = [0]

    def node() -> Node:
        nonlocal pos
        tok, off = tokens[pos]
        if tok != "(":
            raise TreeParseError(f"expected '(' but found {tok!r}", off)
        pos += 1
        if pos >= len(tokens):
            raise TreeParseError("unexpected end of input", len(text))
        tok, off = tokens[pos]
        if tok == ")":
            raise TreeParseError("empty node", off)
        if tok == "(":
            # unlabeled wrapper
            symbol = ""
        else:
            symbol = tok
            pos += 1
        children: list[Node] = []
        word = None
        while True:
            if pos >= len(tokens):
                raise TreeParseError("unexpected end of input", len(text))
            tok, off = tokens[pos]
            if tok == ")":
                pos += 1
                break
            if tok == "(":
                if word is not None:
                    raise TreeParseError("word and subtree mixed in one node", off)
                children.append(node())
            else:
                if word is not None or children:
                    raise TreeParseError(f"unexpected token {tok!r}", off)
                word = tok
                pos += 1
        if word is not None:
            counter[0] += 1
            return Node(symbol, (), word, counter[0])
        if not children:
            raise TreeParseError(f"node {symbol!r} has no word", off)
        return Node(symbol, tuple(children))

    root = node()
    if pos != len(tokens):
        raise TreeParseError("trailing input after tree", tokens[pos][1])
    while root.symbol == "" and len(root.children) == 1:
        root = root.children[0]
    if root.symbol == "":
        raise TreeParseError("unlabeled root with several children", 0)
    return ParseTree(root)


def read_trees(path) -> list[ParseTree]:
    """Read a tree file: one bracketed tree per record, records separated by blank lines."""
    text = Path(path).read_text(encoding="utf-8")
    records = [r for r in re.split(r"\n\s*\n", text) if r.strip()]
    return [parse_bracketed(r) for r in records]


def base_symbol(symbol: str) -> str:
    """Strip Penn function tags and indices: ``NP-SBJ-1`` -> ``NP``."""
    if symbol.startswith("-") or len(symbol) <= 1:
        return symbol
    return re.split(r"[-=]", symbol, maxsplit=1)[0] or symbol


@dataclass(frozen=True)
class RuleSet:
    labels: dict
    default: int = FREE

    def __post_init__(self):
        for sym, lab in self.labels.items():
            if lab not in (DELETE, KEEP, FREE):
                raise ValueError(f"label for {sym!r} must be 0, 1 or 2, got {lab}")
        if self.default not in (DELETE, KEEP, FREE):
            raise ValueError(f"default label must be 0, 1 or 2, got {self.default}")

    def label_for(self, symbol: str) -> int:
        if symbol in self.labels:
            return self.labels[symbol]
        base = base_symbol(symbol)
        return self.labels.get(base, self.default)

    @classmethod
    def parse(cls, text: str) -> "RuleSet":
        labels = {}
        default = FREE
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"rules line {lineno}: expected 'SYMBOL LABEL', got {raw!r}")
            sym, lab = parts[0], int(parts[1])
            if sym == "DEFAULT":
                default = lab
            else:
                labels[sym] = lab
        return cls(labels, default)

    @classmethod
    def load(cls, path) -> "RuleSet":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def default_rules(cls) -> "RuleSet":
        return cls.parse(resources.files("sentcomp.data").joinpath("default_rules.txt")
                         .read_text(encoding="utf-8"))


@dataclass(eq=False)
class LabeledParseTree:
    tree: ParseTree
    labels: dict  # id(node) -> label

    def label(self, node: Node) -> int:
        return self.labels[id(node)]


def assign_labels(t: ParseTree, rules: RuleSet) -> LabeledParseTree:
    return LabeledParseTree(t, {id(nd): rules.label_for(nd.symbol) for nd in t.nodes()})


def fix_variables(lt: LabeledParseTree) -> dict[int, int]:
    """Map word position -> fixed value of its keep variable; free positions are absent."""
    fixing = {}
    for leaf in lt.tree.leaves:
        path = [lt.label(nd) for nd in lt.tree.path_to_root(leaf)]
        if DELETE in path:
            fixing[leaf.position] = 0
        elif all(lab == KEEP for lab in path):
            fixing[leaf.position] = 1
    return fixing


def phrase_sets(t: ParseTree, symbols=PHRASE_SYMBOLS) -> list[tuple[int, tuple[int, ...]]]:
    """(introducing position, other positions) for every PP/SBAR-like node.

    The introducing term is the leftmost leaf.  Phrases with a single leaf
    are skipped.
    """
    wanted = set(symbols)
    out = []
    for nd in t.nodes():
        if nd.is_leaf or base_symbol(nd.symbol) not in wanted:
            continue
        positions = [leaf.position for leaf in nd.leaves()]
        if len(positions) < 2:
            continue
        out.append((positions[0], tuple(positions[1:])))
    return out
