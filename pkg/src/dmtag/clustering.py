"""Greedy mutual-information clustering into binary classification trees.

Items start in singleton classes; at every step the permitted pair of classes
whose merge loses the least average mutual information (AMI) between adjacent
classes is merged.  The merge order defines a binary tree and hence a bit
code for every item.

Ties on loss (within ``TIE_TOL`` bits) go to the pair whose smallest member
names are lexicographically smallest; each class is named by its smallest
member.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable

import numpy as np

from .corpus import TURN, Corpus, Vocabulary
from .errors import EmptyStats, TooManyItems, UnknownItem, UnmergeableClasses

TIE_TOL = 1e-10

Item = Hashable
Constraint = Callable[[frozenset, frozenset], bool]


@dataclass
class BigramStats:
    unigram: Counter
    bigram: Counter
    total: int = 0

    @classmethod
    def from_sequences(cls, seqs: Iterable[Iterable[Item]]) -> "BigramStats":
        uni, bi = Counter(), Counter()
        for seq in seqs:
            prev = None
            first = True
            for item in seq:
                uni[item] += 1
                if not first:
                    bi[prev, item] += 1
                prev, first = item, False
        return cls(uni, bi, sum(uni.values()))

    @property
    def items(self) -> list:
        return sorted(self.unigram)


@dataclass
class Node:
    items: frozenset
    count: int
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def item(self):
        (only,) = self.items
        return only

    @property
    def name(self):
        return min(self.items)


@dataclass
class ClassHierarchy:
    root: Node
    merge_log: list[tuple] = field(default_factory=list)

    def __post_init__(self):
        self._codes: dict = {}
        self._walk(self.root, "")

    def _walk(self, node: Node, code: str):
        if node.is_leaf:
            self._codes[node.item] = code
            return
        self._walk(node.left, code + "0")
        self._walk(node.right, code + "1")

    @property
    def leaves(self) -> list:
        return list(self._codes)

    @property
    def depth(self) -> int:
        return max((len(c) for c in self._codes.values()), default=0)

    def code(self, item) -> str:
        try:
            return self._codes[item]
        except KeyError:
            raise UnknownItem(f"{item!r} is not a leaf of this hierarchy") from None

    def codes(self) -> dict:
        return dict(self._codes)

    def dump(self, label=str) -> str:
        """Indented listing, one leaf per line with its bit code and count."""
        lines: list[str] = []

        def visit(node, depth, code):
            if node.is_leaf:
                lines.append(f"{'  ' * depth}{label(node.item)} {node.count}\t{code or '-'}")
            else:
                visit(node.left, depth + 1, code + "0")
                visit(node.right, depth + 1, code + "1")

        visit(self.root, 0, "")
        return "\n".join(lines)


def bit_code(h: ClassHierarchy, item) -> str:
    """Root-to-leaf path of ``item``: ``0`` for the top edge, ``1`` for the bottom one."""
    return h.code(item)


# ---------------------------------------------------------------- AMI

def _plogp_ratio(p, denom):
    """Elementwise p * log2(p / denom) with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    out = np.zeros(np.broadcast(p, denom).shape)
    mask = np.broadcast_to(p > 0, out.shape)
    pb = np.broadcast_to(p, out.shape)
    db = np.broadcast_to(denom, out.shape)
    out[mask] = pb[mask] * np.log2(pb[mask] / db[mask])
    return out


def _class_matrix(partition: dict, s: BigramStats):
    names = sorted(set(partition.values()), key=repr)
    index = {c: i for i, c in enumerate(names)}
    mat = np.zeros((len(names), len(names)))
    for (a, b), n in s.bigram.items():
        mat[index[partition[a]], index[partition[b]]] += n
    return mat


def _ami_of_matrix(p: np.ndarray) -> float:
    pl = p.sum(axis=1)
    pr = p.sum(axis=0)
    return float(_plogp_ratio(p, np.outer(pl, pr)).sum())


def ami(partition: dict, s: BigramStats) -> float:
    """Average mutual information (bits) between classes of adjacent items."""
    if s.total == 0:
        raise EmptyStats("statistics are empty")
    missing = [i for i in s.unigram if i not in partition]
    if missing:
        raise UnknownItem(f"partition does not cover {missing[:3]!r}")
    mat = _class_matrix(partition, s)
    n = mat.sum()
    if n == 0:
        return 0.0
    return max(0.0, _ami_of_matrix(mat / n))


# ---------------------------------------------------------------- greedy merging

def _merge_losses(p, pl, pr, q, rowq, colq, a, bs):
    """AMI loss of merging class ``a`` with each class in ``bs``."""
    bs = np.asarray(bs)
    removed = (rowq[a] + rowq[bs] + colq[a] + colq[bs]
               - q[a, a] - q[a, bs] - q[bs, a] - q[bs, bs])
    plm = pl[a] + pl[bs]
    prm = pr[a] + pr[bs]
    rows = p[a][None, :] + p[bs, :]                      # merged row vs every column
    row_terms = _plogp_ratio(rows, plm[:, None] * pr[None, :])
    cols = p[:, a][None, :] + p[:, bs].T                 # merged column vs every row
    col_terms = _plogp_ratio(cols, prm[:, None] * pl[None, :])
    k = np.arange(len(bs))
    added = (row_terms.sum(axis=1) - row_terms[:, a] - row_terms[k, bs]
             + col_terms.sum(axis=1) - col_terms[:, a] - col_terms[k, bs])
    corner = p[a, a] + p[a, bs] + p[bs, a] + p[bs, bs]
    added += _plogp_ratio(corner, plm * prm)
    return removed - added


def cluster_forest(s: BigramStats, constraint: Constraint | None = None,
                   max_items: int | None = None) -> tuple[list[ClassHierarchy], list[tuple]]:
    """Greedy agglomeration until no permitted merge remains.

    Returns one hierarchy per surviving class (sorted by class name) and the
    shared merge log.
    """
    items = s.items
    if not items:
        raise EmptyStats("no items to cluster")
    if max_items is not None and len(items) > max_items:
        raise TooManyItems(f"{len(items)} items exceeds the cap of {max_items}")
    index = {it: i for i, it in enumerate(items)}
    n = len(items)
    counts = np.zeros((n, n))
    for (x, y), c in s.bigram.items():
        counts[index[x], index[y]] += c
    total = counts.sum()
    p = counts / total if total > 0 else counts

    nodes = [Node(frozenset([it]), s.unigram[it]) for it in items]
    names = list(items)
    allowed = np.ones((n, n), dtype=bool)
    if constraint is not None:
        for i in range(n):
            for j in range(i + 1, n):
                allowed[i, j] = allowed[j, i] = constraint(nodes[i].items, nodes[j].items)
    merge_log: list[tuple] = []

    while len(nodes) > 1:
        m = len(nodes)
        pl, pr = p.sum(axis=1), p.sum(axis=0)
        q = _plogp_ratio(p, np.outer(pl, pr))
        rowq, colq = q.sum(axis=1), q.sum(axis=0)
        best = None  # (loss, key, a, b)
        for a in range(m - 1):
            bs = [b for b in range(a + 1, m) if allowed[a, b]]
            if not bs:
                continue
            losses = _merge_losses(p, pl, pr, q, rowq, colq, a, bs)
            for b, loss in zip(bs, losses):
                key = tuple(sorted((names[a], names[b])))
                if best is None or loss < best[0] - TIE_TOL or (
                        abs(loss - best[0]) <= TIE_TOL and key < best[1]):
                    best = (float(loss), key, a, b)
        if best is None:
            break
        _, _, a, b = best
        if names[b] < names[a]:
            a, b = b, a
        left, right = nodes[a], nodes[b]
        merged = Node(left.items | right.items, left.count + right.count, left, right)
        merge_log.append((tuple(sorted(left.items)), tuple(sorted(right.items))))

        # class a absorbs b
        lo, hi = min(a, b), max(a, b)
        p[lo, :] += p[hi, :]
        p[:, lo] += p[:, hi]
        p = np.delete(np.delete(p, hi, axis=0), hi, axis=1)
        nodes[lo] = merged
        names[lo] = merged.name
        del nodes[hi], names[hi]
        allowed = np.delete(np.delete(allowed, hi, axis=0), hi, axis=1)
        if constraint is not None:
            for j in range(len(nodes)):
                if j != lo:
                    allowed[lo, j] = allowed[j, lo] = constraint(merged.items, nodes[j].items)

    order = sorted(range(len(nodes)), key=lambda i: names[i])
    return [ClassHierarchy(nodes[i], []) for i in order], merge_log


def cluster_items(s: BigramStats, constraint: Constraint | None = None,
                  max_items: int | None = None) -> ClassHierarchy:
    """Cluster all items into a single hierarchy."""
    forest, log = cluster_forest(s, constraint, max_items)
    if len(forest) > 1:
        raise UnmergeableClasses(f"{len(forest)} classes remain and no merge is permitted")
    h = forest[0]
    h.merge_log = log
    return h


# ---------------------------------------------------------------- corpus-level

def pos_stream(c: Corpus) -> list[list[str]]:
    """One tag sequence per dialog, with TURN injected before every turn."""
    seqs = []
    for d in c.dialogs:
        seq = []
        for turn in d.turns:
            seq.append(TURN)
            seq.extend(turn.tags)
        seqs.append(seq)
    return seqs


def cluster_pos(c: Corpus, max_items: int | None = None) -> ClassHierarchy:
    stats = BigramStats.from_sequences(pos_stream(c))
    if stats.total == 0:
        raise EmptyStats("corpus has no tokens")
    return cluster_items(stats, max_items=max_items)


def _same_tag(a: frozenset, b: frozenset) -> bool:
    tags = {tag for _, tag in a} | {tag for _, tag in b}
    return len(tags) == 1


def cluster_words(c: Corpus, v: Vocabulary, max_items: int | None = None) -> dict[str, ClassHierarchy]:
    """One word hierarchy per tag, clustered jointly under a same-tag constraint.

    Items are ``(word, tag)`` pairs after vocabulary mapping.
    """
    seqs = []
    for d in c.dialogs:
        seq = []
        for turn in d.turns:
            seq.append((TURN, TURN))
            for tok in turn.tokens:
                key = v.lookup(tok.word, tok.tag)
                if key is not None:
                    seq.append((key, tok.tag))
        seqs.append(seq)
    stats = BigramStats.from_sequences(seqs)
    if stats.total == 0:
        raise EmptyStats("corpus has no tokens")
    forest, log = cluster_forest(stats, _same_tag, max_items)
    out = {}
    for h in forest:
        tag = next(iter(h.root.items))[1]
        if tag == TURN:
            continue
        h = _relabel(h)
        h.merge_log = [(tuple(w for w, _ in x), tuple(w for w, _ in y))
                       for x, y in log if x[0][1] == tag]
        out[tag] = h
    return out


def _relabel(h: ClassHierarchy) -> ClassHierarchy:
    """Strip the tag from (word, tag) leaves."""
    def conv(node):
        if node.is_leaf:
            return Node(frozenset([node.item[0]]), node.count)
        return Node(frozenset(w for w, _ in node.items), node.count, conv(node.left), conv(node.right))
    return ClassHierarchy(conv(h.root), [])
