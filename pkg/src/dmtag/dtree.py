"""Decision-tree probability estimation over bit-encoded contexts.

A context is a fixed number of history slots, each holding a presence flag,
a padded POS bit code and a padded word bit code, optionally followed by the
bit code of the current POS tag.  Padded positions carry ``ABSENT``.  Every
question asks whether one of these positions equals 1.

Growth is greedy: a leaf is split on the admissible question with the largest
drop in training impurity (count-weighted entropy), and the split is kept only
if the impurity of the heldout events under the children's relative
frequencies is strictly lower than under the parent's.  Afterwards each node
is interpolated with its (already smoothed) parent, the root with the uniform
distribution; the weights are picked by grid search on heldout likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ArityMismatch, EmptyHeldout, EmptyTraining

ABSENT = -1
PRESENT, POS, WORD = 0, 1, 2
FIELD_NAMES = ("present", "pos", "word")

HELDOUT_FLOOR = 1e-6
GAIN_TOL = 1e-12


@dataclass(frozen=True)
class Slot:
    pos_code: tuple[int, ...]
    word_code: tuple[int, ...]
    present: bool = True

    @classmethod
    def absent(cls, pos_len: int, word_len: int) -> "Slot":
        return cls((ABSENT,) * pos_len, (ABSENT,) * word_len, False)


@dataclass(frozen=True)
class ContextVector:
    slots: tuple[Slot, ...]
    current_pos: tuple[int, ...] | None = None

    def layout(self) -> "Layout":
        s0 = self.slots[0] if self.slots else Slot((), ())
        return Layout(len(self.slots), len(s0.pos_code), len(s0.word_code),
                      None if self.current_pos is None else len(self.current_pos))

    def features(self) -> np.ndarray:
        vals: list[int] = []
        for s in self.slots:
            vals.append(1 if s.present else 0)
            vals.extend(s.pos_code)
            vals.extend(s.word_code)
        if self.current_pos is not None:
            vals.extend(self.current_pos)
        return np.array(vals, dtype=np.int8)


@dataclass(frozen=True)
class Layout:
    """Shape of a context: slot count, padded code lengths, current-POS length."""
    n_slots: int
    pos_len: int
    word_len: int
    current_len: int | None = None

    @property
    def slot_width(self) -> int:
        return 1 + self.pos_len + self.word_len

    @property
    def size(self) -> int:
        return self.n_slots * self.slot_width + (self.current_len or 0)

    def feature_index(self, q: "Question") -> int:
        if q.slot == self.n_slots:
            if self.current_len is None or q.field != POS or q.bit >= self.current_len:
                raise ArityMismatch(f"{q} does not fit {self}")
            return self.n_slots * self.slot_width + q.bit
        if not 0 <= q.slot < self.n_slots:
            raise ArityMismatch(f"{q} does not fit {self}")
        base = q.slot * self.slot_width
        if q.field == PRESENT:
            return base
        if q.field == POS and q.bit < self.pos_len:
            return base + 1 + q.bit
        if q.field == WORD and q.bit < self.word_len:
            return base + 1 + self.pos_len + q.bit
        raise ArityMismatch(f"{q} does not fit {self}")


@dataclass(frozen=True, order=True)
class Question:
    """``Is <bit> of <field> in <slot> equal to 1?``  Slot ``n_slots`` is the current POS."""
    slot: int
    field: int
    bit: int = 0

    def evaluate(self, ctx: ContextVector) -> bool:
        if self.slot == len(ctx.slots):
            return ctx.current_pos is not None and ctx.current_pos[self.bit] == 1
        s = ctx.slots[self.slot]
        if self.field == PRESENT:
            return s.present
        code = s.pos_code if self.field == POS else s.word_code
        return code[self.bit] == 1

    def __str__(self):
        return f"slot{self.slot}.{FIELD_NAMES[self.field]}[{self.bit}]==1"


def question_bank(layout: Layout) -> list[Question]:
    """Every elementary question for ``layout``, ordered by (slot, field, bit)."""
    bank = []
    for s in range(layout.n_slots):
        bank.append(Question(s, PRESENT, 0))
        bank.extend(Question(s, POS, b) for b in range(layout.pos_len))
        bank.extend(Question(s, WORD, b) for b in range(layout.word_len))
    if layout.current_len:
        bank.extend(Question(layout.n_slots, POS, b) for b in range(layout.current_len))
    return sorted(bank)


@dataclass
class EventDistribution:
    counts: np.ndarray
    probs: np.ndarray

    @classmethod
    def from_counts(cls, counts) -> "EventDistribution":
        counts = np.asarray(counts, dtype=np.int64)
        n = counts.sum()
        probs = counts / n if n > 0 else np.full(len(counts), 1.0 / len(counts))
        return cls(counts, probs)


@dataclass
class TreeNode:
    id: int
    parent: int | None
    depth: int
    ml: EventDistribution
    smoothed: np.ndarray
    lam: float = 1.0
    question: Question | None = None
    feature: int = -1
    yes: int = -1
    no: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.question is None


@dataclass
class TreeConfig:
    min_leaf_count: int = 8
    lambda_step: float = 0.05
    max_depth: int | None = None


@dataclass
class DTree:
    alphabet: list
    layout: Layout
    nodes: list[TreeNode] = field(default_factory=list)

    def __post_init__(self):
        self.outcome_index = {o: i for i, o in enumerate(self.alphabet)}

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def leaves(self) -> list[TreeNode]:
        return [n for n in self.nodes if n.is_leaf]

    @property
    def depth(self) -> int:
        return max(n.depth for n in self.nodes)

    def _check(self, ctx: ContextVector) -> np.ndarray:
        if ctx.layout() != self.layout:
            raise ArityMismatch(f"context {ctx.layout()} does not match tree {self.layout}")
        return ctx.features()

    def route(self, feats) -> int:
        """Leaf id reached by a raw feature row (no arity check)."""
        nodes = self.nodes
        i = 0
        while True:
            node = nodes[i]
            if node.feature < 0:
                return i
            i = node.yes if feats[node.feature] == 1 else node.no

    def path(self, feats) -> list[int]:
        ids = [0]
        while not self.nodes[ids[-1]].is_leaf:
            node = self.nodes[ids[-1]]
            ids.append(node.yes if feats[node.feature] == 1 else node.no)
        return ids

    def leaf_for(self, ctx: ContextVector) -> int:
        return self.route(self._check(ctx))

    def distribution(self, ctx: ContextVector) -> np.ndarray:
        return self.nodes[self.leaf_for(ctx)].smoothed

    def probability(self, ctx: ContextVector, outcome) -> float:
        try:
            k = self.outcome_index[outcome]
        except KeyError:
            raise ValueError(f"{outcome!r} is not in the outcome alphabet") from None
        return float(self.distribution(ctx)[k])

    def dump(self) -> str:
        """Depth-first listing of questions and leaf distributions."""
        lines = []

        def visit(i, indent):
            n = self.nodes[i]
            pad = "  " * indent
            if n.is_leaf:
                top = np.argsort(-n.smoothed, kind="stable")[:5]
                dist = " ".join(f"{self.alphabet[k]}:{n.smoothed[k]:.3f}" for k in top)
                lines.append(f"{pad}leaf#{i} n={int(n.ml.counts.sum())} lambda={n.lam:.2f} {dist}")
            else:
                lines.append(f"{pad}#{i} slot{n.question.slot}.{FIELD_NAMES[n.question.field]}"
                             f"[{n.question.bit}]==1 ? (n={int(n.ml.counts.sum())})")
                visit(n.yes, indent + 1)
                visit(n.no, indent + 1)

        visit(0, 0)
        return "\n".join(lines)


# ---------------------------------------------------------------- impurity

def _weighted_entropy(counts: np.ndarray) -> np.ndarray:
    """n * H(counts / n) in bits along the last axis."""
    counts = np.asarray(counts, dtype=float)
    n = counts.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        clog = np.where(counts > 0, counts * np.log2(np.where(counts > 0, counts, 1)), 0.0)
        nlog = np.where(n > 0, n * np.log2(np.where(n > 0, n, 1)), 0.0)
    return nlog - clog.sum(axis=-1)


def impurity(counts) -> float:
    """Count-weighted entropy of one node (bits)."""
    return float(_weighted_entropy(np.asarray(counts)))


def heldout_impurity(dist: np.ndarray, outcomes: np.ndarray) -> float:
    """Total code length (bits) of ``outcomes`` under ``dist``, floored at ``HELDOUT_FLOOR``."""
    if len(outcomes) == 0:
        return 0.0
    return float(-np.log2(np.maximum(dist[outcomes], HELDOUT_FLOOR)).sum())


# ---------------------------------------------------------------- growing

def grow_arrays(X: np.ndarray, y: np.ndarray, Xh: np.ndarray, yh: np.ndarray,
                bank: Sequence[Question], layout: Layout, alphabet: list,
                cfg: TreeConfig | None = None) -> DTree:
    """Grow a tree from encoded feature matrices and outcome indices."""
    cfg = cfg or TreeConfig()
    if len(y) == 0:
        raise EmptyTraining("no training events")
    n_out = len(alphabet)
    bank = sorted(bank)
    qfeat = np.array([layout.feature_index(q) for q in bank], dtype=np.int64)
    onehot = np.zeros((len(y), n_out))
    onehot[np.arange(len(y)), y] = 1.0
    answers = (X[:, qfeat] == 1) if len(bank) else np.zeros((len(y), 0), dtype=bool)
    h_answers = (Xh[:, qfeat] == 1) if len(bank) and len(yh) else np.zeros((len(yh), len(bank)), dtype=bool)

    tree = DTree(list(alphabet), layout)

    def new_node(parent, depth, idx):
        counts = np.bincount(y[idx], minlength=n_out)
        dist = EventDistribution.from_counts(counts)
        node = TreeNode(len(tree.nodes), parent, depth, dist, dist.probs.copy())
        tree.nodes.append(node)
        return node

    root = new_node(None, 0, np.arange(len(y)))
    stack = [(root, np.arange(len(y)), np.arange(len(yh)))]
    while stack:
        node, idx, hidx = stack.pop()
        if cfg.max_depth is not None and node.depth >= cfg.max_depth:
            continue
        choice = _best_split(node.ml.counts, answers[idx], onehot[idx], cfg.min_leaf_count)
        if choice is None:
            continue
        qi = choice
        yes_mask = answers[idx, qi]
        hyes = h_answers[hidx, qi]
        yes_dist = EventDistribution.from_counts(np.bincount(y[idx[yes_mask]], minlength=n_out))
        no_dist = EventDistribution.from_counts(np.bincount(y[idx[~yes_mask]], minlength=n_out))
        before = heldout_impurity(node.ml.probs, yh[hidx])
        after = (heldout_impurity(yes_dist.probs, yh[hidx[hyes]])
                 + heldout_impurity(no_dist.probs, yh[hidx[~hyes]]))
        if not after < before - GAIN_TOL:
            continue
        node.question = bank[qi]
        node.feature = int(qfeat[qi])
        yes = new_node(node.id, node.depth + 1, idx[yes_mask])
        no = new_node(node.id, node.depth + 1, idx[~yes_mask])
        node.yes, node.no = yes.id, no.id
        stack.append((no, idx[~yes_mask], hidx[~hyes]))
        stack.append((yes, idx[yes_mask], hidx[hyes]))
    return tree


def _best_split(counts, answers, onehot, min_leaf):
    """Index of the admissible question with the largest training-impurity drop."""
    n = counts.sum()
    if answers.shape[1] == 0 or n < 2 * min_leaf:
        return None
    yes_counts = answers.T.astype(float) @ onehot
    no_counts = counts[None, :] - yes_counts
    n_yes = yes_counts.sum(axis=1)
    ok = (n_yes >= min_leaf) & (n - n_yes >= min_leaf)
    if not ok.any():
        return None
    gain = impurity(counts) - _weighted_entropy(yes_counts) - _weighted_entropy(no_counts)
    gain = np.where(ok, gain, -np.inf)
    best = gain.max()
    if best <= GAIN_TOL:
        return None
    return int(np.flatnonzero(gain >= best - GAIN_TOL)[0])


def _encode(events, alphabet, layout):
    index = {o: i for i, o in enumerate(alphabet)}
    X = np.zeros((len(events), layout.size), dtype=np.int8)
    y = np.zeros(len(events), dtype=np.int64)
    for r, (ctx, outcome) in enumerate(events):
        if ctx.layout() != layout:
            raise ArityMismatch(f"context {ctx.layout()} does not match {layout}")
        X[r] = ctx.features()
        try:
            y[r] = index[outcome]
        except KeyError:
            raise ValueError(f"{outcome!r} is not in the outcome alphabet") from None
    return X, y


def grow_tree(train, heldout, bank: Sequence[Question] | None = None,
              cfg: TreeConfig | None = None, alphabet=None) -> DTree:
    """Grow a tree from ``(ContextVector, outcome)`` pairs.

    ``bank`` defaults to every elementary question of the training layout; an
    empty bank yields a root-only tree.
    """
    if not train:
        raise EmptyTraining("no training events")
    layout = train[0][0].layout()
    if alphabet is None:
        alphabet = sorted({o for _, o in train} | {o for _, o in heldout})
    if bank is None:
        bank = question_bank(layout)
    X, y = _encode(train, alphabet, layout)
    Xh, yh = _encode(heldout, alphabet, layout) if heldout else (
        np.zeros((0, layout.size), dtype=np.int8), np.zeros(0, dtype=np.int64))
    return grow_arrays(X, y, Xh, yh, bank, layout, alphabet, cfg)


# ---------------------------------------------------------------- smoothing

def lambda_grid(step: float) -> np.ndarray:
    n = round(1.0 / step)
    if n < 1 or abs(n * step - 1.0) > 1e-9:
        raise ValueError(f"lambda step {step} does not divide 1")
    return np.linspace(0.0, 1.0, n + 1)


def best_lambda(ml: np.ndarray, parent: np.ndarray, outcomes: np.ndarray, grid: np.ndarray) -> float:
    """Grid point maximising heldout log-likelihood; ties go to the larger weight.

    With no heldout evidence the node keeps a little of its parent: the
    largest grid point below 1.
    """
    if len(outcomes) == 0:
        return float(grid[-2]) if len(grid) > 1 else 1.0
    mix = grid[:, None] * ml[outcomes][None, :] + (1.0 - grid[:, None]) * parent[outcomes][None, :]
    with np.errstate(divide="ignore"):
        ll = np.log2(mix).sum(axis=1)
    top = ll.max()
    if not np.isfinite(top):
        return float(grid[0])
    return float(grid[np.flatnonzero(ll >= top - 1e-12)[-1]])


def smooth_arrays(tree: DTree, Xh: np.ndarray, yh: np.ndarray, step: float = 0.05,
                  allow_empty: bool = False) -> DTree:
    if len(yh) == 0 and not allow_empty:
        raise EmptyHeldout("smoothing needs heldout events")
    grid = lambda_grid(step)
    n_out = len(tree.alphabet)
    # heldout event indices reaching each node
    reach: list[list[int]] = [[] for _ in tree.nodes]
    for r in range(len(yh)):
        for nid in tree.path(Xh[r]):
            reach[nid].append(r)
    uniform = np.full(n_out, 1.0 / n_out)
    for node in tree.nodes:  # parents precede children
        parent = uniform if node.parent is None else tree.nodes[node.parent].smoothed
        outcomes = yh[np.array(reach[node.id], dtype=np.int64)]
        lam = best_lambda(node.ml.probs, parent, outcomes, grid)
        node.lam = lam
        node.smoothed = lam * node.ml.probs + (1.0 - lam) * parent
    return tree


def smooth_tree(tree: DTree, heldout, step: float = 0.05) -> DTree:
    """Assign interpolation weights top-down from heldout ``(ContextVector, outcome)`` pairs."""
    if not heldout:
        raise EmptyHeldout("smoothing needs heldout events")
    Xh, yh = _encode(heldout, tree.alphabet, tree.layout)
    return smooth_arrays(tree, Xh, yh, step)


def heldout_loglik(tree: DTree, Xh: np.ndarray, yh: np.ndarray, smoothed: bool = True) -> float:
    """Sum of log2 probabilities of heldout events at their leaves."""
    total = 0.0
    for r in range(len(yh)):
        node = tree.nodes[tree.route(Xh[r])]
        p = node.smoothed[yh[r]] if smoothed else node.ml.probs[yh[r]]
        total += math.log2(p) if p > 0 else float("-inf")
    return total


# ---------------------------------------------------------------- persistence

def tree_to_dict(tree: DTree) -> dict:
    return {
        "alphabet": list(tree.alphabet),
        "layout": [tree.layout.n_slots, tree.layout.pos_len, tree.layout.word_len, tree.layout.current_len],
        "nodes": [
            {
                "parent": n.parent, "depth": n.depth, "lam": n.lam,
                "question": None if n.question is None else [n.question.slot, n.question.field, n.question.bit],
                "yes": n.yes, "no": n.no,
                "counts": n.ml.counts, "smoothed": n.smoothed,
            }
            for n in tree.nodes
        ],
    }


def tree_from_dict(d: dict) -> DTree:
    layout = Layout(*d["layout"])
    tree = DTree(list(d["alphabet"]), layout)
    for i, nd in enumerate(d["nodes"]):
        q = None if nd["question"] is None else Question(*nd["question"])
        node = TreeNode(i, nd["parent"], nd["depth"], EventDistribution.from_counts(nd["counts"]),
                        np.asarray(nd["smoothed"], dtype=float), nd["lam"], q,
                        -1 if q is None else layout.feature_index(q), nd["yes"], nd["no"])
        tree.nodes.append(node)
    return tree
