"""Joint word/POS language model.

The probability of a turn factors word by word into a POS prediction given
the preceding words and tags, and a word prediction given those plus the
current tag.  Both factors come from decision trees over the last ``window``
history positions; the history of every turn opens with a TURN pseudo-token.
"""

from __future__ import annotations

import base64
import json
import math
import struct
import zlib
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .clustering import ClassHierarchy, Node, cluster_pos, cluster_words
from .corpus import TURN, Corpus, Vocabulary, build_vocabulary
from .dtree import (ABSENT, DTree, Layout, TreeConfig, grow_arrays, lambda_grid,
                    question_bank, smooth_arrays, tree_from_dict, tree_to_dict,
                    ContextVector, Slot)
from .errors import (CorruptModel, EmptyInput, InsufficientData, NoWordTree,
                     UnsupportedVersion, ZeroProbability)

# Weight of a uniform component mixed into every served distribution so that
# no in-alphabet outcome ever gets probability zero.
PROB_FLOOR = 1e-7

MAGIC = b"DMTAGMDL"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sHQI")  # magic, version, payload length, crc32


@dataclass
class ModelConfig:
    window: int = 4
    beam_width: int = 40
    min_count: int = 2
    min_leaf_count: int = 8
    lambda_step: float = 0.05

    def validate(self) -> "ModelConfig":
        for name in ("window", "beam_width", "min_count", "min_leaf_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.lambda_step <= 1:
            raise ValueError("lambda_step must lie in (0, 1]")
        lambda_grid(self.lambda_step)
        return self


@dataclass
class TagResult:
    tags: list[str]
    joint_logprob: float
    nbest: list[tuple[list[str], float]] = field(default_factory=list)


def _pad(code: str | None, length: int) -> tuple[int, ...]:
    if code is None:
        return (ABSENT,) * length
    return tuple(int(b) for b in code) + (ABSENT,) * (length - len(code))


class TaggerModel:
    """A trained model.  Treat instances as read-only."""

    def __init__(self, config: ModelConfig, tagset: frozenset, pos_hierarchy: ClassHierarchy,
                 word_hierarchies: dict[str, ClassHierarchy], vocabulary: Vocabulary,
                 pos_tree: DTree | None = None, word_trees: dict[str, DTree] | None = None):
        self.config = config
        self.tagset = frozenset(tagset)
        self.pos_hierarchy = pos_hierarchy
        self.word_hierarchies = word_hierarchies
        self.vocabulary = vocabulary
        self.pos_tree = pos_tree
        self.word_trees = word_trees or {}

        self.tags = sorted(t for t in pos_hierarchy.leaves if t != TURN)
        self.tag_index = {t: i for i, t in enumerate(self.tags)}
        self.pos_len = max(pos_hierarchy.depth, 1)
        self.word_len = max([h.depth for h in word_hierarchies.values()] + [1])
        w = config.window
        self.pos_layout = Layout(w, self.pos_len, self.word_len, None)
        self.word_layout = Layout(w, self.pos_len, self.word_len, self.pos_len)

        self._pos_codes = {t: _pad(pos_hierarchy.code(t), self.pos_len) for t in pos_hierarchy.leaves}
        self._slot_feats: dict[tuple, tuple] = {}
        for tag in list(self.tags) + [TURN]:
            pcode = self._pos_codes[tag]
            self._slot_feats[None, tag] = (1,) + pcode + (ABSENT,) * self.word_len
            h = word_hierarchies.get(tag)
            if h is not None:
                for key, code in h.codes().items():
                    self._slot_feats[key, tag] = (1,) + pcode + _pad(code, self.word_len)
        self._absent_slot = (0,) + (ABSENT,) * (self.pos_len + self.word_len)
        self._word_keys = {t: sorted(h.leaves) for t, h in word_hierarchies.items()}
        self._word_key_index = {t: {k: i for i, k in enumerate(ks)} for t, ks in self._word_keys.items()}

    # -- context encoding ---------------------------------------------------

    def _slot(self, word, tag) -> tuple:
        key = None if tag == TURN else self.vocabulary.lookup(word, tag)
        feats = self._slot_feats.get((key, tag))
        if feats is None:
            pcode = self._pos_codes.get(tag, (ABSENT,) * self.pos_len)
            feats = (1,) + pcode + (ABSENT,) * self.word_len
        return feats

    def _context(self, slots: Sequence[tuple]) -> tuple:
        """Concatenate the most recent ``window`` slot features, newest first."""
        w = self.config.window
        recent = list(slots[-w:])[::-1]
        out: tuple = ()
        for s in recent:
            out += s
        return out + self._absent_slot * (w - len(recent))

    def history_slots(self, history: Sequence[tuple[str, str]]) -> list[tuple]:
        return [self._slot(None, TURN)] + [self._slot(wd, tg) for wd, tg in history]

    def context_vector(self, history: Sequence[tuple[str, str]], current_tag: str | None = None) -> ContextVector:
        """The history encoded as a :class:`ContextVector` (mostly for inspection)."""
        feats = self._context(self.history_slots(history))
        width = 1 + self.pos_len + self.word_len
        slots = []
        for s in range(self.config.window):
            chunk = feats[s * width:(s + 1) * width]
            slots.append(Slot(tuple(chunk[1:1 + self.pos_len]), tuple(chunk[1 + self.pos_len:]), chunk[0] == 1))
        cur = None if current_tag is None else self._pos_codes.get(current_tag, (ABSENT,) * self.pos_len)
        return ContextVector(tuple(slots), cur)

    # -- distributions ------------------------------------------------------

    def _pos_dist(self, ctx: tuple) -> np.ndarray:
        p = self.pos_tree.nodes[self.pos_tree.route(ctx)].smoothed
        return (1.0 - PROB_FLOOR) * p + PROB_FLOOR / len(p)

    def _word_prob(self, ctx: tuple, tag: str, key: str) -> float:
        tree = self.word_trees[tag]
        p = tree.nodes[tree.route(ctx + self._pos_codes[tag])].smoothed
        return (1.0 - PROB_FLOOR) * p[tree.outcome_index[key]] + PROB_FLOOR / len(p)

    def pos_distribution(self, history: Sequence[tuple[str, str]]) -> dict[str, float]:
        dist = self._pos_dist(self._context(self.history_slots(history)))
        return {t: float(dist[i]) for i, t in enumerate(self.tags)}

    def word_candidates(self, word: str) -> list[tuple[str, str]]:
        """(tag, vocabulary key) pairs under which ``word`` can be emitted."""
        out = []
        for tag in self.tags:
            if tag in self.word_trees:
                key = self.vocabulary.lookup(word, tag)
                if key is not None:
                    out.append((tag, key))
        return out

    def __repr__(self):
        return f"TaggerModel(tags={len(self.tags)}, window={self.config.window})"


def pos_probability(m: TaggerModel, history: Sequence[tuple[str, str]], tag: str) -> float:
    """P(tag | history), history being the (word, tag) pairs of the turn so far."""
    if tag not in m.tagset and tag not in m.tag_index:
        raise ValueError(f"{tag!r} is not in the model tagset")
    if tag not in m.tag_index:
        return 0.0
    return float(m._pos_dist(m._context(m.history_slots(history)))[m.tag_index[tag]])


def word_probability(m: TaggerModel, history: Sequence[tuple[str, str]], tag: str, word: str) -> float:
    """P(word | history, tag); unseen words go through the tag's ``!unknown`` class."""
    if tag not in m.tagset and tag not in m.tag_index:
        raise ValueError(f"{tag!r} is not in the model tagset")
    if tag not in m.word_trees:
        raise NoWordTree(tag)
    key = m.vocabulary.lookup(word, tag)
    if key is None:
        return 0.0
    return m._word_prob(m._context(m.history_slots(history)), tag, key)


# ---------------------------------------------------------------- training

def _events(m: TaggerModel, c: Corpus):
    """Encoded POS events and per-tag word events for every token of ``c``."""
    pos_X, pos_y = [], []
    word_X: dict[str, list] = {t: [] for t in m.word_trees or m.word_hierarchies}
    word_y: dict[str, list] = {t: [] for t in word_X}
    for turn in c.turns():
        slots = [m._slot(None, TURN)]
        for tok in turn.tokens:
            ctx = m._context(slots)
            ti = m.tag_index.get(tok.tag)
            if ti is not None:
                pos_X.append(ctx)
                pos_y.append(ti)
                key = m.vocabulary.lookup(tok.word, tok.tag)
                if key is not None and tok.tag in word_X:
                    word_X[tok.tag].append(ctx + m._pos_codes[tok.tag])
                    word_y[tok.tag].append(m._word_key_index[tok.tag][key])
            slots.append(m._slot(tok.word, tok.tag))
    return pos_X, pos_y, word_X, word_y


def _as_arrays(rows, ys, width):
    X = np.array(rows, dtype=np.int8).reshape(len(rows), width)
    return X, np.array(ys, dtype=np.int64)


def train(train_c: Corpus, held_c: Corpus, cfg: ModelConfig | None = None) -> TaggerModel:
    """Cluster, build events and grow + smooth every decision tree."""
    cfg = (cfg or ModelConfig()).validate()
    if train_c.word_count == 0:
        raise InsufficientData("training corpus has no tokens")
    if held_c.word_count == 0:
        raise InsufficientData("heldout corpus has no tokens")
    overlap = {d.id for d in train_c.dialogs} & {d.id for d in held_c.dialogs}
    if overlap:
        raise InsufficientData(f"heldout shares dialogs with training: {sorted(overlap)[:3]}")

    vocab = build_vocabulary(train_c, cfg.min_count)
    pos_h = cluster_pos(train_c)
    word_h = cluster_words(train_c, vocab)
    m = TaggerModel(cfg, train_c.tagset | {TURN}, pos_h, word_h, vocab)
    tcfg = TreeConfig(min_leaf_count=cfg.min_leaf_count, lambda_step=cfg.lambda_step)

    pX, py, wX, wy = _events(m, train_c)
    hpX, hpy, hwX, hwy = _events(m, held_c)

    X, y = _as_arrays(pX, py, m.pos_layout.size)
    Xh, yh = _as_arrays(hpX, hpy, m.pos_layout.size)
    pos_tree = grow_arrays(X, y, Xh, yh, question_bank(m.pos_layout), m.pos_layout, m.tags, tcfg)
    m.pos_tree = smooth_arrays(pos_tree, Xh, yh, cfg.lambda_step, allow_empty=True)

    wbank = question_bank(m.word_layout)
    for tag in m.tags:
        if not wy.get(tag):
            raise InsufficientData(f"tag {tag} has no training events")
        X, y = _as_arrays(wX[tag], wy[tag], m.word_layout.size)
        Xh, yh = _as_arrays(hwX[tag], hwy[tag], m.word_layout.size)
        tree = grow_arrays(X, y, Xh, yh, wbank, m.word_layout, m._word_keys[tag], tcfg)
        m.word_trees[tag] = smooth_arrays(tree, Xh, yh, cfg.lambda_step, allow_empty=True)
    return m


def split_train_heldout(c: Corpus, heldout_fraction: float = 0.15) -> tuple[Corpus, Corpus]:
    """Reserve evenly spaced dialogs of ``c`` as heldout data."""
    n = len(c.dialogs)
    if n < 2:
        raise InsufficientData("need at least two dialogs to reserve heldout data")
    n_held = min(n - 1, max(1, round(heldout_fraction * n)))
    picks = {int((j + 0.5) * n / n_held) for j in range(n_held)}
    return (c.subset(i for i in range(n) if i not in picks),
            c.subset(i for i in range(n) if i in picks))


# ---------------------------------------------------------------- decoding

def _log2(p: float) -> float:
    return math.log2(p) if p > 0 else float("-inf")


def tag_words(m: TaggerModel, words: Sequence[str], beam_width: int | None = None) -> TagResult:
    """Beam search for the most probable tag sequence of one turn.

    Hypotheses agreeing on the last ``window`` tags are recombined, so a beam
    at least (number of tags) ** window wide is exact.
    """
    if not words:
        raise EmptyInput("nothing to tag")
    beam = beam_width or m.config.beam_width
    if beam < 1:
        raise ValueError("beam width must be >= 1")
    w = m.config.window
    start = (m._slot(None, TURN),)
    # state (last w slot features) -> (score, tags)
    hyps: dict[tuple, tuple[float, tuple]] = {start: (0.0, ())}
    for word in words:
        cands = m.word_candidates(word)
        if not cands:
            raise ZeroProbability(f"word {word!r} has no probability under any tag")
        new: dict[tuple, tuple[float, tuple]] = {}
        for state, (score, tags) in hyps.items():
            ctx = m._context(state)
            pd = m._pos_dist(ctx)
            for tag, key in cands:
                s = score + _log2(pd[m.tag_index[tag]]) + _log2(m._word_prob(ctx, tag, key))
                nstate = (state + (m._slot_feats.get((key, tag)) or m._slot(word, tag),))[-w:]
                old = new.get(nstate)
                if old is None or s > old[0] or (s == old[0] and tags + (tag,) < old[1]):
                    new[nstate] = (s, tags + (tag,))
        ranked = sorted(new.items(), key=lambda kv: (-kv[1][0], kv[1][1]))[:beam]
        hyps = dict(ranked)
    final = sorted(hyps.values(), key=lambda v: (-v[0], v[1]))
    best_score, best_tags = final[0]
    if best_score == float("-inf"):
        raise ZeroProbability("every tag sequence has probability zero")
    return TagResult(list(best_tags), best_score, [(list(t), s) for s, t in final])


def joint_logprob(m: TaggerModel, words: Sequence[str], tags: Sequence[str]) -> float:
    """log2 P(words, tags) of one turn, recomputed through the public factors."""
    total = 0.0
    history: list[tuple[str, str]] = []
    for word, tag in zip(words, tags):
        total += _log2(pos_probability(m, history, tag))
        total += _log2(word_probability(m, history, tag, word)) if tag in m.word_trees else float("-inf")
        history.append((word, tag))
    return total


def turn_logprob(m: TaggerModel, words: Sequence[str], beam_width: int | None = None) -> float:
    """Sum over positions of log2 P(w_i | w_1..w_{i-1}) with tags marginalised in the beam."""
    beam = beam_width or m.config.beam_width
    w = m.config.window
    alpha: dict[tuple, float] = {(m._slot(None, TURN),): 1.0}
    total = 0.0
    for word in words:
        cands = m.word_candidates(word)
        new: dict[tuple, float] = {}
        for state, a in alpha.items():
            ctx = m._context(state)
            pd = m._pos_dist(ctx)
            for tag, key in cands:
                p = a * pd[m.tag_index[tag]] * m._word_prob(ctx, tag, key)
                if p > 0:
                    nstate = (state + (m._slot_feats.get((key, tag)) or m._slot(word, tag),))[-w:]
                    new[nstate] = new.get(nstate, 0.0) + p
        mass = sum(new.values())
        if mass <= 0:
            raise ZeroProbability(f"word {word!r} has zero probability given its history")
        total += math.log2(mass)
        kept = sorted(new.items(), key=lambda kv: (-kv[1], kv[0]))[:beam]
        norm = sum(v for _, v in kept)
        alpha = {s: v / norm for s, v in kept}
    return total


def corpus_logprob(m: TaggerModel, c: Corpus, beam_width: int | None = None) -> tuple[float, int]:
    """(sum of log2 word probabilities, word count) over every turn of ``c``."""
    total, n = 0.0, 0
    for turn in c.turns():
        total += turn_logprob(m, turn.words, beam_width)
        n += len(turn.tokens)
    return total, n


def word_perplexity(m: TaggerModel, c: Corpus, beam_width: int | None = None) -> float:
    total, n = corpus_logprob(m, c, beam_width)
    if n == 0:
        raise EmptyInput("corpus has no words")
    return 2.0 ** (-total / n)


# ---------------------------------------------------------------- persistence

def _enc(obj):
    if isinstance(obj, np.ndarray):
        arr = np.ascontiguousarray(obj, dtype="<f8" if obj.dtype.kind == "f" else "<i8")
        return {"__nd__": arr.dtype.str, "shape": list(arr.shape),
                "data": base64.b64encode(arr.tobytes()).decode("ascii")}
    if isinstance(obj, dict):
        return {k: _enc(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_enc(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _dec(obj):
    if isinstance(obj, dict):
        if "__nd__" in obj:
            raw = base64.b64decode(obj["data"])
            return np.frombuffer(raw, dtype=np.dtype(obj["__nd__"])).reshape(obj["shape"]).copy()
        return {k: _dec(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_dec(v) for v in obj]
    return obj


def _node_to_list(node: Node):
    if node.is_leaf:
        return [node.item, node.count]
    return [_node_to_list(node.left), _node_to_list(node.right)]


def _node_from_list(x) -> Node:
    if isinstance(x[0], list):
        left, right = _node_from_list(x[0]), _node_from_list(x[1])
        return Node(left.items | right.items, left.count + right.count, left, right)
    return Node(frozenset([x[0]]), int(x[1]))


def _hier_to_dict(h: ClassHierarchy):
    return {"root": _node_to_list(h.root), "merge_log": [[list(a), list(b)] for a, b in h.merge_log]}


def _hier_from_dict(d) -> ClassHierarchy:
    return ClassHierarchy(_node_from_list(d["root"]), [(tuple(a), tuple(b)) for a, b in d["merge_log"]])


def save_model(m: TaggerModel) -> bytes:
    """Serialise to a versioned little-endian binary image."""
    payload = {
        "config": asdict(m.config),
        "tagset": sorted(m.tagset),
        "pos_hierarchy": _hier_to_dict(m.pos_hierarchy),
        "word_hierarchies": {t: _hier_to_dict(h) for t, h in sorted(m.word_hierarchies.items())},
        "vocabulary": {
            "min_count": m.vocabulary.min_count,
            "per_tag": {t: sorted(ws) for t, ws in sorted(m.vocabulary.per_tag.items())},
            "counts": [[w, t, n] for (w, t), n in sorted(m.vocabulary.counts.items())],
        },
        "pos_tree": tree_to_dict(m.pos_tree),
        "word_trees": {t: tree_to_dict(tr) for t, tr in sorted(m.word_trees.items())},
    }
    body = json.dumps(_enc(payload), sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _HEADER.pack(MAGIC, FORMAT_VERSION, len(body), zlib.crc32(body)) + body


def load_model(data: bytes) -> TaggerModel:
    if len(data) < _HEADER.size:
        raise CorruptModel("image shorter than its header")
    magic, version, length, crc = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptModel("bad magic header")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"format version {version}, expected {FORMAT_VERSION}")
    body = data[_HEADER.size:]
    if len(body) != length or zlib.crc32(body) != crc:
        raise CorruptModel("payload truncated or damaged")
    try:
        d = _dec(json.loads(body.decode("utf-8")))
        vocab = Vocabulary(
            {t: frozenset(ws) for t, ws in d["vocabulary"]["per_tag"].items()},
            d["vocabulary"]["min_count"],
            {(w, t): n for w, t, n in d["vocabulary"]["counts"]},
        )
        m = TaggerModel(
            ModelConfig(**d["config"]),
            frozenset(d["tagset"]),
            _hier_from_dict(d["pos_hierarchy"]),
            {t: _hier_from_dict(h) for t, h in d["word_hierarchies"].items()},
            vocab,
            tree_from_dict(d["pos_tree"]),
            {t: tree_from_dict(tr) for t, tr in d["word_trees"].items()},
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorruptModel(f"malformed payload: {exc}") from exc
    return m


def save_model_file(m: TaggerModel, path) -> None:
    with open(path, "wb") as f:
        f.write(save_model(m))


def load_model_file(path) -> TaggerModel:
    with open(path, "rb") as f:
        return load_model(f.read())
