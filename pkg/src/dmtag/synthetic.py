"""Synthetic annotated corpora drawn from a tag Markov chain with word emissions.

Every turn restarts the chain from the TURN state, so the exact per-word
perplexity of any emitted text follows from the forward algorithm run turn by
turn, marginalising the tags.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import STOCK_TAGSET, TURN, Corpus, Dialog, Token, Turn
from .errors import InvalidSpec

ROW_TOL = 1e-9


@dataclass
class GeneratorSpec:
    """``tag_transition[prev][next]`` with ``prev == "TURN"`` for turn starts."""
    tag_transition: dict[str, dict[str, float]]
    word_emission: dict[str, dict[str, float]]
    turn_length: dict[int, float]
    dialog_count: int = 10
    turns_per_dialog: int = 10
    seed: int = 0
    speakers: tuple[str, ...] = field(default=("u", "s"))

    def validate(self) -> "GeneratorSpec":
        if TURN not in self.tag_transition:
            raise InvalidSpec("tag_transition needs a TURN row for turn starts")
        rows = [("transition", k, v) for k, v in self.tag_transition.items()]
        rows += [("emission", k, v) for k, v in self.word_emission.items()]
        rows.append(("turn length", "-", self.turn_length))
        for kind, key, row in rows:
            if not row or any(p < 0 for p in row.values()):
                raise InvalidSpec(f"{kind} row {key!r} is empty or has negative entries")
            if abs(sum(row.values()) - 1.0) > ROW_TOL:
                raise InvalidSpec(f"{kind} row {key!r} sums to {sum(row.values())!r}")
        targets = {t for row in self.tag_transition.values() for t, p in row.items() if p > 0}
        for t in targets:
            if t == TURN:
                raise InvalidSpec("TURN cannot be emitted inside a turn")
            if t not in self.word_emission:
                raise InvalidSpec(f"tag {t!r} has no emission row")
        if max(self.turn_length) > 1:
            for t in targets:
                if t not in self.tag_transition:
                    raise InvalidSpec(f"tag {t!r} has no transition row")
        if any(int(n) < 1 for n in self.turn_length):
            raise InvalidSpec("turn lengths must be >= 1")
        if self.dialog_count < 1 or self.turns_per_dialog < 1:
            raise InvalidSpec("dialog_count and turns_per_dialog must be >= 1")
        return self

    @property
    def tags(self) -> list[str]:
        return sorted(self.word_emission)

    def to_json(self) -> str:
        return json.dumps({
            "tag_transition": self.tag_transition,
            "word_emission": self.word_emission,
            "turn_length": {str(k): v for k, v in self.turn_length.items()},
            "dialog_count": self.dialog_count,
            "turns_per_dialog": self.turns_per_dialog,
            "seed": self.seed,
            "speakers": list(self.speakers),
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GeneratorSpec":
        try:
            d = json.loads(text)
            return cls(
                tag_transition=d["tag_transition"],
                word_emission=d["word_emission"],
                turn_length={int(k): float(v) for k, v in d["turn_length"].items()},
                dialog_count=int(d.get("dialog_count", 10)),
                turns_per_dialog=int(d.get("turns_per_dialog", 10)),
                seed=int(d.get("seed", 0)),
                speakers=tuple(d.get("speakers", ("u", "s"))),
            ).validate()
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise InvalidSpec(f"cannot read generator spec: {exc}") from exc


def _categorical(row: dict):
    keys = sorted(row)
    probs = np.array([row[k] for k in keys], dtype=float)
    return keys, probs / probs.sum()


def sample_corpus(spec: GeneratorSpec) -> Corpus:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    trans = {k: _categorical(v) for k, v in spec.tag_transition.items()}
    emit = {k: _categorical(v) for k, v in spec.word_emission.items()}
    lengths, lprobs = _categorical(spec.turn_length)
    dialogs = []
    for d in range(spec.dialog_count):
        turns = []
        for j in range(spec.turns_per_dialog):
            n = lengths[rng.choice(len(lengths), p=lprobs)]
            prev, toks = TURN, []
            for _ in range(n):
                keys, probs = trans[prev]
                tag = keys[rng.choice(len(keys), p=probs)]
                wkeys, wprobs = emit[tag]
                toks.append(Token(wkeys[rng.choice(len(wkeys), p=wprobs)], tag))
                prev = tag
            turns.append(Turn(spec.speakers[j % len(spec.speakers)], tuple(toks)))
        dialogs.append(Dialog(f"syn{d:03d}", tuple(turns)))
    return Corpus(tuple(dialogs), STOCK_TAGSET | set(spec.tags))


def true_logprob(spec: GeneratorSpec, c: Corpus) -> tuple[float, int]:
    """(sum of log2 P(w_i | w_<i), word count) under the generator, tags marginalised."""
    tags = spec.tags
    idx = {t: i for i, t in enumerate(tags)}
    T = len(tags)
    start = np.zeros(T)
    for t, p in spec.tag_transition[TURN].items():
        start[idx[t]] = p
    A = np.zeros((T, T))
    for a, row in spec.tag_transition.items():
        if a == TURN:
            continue
        for b, p in row.items():
            A[idx[a], idx[b]] = p
    total, n = 0.0, 0
    for turn in c.turns():
        alpha = None
        for tok in turn.tokens:
            e = np.array([spec.word_emission[t].get(tok.word, 0.0) for t in tags])
            pred = start if alpha is None else alpha @ A
            joint = pred * e
            mass = joint.sum()
            if mass <= 0:
                return float("-inf"), n + 1
            total += math.log2(mass)
            alpha = joint / mass
            n += 1
    return total, n


def true_perplexity(spec: GeneratorSpec, c: Corpus) -> float:
    total, n = true_logprob(spec, c)
    return 2.0 ** (-total / n) if n else float("nan")


def generate_synthetic(spec: GeneratorSpec) -> tuple[Corpus, float]:
    """Sample a corpus and report its exact per-word perplexity under ``spec``."""
    c = sample_corpus(spec)
    return c, true_perplexity(spec, c)


# ---------------------------------------------------------------- presets

def five_tag_spec(dialog_count: int = 120, turns_per_dialog: int = 65, seed: int = 7) -> GeneratorSpec:
    """Five tags over thirty distinct words; "one", "load" and "that" carry two tags each."""
    words = {
        "DT": ["the", "a", "that", "this", "some", "one"],
        "NN": ["engine", "boxcar", "train", "hour", "oranges", "load", "one"],
        "VB": ["take", "go", "need", "send", "make", "bring", "load"],
        "PRP": ["we", "you", "i", "it", "they", "them", "that"],
        "PREP": ["to", "from", "at", "in", "with", "for"],
    }
    emission = {}
    for tag, ws in words.items():
        weights = np.arange(len(ws), 0, -1, dtype=float)
        weights /= weights.sum()
        emission[tag] = {w: float(p) for w, p in zip(ws, weights)}
    transition = {
        TURN: {"PRP": 0.5, "VB": 0.3, "DT": 0.2},
        "PRP": {"VB": 0.8, "PREP": 0.1, "PRP": 0.1},
        "VB": {"DT": 0.6, "PRP": 0.25, "PREP": 0.15},
        "DT": {"NN": 0.9, "DT": 0.1},
        "NN": {"PREP": 0.5, "NN": 0.2, "VB": 0.3},
        "PREP": {"DT": 0.7, "PRP": 0.3},
    }
    return GeneratorSpec(transition, emission, {n: 1 / 8 for n in range(3, 11)},
                         dialog_count, turns_per_dialog, seed).validate()


def dm_contrast_spec(dialog_count: int = 60, turns_per_dialog: int = 20, seed: int = 11) -> GeneratorSpec:
    """Ambiguous markers whose reading is fixed by the previous one or two tokens.

    "so" opens turns (after an optional acknowledgment or filled pause) as
    CC_D and follows "just" as SC; "well" occurs only turn-initially as UH_D;
    "and"/"but" are CC_D early in a turn and CC later on.
    """
    u = lambda *ws: {w: 1 / len(ws) for w in ws}  # noqa: E731
    emission = {
        "AC": u("okay", "right", "yeah", "mm-hm"),
        "UH_D": {"well": 0.7, "oh": 0.3},
        "CC_D": {"so": 0.5, "and": 0.3, "but": 0.2},
        "UH_FP": u("uh", "um"),
        "PRP": u("we", "you", "i", "it"),
        "MD": u("can", "should", "will"),
        "VB": u("take", "go", "need", "load", "know"),
        "RB": {"just": 1.0},
        "SC": {"so": 1.0},
        "DT": u("the", "a", "that"),
        "NN": u("engine", "boxcar", "oranges", "hour", "train"),
        "PREP": u("to", "from", "at"),
        "NNP": u("avon", "bath", "corning", "elmira", "dansville"),
        "CC": {"and": 0.6, "or": 0.2, "but": 0.2},
    }
    transition = {
        TURN: {"AC": 0.2, "UH_D": 0.15, "CC_D": 0.25, "UH_FP": 0.1, "PRP": 0.3},
        "AC": {"CC_D": 0.4, "PRP": 0.6},
        "UH_D": {"PRP": 0.7, "UH_FP": 0.3},
        "CC_D": {"PRP": 0.8, "UH_FP": 0.2},
        "UH_FP": {"PRP": 0.8, "CC_D": 0.2},
        "PRP": {"VB": 0.7, "MD": 0.3},
        "MD": {"VB": 1.0},
        "VB": {"DT": 0.55, "RB": 0.25, "CC": 0.2},
        "RB": {"SC": 0.6, "VB": 0.4},
        "SC": {"PRP": 1.0},
        "DT": {"NN": 1.0},
        "NN": {"CC": 0.4, "RB": 0.2, "PREP": 0.4},
        "PREP": {"NNP": 1.0},
        "NNP": {"CC": 0.5, "RB": 0.5},
        "CC": {"PRP": 0.5, "VB": 0.5},
    }
    return GeneratorSpec(transition, emission, {n: 1 / 8 for n in range(3, 11)},
                         dialog_count, turns_per_dialog, seed).validate()


PRESETS = {"five-tag": five_tag_spec, "dm-contrast": dm_contrast_spec}
