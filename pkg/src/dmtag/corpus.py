"""Annotated dialog transcripts: data model, parsing, rendering and partitioning.

Transcript format (UTF-8, one item per line)::

    % a comment
    # dialog: d93-15.2
    u: okay/AC so/CC_D we/PRP go/VB
    @move: ElaboratePlan
    @act: Inform
    s: just/RB so/SC you/PRP know/VBP

Words are lowercased on input.  A literal slash inside a word is written
``\\/`` and a literal backslash ``\\\\``.  A ``%tagset: X Y`` comment line
extends the tagset with extra tags for the rest of the file.
"""

from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable

from .errors import EmptyTurn, MalformedLine, TooFewDialogs, UnknownTag

TURN = "TURN"
UNKNOWN = "!unknown"
FILLED_PAUSE = "UH_FP"
DM_TAGS = frozenset({"AC", "UH_D", "CC_D", "RB_D"})

# Tags visible in the published POS classification tree; extensible per corpus.
STOCK_TAGSET = frozenset("""
    MUMBLE UH_D UH_FP FRAGMENT CC_D DOD DOP DOZ SC EX WP WRB RB_D AC TURN DO
    HAVE BE VB HAVED HAVEZ BED VBZ BEZ VBD VBP HAVEP BEP BEG HAVEG BEN PPREP
    RBR PDT RB VBG VBN RP MD TO DP PRP CC PREP JJ JJS JJR CD DT PRP$ WDT NN
    NNS NNP
""".split())

COLLAPSE_MAP = {"CC_D": "CC", "RB_D": "RB", "AC": FILLED_PAUSE, "UH_D": FILLED_PAUSE}


def is_discourse_marker(tag: str) -> bool:
    return tag in DM_TAGS


class ConversationalMove(enum.Enum):
    RESTATE = "Restate"
    SUMMARIZE_PLAN = "SummarizePlan"
    REQUEST_FOR_SUMMARY = "RequestForSummary"
    CONCLUDE = "Conclude"
    ELABORATE_PLAN = "ElaboratePlan"
    CORRECTION = "Correction"
    RESPOND_TO_NEW_INFO = "RespondToNewInfo"


class SpeechAct(enum.Enum):
    ACKNOWLEDGE = "Acknowledge"
    CHECK = "Check"
    CONFIRM = "Confirm"
    FILLED_PAUSE = "FilledPause"
    INFORM = "Inform"
    REQUEST = "Request"
    RESPOND = "Respond"
    YN_QUESTION = "YNQuestion"
    YN_ANSWER = "YNAnswer"

    @property
    def pair_role(self) -> str:
        """Adjacency-pair role: ``initiates``, ``concludes`` or ``none``."""
        return _PAIR_ROLE[self]


_PAIR_ROLE = {
    SpeechAct.CHECK: "initiates",
    SpeechAct.REQUEST: "initiates",
    SpeechAct.YN_QUESTION: "initiates",
    SpeechAct.RESPOND: "concludes",
    SpeechAct.YN_ANSWER: "concludes",
    SpeechAct.ACKNOWLEDGE: "concludes",
    SpeechAct.CONFIRM: "none",
    SpeechAct.INFORM: "none",
    SpeechAct.FILLED_PAUSE: "none",
}


@dataclass(frozen=True)
class Token:
    word: str
    tag: str

    def __post_init__(self):
        if not self.word:
            raise ValueError("empty word")


@dataclass(frozen=True)
class Turn:
    speaker: str
    tokens: tuple[Token, ...]
    move: ConversationalMove | None = None
    act: SpeechAct | None = None

    @property
    def words(self) -> list[str]:
        return [t.word for t in self.tokens]

    @property
    def tags(self) -> list[str]:
        return [t.tag for t in self.tokens]


@dataclass(frozen=True)
class Dialog:
    id: str
    turns: tuple[Turn, ...]


@dataclass(frozen=True)
class Corpus:
    dialogs: tuple[Dialog, ...] = ()
    tagset: frozenset = STOCK_TAGSET

    def turns(self) -> Iterable[Turn]:
        for d in self.dialogs:
            yield from d.turns

    def tokens(self) -> Iterable[Token]:
        for turn in self.turns():
            yield from turn.tokens

    @property
    def word_count(self) -> int:
        return sum(len(t.tokens) for t in self.turns())

    @property
    def turn_count(self) -> int:
        return sum(len(d.turns) for d in self.dialogs)

    def subset(self, indices: Iterable[int]) -> "Corpus":
        return Corpus(tuple(self.dialogs[i] for i in indices), self.tagset)


# ---------------------------------------------------------------- parsing

_TURN_RE = re.compile(r"^([^\s:]+):(.*)$")
_DIALOG_RE = re.compile(r"^#\s*dialog:\s*(\S.*?)\s*$")
_ANNOT_RE = re.compile(r"^@(move|act):\s*(\S+)\s*$")
_TAGSET_RE = re.compile(r"^%\s*tagset:(.*)$")

_MOVES = {m.value: m for m in ConversationalMove}
_ACTS = {a.value: a for a in SpeechAct}


def _split_token(raw: str, line_no: int, tagset) -> Token:
    word_chars: list[str] = []
    slash_at = None
    chars: list[str] = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch == "\\" and i + 1 < len(raw):
            chars.append(raw[i + 1])
            i += 2
            continue
        if ch == "/":
            if slash_at is not None:
                raise MalformedLine(line_no, f"unescaped '/' inside word in {raw!r}")
            slash_at = len(chars)
            word_chars = chars
            chars = []
            i += 1
            continue
        chars.append(ch)
        i += 1
    if slash_at is None:
        raise MalformedLine(line_no, f"token {raw!r} has no /TAG")
    word = "".join(word_chars).lower()
    tag = "".join(chars)
    if not word or not tag:
        raise MalformedLine(line_no, f"token {raw!r} has an empty word or tag")
    if "/" in tag:
        raise MalformedLine(line_no, "tags may not contain '/'")
    if tag == TURN:
        raise MalformedLine(line_no, "TURN is reserved for turn boundaries")
    if tag not in tagset:
        raise UnknownTag(tag, line_no)
    return Token(word, tag)


def parse_corpus(text: str, tagset=STOCK_TAGSET) -> Corpus:
    """Parse transcript text into a :class:`Corpus`.

    Turns appearing before any ``# dialog:`` header go into a dialog named
    ``default``.
    """
    tagset = set(tagset)
    dialogs: list[tuple[str, list[Turn]]] = []
    seen_ids: set[str] = set()

    def current_turns():
        if not dialogs:
            dialogs.append(("default", []))
            seen_ids.add("default")
        return dialogs[-1][1]

    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("%"):
            m = _TAGSET_RE.match(line)
            if m:
                extra = m.group(1).split()
                if any("/" in t for t in extra):
                    raise MalformedLine(line_no, "tags may not contain '/'")
                tagset.update(extra)
            continue
        if line.startswith("#"):
            m = _DIALOG_RE.match(line)
            if not m:
                raise MalformedLine(line_no, "expected '# dialog: <id>'")
            did = m.group(1)
            if did in seen_ids:
                raise MalformedLine(line_no, f"duplicate dialog id {did!r}")
            seen_ids.add(did)
            dialogs.append((did, []))
            continue
        if line.startswith("@"):
            m = _ANNOT_RE.match(line)
            if not m:
                raise MalformedLine(line_no, "expected '@move: <label>' or '@act: <label>'")
            turns = dialogs[-1][1] if dialogs else []
            if not turns:
                raise MalformedLine(line_no, "annotation without a preceding turn")
            kind, label = m.groups()
            table = _MOVES if kind == "move" else _ACTS
            if label not in table:
                raise MalformedLine(line_no, f"unknown {kind} label {label!r}")
            if getattr(turns[-1], kind) is not None:
                raise MalformedLine(line_no, f"turn already has a {kind} label")
            turns[-1] = replace(turns[-1], **{kind: table[label]})
            continue
        m = _TURN_RE.match(line)
        if not m:
            raise MalformedLine(line_no, "expected '<speaker>: word/TAG ...'")
        speaker, rest = m.group(1), m.group(2).split()
        if not rest:
            raise EmptyTurn(line_no)
        tokens = tuple(_split_token(raw, line_no, tagset) for raw in rest)
        current_turns().append(Turn(speaker, tokens))

    return Corpus(tuple(Dialog(did, tuple(turns)) for did, turns in dialogs),
                  frozenset(tagset))


def _escape(word: str) -> str:
    return word.replace("\\", "\\\\").replace("/", "\\/")


def render_turn(turn: Turn) -> str:
    return turn.speaker + ": " + " ".join(f"{_escape(t.word)}/{t.tag}" for t in turn.tokens)


def render_corpus(c: Corpus) -> str:
    lines = []
    extra = sorted(c.tagset - STOCK_TAGSET)
    if extra:
        lines.append("%tagset: " + " ".join(extra))
    for d in c.dialogs:
        lines.append(f"# dialog: {d.id}")
        for turn in d.turns:
            lines.append(render_turn(turn))
            if turn.move is not None:
                lines.append(f"@move: {turn.move.value}")
            if turn.act is not None:
                lines.append(f"@act: {turn.act.value}")
    return "\n".join(lines) + ("\n" if lines else "")


def read_corpus(path, tagset=STOCK_TAGSET) -> Corpus:
    with open(path, encoding="utf-8") as f:
        return parse_corpus(f.read(), tagset)


# ---------------------------------------------------------------- transforms

def collapse_dm_tags(c: Corpus) -> Corpus:
    """Map each discourse-marker tag onto its sentential counterpart."""
    dialogs = tuple(
        replace(d, turns=tuple(
            replace(t, tokens=tuple(Token(k.word, COLLAPSE_MAP.get(k.tag, k.tag)) for k in t.tokens))
            for t in d.turns))
        for d in c.dialogs)
    tagset = frozenset(c.tagset) | {COLLAPSE_MAP[t] for t in DM_TAGS if t in c.tagset}
    return Corpus(dialogs, tagset)


@dataclass
class Vocabulary:
    """Per-tag word lists with rare words folded into ``!unknown``.

    ``counts`` holds training frequencies of the mapped (word, tag) pairs;
    the ``!unknown`` entry of a tag sums its rare words.
    """
    per_tag: dict[str, frozenset]
    min_count: int = 2
    counts: dict[tuple[str, str], int] = field(default_factory=dict)

    def lookup(self, word: str, tag: str) -> str | None:
        """Vocabulary entry for ``word`` under ``tag``, or None if there is none."""
        words = self.per_tag.get(tag)
        if not words:
            return None
        if word in words and word != UNKNOWN:
            return word
        return UNKNOWN if UNKNOWN in words else None


def build_vocabulary(c: Corpus, min_count: int = 2) -> Vocabulary:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    raw = Counter((t.word, t.tag) for t in c.tokens())
    per_tag: dict[str, set] = {}
    counts: Counter = Counter()
    for (word, tag), n in raw.items():
        key = word if n >= min_count else UNKNOWN
        per_tag.setdefault(tag, set()).add(key)
        counts[key, tag] += n
    return Vocabulary({t: frozenset(ws) for t, ws in per_tag.items()}, min_count, dict(counts))


@dataclass(frozen=True)
class FoldSplit:
    train: Corpus
    heldout: Corpus
    test: Corpus
    k: int
    fold_index: int


def fold_bounds(n: int, k: int) -> list[tuple[int, int]]:
    """Contiguous [start, end) blocks; sizes differ by at most one."""
    base, extra = divmod(n, k)
    bounds, start = [], 0
    for i in range(k):
        end = start + base + (1 if i < extra else 0)
        bounds.append((start, end))
        start = end
    return bounds


def split_folds(c: Corpus, k: int, fold_index: int, heldout_fraction: float = 0.15) -> FoldSplit:
    """Dialog-level split: a contiguous test block, heldout spread evenly over the rest."""
    n = len(c.dialogs)
    if k < 1 or k > n:
        raise TooFewDialogs(f"k={k} needs at least {k} dialogs, corpus has {n}")
    if not 0 <= fold_index < k:
        raise ValueError(f"fold_index {fold_index} outside [0, {k})")
    if not 0 < heldout_fraction < 1:
        raise ValueError("heldout_fraction must lie in (0, 1)")
    lo, hi = fold_bounds(n, k)[fold_index]
    rest = [i for i in range(n) if not lo <= i < hi]
    if len(rest) < 2:
        raise TooFewDialogs(f"fold {fold_index} leaves {len(rest)} dialog(s) for train and heldout")
    n_held = min(len(rest) - 1, max(1, round(heldout_fraction * len(rest))))
    picks = {rest[int((j + 0.5) * len(rest) / n_held)] for j in range(n_held)}
    return FoldSplit(
        train=c.subset(i for i in rest if i not in picks),
        heldout=c.subset(i for i in rest if i in picks),
        test=c.subset(range(lo, hi)),
        k=k,
        fold_index=fold_index,
    )
