"""Corpus analyses of turn-initial discourse markers.

Three reports: the tag category of each turn's opening token, co-occurrence of
opening markers with conversational moves, and opening markers split by the
speech act of the preceding turn.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass

from .corpus import FILLED_PAUSE, ConversationalMove, Corpus, SpeechAct, Turn, is_discourse_marker
from .errors import NoAnnotations

CATEGORIES = ("AC", "CC_D", "RB_D", "UH_D", "UH_FP", "Other")
MARKER_WORDS = ("and", "oh", "so", "well")
SKIPPABLE = frozenset({"AC", FILLED_PAUSE})
ROLES = ("initiates", "concludes", "none")


def _category(tag: str) -> str:
    return tag if tag in CATEGORIES else "Other"


def opening_marker(turn: Turn) -> str | None:
    """The studied marker word opening ``turn``, skipping acknowledgments and filled pauses."""
    for tok in turn.tokens:
        if tok.tag in SKIPPABLE:
            continue
        if is_discourse_marker(tok.tag) and tok.word in MARKER_WORDS:
            return tok.word
        return None
    return None


# ---------------------------------------------------------------- turn-initial tags

@dataclass
class TurnInitialStats:
    raw: dict[str, int]
    excluding: dict[str, int | None]

    @property
    def raw_total(self) -> int:
        return sum(self.raw.values())

    @property
    def excluding_total(self) -> int:
        return sum(v for v in self.excluding.values() if v is not None)


def turn_initial_counts(c: Corpus) -> TurnInitialStats:
    """Opening-tag categories: raw first token, and after skipping AC/UH_FP.

    In the second variant, turns made only of discourse markers and filled
    pauses are dropped and the AC and UH_FP cells are undefined (None).
    """
    raw = Counter({k: 0 for k in CATEGORIES})
    excl = Counter({k: 0 for k in CATEGORIES})
    for turn in c.turns():
        tags = turn.tags
        raw[_category(tags[0])] += 1
        if all(is_discourse_marker(t) or t == FILLED_PAUSE for t in tags):
            continue
        first = next(t for t in tags if t not in SKIPPABLE)
        excl[_category(first)] += 1
    excluding = {k: (None if k in SKIPPABLE else excl[k]) for k in CATEGORIES}
    return TurnInitialStats({k: raw[k] for k in CATEGORIES}, excluding)


# ---------------------------------------------------------------- moves

@dataclass
class MoveCooccurrence:
    matrix: dict[tuple[ConversationalMove, str], int]
    annotated_turns: int

    def row(self, move: ConversationalMove) -> list[int]:
        return [self.matrix.get((move, w), 0) for w in MARKER_WORDS]


def move_cooccurrence(c: Corpus) -> MoveCooccurrence:
    matrix: Counter = Counter()
    annotated = 0
    for turn in c.turns():
        if turn.move is None:
            continue
        annotated += 1
        w = opening_marker(turn)
        if w is not None:
            matrix[turn.move, w] += 1
    if not annotated:
        raise NoAnnotations("no turn carries a conversational move")
    return MoveCooccurrence(dict(matrix), annotated)


# ---------------------------------------------------------------- speech acts

@dataclass
class ActRow:
    total: int = 0
    markers: Counter = None

    def __post_init__(self):
        if self.markers is None:
            self.markers = Counter()

    @property
    def dm_turns(self) -> int:
        return sum(self.markers[w] for w in MARKER_WORDS)

    @property
    def dm_percent(self) -> float:
        return 100.0 * self.dm_turns / self.total if self.total else 0.0


@dataclass
class AdjacencyPairReport:
    rows: dict[SpeechAct, ActRow]

    def grouped(self) -> dict[str, list[tuple[SpeechAct, ActRow]]]:
        out: dict[str, list] = {r: [] for r in ROLES}
        for act in SpeechAct:
            if act in self.rows:
                out[act.pair_role].append((act, self.rows[act]))
        return out


def prior_act_report(c: Corpus) -> AdjacencyPairReport:
    """Markers opening each turn, keyed by the speech act of the turn before it."""
    rows: dict[SpeechAct, ActRow] = {}
    pairs = 0
    for d in c.dialogs:
        for prev, nxt in zip(d.turns, d.turns[1:]):
            if prev.act is None:
                continue
            pairs += 1
            row = rows.setdefault(prev.act, ActRow())
            row.total += 1
            w = opening_marker(nxt)
            if w is not None:
                row.markers[w] += 1
    if not pairs:
        raise NoAnnotations("no speech-act annotated turn is followed by another turn")
    return AdjacencyPairReport(rows)


# ---------------------------------------------------------------- rendering

def _cell(v) -> str:
    return "n.a." if v is None else str(v)


def render_turn_initial(s: TurnInitialStats, fmt: str = "text") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["# turn-initial tag categories"])
        w.writerow(["starts_with", "number", "excluding_initial_ac_uh_fp"])
        for k in CATEGORIES:
            w.writerow([k, s.raw[k], _cell(s.excluding[k])])
        w.writerow(["Total", s.raw_total, s.excluding_total])
        return buf.getvalue()
    lines = ["Turn-initial tag categories",
             f"{'Starts with':<12}{'Number':>8}{'Excl. AC/UH_FP':>16}"]
    for k in CATEGORIES:
        lines.append(f"{k:<12}{s.raw[k]:>8}{_cell(s.excluding[k]):>16}")
    lines.append(f"{'Total':<12}{s.raw_total:>8}{s.excluding_total:>16}")
    return "\n".join(lines)


def render_moves(m: MoveCooccurrence, fmt: str = "text") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["# conversational move by opening marker"])
        w.writerow(["move", *MARKER_WORDS])
        for mv in ConversationalMove:
            w.writerow([mv.value, *m.row(mv)])
        return buf.getvalue()
    lines = ["Conversational move by opening marker",
             f"{'Move':<20}" + "".join(f"{x:>6}" for x in MARKER_WORDS)]
    for mv in ConversationalMove:
        lines.append(f"{mv.value:<20}" + "".join(f"{x:>6}" for x in m.row(mv)))
    return "\n".join(lines)


def render_acts(r: AdjacencyPairReport, fmt: str = "text") -> str:
    """DM% is the share of following turns opened by one of the four marker words."""
    groups = r.grouped()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["# marker opening the next turn by prior speech act; dm_percent over the four marker words"])
        w.writerow(["pair_role", "act", "total", *MARKER_WORDS, "dm_percent"])
        for role in ROLES:
            for act, row in groups[role]:
                w.writerow([role, act.value, row.total, *(row.markers[x] for x in MARKER_WORDS),
                            f"{row.dm_percent:.0f}"])
        return buf.getvalue()
    lines = ["Marker opening the next turn, by prior speech act",
             "(DM% = turns opened by and/oh/so/well over all following turns)",
             f"{'Act':<14}{'Total':>7}" + "".join(f"{x:>6}" for x in MARKER_WORDS) + f"{'DM%':>6}"]
    titles = {"initiates": "-- prior act initiates an adjacency pair",
              "concludes": "-- prior act concludes an adjacency pair",
              "none": "-- prior act not in an adjacency pair"}
    for role in ROLES:
        lines.append(titles[role])
        for act, row in groups[role]:
            lines.append(f"{act.value:<14}{row.total:>7}"
                         + "".join(f"{row.markers[x]:>6}" for x in MARKER_WORDS)
                         + f"{row.dm_percent:>5.0f}%")
    return "\n".join(lines)
