"""Tagging and language-model metrics, cross-validation and the DM ablation."""

from __future__ import annotations

import csv
import io
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .corpus import Corpus, collapse_dm_tags, is_discourse_marker, split_folds
from .errors import TagsetMismatch
from .model import ModelConfig, TaggerModel, corpus_logprob, tag_words, train


def _pct(num: int, den: int) -> float | None:
    return 100.0 * num / den if den else None


@dataclass
class EvalReport:
    words: int
    pos_errors: int
    dm_actual: int
    dm_guessed: int
    dm_correct: int
    log2prob: float
    beam_width: int
    dm_metrics: bool = True
    confusion: Counter = field(default_factory=Counter, repr=False)

    @property
    def pos_error_rate(self) -> float | None:
        return _pct(self.pos_errors, self.words)

    @property
    def dm_errors(self) -> int:
        return (self.dm_actual - self.dm_correct) + (self.dm_guessed - self.dm_correct)

    @property
    def dm_recall(self) -> float | None:
        return _pct(self.dm_correct, self.dm_actual) if self.dm_metrics else None

    @property
    def dm_precision(self) -> float | None:
        return _pct(self.dm_correct, self.dm_guessed) if self.dm_metrics else None

    @property
    def perplexity(self) -> float:
        return 2.0 ** (-self.log2prob / self.words) if self.words else float("nan")

    def metrics(self) -> dict:
        out = {
            "words": self.words,
            "pos_errors": self.pos_errors,
            "pos_error_rate": self.pos_error_rate,
            "perplexity": self.perplexity,
            "beam_width": self.beam_width,
        }
        if self.dm_metrics:
            out.update(dm_actual=self.dm_actual, dm_guessed=self.dm_guessed,
                       dm_correct=self.dm_correct, dm_errors=self.dm_errors,
                       dm_recall=self.dm_recall, dm_precision=self.dm_precision)
        return out


def pool_reports(reports: list[EvalReport]) -> EvalReport:
    """Sum counts across folds; every rate is recomputed from the sums."""
    confusion: Counter = Counter()
    for r in reports:
        confusion.update(r.confusion)
    return EvalReport(
        words=sum(r.words for r in reports),
        pos_errors=sum(r.pos_errors for r in reports),
        dm_actual=sum(r.dm_actual for r in reports),
        dm_guessed=sum(r.dm_guessed for r in reports),
        dm_correct=sum(r.dm_correct for r in reports),
        log2prob=sum(r.log2prob for r in reports),
        beam_width=reports[0].beam_width if reports else 0,
        dm_metrics=all(r.dm_metrics for r in reports),
        confusion=confusion,
    )


def score_tags(ref: list[str], hyp: list[str], strict_pos: bool = False):
    """(pos_errors, dm_actual, dm_guessed, dm_correct) for one aligned sequence.

    With ``strict_pos`` a disagreement where exactly one side is a discourse
    marker is not counted as a POS error.
    """
    pos_err = dm_act = dm_guess = dm_ok = 0
    for r, h in zip(ref, hyp):
        rd, hd = is_discourse_marker(r), is_discourse_marker(h)
        if r != h and not (strict_pos and rd != hd):
            pos_err += 1
        dm_act += rd
        dm_guess += hd
        dm_ok += rd and r == h
    return pos_err, dm_act, dm_guess, dm_ok


def evaluate(m: TaggerModel, test: Corpus, beam_width: int | None = None,
             strict_pos: bool = False, dm_metrics: bool = True) -> EvalReport:
    """Decode every turn of ``test`` and compare against its reference tags."""
    unknown = {t.tag for t in test.tokens()} - m.tagset
    if unknown:
        raise TagsetMismatch(f"test tags outside the model tagset: {sorted(unknown)}")
    beam = beam_width or m.config.beam_width
    counts = [0, 0, 0, 0]
    confusion: Counter = Counter()
    for turn in test.turns():
        hyp = tag_words(m, turn.words, beam).tags
        for i, v in enumerate(score_tags(turn.tags, hyp, strict_pos)):
            counts[i] += v
        confusion.update(zip(turn.tags, hyp))
    logprob, n = corpus_logprob(m, test, beam)
    return EvalReport(n, counts[0], counts[1], counts[2], counts[3], logprob, beam,
                      dm_metrics, confusion)


@dataclass
class CrossValReport:
    k: int
    per_fold: list[EvalReport]
    pooled: EvalReport
    test_ids: list[list[str]] = field(default_factory=list)
    train_ids: list[list[str]] = field(default_factory=list)
    heldout_ids: list[list[str]] = field(default_factory=list)


def _run_fold(args):
    c, k, i, cfg, heldout_fraction, beam_width, strict_pos, dm_metrics = args
    split = split_folds(c, k, i, heldout_fraction)
    m = train(split.train, split.heldout, cfg)
    rep = evaluate(m, split.test, beam_width, strict_pos, dm_metrics)
    ids = lambda part: [d.id for d in part.dialogs]  # noqa: E731
    return rep, ids(split.test), ids(split.train), ids(split.heldout)


def cross_validate(c: Corpus, k: int = 6, cfg: ModelConfig | None = None,
                   heldout_fraction: float = 0.15, beam_width: int | None = None,
                   strict_pos: bool = False, dm_metrics: bool = True,
                   jobs: int | None = 1) -> CrossValReport:
    """Train on k-1 blocks of dialogs and test on the remaining one, for each block."""
    cfg = cfg or ModelConfig()
    split_folds(c, k, 0, heldout_fraction)  # fail fast on bad k
    tasks = [(c, k, i, cfg, heldout_fraction, beam_width, strict_pos, dm_metrics) for i in range(k)]
    jobs = jobs or os.cpu_count() or 1
    if jobs > 1 and k > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, k)) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]
    per_fold = [r[0] for r in results]
    return CrossValReport(k, per_fold, pool_reports(per_fold),
                          [r[1] for r in results], [r[2] for r in results], [r[3] for r in results])


@dataclass
class AblationReport:
    with_dm: CrossValReport
    collapsed: CrossValReport

    @property
    def perplexity_delta(self) -> float:
        """DM-tagged minus collapsed perplexity (negative: the DM tags help)."""
        return self.with_dm.pooled.perplexity - self.collapsed.pooled.perplexity

    @property
    def pos_error_delta(self) -> int:
        """DM-tagged minus collapsed POS errors."""
        return self.with_dm.pooled.pos_errors - self.collapsed.pooled.pos_errors


def dm_ablation(c: Corpus, k: int = 6, cfg: ModelConfig | None = None,
                heldout_fraction: float = 0.15, beam_width: int | None = None,
                strict_pos: bool = False, jobs: int | None = 1) -> AblationReport:
    """Cross-validate on ``c`` and on its DM-collapsed copy with identical folds."""
    with_dm = cross_validate(c, k, cfg, heldout_fraction, beam_width, strict_pos, True, jobs)
    collapsed = cross_validate(collapse_dm_tags(c), k, cfg, heldout_fraction, beam_width,
                               strict_pos, False, jobs)
    return AblationReport(with_dm, collapsed)


# ---------------------------------------------------------------- rendering

def _fmt(v) -> str:
    if v is None:
        return "n.a."
    if isinstance(v, float):
        return f"{v:.2f}"
    return str(v)


_ROWS = [
    ("POS errors", "pos_errors"),
    ("POS error rate", "pos_error_rate"),
    ("Perplexity", "perplexity"),
    ("DM errors", "dm_errors"),
    ("DM recall", "dm_recall"),
    ("DM precision", "dm_precision"),
]


def render_table(columns: list[tuple[str, EvalReport]]) -> str:
    """Aligned text table, one column per report."""
    label_w = max(len(r[0]) for r in _ROWS) + 2
    col_w = max([10] + [len(name) + 2 for name, _ in columns])
    lines = [" " * label_w + "".join(name.rjust(col_w) for name, _ in columns)]
    for label, key in _ROWS:
        cells = []
        for _, rep in columns:
            cells.append(_fmt(rep.metrics().get(key)).rjust(col_w))
        lines.append(label.ljust(label_w) + "".join(cells))
    words = columns[0][1].words if columns else 0
    beam = columns[0][1].beam_width if columns else 0
    lines.append(f"({words} words; perplexity marginalises tags over a beam of {beam})")
    return "\n".join(lines)


def render_kv(rep: EvalReport, prefix: str = "") -> str:
    return "\n".join(f"{prefix}{k}={_fmt(v) if v is None else v}" for k, v in rep.metrics().items())


def render_csv(cv: CrossValReport) -> str:
    buf = io.StringIO()
    keys = list(cv.pooled.metrics())
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["fold"] + keys)
    for i, rep in enumerate(cv.per_fold):
        m = rep.metrics()
        writer.writerow([i] + [m.get(k, "") for k in keys])
    m = cv.pooled.metrics()
    writer.writerow(["pooled"] + [m.get(k, "") for k in keys])
    return buf.getvalue()


def render_crossval(cv: CrossValReport, fmt: str = "text") -> str:
    if fmt == "csv":
        return render_csv(cv)
    if fmt == "kv":
        parts = [render_kv(rep, f"fold{i}.") for i, rep in enumerate(cv.per_fold)]
        parts.append(render_kv(cv.pooled, "pooled."))
        return "\n".join(parts)
    cols = [(f"fold {i}", rep) for i, rep in enumerate(cv.per_fold)] + [("pooled", cv.pooled)]
    return f"{cv.k}-fold cross-validation\n" + render_table(cols)


def render_ablation(ab: AblationReport, fmt: str = "text") -> str:
    if fmt == "kv":
        return "\n".join([render_kv(ab.collapsed.pooled, "no_dm."), render_kv(ab.with_dm.pooled, "dm."),
                          f"perplexity_delta={ab.perplexity_delta}", f"pos_error_delta={ab.pos_error_delta}"])
    if fmt == "csv":
        return ("# collapsed\n" + render_csv(ab.collapsed) + "# dm\n" + render_csv(ab.with_dm))
    table = render_table([("No DM", ab.collapsed.pooled), ("DM", ab.with_dm.pooled)])
    return (table + f"\nperplexity delta (DM - No DM): {ab.perplexity_delta:+.3f}"
            f"\nPOS error delta (DM - No DM): {ab.pos_error_delta:+d}")
