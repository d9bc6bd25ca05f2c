"""Acceptance gate: one test per criterion, each with its time budget.

A pass/fail line per criterion is printed in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from _oracles import brute_force_merges, exhaustive_decode, random_stats, random_tagging_spec
from dmtag.analysis import (MARKER_WORDS, move_cooccurrence, prior_act_report, turn_initial_counts)
from dmtag.clustering import BigramStats, cluster_forest
from dmtag.corpus import ConversationalMove as Mv, SpeechAct as Act, parse_corpus, split_folds
from dmtag.dtree import HELDOUT_FLOOR, Layout, TreeConfig, grow_arrays, heldout_loglik, question_bank, smooth_arrays
from dmtag.evaluation import EvalReport, cross_validate, dm_ablation
from dmtag.model import (ModelConfig, load_model, pos_probability, save_model, tag_words, train,
                         word_perplexity, word_probability)
from dmtag.synthetic import dm_contrast_spec, five_tag_spec, generate_synthetic, sample_corpus, true_perplexity


def _report(words, errors):
    return EvalReport(words=words, pos_errors=errors, dm_actual=0, dm_guessed=0, dm_correct=0,
                      log2prob=0.0, beam_width=1)


@pytest.mark.criterion(1, "error-rate arithmetic on published counts")
def test_c1_metric_definitions():
    t0 = time.perf_counter()
    assert _report(58298, 1219).pos_error_rate == pytest.approx(2.09, abs=0.005)
    assert _report(58298, 1189).pos_error_rate == pytest.approx(2.04, abs=0.005)
    assert time.perf_counter() - t0 < 1.0


@pytest.mark.criterion(2, "beam decoder equals exhaustive argmax")
def test_c2_decoder_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    checked = agree = 0
    models = []
    for i in range(20):
        spec = random_tagging_spec(rng, n_tags=int(rng.integers(2, 5)), seed=i)
        c = sample_corpus(spec)
        split = split_folds(c, 4, 0)
        models.append((spec, train(split.train, split.heldout,
                                   ModelConfig(window=2, min_count=1, min_leaf_count=4))))
    while checked < 200:
        spec, m = models[checked % len(models)]
        vocab = sorted(w for row in spec.word_emission.values() for w in row if m.word_candidates(w))
        words = [vocab[j] for j in rng.integers(0, len(vocab), size=int(rng.integers(1, 7)))]
        expected, _ = exhaustive_decode(m, words)
        got = tag_words(m, words, beam_width=16).tags
        agree += got == expected
        checked += 1
    assert agree == checked, f"{checked - agree} of {checked} sentences disagree"
    assert time.perf_counter() - t0 < 10.0


@pytest.mark.criterion(3, "greedy clustering equals brute-force merges")
def test_c3_clustering_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    for _ in range(50):
        items, bigrams = random_stats(rng, int(rng.integers(2, 11)), density=float(rng.uniform(0.2, 0.9)))
        stats = BigramStats.from_sequences([])
        stats.bigram.update(bigrams)
        for (a, b), n in bigrams.items():
            stats.unigram[a] += n
        for it in items:
            stats.unigram[it] += 1
        stats.total = sum(stats.unigram.values())
        _, log = cluster_forest(stats)
        assert log == brute_force_merges(stats.items, bigrams)
    assert time.perf_counter() - t0 < 10.0


def _random_tree_data(rng, layout, n, n_out):
    X = np.zeros((n, layout.size), dtype=np.int8)
    for s in range(layout.n_slots):
        base = s * layout.slot_width
        present = rng.random(n) < 0.8
        X[:, base] = present
        bits = rng.integers(0, 2, size=(n, layout.slot_width - 1))
        bits[~present] = -1
        X[:, base + 1:base + layout.slot_width] = bits
    # outcome depends on a couple of bits plus noise
    signal = (X[:, 1] == 1).astype(int) * 2 + (X[:, layout.slot_width + 2] == 1)
    noise = rng.integers(0, n_out, size=n)
    y = np.where(rng.random(n) < 0.6, signal % n_out, noise)
    return X, y.astype(np.int64)


def _floored_cost(probs, outcomes):
    return sum(-math.log2(max(probs[o], HELDOUT_FLOOR)) for o in outcomes)


@pytest.mark.criterion(4, "decision-tree distributions, splits and smoothing")
def test_c4_tree_properties():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    layout = Layout(2, 2, 2)
    bank = question_bank(layout)
    splits = 0
    for _ in range(100):
        n_out = int(rng.integers(2, 6))
        X, y = _random_tree_data(rng, layout, int(rng.integers(50, 400)), n_out)
        Xh, yh = _random_tree_data(rng, layout, int(rng.integers(20, 200)), n_out)
        tree = grow_arrays(X, y, Xh, yh, bank, layout, list(range(n_out)),
                           TreeConfig(min_leaf_count=int(rng.integers(2, 10))))
        smooth_arrays(tree, Xh, yh, 0.05)
        for node in tree.nodes:
            assert abs(node.ml.probs.sum() - 1) <= 1e-9
            assert abs(node.smoothed.sum() - 1) <= 1e-9
        reach_h = {n.id: [] for n in tree.nodes}
        reach_t = {n.id: [] for n in tree.nodes}
        for r in range(len(yh)):
            for nid in tree.path(Xh[r]):
                reach_h[nid].append(int(yh[r]))
        for r in range(len(y)):
            for nid in tree.path(X[r]):
                reach_t[nid].append(int(y[r]))
        for node in tree.nodes:
            if node.is_leaf:
                continue
            splits += 1

            def ml(outs):
                counts = np.bincount(outs, minlength=n_out)
                return counts / counts.sum()
            before = _floored_cost(ml(reach_t[node.id]), reach_h[node.id])
            after = (_floored_cost(ml(reach_t[node.yes]), reach_h[node.yes])
                     + _floored_cost(ml(reach_t[node.no]), reach_h[node.no]))
            assert after < before
        assert heldout_loglik(tree, Xh, yh, smoothed=True) >= heldout_loglik(tree, Xh, yh, smoothed=False)
    assert splits > 50
    assert time.perf_counter() - t0 < 30.0


@pytest.mark.criterion(5, "model perplexity tracks the generator's exact perplexity")
def test_c5_perplexity_oracle():
    t0 = time.perf_counter()
    spec = five_tag_spec()
    assert len({w for row in spec.word_emission.values() for w in row}) == 30
    assert len(spec.tags) == 5
    c, _ = generate_synthetic(spec)
    assert c.word_count >= 50_000
    split = split_folds(c, 6, 0)
    m = train(split.train, split.heldout)
    model_ppl = word_perplexity(m, split.test)
    true_ppl = true_perplexity(spec, split.test)
    ratio = model_ppl / true_ppl
    assert 0.99 <= ratio <= 1.10, f"model {model_ppl:.4f} vs true {true_ppl:.4f}"
    assert time.perf_counter() - t0 < 300


@pytest.mark.criterion(6, "DM tags lower perplexity and are recovered accurately")
def test_c6_ablation_direction():
    t0 = time.perf_counter()
    c = sample_corpus(dm_contrast_spec())
    ab = dm_ablation(c, k=6, jobs=1)
    dm, flat = ab.with_dm.pooled, ab.collapsed.pooled
    assert dm.perplexity <= flat.perplexity
    assert dm.dm_recall >= 99.0
    assert dm.dm_precision >= 99.0
    assert time.perf_counter() - t0 < 300


@pytest.mark.criterion(7, "cross-validation folds and pooling")
def test_c7_crossval_integrity():
    c = sample_corpus(dm_contrast_spec(dialog_count=60, turns_per_dialog=4))
    all_ids = [d.id for d in c.dialogs]
    for k in (2, 6, 10):
        cv = cross_validate(c, k=k, jobs=1)
        flat = [i for ids in cv.test_ids for i in ids]
        assert sorted(flat) == sorted(all_ids)
        assert len(set(flat)) == len(flat)
        sizes = [len(ids) for ids in cv.test_ids]
        assert max(sizes) - min(sizes) <= 1
        for test, tr, held in zip(cv.test_ids, cv.train_ids, cv.heldout_ids):
            assert not set(test) & set(tr) and not set(test) & set(held) and not set(tr) & set(held)
        for field in ("words", "pos_errors", "dm_actual", "dm_guessed", "dm_correct"):
            assert getattr(cv.pooled, field) == sum(getattr(r, field) for r in cv.per_fold)
        assert cv.pooled.log2prob == sum(r.log2prob for r in cv.per_fold)


ANALYSIS_CORPUS = """\
# dialog: d1
u: okay/AC so/CC_D we/PRP go/VB
@move: Conclude
@act: Acknowledge
s: well/UH_D no/AC
@move: Correction
@act: YNAnswer
u: um/UH_FP and/CC_D then/RB go/VB
@move: ElaboratePlan
@act: Inform
s: okay/AC
@act: Acknowledge
u: oh/UH_D really/RB
@move: RespondToNewInfo
@act: Check
s: yes/AC
@act: YNAnswer
# dialog: d2
u: we/PRP need/VB it/PRP
@move: Restate
@act: Request
s: so/SC it/PRP is/BEZ there/RB
@act: Respond
u: so/CC_D we/PRP go/VB
@move: Conclude
@act: Acknowledge
s: mm-hm/AC
@act: Acknowledge
u: and/CC_D then/RB_D uh/UH_FP go/VB
@move: ElaboratePlan
@act: Inform
s: now/RB_D uh/UH_FP go/VB
"""


@pytest.mark.criterion(8, "analysis tables match the hand-counted key")
def test_c8_analysis_tables():
    t0 = time.perf_counter()
    c = parse_corpus(ANALYSIS_CORPUS)
    assert c.turn_count == 12

    s = turn_initial_counts(c)
    assert s.raw == {"AC": 4, "CC_D": 2, "RB_D": 1, "UH_D": 2, "UH_FP": 1, "Other": 2}
    assert s.raw_total == 12
    assert s.excluding == {"AC": None, "CC_D": 4, "RB_D": 1, "UH_D": 1, "UH_FP": None, "Other": 2}
    assert s.excluding_total == 8

    mv = move_cooccurrence(c)
    assert mv.annotated_turns == 7
    assert mv.matrix == {(Mv.CONCLUDE, "so"): 2, (Mv.CORRECTION, "well"): 1,
                         (Mv.ELABORATE_PLAN, "and"): 2, (Mv.RESPOND_TO_NEW_INFO, "oh"): 1}

    rep = prior_act_report(c)
    key = {  # act: (total, and, oh, so, well, dm%)
        Act.ACKNOWLEDGE: (4, 1, 1, 0, 1, 75.0),
        Act.YN_ANSWER: (1, 1, 0, 0, 0, 100.0),
        Act.RESPOND: (1, 0, 0, 1, 0, 100.0),
        Act.CHECK: (1, 0, 0, 0, 0, 0.0),
        Act.REQUEST: (1, 0, 0, 0, 0, 0.0),
        Act.INFORM: (2, 0, 0, 0, 0, 0.0),
    }
    got = {act: (row.total, *(row.markers[w] for w in MARKER_WORDS), row.dm_percent)
           for act, row in rep.rows.items()}
    assert got == key
    groups = rep.grouped()
    assert [a for a, _ in groups["initiates"]] == [Act.CHECK, Act.REQUEST]
    assert [a for a, _ in groups["concludes"]] == [Act.ACKNOWLEDGE, Act.RESPOND, Act.YN_ANSWER]
    assert [a for a, _ in groups["none"]] == [Act.INFORM]
    assert time.perf_counter() - t0 < 1.0


@pytest.mark.criterion(9, "save/load round trip is bit-exact")
def test_c9_persistence():
    spec = dm_contrast_spec(dialog_count=20, turns_per_dialog=10)
    c = sample_corpus(spec)
    split = split_folds(c, 5, 0)
    m = train(split.train, split.heldout)
    m2 = load_model(save_model(m))
    rng = np.random.default_rng(9)
    vocab = sorted({w for row in spec.word_emission.values() for w in row}) + ["zzz"]
    tags = m.tags
    for i in range(1000):
        n = int(rng.integers(0, 6))
        hist = [(vocab[rng.integers(len(vocab))], tags[rng.integers(len(tags))]) for _ in range(n)]
        tag = tags[rng.integers(len(tags))]
        if i % 2:
            a, b = pos_probability(m, hist, tag), pos_probability(m2, hist, tag)
        else:
            word = vocab[rng.integers(len(vocab))]
            a, b = word_probability(m, hist, tag, word), word_probability(m2, hist, tag, word)
        assert a == b and math.copysign(1, a) == math.copysign(1, b)
