import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import enumerate_logprob, random_tagging_spec
from dmtag.corpus import TURN, parse_corpus, render_corpus
from dmtag.errors import InvalidSpec
from dmtag.synthetic import (PRESETS, GeneratorSpec, dm_contrast_spec, five_tag_spec, sample_corpus,
                             true_logprob, true_perplexity)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 4))
def test_forward_matches_enumeration(seed, n_tags):
    spec = random_tagging_spec(np.random.default_rng(seed), n_tags, dialog_count=2, turns_per_dialog=4,
                               seed=seed)
    c = sample_corpus(spec)
    got, n = true_logprob(spec, c)
    want, m = enumerate_logprob(spec, c)
    assert n == m
    assert got == pytest.approx(want, abs=1e-9)


def test_dm_contrast_forward_matches_enumeration():
    spec = dm_contrast_spec(dialog_count=2, turns_per_dialog=3)
    spec.turn_length = {3: 1.0}  # keeps enumeration at 14 ** 3 sequences per turn
    c = sample_corpus(spec)
    assert true_logprob(spec, c)[0] == pytest.approx(enumerate_logprob(spec, c)[0], abs=1e-9)


def test_sampling_is_seeded():
    a = render_corpus(sample_corpus(dm_contrast_spec(dialog_count=3, turns_per_dialog=3, seed=5)))
    b = render_corpus(sample_corpus(dm_contrast_spec(dialog_count=3, turns_per_dialog=3, seed=5)))
    c = render_corpus(sample_corpus(dm_contrast_spec(dialog_count=3, turns_per_dialog=3, seed=6)))
    assert a == b and a != c


def test_sampled_corpus_round_trips():
    c = sample_corpus(dm_contrast_spec(dialog_count=3, turns_per_dialog=4))
    assert parse_corpus(render_corpus(c)) == c


def test_samples_respect_spec():
    spec = dm_contrast_spec(dialog_count=10, turns_per_dialog=10)
    c = sample_corpus(spec)
    assert c.turn_count == 100
    for turn in c.turns():
        assert 3 <= len(turn.tokens) <= 10
        prev = TURN
        for tok in turn.tokens:
            assert spec.tag_transition[prev].get(tok.tag, 0) > 0
            assert spec.word_emission[tok.tag].get(tok.word, 0) > 0
            prev = tok.tag


def test_presets():
    five = five_tag_spec()
    assert len(five.tags) == 5
    assert len({w for row in five.word_emission.values() for w in row}) == 30
    for make in PRESETS.values():
        make().validate()


def test_json_round_trip():
    spec = dm_contrast_spec(dialog_count=4)
    back = GeneratorSpec.from_json(spec.to_json())
    assert back == spec
    c1, c2 = sample_corpus(spec), sample_corpus(back)
    assert c1 == c2
    assert true_perplexity(spec, c1) == true_perplexity(back, c2)


@pytest.mark.parametrize("mutate", [
    lambda d: d["tag_transition"].pop("TURN"),
    lambda d: d["tag_transition"]["TURN"].update(PRP=0.9),
    lambda d: d["word_emission"]["PRP"].update(we=-1.0),
    lambda d: d["turn_length"].update({"3": 5.0}),
    lambda d: d["word_emission"].pop("MD"),
    lambda d: d.update(dialog_count=0),
    lambda d: d.pop("word_emission"),
])
def test_invalid_specs(mutate):
    d = json.loads(dm_contrast_spec().to_json())
    mutate(d)
    with pytest.raises(InvalidSpec):
        GeneratorSpec.from_json(json.dumps(d))
