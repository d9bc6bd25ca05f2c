import pytest
from hypothesis import given, settings, strategies as st

from dmtag.corpus import (COLLAPSE_MAP, DM_TAGS, STOCK_TAGSET, UNKNOWN, ConversationalMove, Corpus, Dialog,
                          SpeechAct, Token, Turn, build_vocabulary, collapse_dm_tags, fold_bounds,
                          is_discourse_marker, parse_corpus, render_corpus, split_folds)
from dmtag.errors import EmptyTurn, MalformedLine, TooFewDialogs, UnknownTag

SAMPLE = """\
% a comment
# dialog: d93-12.1
u: okay/AC so/CC_D we/PRP take/VB the/DT engine/NN
@move: Conclude
@act: Acknowledge
s: right/AC
# dialog: d93-12.2
u: Well/UH_D uh/UH_FP
"""


def test_parse_structure():
    c = parse_corpus(SAMPLE)
    assert [d.id for d in c.dialogs] == ["d93-12.1", "d93-12.2"]
    first = c.dialogs[0].turns[0]
    assert first.speaker == "u"
    assert first.words == ["okay", "so", "we", "take", "the", "engine"]
    assert first.tags == ["AC", "CC_D", "PRP", "VB", "DT", "NN"]
    assert first.move is ConversationalMove.CONCLUDE
    assert first.act is SpeechAct.ACKNOWLEDGE
    assert c.dialogs[1].turns[0].words == ["well", "uh"]
    assert c.word_count == 9 and c.turn_count == 3


def test_turns_before_header_go_to_default_dialog():
    c = parse_corpus("u: go/VB\n")
    assert c.dialogs[0].id == "default"


@pytest.mark.parametrize("text, err", [
    ("u: go\n", MalformedLine),
    ("u: go/XYZ\n", UnknownTag),
    ("u:\n", EmptyTurn),
    ("u: a/b/VB\n", MalformedLine),
    ("u: x/TURN\n", MalformedLine),
    ("# dialog: a\n# dialog: a\n", MalformedLine),
    ("@move: Conclude\n", MalformedLine),
    ("u: go/VB\n@move: Nonsense\n", MalformedLine),
    ("u: go/VB\n@act: Inform\n@act: Inform\n", MalformedLine),
    ("# nonsense\n", MalformedLine),
    ("just words here\n", MalformedLine),
])
def test_parse_errors(text, err):
    with pytest.raises(err):
        parse_corpus(text)


def test_error_carries_line_number():
    with pytest.raises(UnknownTag) as info:
        parse_corpus("u: go/VB\ns: go/QQ\n")
    assert info.value.line_no == 2


def test_escaped_slash_and_backslash():
    c = parse_corpus(r"u: and\/or/CC back\\slash/NN" + "\n")
    assert c.dialogs[0].turns[0].words == ["and/or", "back\\slash"]
    assert parse_corpus(render_corpus(c)) == c


def test_tagset_extension_line():
    c = parse_corpus("%tagset: ZZ\nu: x/ZZ\n")
    assert "ZZ" in c.tagset
    assert "%tagset: ZZ" in render_corpus(c)


def test_pair_roles():
    roles = {a: a.pair_role for a in SpeechAct}
    assert {a for a, r in roles.items() if r == "initiates"} == {SpeechAct.CHECK, SpeechAct.REQUEST,
                                                                 SpeechAct.YN_QUESTION}
    assert {a for a, r in roles.items() if r == "concludes"} == {SpeechAct.RESPOND, SpeechAct.YN_ANSWER,
                                                                 SpeechAct.ACKNOWLEDGE}


def test_dm_tags_and_filled_pause():
    assert all(is_discourse_marker(t) for t in DM_TAGS)
    assert not is_discourse_marker("UH_FP")
    assert DM_TAGS <= STOCK_TAGSET


def test_collapse():
    c = collapse_dm_tags(parse_corpus(SAMPLE))
    tags = [t.tag for t in c.tokens()]
    assert not any(is_discourse_marker(t) for t in tags)
    assert tags[:2] == [COLLAPSE_MAP["AC"], COLLAPSE_MAP["CC_D"]] == ["UH_FP", "CC"]
    assert [t.word for t in c.tokens()] == [t.word for t in parse_corpus(SAMPLE).tokens()]


def test_vocabulary_unknown_folding():
    c = parse_corpus("u: a/DT a/DT b/DT go/VB\ns: go/VB\n")
    v = build_vocabulary(c, min_count=2)
    assert v.lookup("a", "DT") == "a"
    assert v.lookup("b", "DT") == UNKNOWN
    assert v.lookup("zzz", "DT") == UNKNOWN
    assert v.lookup("zzz", "VB") is None  # VB has no rare words
    assert v.lookup("a", "NN") is None
    assert v.counts[UNKNOWN, "DT"] == 1 and v.counts["go", "VB"] == 2


def test_vocabulary_rejects_bad_threshold():
    with pytest.raises(ValueError):
        build_vocabulary(Corpus(), 0)


# ---------------------------------------------------------------- round trip

_word = st.text(alphabet="abc/\\-'xyz", min_size=1, max_size=6)
_tag = st.sampled_from(sorted(STOCK_TAGSET - {"TURN"}))
_turn = st.builds(
    lambda sp, toks, mv, act: Turn(sp, tuple(Token(w.lower(), t) for w, t in toks), mv, act),
    st.sampled_from(["u", "s", "A"]),
    st.lists(st.tuples(_word, _tag), min_size=1, max_size=5),
    st.none() | st.sampled_from(list(ConversationalMove)),
    st.none() | st.sampled_from(list(SpeechAct)),
)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.lists(_turn, min_size=1, max_size=4), min_size=1, max_size=4))
def test_render_parse_round_trip(dialog_turns):
    c = Corpus(tuple(Dialog(f"d{i}", tuple(ts)) for i, ts in enumerate(dialog_turns)))
    assert parse_corpus(render_corpus(c)) == c


# ---------------------------------------------------------------- folds

def _corpus(n):
    return Corpus(tuple(Dialog(f"d{i}", (Turn("u", (Token("go", "VB"),)),)) for i in range(n)))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 80), st.data())
def test_fold_bounds_partition(n, data):
    k = data.draw(st.integers(1, n))
    b = fold_bounds(n, k)
    assert b[0][0] == 0 and b[-1][1] == n
    assert all(x[1] == y[0] for x, y in zip(b, b[1:]))
    sizes = [e - s for s, e in b]
    assert max(sizes) - min(sizes) <= 1


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 60), st.data(), st.floats(0.05, 0.5))
def test_split_folds_disjoint(n, data, frac):
    k = data.draw(st.integers(2, n - 1))
    i = data.draw(st.integers(0, k - 1))
    lo, hi = fold_bounds(n, k)[i]
    if n - (hi - lo) < 2:
        with pytest.raises(TooFewDialogs):
            split_folds(_corpus(n), k, i, frac)
        return
    s = split_folds(_corpus(n), k, i, frac)
    ids = [{d.id for d in part.dialogs} for part in (s.train, s.heldout, s.test)]
    assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])
    assert sum(map(len, ids)) == n
    assert ids[0] and ids[1]


def test_split_folds_errors():
    with pytest.raises(TooFewDialogs):
        split_folds(_corpus(3), 4, 0)
    with pytest.raises(TooFewDialogs):
        split_folds(_corpus(2), 2, 0)
    with pytest.raises(ValueError):
        split_folds(_corpus(5), 2, 2)
