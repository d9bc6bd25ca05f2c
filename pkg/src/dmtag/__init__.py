"""Joint POS tagging and language modelling with dedicated discourse-marker tags."""

from .corpus import (Corpus, Dialog, Token, Turn, build_vocabulary, collapse_dm_tags, parse_corpus,
                     read_corpus, render_corpus, split_folds)
from .errors import DmTagError
from .evaluation import cross_validate, dm_ablation, evaluate
from .model import (ModelConfig, TaggerModel, joint_logprob, load_model, save_model, tag_words, train,
                    word_perplexity)

__all__ = [
    "Corpus", "Dialog", "Token", "Turn", "build_vocabulary", "collapse_dm_tags", "parse_corpus",
    "read_corpus", "render_corpus", "split_folds", "DmTagError", "cross_validate", "dm_ablation",
    "evaluate", "ModelConfig", "TaggerModel", "joint_logprob", "load_model", "save_model",
    "tag_words", "train", "word_perplexity",
]
