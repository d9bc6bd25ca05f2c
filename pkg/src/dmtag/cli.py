"""Command-line interface: ``dmtag <command> [options]``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import analysis, evaluation
from .clustering import cluster_pos, cluster_words
from .corpus import Token, Turn, build_vocabulary, read_corpus, render_corpus, render_turn, split_folds
from .errors import DmTagError
from .model import ModelConfig, load_model_file, save_model_file, split_train_heldout, tag_words, train
from .synthetic import PRESETS, GeneratorSpec, generate_synthetic


class UsageError(Exception):
    pass


def _existing(path: str | None, flag: str) -> Path:
    if path is None:
        raise UsageError(f"{flag} is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{flag}: no such file: {path}")
    return p


def _config(args) -> ModelConfig:
    cfg = ModelConfig(window=args.window, beam_width=args.beam, min_count=args.min_count,
                      min_leaf_count=args.min_leaf, lambda_step=args.lambda_step)
    try:
        return cfg.validate()
    except ValueError as exc:
        flag = "--" + str(exc).split()[0].replace("_", "-")
        flag = {"--beam-width": "--beam", "--min-leaf-count": "--min-leaf", "--lambda": "--lambda-step"}.get(flag, flag)
        raise UsageError(f"{flag}: {exc}") from None


def _write(text: str, out: str | None):
    if not text.endswith("\n"):
        text += "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _check_folds(args):
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    fold = getattr(args, "fold", None)
    if fold is not None and not 0 <= fold < args.k:
        raise UsageError(f"--fold must lie in [0, {args.k})")
    if not 0 < args.heldout_frac < 1:
        raise UsageError("--heldout-frac must lie in (0, 1)")


# ---------------------------------------------------------------- commands

def cmd_train(args):
    _check_folds(args)
    c = read_corpus(_existing(args.corpus, "corpus"))
    cfg = _config(args)
    if args.fold is not None:
        split = split_folds(c, args.k, args.fold, args.heldout_frac)
        tr, held = split.train, split.heldout
    else:
        tr, held = split_train_heldout(c, args.heldout_frac)
    if not args.model:
        raise UsageError("--model is required")
    save_model_file(train(tr, held, cfg), args.model)
    print(f"trained on {tr.word_count} words, heldout {held.word_count} words -> {args.model}")


def _read_lines(src: str):
    if src == "-":
        return sys.stdin.read().splitlines()
    return _existing(src, "input").read_text().splitlines()


def cmd_tag(args):
    m = load_model_file(_existing(args.model, "--model"))
    out = []
    for line in _read_lines(args.input):
        line = line.strip()
        if not line:
            continue
        speaker = None
        head, sep, rest = line.partition(":")
        if sep and head and " " not in head:
            speaker, line = head, rest
        words = [w.lower() for w in line.split()]
        if not words:
            continue
        res = tag_words(m, words, args.beam)
        turn = Turn(speaker or "", tuple(Token(w, t) for w, t in zip(words, res.tags)))
        text = render_turn(turn)
        out.append(text if speaker else text.split(": ", 1)[1])
    _write("\n".join(out), args.output)


def cmd_eval(args):
    _check_folds(args)
    m = load_model_file(_existing(args.model, "--model"))
    c = read_corpus(_existing(args.corpus, "corpus"))
    if args.fold is not None:
        c = split_folds(c, args.k, args.fold, args.heldout_frac).test
    rep = evaluation.evaluate(m, c, args.beam, args.strict_pos)
    if args.format == "kv":
        text = evaluation.render_kv(rep)
    elif args.format == "csv":
        text = evaluation.render_csv(evaluation.CrossValReport(1, [rep], rep))
    else:
        text = evaluation.render_table([("model", rep)])
    _write(text, args.output)


def cmd_crossval(args):
    _check_folds(args)
    c = read_corpus(_existing(args.corpus, "corpus"))
    cv = evaluation.cross_validate(c, args.k, _config(args), args.heldout_frac, args.beam,
                                   args.strict_pos, True, args.jobs)
    _write(evaluation.render_crossval(cv, args.format), args.output)


def cmd_ablate(args):
    _check_folds(args)
    c = read_corpus(_existing(args.corpus, "corpus"))
    ab = evaluation.dm_ablation(c, args.k, _config(args), args.heldout_frac, args.beam,
                                args.strict_pos, args.jobs)
    _write(evaluation.render_ablation(ab, args.format), args.output)


def cmd_cluster(args):
    c = read_corpus(_existing(args.corpus, "corpus"))
    parts = ["# POS classification tree", cluster_pos(c).dump()]
    if not args.pos_only:
        v = build_vocabulary(c, args.min_count)
        for tag, h in sorted(cluster_words(c, v).items()):
            parts += [f"# word classification tree for {tag}", h.dump()]
    _write("\n".join(parts), args.output)


def cmd_analyze(args):
    c = read_corpus(_existing(args.corpus, "corpus"))
    parts = [analysis.render_turn_initial(analysis.turn_initial_counts(c), args.format)]
    if any(t.move is not None for t in c.turns()):
        parts.append(analysis.render_moves(analysis.move_cooccurrence(c), args.format))
    if any(t.act is not None for t in c.turns()):
        parts.append(analysis.render_acts(analysis.prior_act_report(c), args.format))
    sep = "" if args.format == "csv" else "\n"
    _write(sep.join(p if p.endswith("\n") else p + "\n" for p in parts).rstrip("\n"), args.output)


def cmd_gen(args):
    if args.preset:
        spec = PRESETS[args.preset]()
    else:
        spec = GeneratorSpec.from_json(_existing(args.spec, "spec").read_text())
    if args.seed is not None:
        spec.seed = args.seed
    c, ppl = generate_synthetic(spec)
    if args.output:
        Path(args.output).write_text(render_corpus(c))
    else:
        sys.stdout.write(render_corpus(c))
    print(f"true_perplexity={ppl!r}", file=sys.stderr if not args.output else sys.stdout)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dmtag", description="POS tagging and language modelling with discourse-marker tags")
    sub = p.add_subparsers(dest="command", required=True)

    def model_opts(sp):
        d = ModelConfig()
        sp.add_argument("--window", type=int, default=d.window, help="context slots (default %(default)s)")
        sp.add_argument("--min-count", type=int, default=d.min_count, help="vocabulary threshold")
        sp.add_argument("--min-leaf", type=int, default=d.min_leaf_count, help="minimum events per tree leaf")
        sp.add_argument("--lambda-step", type=float, default=d.lambda_step, help="interpolation grid step")

    def fold_opts(sp, fold=True):
        sp.add_argument("--k", type=int, default=6, help="number of folds (default %(default)s)")
        if fold:
            sp.add_argument("--fold", type=int, default=None, help="use this fold's split")
        sp.add_argument("--heldout-frac", type=float, default=0.15, help="share of training dialogs held out")

    def common(sp, fmt=True):
        sp.add_argument("--output", "-o", default=None, help="write to this file instead of stdout")
        if fmt:
            sp.add_argument("--format", choices=("text", "csv", "kv"), default="text")

    beam_default = ModelConfig().beam_width

    sp = sub.add_parser("train", help="train a model file from an annotated corpus")
    sp.add_argument("corpus")
    sp.add_argument("--model", required=True, help="output model path")
    sp.add_argument("--beam", type=int, default=beam_default)
    model_opts(sp)
    fold_opts(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("tag", help="tag whitespace-split text, one turn per line")
    sp.add_argument("input", help="text file or - for standard input")
    sp.add_argument("--model", required=True)
    sp.add_argument("--beam", type=int, default=None)
    common(sp, fmt=False)
    sp.set_defaults(func=cmd_tag)

    sp = sub.add_parser("eval", help="score a model on an annotated corpus")
    sp.add_argument("corpus")
    sp.add_argument("--model", required=True)
    sp.add_argument("--beam", type=int, default=None)
    sp.add_argument("--strict-pos", action="store_true", help="ignore DM/non-DM confusions in POS errors")
    fold_opts(sp)
    common(sp)
    sp.set_defaults(func=cmd_eval)

    for name, func, helptext in (("crossval", cmd_crossval, "k-fold cross-validation"),
                                 ("ablate", cmd_ablate, "cross-validate with and without DM tags")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("corpus")
        sp.add_argument("--beam", type=int, default=beam_default)
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel folds")
        sp.add_argument("--strict-pos", action="store_true")
        model_opts(sp)
        fold_opts(sp, fold=False)
        common(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("cluster", help="dump the POS and word classification trees")
    sp.add_argument("corpus")
    sp.add_argument("--min-count", type=int, default=ModelConfig().min_count)
    sp.add_argument("--pos-only", action="store_true")
    common(sp, fmt=False)
    sp.set_defaults(func=cmd_cluster)

    sp = sub.add_parser("analyze", help="turn-initial marker tables")
    sp.add_argument("corpus")
    common(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("gen", help="sample a synthetic annotated corpus")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("spec", nargs="?", help="generator spec JSON")
    src.add_argument("--preset", choices=sorted(PRESETS))
    sp.add_argument("--seed", type=int, default=None)
    common(sp, fmt=False)
    sp.set_defaults(func=cmd_gen)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if getattr(args, "beam", None) is not None and args.beam < 1:
            raise UsageError("--beam must be >= 1")
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dmtag: error: {exc}", file=sys.stderr)
        return 2
    except DmTagError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
