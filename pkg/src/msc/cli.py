"""Command line entry point: synth, preprocess, balance, train, eval, tag, color.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import platform
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from msc import DataError, NumericalError, __version__

log = logging.getLogger("msc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _ratios(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratios {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("ratios need three comma-separated values")
    return vals


REQUIRED = {
    "synth": ("out",),
    "preprocess": ("corpus", "out"),
    "balance": ("corpus", "split", "out"),
    "train": ("corpus", "out"),
    "eval": ("model", "corpus", "out"),
    "tag": ("model", "corpus", "out"),
    "color": ("model", "input", "out"),
}


def build_parser() -> _Parser:
    p = _Parser(prog="msc", description="Medical segment colorer")
    p.add_argument("--version", action="version", version=_version_text())
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def cmd(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="key=value file supplying flag defaults")
        sp.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log progress to stderr")
        return sp

    s = cmd("synth", "generate a synthetic corpus with planted segments")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="corpus CSV to write")
    s.add_argument("--truth", help="ground-truth span CSV (default: <out>.truth.csv)")
    s.add_argument("--generator", help="JSON generator config")
    s.add_argument("--n-notes", type=int)

    s = cmd("preprocess", "build vocabulary and train/validation/test split")
    s.add_argument("--corpus")
    s.add_argument("--taxonomy")
    s.add_argument("--out", help="output directory")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--ratios", type=_ratios, default=(0.6, 0.2, 0.2))
    s.add_argument("--unknown-codes", choices=("strict", "warn"), default="strict")

    s = cmd("balance", "compute replication counts for the training split")
    s.add_argument("--corpus")
    s.add_argument("--split", help="split manifest CSV")
    s.add_argument("--taxonomy")
    s.add_argument("--out", help="output directory")
    s.add_argument("--k-min", type=int, default=1)
    s.add_argument("--k-max", type=int, default=10)
    s.add_argument("--unknown-codes", choices=("strict", "warn"), default="strict")

    s = cmd("train", "train the model")
    s.add_argument("--corpus")
    s.add_argument("--taxonomy")
    s.add_argument("--split", help="split manifest CSV (default: stratified split with --seed)")
    s.add_argument("--balance-manifest", help="replication manifest CSV (default: no replication)")
    s.add_argument("--embeddings", help="text vector file")
    s.add_argument("--batch-size", type=int, default=256)
    s.add_argument("--batches-per-epoch", type=int, default=300)
    s.add_argument("--batch-pool", choices=("per_epoch", "fixed"), default="per_epoch")
    s.add_argument("--epochs", type=int, default=1000)
    s.add_argument("--lr", type=float, default=0.001)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--embed-dim", type=int, default=200)
    s.add_argument("--word-hidden", type=int, default=20)
    s.add_argument("--phrase-hidden", type=int, default=10)
    s.add_argument("--checkpoint-every", type=int, default=0)
    s.add_argument("--patience", type=int)
    s.add_argument("--no-prior-bias", action="store_true",
                   help="leave the document head bias at its random init")
    s.add_argument("--report-time", action="store_true", help="add wall time column to the report")
    s.add_argument("--out", help="output directory")
    s.add_argument("--unknown-codes", choices=("strict", "warn"), default="strict")

    for name, help_ in (("eval", "document metrics, tagging scores and lexicon report"),
                        ("tag", "word tags, segments and lexicon for a corpus")):
        s = cmd(name, help_)
        s.add_argument("--model")
        s.add_argument("--corpus")
        s.add_argument("--split", help="split manifest CSV")
        s.add_argument("--subset", choices=("train", "validation", "test", "all"), default="test")
        s.add_argument("--taxonomy")
        s.add_argument("--truth", help="ground-truth span CSV from synth")
        s.add_argument("--top-k", type=int, default=50)
        s.add_argument("--covering", choices=("containing", "strict5", "literal"), default="containing")
        s.add_argument("--vote", choices=("block", "abstain"), default="block")
        s.add_argument("--out", help="output directory")
        s.add_argument("--unknown-codes", choices=("strict", "warn"), default="warn")

    s = cmd("color", "render one note with colored segments")
    s.add_argument("--model")
    s.add_argument("--in", dest="input", help="plain-text note")
    s.add_argument("--format", choices=("html", "ansi"), default="html")
    s.add_argument("--taxonomy")
    s.add_argument("--covering", choices=("containing", "strict5", "literal"), default="containing")
    s.add_argument("--vote", choices=("block", "abstain"), default="block")
    s.add_argument("--out", help="output file")
    return p


def _version_text() -> str:
    return f"msc {__version__} (python {platform.python_version()}, numpy {np.__version__})"


def _read_config(path: str, parser: argparse.ArgumentParser) -> dict:
    known = {a.dest for a in parser._actions}
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, val = (t.strip() for t in line.split("=", 1))
            dest = key.lstrip("-").replace("-", "_")
            if dest == "in":
                dest = "input"
            if dest not in known or dest in ("help", "config"):
                raise UsageError(f"{path}:{lineno}: unknown option {key!r}")
            action = next(a for a in parser._actions if a.dest == dest)
            if isinstance(action, argparse._StoreTrueAction):
                out[dest] = val.lower() in ("1", "true", "yes", "on")
            else:
                try:
                    out[dest] = action.type(val) if action.type else val
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise UsageError(f"{path}:{lineno}: {exc}") from None
                if action.choices and out[dest] not in action.choices:
                    raise UsageError(f"{path}:{lineno}: {key} must be one of {sorted(action.choices)}")
    return out


def parse(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("msc: error: a subcommand is required")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    if args.config:
        sub.set_defaults(**_read_config(args.config, sub))
        args = parser.parse_args(argv)
    missing = [f"--{k.replace('_', '-')}" if k != "input" else "--in"
               for k in REQUIRED[args.command] if getattr(args, k) is None]
    if missing:
        sub.print_usage(sys.stderr)
        raise UsageError(f"msc {args.command}: error: missing required flag(s): {', '.join(missing)}")
    return args


# --- subcommands ----------------------------------------------------------------

def _taxonomy(path):
    from msc.taxonomy import load_taxonomy
    return load_taxonomy(path)


def _prepared(args, vocab=None):
    from msc.corpus import read_corpus_csv
    from msc.workflow import prepare
    notes = read_corpus_csv(args.corpus)
    return prepare(notes, _taxonomy(args.taxonomy), vocab, args.unknown_codes)


def cmd_synth(args) -> None:
    from msc.corpus import write_corpus_csv
    from msc.synth import SynthConfig, synthesize_corpus, write_truth_csv
    cfg = SynthConfig.from_json(args.generator) if args.generator else SynthConfig()
    if args.n_notes is not None:
        cfg.n_notes = args.n_notes
    notes, spans = synthesize_corpus(cfg, args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_corpus_csv(notes, args.out)
    write_truth_csv(spans, args.truth or f"{args.out}.truth.csv")
    log.info("wrote %d notes to %s", len(notes), args.out)


def cmd_preprocess(args) -> None:
    from msc.corpus import split, write_split_manifest
    from msc.plots import plot_corpus
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pc = _prepared(args)
    pc.vocab.save(out / "vocab.txt")
    parts = split(pc.documents, args.ratios, args.seed)
    write_split_manifest(parts, out / "split.csv")
    with open(out / "corpus_stats.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("note_id", "tokens", "labels"))
        for d in pc.documents:
            w.writerow((d.note_id, len(d), int(d.labels.sum())))
    plot_corpus([len(d) for d in pc.documents], [int(d.labels.sum()) for d in pc.documents],
                out / "corpus.png")
    log.info("vocabulary %d words; split %d/%d/%d", len(pc.vocab) - 1,
             len(parts.train), len(parts.validation), len(parts.test))


def _split_of(args, docs):
    from msc.corpus import apply_manifest, read_split_manifest, split
    if args.split:
        return apply_manifest(docs, read_split_manifest(args.split))
    return split(docs, seed=args.seed)


def cmd_balance(args) -> None:
    from msc.balance import contingency, sweep_c, write_frequency_report, write_replication_manifest
    from msc.plots import plot_balance, plot_sweep
    if args.k_min < 1 or args.k_max < args.k_min:
        raise DataError("need 1 <= k-min <= k-max")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pc = _prepared(args)
    train = _split_of(args, pc.documents).train
    A = contingency(train)
    plan = sweep_c(A, range(args.k_min, args.k_max + 1))
    write_replication_manifest(train, plan.counts, out / "replication.csv")
    write_frequency_report(plan, A, out / "frequency_report.csv")
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        cols = ["k", "c", "score", "residual", "replicated_docs", "mean", "var", "ref_mean", "ref_var", "std_after"]
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in plan.candidates:
            w.writerow([repr(float(row[c])) if isinstance(row[c], (float, np.floating)) else row[c] for c in cols])
    before = A.sum(axis=1) / A.sum()
    after = A @ plan.counts / (A @ plan.counts).sum()
    plot_balance(before, after, out / "balance.png")
    plot_sweep(plan.candidates, out / "sweep.png")
    log.info("chose k=%d (c=%g); %d training copies", plan.k, plan.c, int(plan.counts.sum()))


def cmd_train(args) -> None:
    from msc.balance import read_replication_manifest
    from msc.corpus import load_embeddings
    from msc.pipeline import ModelConfig, MscModel, save_checkpoint
    from msc.plots import plot_training
    from msc.trainer import TrainConfig, train
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pc = _prepared(args)
    parts = _split_of(args, pc.documents)
    counts = None
    if args.balance_manifest:
        manifest = read_replication_manifest(args.balance_manifest)
        missing = [d.note_id for d in parts.train if d.note_id not in manifest]
        if missing:
            raise DataError(f"{len(missing)} training notes missing from the balance manifest, e.g. {missing[0]}")
        counts = np.array([manifest[d.note_id] for d in parts.train])
    cfg = TrainConfig(batch_size=args.batch_size, batches_per_epoch=args.batches_per_epoch,
                      epochs=args.epochs, learning_rate=args.lr, seed=args.seed,
                      checkpoint_every=args.checkpoint_every, batch_pool=args.batch_pool,
                      patience=args.patience, prior_bias=not args.no_prior_bias)
    mcfg = ModelConfig(vocab_size=len(pc.vocab), embed_dim=args.embed_dim,
                       word_hidden=args.word_hidden, phrase_hidden=args.phrase_hidden)
    emb = load_embeddings(args.embeddings, pc.vocab, args.embed_dim, seed=args.seed)
    model = MscModel.init(mcfg, seed=args.seed, embeddings=emb, vocab_words=pc.vocab.words)
    model, report = train(parts, counts, cfg, model=model, out_dir=out)
    save_checkpoint(model, out / "model.ckpt", {"best_epoch": report.best_epoch, "val_f1": report.best_f1})
    report.write_csv(out / "train_report.csv", include_time=args.report_time)
    plot_training([e.epoch for e in report.epochs], report.losses, [e.val_f1 for e in report.epochs],
                  out / "training.png")
    log.info("best validation micro-F1 %.4f at epoch %d", report.best_f1, report.best_epoch)


def _load_model(path):
    from msc.corpus import Vocabulary
    from msc.pipeline import load_checkpoint
    model, _ = load_checkpoint(path)
    if model.vocab_words is None:
        raise DataError(f"{path}: checkpoint carries no vocabulary")
    return model, Vocabulary(model.vocab_words[1:])


def _tag_run(args):
    from msc.corpus import apply_manifest, read_split_manifest
    from msc.workflow import tag_documents
    model, vocab = _load_model(args.model)
    pc = _prepared(args, vocab)
    docs = pc.documents
    if args.subset != "all":
        if not args.split:
            raise DataError("--subset needs --split (or use --subset all)")
        docs = getattr(apply_manifest(docs, read_split_manifest(args.split)), args.subset)
    if not docs:
        raise DataError("no documents selected")
    tagged = tag_documents(model, docs, covering=args.covering, vote=args.vote)
    return model, pc, docs, tagged


def _lexicon_reports(args, pc, tagged, out: Path):
    from msc.colorer import score_lexicon, write_intersection_csv, write_lexicon_csv
    from msc.corpus import preprocess
    from msc.plots import plot_intersection
    from msc.taxonomy import category_vocabulary
    from msc.workflow import lexicon_from
    lex = lexicon_from(tagged, pc.words)
    ref = category_vocabulary(_taxonomy(args.taxonomy), preprocess)
    write_lexicon_csv(lex, out / "lexicon.csv", ref, args.top_k)
    scores = score_lexicon(lex, ref)
    write_intersection_csv(scores, out / "intersection.csv")
    plot_intersection(scores, out / "intersection.png")
    return lex


def cmd_eval(args) -> None:
    from msc.metrics import micro_prf, tagging_scores
    from msc.synth import read_truth_csv, truth_tags
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, pc, docs, tagged = _tag_run(args)
    pred = np.array([t.C_d >= model.config.threshold for t in tagged])
    truth = np.array([d.labels for d in docs])
    rows = [("document", micro_prf(pred, truth))]
    if args.truth:
        spans = read_truth_csv(args.truth)
        planted = [truth_tags(len(d), spans.get(d.note_id, [])) for d in docs]
        rows.append(("token_tagging", tagging_scores([t.tags for t in tagged], planted)))
    with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("level", "precision", "recall", "f1", "tp", "fp", "fn"))
        for name, m in rows:
            w.writerow((name, repr(m.precision), repr(m.recall), repr(m.f1), m.tp, m.fp, m.fn))
    _lexicon_reports(args, pc, tagged, out)
    for name, m in rows:
        log.info("%s micro P %.4f R %.4f F1 %.4f", name, m.precision, m.recall, m.f1)


def cmd_tag(args) -> None:
    from msc.colorer import segment
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, pc, docs, tagged = _tag_run(args)
    with open(out / "segments.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("note_id", "start", "end", "category", "text"))
        for t in tagged:
            words = pc.words[t.note_id]
            for s in segment(t.tags):
                w.writerow((t.note_id, s.start, s.end, s.category, " ".join(words[s.start:s.end + 1])))
    _lexicon_reports(args, pc, tagged, out)


def cmd_color(args) -> None:
    from msc.colorer import render, segment, tag_words
    from msc.corpus import preprocess
    from msc.pipeline import full_forward
    model, vocab = _load_model(args.model)
    text = Path(args.input).read_text(encoding="utf-8")
    words = preprocess(text)
    if not words:
        raise DataError(f"{args.input}: no words left after preprocessing")
    _, C_p, _ = full_forward(vocab.encode(words), model)
    tags = tag_words(C_p, len(words), model.config.window, model.config.threshold, args.covering, args.vote)
    legend = _taxonomy(args.taxonomy).legend
    doc = render(words, segment(tags), legend, args.format, title=Path(args.input).name)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(doc, encoding="utf-8")


COMMANDS = {
    "synth": cmd_synth, "preprocess": cmd_preprocess, "balance": cmd_balance, "train": cmd_train,
    "eval": cmd_eval, "tag": cmd_tag, "color": cmd_color,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"msc {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, UnicodeDecodeError, KeyError, ValueError) as exc:
        print(f"msc {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
