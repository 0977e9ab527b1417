"""Command-line entry point: ``alphadimt <subcommand> [--config FILE] [key=value ...]``.

Subcommands talk to each other only through files under ``data_dir`` and
``out_dir``. Exit codes: 1 usage, 2 config, 3 data, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import model as M
from . import verify
from .augment import augment_corpus, augment_pairs, load_augmented, save_augmented
from .config import RunConfig
from .errors import ConfigError, DataError, VerificationError
from .objectives import normalize_weights, raw_log_weight
from .seqcore import ParallelCorpus, Vocab, generate_synthetic, load_corpus, save_corpus
from .trainer import evaluate, train

EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_VERIFY = 1, 2, 3, 4
SPLITS = ("train", "dev", "test")
SWEEP = (("ml", "ml", 0.0), ("raml", "raml", 0.0), ("alpha=0.3", "alpha_dimt", 0.3),
         ("alpha=0.5", "alpha_dimt", 0.5), ("alpha=0.7", "alpha_dimt", 0.7))
SWEEP_COLUMNS = ("method", "best_epoch", "dev_greedy", "test_greedy", "test_beam")
WEIGHT_COLUMNS = ("pair_id", "e", "reward", "log_p", "u", "w")

log = logging.getLogger("alphadimt")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# data files ----------------------------------------------------------------


def corpus_paths(data_dir: str | Path, split: str) -> tuple[Path, Path]:
    return Path(data_dir) / f"{split}.src", Path(data_dir) / f"{split}.tgt"


def load_data(cfg: RunConfig, splits: Sequence[str] = SPLITS) -> tuple[Vocab, dict[str, ParallelCorpus]]:
    vocab_path = Path(cfg.data_dir) / "vocab.txt"
    if not vocab_path.exists():
        raise DataError(f"{vocab_path} not found; run gen-data first")
    vocab = Vocab.load(vocab_path)
    return vocab, {s: load_corpus(*corpus_paths(cfg.data_dir, s), vocab=vocab, split=s) for s in splits}


def augmented_path(cfg: RunConfig) -> Path:
    return Path(cfg.augmented_path) if cfg.augmented_path else Path(cfg.data_dir) / "train.aug.tsv"


def load_params(cfg: RunConfig, checkpoint: str | None, vocab: Vocab, required: bool = True) -> M.Params:
    path = Path(checkpoint) if checkpoint else Path(cfg.out_dir) / "best.ckpt"
    if not path.exists():
        if required:
            raise DataError(f"checkpoint {path} not found")
        log.info("no checkpoint at %s; using freshly initialized parameters", path)
        return M.init_params(cfg.model_config(len(vocab), len(vocab)))
    params = M.load_checkpoint(path)
    found = M.config_from_params(params)
    if (found.src_vocab, found.tgt_vocab) != (len(vocab), len(vocab)):
        raise DataError(f"{path}: vocabulary size {found.tgt_vocab} does not match {len(vocab)}")
    return params


# subcommands ---------------------------------------------------------------


def cmd_gen_data(cfg: RunConfig, args) -> None:
    vocab, *corpora = generate_synthetic(cfg.task_spec())
    Path(cfg.data_dir).mkdir(parents=True, exist_ok=True)
    vocab.save(Path(cfg.data_dir) / "vocab.txt")
    for corpus in corpora:
        save_corpus(corpus, *corpus_paths(cfg.data_dir, corpus.split), vocab)
    cfg.write(cfg.data_dir)
    print(f"wrote {cfg.data_dir}: vocab {len(vocab)}, " + ", ".join(f"{c.split} {len(c)}" for c in corpora))


def cmd_augment(cfg: RunConfig, args) -> None:
    vocab, data = load_data(cfg, ("train",))
    samples = augment_corpus(data["train"], vocab, cfg.augment_config(), epoch=args.epoch)
    path = augmented_path(cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_augmented(samples, vocab, path)
    cfg.write(path.parent, path.name + ".config")
    print(f"wrote {path}: {len(samples)} samples")


def run_training(cfg: RunConfig, out_dir: str | Path) -> dict[str, float]:
    """Train under ``cfg``, writing config, report and best checkpoint to ``out_dir``."""
    vocab, data = load_data(cfg)
    out_dir = Path(out_dir)
    cfg = replace(cfg, out_dir=str(out_dir))
    cfg.write(out_dir)
    augmented = None
    if cfg.objective != "ml" and cfg.augmented_path:
        augmented = load_augmented(cfg.augmented_path, vocab)
    model_cfg = cfg.model_config(len(vocab), len(vocab))
    params, report = train(data["train"], data["dev"], vocab, model_cfg, cfg.train_config(str(out_dir)), augmented)
    report.save(out_dir / "report.tsv")
    return {
        "best_epoch": report.best_epoch,
        "dev_greedy": report.best_dev_bleu,
        "test_greedy": evaluate(params, data["test"], "greedy", max_len=cfg.max_decode_len),
    }


def cmd_train(cfg: RunConfig, args) -> None:
    if not args.sweep:
        result = run_training(cfg, cfg.out_dir)
        print(f"best epoch {result['best_epoch']}  dev greedy {result['dev_greedy']:.2f}  "
              f"test greedy {result['test_greedy']:.2f}")
        return
    cfg.write(cfg.out_dir)
    _, data = load_data(cfg, ("test",))
    rows = []
    for label, kind, alpha in SWEEP:
        run_cfg = replace(cfg, objective=kind, alpha=alpha)
        run_cfg.validate()
        result = run_training(run_cfg, Path(cfg.out_dir) / label)
        params = M.load_checkpoint(Path(cfg.out_dir) / label / "best.ckpt")
        result["test_beam"] = evaluate(params, data["test"], "beam", cfg.beam, cfg.max_decode_len)
        rows.append([label] + [result[k] for k in SWEEP_COLUMNS[1:]])
        print(f"{label}: " + "  ".join(f"{k} {result[k]:.2f}" for k in SWEEP_COLUMNS[2:]))
    write_sweep(rows, Path(cfg.out_dir) / "sweep.tsv")


def write_sweep(rows, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for label, epoch, *scores in rows:
            w.writerow([label, epoch] + [f"{s:.2f}" for s in scores])


def cmd_eval(cfg: RunConfig, args) -> None:
    vocab, data = load_data(cfg, (args.split,))
    params = load_params(cfg, args.checkpoint, vocab)
    beam = args.beam if args.beam is not None else cfg.beam
    print(f"{evaluate(params, data[args.split], args.search, beam, cfg.max_decode_len):.2f}")


def cmd_verify(cfg: RunConfig, args) -> None:
    if not verify.run(args.suite, print):
        raise VerificationError(f"verify {args.suite}: one or more checks failed")


def weight_rows(cfg: RunConfig, params: M.Params, corpus: ParallelCorpus, vocab: Vocab,
                pair_ids: Sequence[int], epoch: int) -> list[tuple]:
    """(pair_id, e, reward, log_p, u, w) for fresh proposal draws on ``pair_ids``."""
    samples = augment_pairs(corpus, vocab, cfg.augment_config(), pair_ids, epoch)
    ctx_of = {pid: c for c, pid in enumerate(pair_ids)}
    src_index = [ctx_of[s.pair_id] for s in samples]
    log_p = M.forward(params, [corpus.pairs[i][0] for i in pair_ids], [s.y_tilde for s in samples],
                      src_index).seq_log_probs
    u = raw_log_weight(log_p, [s.reward for s in samples], [s.log_q0 for s in samples], cfg.objective_config())
    w = normalize_weights(u, src_index).weights
    return [(s.pair_id, s.e, s.reward, lp, ui, wi) for s, lp, ui, wi in zip(samples, log_p, u, w)]


def cmd_inspect_weights(cfg: RunConfig, args) -> None:
    if cfg.objective == "ml":
        raise ConfigError("inspect-weights needs objective=raml or objective=alpha_dimt")
    vocab, data = load_data(cfg, ("train",))
    corpus = data["train"]
    params = load_params(cfg, args.checkpoint, vocab, required=args.checkpoint is not None)
    ids = list(dict.fromkeys(args.pairs)) if args.pairs else list(range(min(cfg.batch_size, len(corpus))))
    bad = [i for i in ids if not 0 <= i < len(corpus)]
    if bad:
        raise DataError(f"pair ids out of range [0, {len(corpus)}): {bad}")
    out = open(args.output, "w", encoding="utf-8", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(out, delimiter="\t", lineterminator="\n")
        w.writerow(WEIGHT_COLUMNS)
        for pid, e, reward, lp, u, wt in weight_rows(cfg, params, corpus, vocab, ids, args.epoch):
            w.writerow([pid, e, repr(reward), f"{lp:.17g}", f"{u:.17g}", f"{wt:.17g}"])
    finally:
        if args.output:
            out.close()
    if args.output:
        cfg.write(Path(args.output).parent, Path(args.output).name + ".config")


# parser --------------------------------------------------------------------


def _pair_ids(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="alphadimt", description="alpha-divergence minimization training for sequence models")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="file of key=value lines")
        p.add_argument("overrides", nargs="*", metavar="key=value", help="config overrides")
        p.set_defaults(func=func)
        return p

    command("gen-data", cmd_gen_data, "write vocab and train/dev/test files to data_dir")
    p = command("augment", cmd_augment, "write proposal samples for the training split")
    p.add_argument("--epoch", type=int, default=0, help="sampling stream (default 0)")
    p = command("train", cmd_train, "train and write report.tsv and best.ckpt to out_dir")
    p.add_argument("--sweep", action="store_true", help="run ml, raml and alpha 0.3/0.5/0.7; write sweep.tsv")
    p = command("eval", cmd_eval, "print corpus BLEU of a checkpoint")
    p.add_argument("--checkpoint", help="default: out_dir/best.ckpt")
    p.add_argument("--search", choices=("greedy", "beam"), default="greedy")
    p.add_argument("--beam", type=int, help="beam width (default: config beam)")
    p.add_argument("--split", choices=SPLITS, default="test")
    p = command("inspect-weights", cmd_inspect_weights, "dump importance weights for a batch as TSV")
    p.add_argument("--checkpoint", help="default: out_dir/best.ckpt, else fresh parameters")
    p.add_argument("--pairs", type=_pair_ids, help="comma-separated training pair ids (default: first batch)")
    p.add_argument("--epoch", type=int, default=1, help="sampling stream (default 1)")
    p.add_argument("--output", help="write TSV here instead of stdout")
    p = sub.add_parser("verify", help="run property and oracle checks")
    p.add_argument("suite", choices=tuple(verify.SUITES) + ("all",))
    p.set_defaults(func=cmd_verify, config=None, overrides=[])
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"alphadimt: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = RunConfig.load(args.config, args.overrides)
        args.func(cfg, args)
    except ConfigError as exc:
        print(f"alphadimt: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"alphadimt: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except VerificationError as exc:
        print(f"alphadimt: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    return 0


if __name__ == "__main__":
    sys.exit(main())
