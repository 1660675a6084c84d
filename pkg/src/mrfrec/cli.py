"""Command-line interface.

Settings resolve as: command-line flag, then ``--config`` file key, then
built-in default. Config files are flat ``key = value`` text (``#``
comments allowed); keys are the long flag names with or without the
leading dashes (``k-neg`` and ``k_neg`` are equivalent).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import pickle
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .corpus import Corpus, CorpusFormatError, Entity, Modifier, assignment_value, read_corpus, split_corpus, write_corpus
from .energy import EnergyKind, HyperParams, load_checkpoint, save_model, write_embeddings
from .estimator import BaselineRecommender, MRFRecommender, make_recommender
from .graph import TaskKind, build_emkn, extract_bigraph, stats_rows, STATS_HEADER
from .metrics import format_report
from .synth import SynthConfig, generate

logger = logging.getLogger("mrfrec")

METHODS = ("weight", "log-weight", "tf-idf", "theta", "lfm", "trans", "naive_bayes", "logistic", "mlp", "random")


class CliError(Exception):
    """A failure reported as a one-line diagnostic with a nonzero exit status."""


@dataclass
class RunConfig:
    task: str = "sd"
    method: str = "theta"
    dim: int = 100
    gamma: float = -1.0
    eta: float = 0.01
    lam: float = 1e-4
    epochs: int = 30
    k_neg: int = 50
    seed: int = 0
    n_train: int | None = None
    corpus: str | None = None
    model: str | None = None
    out: str | None = None

    def validate(self):
        TaskKind.parse(self.task)
        for m in self.methods():
            if m not in METHODS:
                raise CliError(f"invalid config: unknown method {m!r}")
        try:
            HyperParams(dim=self.dim, gamma=self.gamma, eta=self.eta, lam=self.lam,
                        epochs=self.epochs, k_neg=self.k_neg, seed=self.seed)
        except ValueError as exc:
            raise CliError(f"invalid config: {exc}") from None
        if self.n_train is not None and self.n_train < 1:
            raise CliError("invalid config: n_train must be positive")
        return self

    def methods(self) -> list[str]:
        return [_canonical_method(m) for m in str(self.method).split(",") if m.strip()]

    def hyperparams(self) -> HyperParams:
        return HyperParams(dim=self.dim, gamma=self.gamma, eta=self.eta, lam=self.lam,
                           epochs=self.epochs, k_neg=self.k_neg, seed=self.seed)

    def provenance(self) -> dict:
        """The config as recorded next to outputs (output paths excluded)."""
        d = asdict(self)
        d.pop("out")
        return d


def _canonical_method(m: str) -> str:
    m = m.strip().lower()
    aliases = {"logweight": "log-weight", "log_weight": "log-weight", "tfidf": "tf-idf", "tf_idf": "tf-idf",
               "naive-bayes": "naive_bayes", "nb": "naive_bayes", "lr": "logistic", "nn": "mlp"}
    return aliases.get(m, m)


_CONFIG_KEYS = {f.name: f for f in fields(RunConfig)}
_FLAG_TO_FIELD = {"lambda": "lam", "k_neg": "k_neg", "n_train": "n_train"}


def read_config_file(path) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise CliError(f"file not found: {path}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"invalid config: {path}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _coerce(name: str, raw):
    if raw is None:
        return None
    typ = {"dim": int, "epochs": int, "k_neg": int, "seed": int, "n_train": int,
           "gamma": float, "eta": float, "lam": float}.get(name, str)
    try:
        return typ(raw)
    except ValueError:
        raise CliError(f"invalid config: {name}={raw!r} is not a valid {typ.__name__}") from None


def resolve_config(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    values = {}
    for key, raw in file_values.items():
        name = _FLAG_TO_FIELD.get(key, key)
        if name not in _CONFIG_KEYS:
            raise CliError(f"invalid config: unknown key {key!r}")
        values[name] = _coerce(name, raw)
    for name in _CONFIG_KEYS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise CliError(f"invalid config: {exc}") from None
    return cfg.validate()


# -- helpers -----------------------------------------------------------------------


def _load_corpus(path) -> Corpus:
    if path is None:
        raise CliError("missing --corpus")
    try:
        return read_corpus(path)
    except FileNotFoundError:
        raise CliError(f"file not found: {path}") from None
    except CorpusFormatError as exc:
        raise CliError(f"corpus format error in {path}: {exc}") from None


def _split(cfg: RunConfig, corpus: Corpus) -> tuple[Corpus, Corpus | None]:
    if cfg.n_train is None:
        return corpus, None
    try:
        return split_corpus(corpus, cfg.seed, cfg.n_train)
    except ValueError as exc:
        raise CliError(f"invalid config: {exc}") from None


def _default_split(cfg: RunConfig, corpus: Corpus) -> tuple[Corpus, Corpus]:
    n_train = cfg.n_train if cfg.n_train is not None else round(len(corpus) * 700 / 992)
    try:
        return split_corpus(corpus, cfg.seed, n_train)
    except ValueError as exc:
        raise CliError(f"invalid config: {exc}") from None


def _write_provenance(out_path, cfg: RunConfig, extra: dict | None = None) -> None:
    d = {"run_config": cfg.provenance()}
    if extra:
        d.update(extra)
    Path(f"{out_path}.runconfig.json").write_text(json.dumps(d, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _open_out(path):
    return open(path, "w", encoding="utf-8", newline="") if path else _NoClose(sys.stdout)


class _NoClose:
    def __init__(self, stream):
        self.stream = stream

    def __enter__(self):
        return self.stream

    def __exit__(self, *exc):
        self.stream.flush()


def _load_any_model(path):
    """Return (recommender, checkpoint dict or None)."""
    if path is None:
        raise CliError("missing --model")
    p = Path(path)
    if not p.exists():
        raise CliError(f"file not found: {path}")
    if p.suffix == ".pkl":
        with open(p, "rb") as fh:
            blob = pickle.load(fh)
        return blob["estimator"], blob
    try:
        model, d = load_checkpoint(p)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(f"invalid checkpoint {path}: {exc}") from None
    hyper = HyperParams.from_dict(d["hyperparams"]) if d.get("hyperparams") else None
    return MRFRecommender.from_model(model, hyper), d


def _resolve_entity(name: str, vocab) -> Entity:
    if "|" in name:
        ent_name, kind = name.rsplit("|", 1)
        matches = [e for e in vocab if e.name == ent_name and e.kind.value == kind]
    else:
        matches = [e for e in vocab if e.name == name]
    if not matches:
        raise CliError(f"vocabulary mismatch: unknown entity {name!r}")
    if len(matches) > 1:
        raise CliError(f"ambiguous entity {name!r}; qualify it as name|kind")
    return matches[0]


def parse_query(line: str, vocab) -> dict:
    """``entity=value`` pairs, comma separated; a value may be a number or a modifier word."""
    out = {}
    for part in line.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, raw = part.partition("=")
        raw = raw.strip() or "1"
        try:
            value = float(raw)
        except ValueError:
            value = assignment_value(Modifier.parse(raw))
        if not -1.0 <= value <= 1.0:
            raise CliError(f"query value out of [-1, 1]: {part!r}")
        out[_resolve_entity(name.strip(), vocab)] = value
    return out


# -- subcommands --------------------------------------------------------------------


def cmd_build_graph(args):
    cfg = resolve_config(args)
    corpus = _load_corpus(cfg.corpus)
    train, _ = _split(cfg, corpus)
    b = extract_bigraph(build_emkn(train), TaskKind.parse(cfg.task))
    with _open_out(cfg.out) as fh:
        b.write_edge_list(fh)
    if cfg.out:
        _write_provenance(cfg.out, cfg)
    err = sys.stderr if cfg.out is None else sys.stdout
    _print_stats([b], err)
    return 0


def _print_stats(bigraphs, stream):
    stream.write("\t".join(STATS_HEADER) + "\n")
    for b in bigraphs:
        for row in stats_rows(b):
            stream.write("\t".join(row) + "\n")


def cmd_stats(args):
    cfg = resolve_config(args)
    corpus = _load_corpus(cfg.corpus)
    train, _ = _split(cfg, corpus)
    g = build_emkn(train)
    tasks = [TaskKind.parse(args.task)] if args.task else list(TaskKind)
    with _open_out(cfg.out) as fh:
        _print_stats([extract_bigraph(g, t) for t in tasks], fh)
    if cfg.out:
        _write_provenance(cfg.out, cfg)
    return 0


def cmd_train(args):
    cfg = resolve_config(args)
    if not cfg.out:
        raise CliError("missing --out")
    methods = cfg.methods()
    if len(methods) != 1 or methods[0] == "random":
        raise CliError("train needs exactly one --method (not random)")
    method = methods[0]
    corpus = _load_corpus(cfg.corpus)
    train, _ = _split(cfg, corpus)
    est = make_recommender(method, cfg.task, **_est_params(cfg))
    est.fit(train)
    if isinstance(est, BaselineRecommender):
        with open(cfg.out, "wb") as fh:
            pickle.dump({"estimator": est, "run_config": cfg.provenance()}, fh)
    else:
        save_model(est.model_, cfg.out, cfg.hyperparams(), cfg.provenance())
        loss_path = args.loss or f"{cfg.out}.loss.csv"
        with open(loss_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "objective"])
            for k, v in enumerate(est.report_.trace, start=1):
                w.writerow([k, repr(v)])
    logger.info("trained %s on %d records (%s)", method, len(train), est.fit_summary_)
    return 0


def _est_params(cfg: RunConfig) -> dict:
    return dict(dim=cfg.dim, gamma=cfg.gamma, eta=cfg.eta, lam=cfg.lam, epochs=cfg.epochs,
                k_neg=cfg.k_neg, seed=cfg.seed)


def cmd_evaluate(args):
    cfg = resolve_config(args)
    corpus = _load_corpus(cfg.corpus)
    reports = []
    filtering = {}
    if cfg.model:
        est, blob = _load_any_model(cfg.model)
        if args.task and TaskKind.parse(args.task) != est.graph_.task:
            raise CliError(f"task mismatch: checkpoint is {est.graph_.task.value}, --task is {args.task}")
        stored = (blob or {}).get("run_config") or {}
        if stored.get("n_train") and stored.get("corpus") and cfg.n_train is None:
            # evaluate on the held-out part of the split the model was trained with
            cfg.n_train, cfg.seed = stored["n_train"], stored["seed"]
        test = _split(cfg, corpus)[1] if cfg.n_train is not None else corpus
        instances, summary = est.prepare_test(test)
        if not instances:
            raise CliError(f"vocabulary mismatch: no test record of {cfg.corpus} survives filtering against the model ({summary})")
        name = str(getattr(est, "energy", None) or getattr(est, "method", "model"))
        logger.info("%s: %s", name, summary)
        filtering[name] = asdict(summary)
        reports.append((name, est.evaluate(instances)))
    else:
        train, test = _default_split(cfg, corpus)
        for method in cfg.methods():
            est = make_recommender(method, cfg.task, **_est_params(cfg)).fit(train)
            instances, summary = est.prepare_test(test)
            if not instances:
                raise CliError(f"no test instances left after filtering ({summary})")
            logger.info("%s: %s", method, summary)
            filtering[method] = asdict(summary)
            reports.append((method, est.evaluate(instances)))
    text = format_report(reports)
    with _open_out(cfg.out) as fh:
        fh.write(text)
    if cfg.out:
        _write_provenance(cfg.out, cfg, {"filtering": filtering})
    return 0


def cmd_rank(args):
    cfg = resolve_config(args)
    est, _ = _load_any_model(cfg.model)
    if not args.queries:
        raise CliError("missing --queries")
    try:
        lines = Path(args.queries).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise CliError(f"file not found: {args.queries}") from None
    vocab = est.graph_.x_part
    with _open_out(cfg.out) as fh:
        first = True
        for line in lines:
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            result = est.rank(parse_query(line, vocab))
            if not first:
                fh.write("\n")
            first = False
            fh.write(f"# {line.strip()}\n")
            for k, (e, p) in enumerate(result.top(args.n), start=1):
                fh.write(f"{k}\t{e.name}\t{p:.6f}\n")
    if cfg.out:
        _write_provenance(cfg.out, cfg)
    return 0


def _embedding_model(cfg):
    est, _ = _load_any_model(cfg.model)
    model = getattr(est, "model_", None)
    if model is None or not model.kind.embedded:
        raise CliError("the model has no entity embeddings (use an lfm or trans checkpoint)")
    return est, model


def cmd_neighbors(args):
    cfg = resolve_config(args)
    est, model = _embedding_model(cfg)
    entity = _resolve_entity(args.entity, model.graph.y_part + model.graph.x_part)
    with _open_out(cfg.out) as fh:
        for k, (e, sim) in enumerate(model.nearest_neighbors(entity, args.n), start=1):
            fh.write(f"{k}\t{e.name}\t{e.kind.value}\t{sim:.6f}\n")
    if cfg.out:
        _write_provenance(cfg.out, cfg)
    return 0


def cmd_export_embeddings(args):
    cfg = resolve_config(args)
    _, model = _embedding_model(cfg)
    with _open_out(cfg.out) as fh:
        write_embeddings(model, fh)
    if cfg.out:
        _write_provenance(cfg.out, cfg)
    return 0


def cmd_synth_gen(args):
    values = read_config_file(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = str(args.seed)
    try:
        scfg = SynthConfig.from_mapping(values)
        corpus, truth = generate(scfg)
    except ValueError as exc:
        raise CliError(f"invalid config: {exc}") from None
    if not args.out:
        raise CliError("missing --out")
    with open(args.out, "w", encoding="utf-8") as fh:
        write_corpus(corpus, fh)
    truth_path = args.truth or f"{args.out}.truth.tsv"
    with open(truth_path, "w", encoding="utf-8") as fh:
        truth.write(fh)
    Path(f"{args.out}.runconfig.json").write_text(
        json.dumps({"synth_config": {k: v for k, v in values.items()}}, sort_keys=True, indent=1) + "\n",
        encoding="utf-8",
    )
    return 0


# -- parser ------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, *, model=False, training=True):
    p.add_argument("--config", help="flat key = value file; flags override its keys")
    p.add_argument("--task", type=str.lower, choices=[t.value for t in TaskKind],
                   help="sd (symptom/test result -> disease), dtr (disease -> treatment), st (symptom -> test)")
    p.add_argument("--corpus", help="record file (one record per line)")
    p.add_argument("--out", help="output path (stdout when omitted, where allowed)")
    p.add_argument("--seed", type=int, help="seed for split, init and sampling (default 0)")
    p.add_argument("--n-train", dest="n_train", type=int, help="records in the training split")
    if model:
        p.add_argument("--model", help="checkpoint written by `train`")
    if training:
        p.add_argument("--method", help=f"one of {', '.join(METHODS)} (comma list allowed for evaluate)")
        p.add_argument("--dim", type=int, help="embedding dimension (default 100)")
        p.add_argument("--gamma", type=float, help="Trans bias (default -1)")
        p.add_argument("--eta", type=float, help="SGD learning rate (default 0.01)")
        p.add_argument("--lambda", dest="lam", type=float, help="per-instance L2 coefficient (default 1e-4)")
        p.add_argument("--epochs", type=int, help="training epochs (default 30)")
        p.add_argument("--k-neg", dest="k_neg", type=int, help="neighbour-list size for negative sampling (default 50)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrfrec",
        description="Co-occurrence MRF recommender for tests, diagnoses and treatments.",
        epilog="Precedence: command-line flags > --config file keys > defaults.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="write the task bigraph edge list and its degree statistics")
    _add_common(p, training=False)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("stats", help="node counts and degree mean/median per bigraph part")
    _add_common(p, training=False)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="fit a method and write a checkpoint plus an epoch,objective CSV")
    _add_common(p)
    p.add_argument("--loss", help="objective trace path (default OUT.loss.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="MP@R, MAP, MR@10 and R@10 fractions on held-out records")
    _add_common(p, model=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rank", help="rank Y candidates for each query line (entity=value,...)")
    _add_common(p, model=True, training=False)
    p.add_argument("--queries", help="file with one query per line")
    p.add_argument("-n", "--n", type=int, default=10, help="results per query (default 10)")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("neighbors", help="nearest entities by embedding cosine similarity")
    _add_common(p, model=True, training=False)
    p.add_argument("--entity", required=True, help="entity name (name|kind if ambiguous)")
    p.add_argument("-n", "--n", type=int, default=10)
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("export-embeddings", help="write name<TAB>kind<TAB>v1,...,vd per entity")
    _add_common(p, model=True, training=False)
    p.set_defaults(func=cmd_export_embeddings)

    p = sub.add_parser("synth-gen", help="generate a synthetic record file and its planted ground truth")
    p.add_argument("--config", help="key = value generator settings (layout, n_records, noise, seed, ...)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="record file to write")
    p.add_argument("--truth", help="ground-truth path (default OUT.truth.tsv)")
    p.set_defaults(func=cmd_synth_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
