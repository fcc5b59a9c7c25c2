"""``reflectkg`` command line: infer, forge, eval, trace."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .bench import DatasetError, load_dataset, run_eval
from .engine import BeamConfig, NoAnswerError, answer_question, dumps_trace, trace_to_dot, tree_to_trace
from .forge import Forge, forge_corpus, write_corpus
from .gateway import API_KEY_ENV, CompletionGateway, MockGateway, TransportError
from .kg import GraphError, load_graph, node_key
from .retrieval import LexicalProvider, StaticEmbeddingProvider
from .scoring import ScoreConfig

EXIT_OK, EXIT_NO_ANSWER, EXIT_CONFIG, EXIT_DATA, EXIT_TRANSPORT = 0, 1, 2, 3, 4

log = logging.getLogger("reflectkg")

# Flag defaults; a --config JSON file overrides these and explicit flags override both.
DEFAULTS = {
    "beam_width": 3,
    "max_depth": 2,
    "top_k": 5,
    "k1": 1.0,
    "k2": 0.5,
    "mode": "beam",
    "utility_mode": "as_written",
    "aggregate": "sum",
    "n_hypotheses": 3,
    "no_hypotheses": False,
    "max_path_depth": 4,
    "workers": 1,
}


class ConfigError(ValueError):
    pass


def _graph_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kg", required=True, help="triple file (subject<TAB>relation<TAB>object)")
    p.add_argument("--names", help="entity label file (id<TAB>label)")


def _backend_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--mock-script", help="JSON rule table for the scripted mock model")
    g.add_argument("--model-endpoint", help=f"completion endpoint URL; key read from ${API_KEY_ENV}")
    p.add_argument("--embeddings", help="JSON table of precomputed embedding vectors")
    p.add_argument("--config", help="JSON file with default values for any flag")
    p.add_argument("--workers", type=int, default=None)


def _search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beam-width", type=int, default=None)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--k1", type=float, default=None)
    p.add_argument("--k2", type=float, default=None)
    p.add_argument("--mode", choices=["beam", "exhausted"], default=None)
    p.add_argument("--utility-mode", choices=["as_written", "expected_value"], default=None)
    p.add_argument("--aggregate", choices=["sum", "mean", "product"], default=None)
    p.add_argument("--n-hypotheses", type=int, default=None)
    p.add_argument("--no-hypotheses", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reflectkg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="answer one question")
    _graph_flags(p)
    p.add_argument("--question", required=True)
    p.add_argument("--topic", action="append", required=True, help="topic entity id (repeatable)")
    _search_flags(p)
    _backend_flags(p)
    p.add_argument("--trace-out", help="write the reasoning tree(s) as JSON here")

    p = sub.add_parser("forge", help="build an annotated training corpus")
    _graph_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--max-path-depth", type=int, default=None)
    _backend_flags(p)

    p = sub.add_parser("eval", help="evaluate on a question dataset")
    _graph_flags(p)
    p.add_argument("--dataset", required=True)
    _search_flags(p)
    _backend_flags(p)
    p.add_argument("--report-out", help="write the metrics report JSON here (default: stdout)")

    p = sub.add_parser("trace", help="convert an exported trace to Graphviz dot")
    p.add_argument("--in", dest="trace_in", required=True)
    p.add_argument("--dot-out", required=True)
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        opts.update(data)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    return opts


def beam_config(opts: dict) -> BeamConfig:
    try:
        return BeamConfig(
            beam_width=opts["beam_width"], max_depth=opts["max_depth"], top_k=opts["top_k"],
            scores=ScoreConfig(k1=opts["k1"], k2=opts["k2"], utility_mode=opts["utility_mode"],
                               aggregate=opts["aggregate"]),
            mode=opts["mode"], n_hypotheses=opts["n_hypotheses"],
            use_hypotheses=not opts["no_hypotheses"], workers=opts["workers"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def make_backend(args: argparse.Namespace, graph):
    if args.mock_script:
        try:
            return MockGateway.from_file(args.mock_script)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad mock script {args.mock_script}: {exc}") from None
    return CompletionGateway(args.model_endpoint, graph=graph)


def make_provider(args: argparse.Namespace):
    if args.embeddings:
        try:
            return StaticEmbeddingProvider.from_file(args.embeddings)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad embeddings file {args.embeddings}: {exc}") from None
    return LexicalProvider()


def _load_graph(args):
    return load_graph(args.kg, args.names)


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")


def cmd_infer(args) -> int:
    opts = resolve_options(args)
    cfg = beam_config(opts)
    graph = _load_graph(args)
    gateway, provider = make_backend(args, graph), make_provider(args)
    try:
        trees, ranked = answer_question(args.question, args.topic, graph, cfg, gateway, provider)
        status = EXIT_OK
    except NoAnswerError as exc:
        log.error("%s", exc)
        trees, ranked, status = exc.trees, [], EXIT_NO_ANSWER
    if args.trace_out and trees:
        _write(args.trace_out, dumps_trace([tree_to_trace(t, graph) for t in trees]))
    failures = [t.failure for t in trees if t.failure]
    if failures:
        log.error("backend failure: %s", failures[0])
        return EXIT_TRANSPORT
    out = {"question": args.question, "answers": [
        {"answers": [node_key(a) for a in r.answers], "labels": [graph.label(a) for a in r.answers],
         "score": r.score, "depth_forced": r.depth_forced} for r in ranked]}
    _write(None, json.dumps(out, indent=2, ensure_ascii=False))
    return status


def cmd_forge(args) -> int:
    opts = resolve_options(args)
    if opts["top_k"] < 1 or opts["max_path_depth"] < 0:
        raise ConfigError("top-k must be >= 1 and max-path-depth >= 0")
    graph = _load_graph(args)
    dataset = load_dataset(args.dataset)
    forge = Forge(graph, make_backend(args, graph), opts["top_k"], opts["max_path_depth"], make_provider(args))
    samples, report = forge_corpus(forge, dataset, workers=opts["workers"])
    manifest = write_corpus(samples, args.out, {"top_k": opts["top_k"], "max_path_depth": opts["max_path_depth"],
                                                "dataset": os.path.basename(args.dataset)}, report)
    log.info("wrote %d samples (%d report entries); manifest %s", len(samples), len(report.entries), manifest)
    if any(e["reason"].startswith("critic failure") for e in report.entries):
        return EXIT_TRANSPORT
    return EXIT_OK


def cmd_eval(args) -> int:
    opts = resolve_options(args)
    cfg = beam_config(opts)
    graph = _load_graph(args)
    dataset = load_dataset(args.dataset)
    report = run_eval(dataset, graph, cfg, make_backend(args, graph), make_provider(args), workers=opts["workers"])
    _write(args.report_out, report.dumps())
    log.info("hit@1=%.4f f1=%.4f over %d questions", report.hit_at_1, report.f1, len(report.rows))
    if any((r["error"] or "").startswith("TransportError") for r in report.rows):
        return EXIT_TRANSPORT
    return EXIT_OK


def cmd_trace(args) -> int:
    with open(args.trace_in, encoding="utf-8") as fh:
        trace = json.load(fh)
    _write(args.dot_out, trace_to_dot(trace))
    return EXIT_OK


COMMANDS = {"infer": cmd_infer, "forge": cmd_forge, "eval": cmd_eval, "trace": cmd_trace}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    except (GraphError, DatasetError, OSError, json.JSONDecodeError) as exc:
        log.error("data: %s", exc)
        return EXIT_DATA
    except TransportError as exc:
        log.error("transport: %s", exc)
        return EXIT_TRANSPORT
    except ValueError as exc:
        log.error("data: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
