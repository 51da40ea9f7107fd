"""
Command line interface: extract, train, train-mlp, build-kb, embed, detect and evaluate.
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from . import constants
from . import embed_mlp
from . import evaluation
from . import flow
from . import gbdt
from . import knowledge_base
from . import pipeline
from .client import LLMClient, ModelRef
from .config import RunConfig
from .exceptions import ConfigurationError, DdosRagError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _read_flows(filename, column_map=None, require_label=True):
    """
    Reads (FlowFeatures, label) records from a features file (.jsonl) or a CSV.
    """
    if filename.endswith(".jsonl"):
        records, rows = flow.read_features(filename)
        if require_label and any(x[1] is None for x in records):
            raise ConfigurationError("Features file '%s' has unlabeled records." % filename)
        return records, rows, []

    result = flow.ingest_csv(filename, column_map, require_label=require_label)
    return result.records, result.rows, result.errors


def _column_map_arg(value):
    if value is None or not value.endswith(".json"):
        return value

    with open(value, "r") as infile:
        return json.load(infile)


### Commands


def cmd_extract(args):
    result = flow.ingest_csv(args.input, _column_map_arg(args.column_map), require_label=not args.unlabeled)
    if len(result) == 0:
        raise ConfigurationError("extract: '%s' yielded no records." % args.input)

    flow.write_features(args.out, result.records, result.rows)
    s = flow.fit_standardizer([x[0] for x in result.records])
    s.save(args.standardizer_out)

    print("rows: %d accepted, %d rejected" % (len(result), len(result.errors)))
    for num, msg in result.errors:
        print("row %d: %s" % (num, msg))
    return EXIT_OK


def _standardized(records, s):
    return [(s.apply(x), label) for x, label in records]


def cmd_train(args):
    records, _, _ = _read_flows(args.features)
    s = flow.Standardizer.load(args.standardizer)

    params = {
        "max_depth": args.max_depth,
        "learning_rate": args.learning_rate,
        "rounds": args.rounds,
        "gamma": args.gamma,
        "lambda": args.reg_lambda,
        "min_child_weight": args.min_child_weight
    }
    model = gbdt.train(_standardized(records, s), params)
    model.save(args.out)
    print("trained %d rounds on %d flows, final loss %.6f" % (model.rounds, len(records), model.train_loss[-1]))
    return EXIT_OK


def cmd_train_mlp(args):
    records, _, _ = _read_flows(args.features)
    s = flow.Standardizer.load(args.standardizer)

    config = {
        "h1": args.h1,
        "epochs_max": args.epochs,
        "lr": args.lr,
        "label_smoothing": args.label_smoothing,
        "patience": args.patience,
        "validation_fraction": args.validation_fraction,
        "batch_size": args.batch_size,
        "seed": args.seed
    }
    model = embed_mlp.train_mlp(_standardized(records, s), config)
    model.save(args.out)
    print("trained MLP %s, best validation loss %.6f at epoch %d" %
          (model.dims, model.config["best_validation_loss"], model.config["best_epoch"]))
    return EXIT_OK


def cmd_build_kb(args):
    records, _, _ = _read_flows(args.features)
    s = flow.Standardizer.load(args.standardizer)
    model = gbdt.GbdtModel.load(args.model) if args.model else None
    mlp = embed_mlp.MlpModel.load(args.mlp) if args.mlp else None

    teacher = None
    if args.teacher_kind:
        ref = ModelRef.from_json({
            "kind": args.teacher_kind,
            "name": args.teacher_name or "rule-oracle",
            "endpoint": args.endpoint
        })
        teacher = LLMClient(ref, args.payload_threshold, args.rate_threshold)

    try:
        kb = knowledge_base.build_kb(records, s, model, teacher, mlp)
    finally:
        if teacher is not None:
            teacher.close()
    if args.embeddings:
        kb = knowledge_base.import_embeddings(kb, args.embeddings)
    knowledge_base.save_kb(kb, args.out)

    print("knowledge base: %d exemplars, spaces %s, teacher failures %d" %
          (len(kb), ",".join(kb.spaces), kb.metadata.get("teacher_failures", 0)))
    return EXIT_OK


def cmd_embed(args):
    records, _, _ = _read_flows(args.features, require_label=False)
    s = flow.Standardizer.load(args.standardizer)
    X = np.vstack([s.apply(x) for x, _ in records])

    if args.space == "signature":
        if not args.model:
            raise ConfigurationError("embed: the signature space requires --model.")
        vectors = gbdt.GbdtModel.load(args.model).predict_proba(X)
    elif args.space == "custom":
        if not args.mlp:
            raise ConfigurationError("embed: the custom space requires --mlp.")
        vectors = embed_mlp.MlpModel.load(args.mlp).embed(X)
    else:
        vectors = X

    knowledge_base.write_embeddings(args.out, vectors)
    print("wrote %d %d-d embeddings" % vectors.shape)
    return EXIT_OK


def _overrides(args):
    return {
        "seed": getattr(args, "seed", None),
        "per_class": getattr(args, "per_class", None),
        "endpoint": args.endpoint,
        "model_name": args.model_name,
        "retries": args.retries,
        "timeout_ms": args.timeout_ms,
        "max_in_flight": args.max_in_flight
    }


def cmd_detect(args):
    cfg = RunConfig.load(args.config, _overrides(args))
    detectors = cfg.detector_configs()
    if args.entry:
        detectors = [x for x in detectors if x.name == args.entry]
        if len(detectors) == 0:
            raise ConfigurationError("detect: grid entry '%s' not found." % args.entry)
    detector = detectors[0]

    records, rows, errors = _read_flows(args.flows, cfg.column_map, require_label=False)
    results = pipeline.detect_batch(detector, [x[0] for x in records], rows)
    pipeline.write_report(args.out, results, args.emit_prompts)

    failed = [x for x in results if x.transport_status != "OK"]
    parse_failures = sum(1 for x in results if x.transport_status == "OK" and x.parse_failed)
    print("%s: %d flows, %d parse failures, %d failed calls, %d rejected rows" %
          (detector.name, len(results), parse_failures, len(failed), len(errors)))
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_evaluate(args):
    cfg = RunConfig.load(args.config, _overrides(args))
    records, _, errors = _read_flows(args.data, cfg.column_map, require_label=True)
    if errors:
        logger.warning("evaluate: %d rows of %s rejected", len(errors), args.data)

    reports = evaluation.run_experiment(cfg.detector_configs(), records, cfg.per_class, cfg.seed)
    evaluation.write_tables(reports, args.out_dir)

    print(evaluation.results_table(reports, "f1").to_string(float_format=lambda x: "%.2f" % x))
    if any(x.failed or x.transport_failures for x in reports):
        return EXIT_FAILURE
    return EXIT_OK


### Parser


def _add_model_overrides(parser):
    group = parser.add_argument_group("model overrides")
    group.add_argument("--endpoint", help="Generation server URL.")
    group.add_argument("--model-name", help="Model name sent to the server.")
    group.add_argument("--retries", type=int)
    group.add_argument("--timeout-ms", type=int)
    group.add_argument("--max-in-flight", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="ddos-rag", description="Retrieval-augmented DDoS flow classification.")
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level.")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Log warnings and errors only.")

    sub = parser.add_subparsers(dest="command")
    sub.required = True

    p = sub.add_parser("extract", help="Ingest a flow CSV into a features file and fit a standardizer.")
    p.add_argument("--input", required=True)
    p.add_argument("--column-map", help="Packaged column map name or a JSON file.")
    p.add_argument("--unlabeled", action="store_true", help="The CSV has no label column.")
    p.add_argument("--out", required=True, help="Features file (.jsonl).")
    p.add_argument("--standardizer-out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="Train the gradient-boosted signature model.")
    p.add_argument("--features", required=True)
    p.add_argument("--standardizer", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-depth", type=int, default=gbdt.default_params["max_depth"])
    p.add_argument("--learning-rate", type=float, default=gbdt.default_params["learning_rate"])
    p.add_argument("--rounds", type=int, default=gbdt.default_params["rounds"])
    p.add_argument("--gamma", type=float, default=gbdt.default_params["gamma"])
    p.add_argument("--lambda", dest="reg_lambda", type=float, default=gbdt.default_params["lambda"])
    p.add_argument("--min-child-weight", type=float, default=gbdt.default_params["min_child_weight"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-mlp", help="Train the MLP embedder.")
    p.add_argument("--features", required=True)
    p.add_argument("--standardizer", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--h1", type=int, default=embed_mlp.default_config["h1"])
    p.add_argument("--epochs", type=int, default=embed_mlp.default_config["epochs_max"])
    p.add_argument("--lr", type=float, default=embed_mlp.default_config["lr"])
    p.add_argument("--label-smoothing", type=float, default=embed_mlp.default_config["label_smoothing"])
    p.add_argument("--patience", type=int, default=embed_mlp.default_config["patience"])
    p.add_argument("--validation-fraction", type=float, default=embed_mlp.default_config["validation_fraction"])
    p.add_argument("--batch-size", type=int, default=embed_mlp.default_config["batch_size"])
    p.add_argument("--seed", type=int, default=embed_mlp.default_config["seed"])
    p.set_defaults(func=cmd_train_mlp)

    p = sub.add_parser("build-kb", help="Build the exemplar knowledge base.")
    p.add_argument("--features", required=True)
    p.add_argument("--standardizer", required=True)
    p.add_argument("--model", help="GBDT model file; fills signatures.")
    p.add_argument("--mlp", help="MLP model file; fills the custom space.")
    p.add_argument("--embeddings", help="No-header CSV imported as the custom space.")
    p.add_argument("--teacher-kind", choices=["REMOTE", "RULE_ORACLE"])
    p.add_argument("--teacher-name")
    p.add_argument("--endpoint")
    p.add_argument("--payload-threshold", type=float, default=constants.PAYLOAD_THRESHOLD,
                   help="Benign gate payload length stated to the teacher.")
    p.add_argument("--rate-threshold", type=float, default=constants.RATE_THRESHOLD,
                   help="Benign gate packet rate stated to the teacher.")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_kb)

    p = sub.add_parser("embed", help="Export flow embeddings as a no-header CSV.")
    p.add_argument("--features", required=True)
    p.add_argument("--standardizer", required=True)
    p.add_argument("--space", choices=["feature", "signature", "custom"], default="feature")
    p.add_argument("--model")
    p.add_argument("--mlp")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("detect", help="Classify flows with one configured detector.")
    p.add_argument("--config", required=True)
    p.add_argument("--flows", required=True, help="Flow CSV or features file (.jsonl).")
    p.add_argument("--entry", help="Grid entry name, the first entry by default.")
    p.add_argument("--out", required=True)
    p.add_argument("--emit-prompts", action="store_true")
    _add_model_overrides(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="Run the configured grid on a stratified sample.")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="Labeled flow CSV or features file (.jsonl).")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--per-class", type=int)
    _add_model_overrides(p)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(stream=sys.stderr, level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s")

    try:
        return args.func(args)
    except ConfigurationError as exc:
        logger.error(str(exc))
        return EXIT_CONFIG
    except (DdosRagError, OSError, ValueError, KeyError) as exc:
        logger.error(str(exc))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
