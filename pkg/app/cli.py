"""
Línea de comandos del banco de pruebas.

Verbos: generate, train, evaluate, gradcheck, experiment y serve. Código de
salida 0 si todo va bien, 1 ante errores de validación o compatibilidad y 2
ante fallos en ejecución.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from app.core.config import settings
from app.core.exceptions import ConfigurationError, WorkbenchError
from app.core.logging import LogManager
from app.schemas.config import EvaluationOptions, ExperimentConfig, Variant, load_config
from app.schemas.report import ReportRow
from app.services.corpus_store import MANIFEST, load_corpus, prepare_output_dir, write_corpus
from app.services.evaluation import (
    QUALITY_FILE,
    REPORT_FILE,
    evaluate_checkpoint,
    evaluate_params,
    trend_summary,
    write_quality,
    write_report,
)
from app.services.gradcheck import DEFAULT_TOLERANCE, run_gradcheck_suite
from app.services.synthetic_scenes import generate_corpus
from app.services.trainer import fit

logger = LogManager.get_logger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_FAILURE = 0, 1, 2
TREND_FILE = "trend.json"


class WorkbenchArgumentParser(argparse.ArgumentParser):
    """Los errores de uso salen con código 1"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _resolve_variant(name: Optional[str], config: ExperimentConfig) -> Variant:
    return Variant.parse(name) if name else config.variants[0]


def cmd_generate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out_dir = Path(args.out) if args.out else config.corpus_path()
    corpus = generate_corpus(config.corpus)
    manifest = write_corpus(corpus, out_dir, config.config_hash(), force=args.force)
    print(f"Corpus escrito en {out_dir} ({manifest.num_scenes} escenas, semilla {manifest.seed})")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    variant = _resolve_variant(args.variant, config)
    out_dir = prepare_output_dir(args.out, force=args.force)
    corpus = load_corpus(args.corpus or config.corpus_path())
    train_config = config.train if args.seed is None else config.train.model_copy(update={"seed": args.seed})

    result = fit(
        corpus,
        config.build_model_config(variant, len(corpus.caption_vocab)),
        train_config,
        out_dir,
        config.config_hash(),
        config.train_split,
        config.val_split,
    )
    print(
        f"Mejor {train_config.validation_metric} = {result.best_metric:.4f} en la época {result.best_epoch}; "
        f"checkpoint: {result.checkpoint_path}"
    )
    return EXIT_OK


def _evaluation_options(args: argparse.Namespace, base: EvaluationOptions) -> EvaluationOptions:
    update = {}
    if args.beam is not None:
        update["beam_width"] = args.beam
    if args.gold_graphs is not None:
        update["gold_graphs"] = args.gold_graphs
    if args.buckets is not None:
        update["buckets"] = args.buckets
    if args.recall_k is not None:
        update["recall_k"] = args.recall_k
    return EvaluationOptions.model_validate({**base.model_dump(), **update})


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else None
    if args.corpus is None and config is None:
        raise ConfigurationError("evaluate necesita --corpus o --config")
    corpus = load_corpus(args.corpus or config.corpus_path())
    options = _evaluation_options(args, config.evaluation if config else EvaluationOptions())
    split = args.split or (config.eval_split if config else "test")

    result = evaluate_checkpoint(args.checkpoint, corpus, options, split)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report(result.rows, out_dir / REPORT_FILE)
    write_quality(result.quality, out_dir / QUALITY_FILE)
    print(f"Informe escrito en {out_dir / REPORT_FILE} ({len(result.rows)} filas)")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    reports = run_gradcheck_suite(args.tolerance, args.case or None)
    for report in reports:
        status = "OK" if report.passed else "FALLO"
        print(f"{status:5} {report.name:24} max_error={report.max_error:.3e}")
        for entry in report.failures():
            print(f"      {entry.parameter}: {entry.relative_error:.3e}")
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print(f"{len(failed)} casos fallidos: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"{len(reports)} casos superados (tolerancia {args.tolerance:g})")
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out_dir = prepare_output_dir(args.out, force=args.force)
    config_hash = config.config_hash()
    corpus_dir = config.corpus_path()
    if not (corpus_dir / MANIFEST).exists():
        write_corpus(generate_corpus(config.corpus), corpus_dir, config_hash)
        LogManager.log_info("Corpus generado para el experimento", extra={"corpus_dir": str(corpus_dir)})
    corpus = load_corpus(corpus_dir)
    vocab_size = len(corpus.caption_vocab)

    rows: List[ReportRow] = []
    for variant in config.variants:
        model_config = config.build_model_config(variant, vocab_size)
        for seed in config.seeds:
            train_config = config.train.model_copy(update={"seed": seed})
            run_dir = out_dir / variant.value / f"seed_{seed}"
            result = fit(corpus, model_config, train_config, run_dir, config_hash, config.train_split, config.val_split)
            evaluation = evaluate_params(
                result.params, model_config, corpus, config.evaluation, config.eval_split, config_hash, seed
            )
            write_report(evaluation.rows, run_dir / REPORT_FILE)
            rows.extend(evaluation.rows)
            LogManager.log_info(
                "Ejecución de experimento completada",
                extra={"variant": variant.value, "seed": seed, "best_metric": result.best_metric}
            )

    write_report(rows, out_dir / REPORT_FILE)
    if evaluation.quality is not None:
        write_quality(evaluation.quality, out_dir / QUALITY_FILE)
    trend = {"config_hash": config_hash, "seeds": config.seeds, "variants": trend_summary(rows)}
    (out_dir / TREND_FILE).write_text(json.dumps(trend, indent=2, sort_keys=True), encoding="utf-8")
    print(f"Experimento '{config.name}' completado: {out_dir / REPORT_FILE}, {out_dir / TREND_FILE}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from app.main import create_app
    from app.services.caption_service import CaptionService

    service = CaptionService.from_files(args.checkpoint, args.corpus)
    uvicorn.run(create_app(service), host=args.host or settings.HOST, port=args.port or settings.PORT)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = WorkbenchArgumentParser(prog="sgcap", description="Banco de pruebas de captioning condicionado por grafos")
    parser.add_argument("--log-level", default=None, help="Nivel de logging (por defecto LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    generate = sub.add_parser("generate", help="Genera un corpus sintético")
    generate.add_argument("--config", required=True)
    generate.add_argument("--out", help="Directorio del corpus (por defecto corpus_dir de la configuración)")
    generate.add_argument("--force", action="store_true")
    generate.set_defaults(handler=cmd_generate)

    train = sub.add_parser("train", help="Entrena una variante")
    train.add_argument("--config", required=True)
    train.add_argument("--variant", help=f"Una de: {', '.join(Variant.names())}")
    train.add_argument("--out", required=True)
    train.add_argument("--corpus")
    train.add_argument("--seed", type=int)
    train.add_argument("--force", action="store_true")
    train.set_defaults(handler=cmd_train)

    evaluate = sub.add_parser("evaluate", help="Evalúa un checkpoint y escribe el informe CSV")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--config")
    evaluate.add_argument("--corpus")
    evaluate.add_argument("--out", required=True)
    evaluate.add_argument("--split")
    evaluate.add_argument("--beam", type=int)
    evaluate.add_argument("--recall-k", type=int)
    evaluate.add_argument("--gold-graphs", action=argparse.BooleanOptionalAction, default=None)
    evaluate.add_argument("--buckets", action=argparse.BooleanOptionalAction, default=None)
    evaluate.set_defaults(handler=cmd_evaluate)

    gradcheck = sub.add_parser("gradcheck", help="Comprueba gradientes de todas las capas y variantes")
    gradcheck.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    gradcheck.add_argument("--case", action="append", help="Limitar a un caso (repetible)")
    gradcheck.set_defaults(handler=cmd_gradcheck)

    experiment = sub.add_parser("experiment", help="Entrena y evalúa todas las variantes y semillas")
    experiment.add_argument("--config", required=True)
    experiment.add_argument("--out", required=True)
    experiment.add_argument("--force", action="store_true")
    experiment.set_defaults(handler=cmd_experiment)

    serve = sub.add_parser("serve", help="Sirve un checkpoint por HTTP")
    serve.add_argument("--checkpoint", required=True)
    serve.add_argument("--corpus", required=True)
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    serve.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    LogManager.setup_logger(args.log_level)
    try:
        return args.handler(args)
    except WorkbenchError as e:
        LogManager.log_error(e.message, extra={"error_code": e.error_code, "command": args.command})
        print(f"error [{e.error_code}]: {e.message}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        LogManager.log_error("Fallo inesperado", error=e, extra={"command": args.command})
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
