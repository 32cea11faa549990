import argparse
import json
import logging

import config
from exception import LowLoadException
from pipeline.report import report
from pipeline.runner import AUTO_FORECASTER, EXIT_FAILURE, EXIT_OK, run
from schemas import ErrorBound, FleetConfig, PipelineConfig
from synthgen.fleet import generate_fleet
from telemetry.validation import infer_schema, save_schema

logger = logging.getLogger('lowload')


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog='lowload', description="Low-load window prediction and backup scheduling.")
    commands = parser.add_subparsers(dest='command', required=True)

    run_parser = commands.add_parser('run', help="validate, classify, forecast, evaluate and schedule one region")
    run_parser.add_argument('--input', default=config.INPUT, required=config.INPUT is None, help="telemetry CSV")
    run_parser.add_argument('--out', default=config.RESULTS_DIR, help="results directory")
    run_parser.add_argument('--forecaster', default=config.FORECASTER,
                            help=f"forecaster kind or '{AUTO_FORECASTER}' for one model per server class")
    run_parser.add_argument('--forecaster-params', default='{}', help="forecaster parameters as JSON")
    run_parser.add_argument('--bound', default=config.BOUND, help="acceptable error bound, e.g. +10:-5")
    run_parser.add_argument('--backup-min', type=int, default=config.BACKUP_MINUTES, help="backup duration in minutes")
    run_parser.add_argument('--coverage', type=float, default=config.COVERAGE, help="evaluability threshold")
    run_parser.add_argument('--parallel', type=int, default=config.PARALLEL, help="worker processes")
    run_parser.add_argument('--region', default=config.REGION, help="region label")
    run_parser.add_argument('--schema', default=config.SCHEMA, help="reviewed schema JSON, default schema otherwise")

    report_parser = commands.add_parser('report', help="summarize the latest run")
    report_parser.add_argument('--out', default=config.RESULTS_DIR, help="results directory")
    report_parser.add_argument('--run', default=None, help="run id, the latest run otherwise")
    report_parser.add_argument('--actuals', default=None, help="telemetry CSV of the scheduled backup day")
    report_parser.add_argument('--busy-threshold', type=float, default=config.BUSY_THRESHOLD)

    generate_parser = commands.add_parser('generate', help="write a synthetic fleet")
    generate_parser.add_argument('--config', required=True, help="fleet config JSON")
    generate_parser.add_argument('--out', required=True, help="telemetry CSV to write")

    schema_parser = commands.add_parser('schema', help="infer a schema for review")
    schema_parser.add_argument('--input', required=True, help="telemetry CSV")
    schema_parser.add_argument('--out', required=True, help="schema JSON to write")

    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        if args.command == 'run':
            manifest = run(PipelineConfig(
                input_path=args.input,
                results_dir=args.out,
                forecaster=args.forecaster,
                forecaster_parameters=json.loads(args.forecaster_params),
                bound=ErrorBound.parse(args.bound),
                backup_minutes=args.backup_min,
                coverage=args.coverage,
                parallelism=args.parallel,
                region=args.region,
                schema_path=args.schema,
            ))
            print(manifest.run_id)
            return manifest.exit_code
        if args.command == 'report':
            report(args.out, args.actuals, args.run, args.busy_threshold)
        elif args.command == 'generate':
            generate_fleet(FleetConfig.parse_file(args.config)).write(args.out)
        elif args.command == 'schema':
            save_schema(infer_schema(args.input), args.out)
    except (LowLoadException, ValueError, OSError) as e:
        logger.error(str(e))
        return EXIT_FAILURE
    return EXIT_OK

