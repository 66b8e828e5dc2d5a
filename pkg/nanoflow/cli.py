"""
Командная строка: run (один расчёт) и sweep (серия расчётов по C0).

Коды выхода: 0 при успешном расчёте, 1 при ошибке конфигурации,
2 при численном сбое (отчёт о шаге в failed_step.json).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .core.errors import ConfigurationError
from .core.simulation import Simulation, SimulationConfig
from .io.config import apply_overrides, build_config, read_document, resolve_document
from .io.manifest import OutputManifest, write_failed_step
from .io.snapshots import StepMeta, write_field_snapshot
from .io.timeseries import write_timeseries

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2

LOG_LEVEL_ENV = "NANOFLOW_LOG_LEVEL"
SWEEP_C0 = (0.0, 0.0009, 0.004, 0.01)


class _Parser(argparse.ArgumentParser):
    """Ошибки разбора аргументов относятся к конфигурации: usage и код 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: ошибка: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nanoflow", description="Двухфазная фильтрация с переносом наночастиц")
    parser.add_argument("--verbose", action="store_true", help=f"подробный журнал (иначе уровень из {LOG_LEVEL_ENV})")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub):
        sub.add_argument("--config", required=True, help="путь к JSON-документу расчёта")
        sub.add_argument("--out", required=True, help="каталог вывода")
        sub.add_argument("--until-pvi", type=float, dest="until_pvi", help="целевой PVI")
        sub.add_argument("--seed", type=int, help="seed случайного поля проницаемости")
        sub.add_argument(
            "--capillary-mode",
            dest="capillary_mode",
            choices=("linearized", "lagged", "linearized_coupled", "lagged_explicit"),
        )
        sub.add_argument("--snapshot-every-pvi", type=float, dest="snapshot_every_pvi")

    run_cmd = commands.add_parser("run", help="один расчёт")
    common(run_cmd)
    run_cmd.add_argument("--progress", action="store_true", help="индикатор хода расчёта")

    sweep_cmd = commands.add_parser("sweep", help="серия расчётов по концентрации закачки")
    common(sweep_cmd)
    sweep_cmd.add_argument("--c0", type=float, nargs="+", default=list(SWEEP_C0))
    sweep_cmd.add_argument("--workers", type=int, default=None)
    return parser


def configure_logging(verbose: bool = False) -> None:
    if verbose:
        level = logging.DEBUG
    else:
        level = logging.getLevelName(os.environ.get(LOG_LEVEL_ENV, "WARNING").upper())
        if not isinstance(level, int):
            level = logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _overrides(args) -> dict:
    return {
        "until_pvi": args.until_pvi,
        "seed": args.seed,
        "capillary_mode": args.capillary_mode,
        "snapshot_every_pvi": args.snapshot_every_pvi,
    }


def run_to_directory(config: SimulationConfig, out_dir, document: dict | None = None, progress: bool = False):
    """Выполняет расчёт и пишет снимки, временной ряд и манифест; возвращает (код выхода, манифест)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = OutputManifest(config.run_id, out_dir, config=document)
    simulation = Simulation(config)
    write_vtk = True if document is None else document["output"]["write_vtk"]
    write_csv = True if document is None else document["output"]["write_csv"]

    def on_snapshot(state, _report):
        meta = StepMeta(state.step, state.time, state.step * config.pvi_per_step)
        for path in write_field_snapshot(state, simulation.grid, config.rock, meta, out_dir, write_vtk, write_csv):
            manifest.add(path, meta.step, meta.time_s, meta.pvi)

    result = simulation.run(on_snapshot=on_snapshot, progress=progress)
    manifest.add(write_timeseries(result.reports, out_dir))
    manifest.ledger = result.ledger.to_dict()
    manifest.status = result.status
    code = EXIT_OK
    if not result.completed:
        manifest.error = result.error
        failed = write_failed_step(result.failed_report, out_dir, result.error)
        manifest.add(failed, result.state.step + 1)
        code = EXIT_NUMERICAL
    manifest.write()
    return code, manifest


def _load(args) -> tuple[dict, Path]:
    path = Path(args.config)
    document = resolve_document(apply_overrides(read_document(path), _overrides(args)))
    return document, path.parent


def _run_command(args) -> int:
    document, base_dir = _load(args)
    config = build_config(document, base_dir)
    progress = args.progress or document["run"]["progress"]
    code, _ = run_to_directory(config, args.out, document, progress=progress)
    if code == EXIT_NUMERICAL:
        print(f"Расчёт прерван, см. {Path(args.out) / 'failed_step.json'}", file=sys.stderr)
    return code


def _sweep_member(document: dict, base_dir: Path, out_dir: Path) -> int:
    try:
        config = build_config(document, base_dir)
        code, _ = run_to_directory(config, out_dir, document)
    except ConfigurationError as exc:
        logger.error("%s: %s", out_dir.name, exc)
        return EXIT_CONFIG
    return code


def _sweep_command(args) -> int:
    document, base_dir = _load(args)
    out = Path(args.out)
    jobs = []
    for c0 in args.c0:
        member = apply_overrides(document, {"nanoparticles.c0": c0})
        name = f"c0_{c0:g}"
        member["run"]["run_id"] = f"{document['run']['run_id']}_{name}"
        jobs.append((member, base_dir, out / name))
    # Проверка всех документов до запуска процессов
    for member, _, _ in jobs:
        build_config(member, base_dir)

    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        codes = list(pool.map(_sweep_member, *zip(*jobs)))
    for (_, _, out_dir), code in zip(jobs, codes):
        logger.info("%s: код %d", out_dir.name, code)
    return max(codes, default=EXIT_OK)


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.verbose)
    try:
        if args.command == "sweep":
            return _sweep_command(args)
        return _run_command(args)
    except ConfigurationError as exc:
        parser.print_usage(sys.stderr)
        print(f"Ошибка конфигурации: {exc}", file=sys.stderr)
        for problem in exc.problems:
            logger.debug("  %s", problem)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(cli_main())
