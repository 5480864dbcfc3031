import sys
from pathlib import Path
import os
import argparse
import logging

if sys.version_info < (3, 10):
    raise RuntimeError(
        f"qlangevin requires Python 3.10+ (you have {sys.version_info.major}.{sys.version_info.minor})."
    )

# Add project root to path to allow imports
project_root = Path(__file__).parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _configure_logging(verbose: bool) -> None:
    from qlangevin.errors import ConfigError

    level = "DEBUG" if verbose else os.getenv("QLANGEVIN_LOG_LEVEL", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise ConfigError(f"unknown log level {level!r}", key="QLANGEVIN_LOG_LEVEL")
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _write_results(results, stem: Path) -> list:
    from qlangevin.io import write_csv

    written = []
    for suffix, series in results.items():
        path = stem.with_name(f"{stem.name}_{suffix}.csv" if suffix else f"{stem.name}.csv")
        write_csv(series, path)
        written.append(path)
    return written


def _report(results, written) -> int:
    main_series = results[""]
    for path in written:
        print(f"wrote {path}")
    if main_series.meta.get("non_equilibrated"):
        reason = main_series.meta.get("non_equilibrated_reason")
        print(f"Warning: run is NOT equilibrated ({reason})")
    if main_series.meta.get("escaped"):
        print(f"Warning: {main_series.meta['escaped']} classical trajectories left the box")
    if main_series.truncated:
        print(f"Output truncated at t={main_series.meta.get('abort_time')}: probability reached the grid boundary")
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_run(args) -> int:
    from qlangevin.config_io import apply_env_overrides, load_config
    from qlangevin.experiments import run_config

    config = apply_env_overrides(load_config(args.config))
    if args.out:
        stem = Path(args.out)
    elif config.out.path:
        stem = Path(config.out.path)
    else:
        stem = Path(args.config).with_suffix("")
    stem = stem.with_suffix("") if stem.suffix == ".csv" else stem
    results = run_config(config)
    return _report(results, _write_results(results, stem))


def _cmd_preset(args) -> int:
    from qlangevin.config_io import (
        apply_env_overrides,
        env_truthy,
        format_presets_manifest,
        list_presets,
        load_presets_with_manifest,
        preset,
    )
    from qlangevin.experiments import run_config

    # Print which preset files were found. Enable via: QLANGEVIN_DEBUG_PRESETS=1
    if args.list or env_truthy("QLANGEVIN_DEBUG_PRESETS"):
        _, manifest = load_presets_with_manifest()
        print(format_presets_manifest(manifest))
        print("-" * 60)
    if args.list:
        return EXIT_OK
    if not args.name:
        print("Available presets: " + ", ".join(list_presets()))
        return EXIT_CONFIG

    config = apply_env_overrides(preset(args.name))
    print("=" * 60)
    print(f"Preset {args.name}: mode {config.mode}")
    print("=" * 60)
    out_dir = Path(args.out)
    results = run_config(config)
    return _report(results, _write_results(results, out_dir / args.name))


def _cmd_compare(args) -> int:
    from qlangevin.io import compare_csv

    result = compare_csv(args.csv_a, args.csv_b, args.tol)
    if result["max_deviation"] is None:
        print(f"Error: {result['error']}")
        return EXIT_IO
    print(f"max deviation {result['max_deviation']:.6e} on channel {result['channel']} (tol {args.tol:g})")
    if not result["success"]:
        print(f"FAIL: {result['error']}")
        return EXIT_NUMERICAL
    print("OK")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Quantum Langevin and open two-level system simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a key=value config file and write CSV output.")
    run.add_argument("config", help="Path to the config file.")
    run.add_argument("--out", default=None, help="Output path stem (overrides out.path).")
    run.set_defaults(handler=_cmd_run)

    pre = sub.add_parser("preset", help="Run one of the figure presets.")
    pre.add_argument("name", nargs="?", default=None, help="Preset name, e.g. fig2.3.")
    pre.add_argument("--out", default=".", help="Directory for <name>.csv (and <name>_exact.csv).")
    pre.add_argument("--list", action="store_true", help="List available presets and exit.")
    pre.set_defaults(handler=_cmd_preset)

    cmp_ = sub.add_parser("compare", help="Sup-norm comparison of two CSV outputs.")
    cmp_.add_argument("csv_a")
    cmp_.add_argument("csv_b")
    cmp_.add_argument("--tol", type=float, required=True, help="Largest allowed absolute deviation.")
    cmp_.set_defaults(handler=_cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    from qlangevin.errors import (
        ConfigError,
        InvalidParameterError,
        InvalidStateError,
        NumericalInconsistencyError,
        PropagationDivergedError,
        SpectralBoundError,
        SpillError,
    )

    try:
        _configure_logging(args.verbose)
        return args.handler(args)
    except (ConfigError, InvalidParameterError) as e:
        print(f"\nConfig error: {e}\n", file=sys.stderr)
        return EXIT_CONFIG
    except (
        PropagationDivergedError,
        SpillError,
        SpectralBoundError,
        NumericalInconsistencyError,
        InvalidStateError,
    ) as e:
        print(f"\nNumerical error: {e}\n", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        print(f"\nI/O error: {e}\n", file=sys.stderr)
        return EXIT_IO
    except Exception as e:
        print(f"\n❌ Error: {e}\n", file=sys.stderr)
        import traceback
        traceback.print_exc()
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
