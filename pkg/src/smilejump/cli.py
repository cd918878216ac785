"""Command-line entry point.

Subcommands mirror the pipeline stages so long runs are resumable from
persisted intermediates:

    smilejump synth        --out DIR --days N --seed S [effect flags]
    smilejump ingest       --underlying U.csv --options O --out DIR
    smilejump detect-jumps --underlying U.csv --out DIR
    smilejump surfaces     --underlying U.csv --options O --out DIR
    smilejump pca          --out DIR            (reads smiles_<tau>.csv)
    smilejump study        --out DIR            (reads smiles + partition)
    smilejump run-all      --underlying U.csv --options O --out DIR

`--config FILE` loads a key=value file; explicit flags override it.
Exit code 0 means every requested cell was computed or explicitly marked
insufficient; any fatal stage error exits nonzero with the stage named.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config

log = logging.getLogger(__name__)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="key=value config file")
    p.add_argument("--underlying", dest="underlying_csv", type=Path, default=None)
    p.add_argument("--options", dest="options_csv", type=Path, default=None)
    p.add_argument("--out", dest="output_dir", type=Path, default=None)
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--spline-lambda", dest="spline_lambda", type=float, default=None)
    p.add_argument("--jump-sampling", dest="jump_sampling", type=int, default=None)
    p.add_argument("--window-k", dest="window_k", type=int, default=None)
    p.add_argument("--grid-level", dest="grid_level", type=float, default=None)
    p.add_argument("--familywise-grid", dest="grid_familywise", action="store_const",
                   const=True, default=None)
    p.add_argument("--no-figures", dest="figures", action="store_const",
                   const=False, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)


def _config_from(args: argparse.Namespace) -> RunConfig:
    keys = (
        "underlying_csv", "options_csv", "output_dir", "rate", "alpha",
        "spline_lambda", "jump_sampling", "window_k", "grid_level",
        "grid_familywise", "figures", "threads", "seed",
    )
    overrides = {k: getattr(args, k) for k in keys if hasattr(args, k)}
    return load_config(args.config, overrides)


def cmd_synth(args: argparse.Namespace) -> int:
    from .marketdata import write_options_csv, write_truth_csv, write_underlying_csv
    from .synth import MarketSpec, make_market

    cfg = _config_from(args)
    spec = MarketSpec(
        days=args.days,
        seed=cfg.seed,
        annual_vol=args.annual_vol,
        rate=cfg.rate,
        jump_intensity=args.jump_intensity,
        jump_effect_level=args.effect_level,
        jump_effect_var=args.effect_var,
    )
    market = make_market(spec)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_underlying_csv(out / "underlying.csv", market.series)
    write_options_csv(out / "options.csv", market.quotes())
    write_truth_csv(out / "truth.csv", market.true_jumps, market.jump_morning_days)
    print(f"synth: wrote {spec.days} days to {out} "
          f"({len(market.true_jumps)} true jumps, {len(market.jump_morning_days)} jump mornings)")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    from .marketdata import ingest_options, ingest_underlying

    cfg = _config_from(args)
    cfg.validate(need_inputs=True)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    series, und_report = ingest_underlying(cfg.underlying_csv)
    _, opt_report = ingest_options(cfg.options_csv, cfg)
    payload = {"underlying": und_report.to_json_dict(), "options": opt_report.to_json_dict()}
    with open(out / "ingest_report.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_detect_jumps(args: argparse.Namespace) -> int:
    from .marketdata import ingest_underlying
    from .pipeline import detect_and_partition, write_jumps_csv, write_partition_csv

    cfg = _config_from(args)
    if cfg.underlying_csv is None:
        raise ConfigError("detect-jumps requires --underlying")
    series, _ = ingest_underlying(cfg.underlying_csv)
    detection = detect_and_partition(series, cfg)
    out = Path(cfg.output_dir)
    write_jumps_csv(out / "jumps.csv", detection.events_by_sampling[cfg.jump_sampling])
    for sampling in cfg.jump_samplings:
        if sampling != cfg.jump_sampling:
            write_jumps_csv(out / f"jumps_{sampling}min.csv", detection.events_by_sampling[sampling])
    write_partition_csv(out / "day_partition.csv", detection.partition)
    part = detection.partition
    print(f"detect-jumps: {len(detection.events_by_sampling[cfg.jump_sampling])} events "
          f"at {cfg.jump_sampling}min; {len(part.jump_days)} jump mornings, "
          f"{len(part.nojump_days)} no-jump days, {len(part.excluded)} excluded")
    return 0


def cmd_surfaces(args: argparse.Namespace) -> int:
    from .marketdata import ingest_options
    from .pipeline import build_smiles, write_smiles_csv

    cfg = _config_from(args)
    cfg.validate(need_inputs=True)
    quotes, _ = ingest_options(cfg.options_csv, cfg)
    surf = build_smiles((quotes[d] for d in sorted(quotes)), cfg)
    out = Path(cfg.output_dir)
    for tau in cfg.maturities:
        write_smiles_csv(out / f"smiles_{tau!r}.csv", surf.smiles[tau], cfg.grid.centers)
    print(f"surfaces: fitted {surf.minutes_fitted}/{surf.minutes_seen} minutes, "
          f"{surf.failed_inversions} failed inversions")
    return 0


def cmd_pca(args: argparse.Namespace) -> int:
    from .pipeline import panel_from_blocks, read_smiles_csv, write_explained_csv, write_loadings_csv
    from .smilepca import fit_pca

    cfg = _config_from(args)
    out = Path(cfg.output_dir)
    for tau in cfg.maturities:
        blocks = read_smiles_csv(out / f"smiles_{tau!r}.csv", tau)
        model = fit_pca(panel_from_blocks(blocks, tau), k=3)
        write_loadings_csv(out / f"loadings_{tau!r}.csv", model, cfg.grid.centers)
        write_explained_csv(out / f"explained_{tau!r}.csv", model)
        pct = ", ".join(f"{100 * f:.1f}%" for f in model.explained_fractions)
        print(f"pca tau={tau}: explained {pct} (total {100 * model.total_explained:.1f}%)")
    return 0


def cmd_study(args: argparse.Namespace) -> int:
    from .pipeline import analyze_smiles, read_partition_csv, read_smiles_csv, write_report, write_scores_csv

    cfg = _config_from(args)
    out = Path(cfg.output_dir)
    partition = read_partition_csv(out / "day_partition.csv")
    smiles = {tau: read_smiles_csv(out / f"smiles_{tau!r}.csv", tau) for tau in cfg.maturities}
    models, panels, report = analyze_smiles(smiles, partition, cfg)
    for tau in sorted(panels):
        write_scores_csv(out / f"scores_{tau!r}.csv", panels[tau])
    write_report(out, report)
    if cfg.figures:
        from .figures import render_report_figures

        render_report_figures(out, models, panels, report, partition, cfg)
    print(f"study: wrote report.json / report.csv to {out}")
    return 0


def cmd_run_all(args: argparse.Namespace) -> int:
    from .pipeline import run_pipeline

    cfg = _config_from(args)
    report = run_pipeline(cfg)
    if any(c.insufficient for c in report.cells.values()):
        grid = "insufficient groups"
    elif report.all_equal():
        grid = "all ="
    else:
        grid = "effects detected"
    print(f"run-all: report written to {cfg.output_dir} "
          f"({report.n_jump_days} jump mornings vs {report.n_nojump_days} no-jump days; grid: {grid})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smilejump", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic market as CSVs")
    _add_common(p)
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--annual-vol", type=float, default=0.20)
    p.add_argument("--jump-intensity", type=float, default=0.5)
    p.add_argument("--effect-level", type=float, default=0.0)
    p.add_argument("--effect-var", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    for name, func in (
        ("ingest", cmd_ingest),
        ("detect-jumps", cmd_detect_jumps),
        ("surfaces", cmd_surfaces),
        ("pca", cmd_pca),
        ("study", cmd_study),
        ("run-all", cmd_run_all),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
