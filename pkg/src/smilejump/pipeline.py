"""Pipeline orchestration: surfaces -> smiles -> change panels -> PCA ->
scores -> deseasonalization -> jump partition -> day summaries -> tests.

Stages exchange plain data so they can run from ingested CSVs, from an
in-memory synthetic market, or be persisted/reloaded between CLI
invocations.  Every reduction iterates in sorted order, so results do not
depend on input order or worker count.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .config import RunConfig
from .jumps import (
    DayPartition,
    JumpEvent,
    JumpTest,
    PriceSeries,
    classify_mornings,
    detect_jumps,
    detection_coverage,
)
from .marketdata import DayQuotes, write_rows
from .pricing import implied_vol_arrays
from .smilepca import (
    DeltaIvPanel,
    EmptyPanel,
    PcaModel,
    ScorePanel,
    component_regions,
    compute_scores,
    deseasonalize,
    fit_pca,
)
from .study import TestReport, day_summaries, run_study
from .surface import (
    DegenerateGeometry,
    IllConditioned,
    SmileBlock,
    SmileGridExtractor,
    SmileSample,
)
from .synth import SyntheticMarket

__all__ = [
    "SurfaceStageResult",
    "DetectionStageResult",
    "build_smiles",
    "detect_and_partition",
    "analyze_smiles",
    "panel_from_blocks",
    "run_market_study",
    "run_pipeline",
    "chain_to_day_quotes",
    "write_jumps_csv",
    "write_partition_csv",
    "write_smiles_csv",
    "read_smiles_csv",
    "write_scores_csv",
    "write_loadings_csv",
    "write_explained_csv",
    "write_report",
]

log = logging.getLogger(__name__)


@dataclass
class SurfaceStageResult:
    smiles: dict[float, list[SmileBlock]]
    minutes_seen: int = 0
    minutes_fitted: int = 0
    dropped_slices: dict[float, int] = field(default_factory=dict)
    degenerate_minutes: int = 0
    failed_inversions: int = 0

    def smile_samples(self, tau: float):
        for block in self.smiles[tau]:
            yield from block.samples()


@dataclass
class DetectionStageResult:
    events_by_sampling: dict[int, list[JumpEvent]]
    partition: DayPartition
    incomplete_days: set[dt.date]


def chain_to_day_quotes(chain_day) -> DayQuotes:
    """Adapt one synthetic ChainDay to the ingested-quote layout."""
    taus = np.asarray(
        [(e - chain_day.day).days / 365.0 for e in chain_day.expiries]
    )
    return DayQuotes(
        day=chain_day.day,
        minute=chain_day.minute,
        tau=taus[chain_day.tau_index],
        strike=chain_day.strike,
        is_call=chain_day.is_call,
        mid=0.5 * (chain_day.bid + chain_day.ask),
        spot=chain_day.spot,
    )


def _uniform_geometry(dq: DayQuotes, moneyness: np.ndarray) -> int:
    """Quotes per minute when every minute shares one (m, tau) pattern, else 0."""
    n = len(dq.minute)
    minutes = np.unique(dq.minute)
    if len(minutes) == 0 or n % len(minutes):
        return 0
    c = n // len(minutes)
    if (np.diff(dq.minute) < 0).any():
        return 0
    # tolerate strike/spot float round-trip noise across the day's minutes;
    # the first minute's locations stand in for the shared geometry
    mm = np.round(moneyness, 12).reshape(-1, c)
    tt = np.round(dq.tau, 12).reshape(-1, c)
    if (mm == mm[0]).all() and (tt == tt[0]).all():
        return c
    return 0


def _day_smiles(
    dq: DayQuotes, extractor: SmileGridExtractor, rate: float
) -> tuple[dict[float, list[SmileBlock]], int, int, dict[float, int], int, int]:
    """Invert one day's quotes and extract every minute's smiles.

    Days whose minutes share a single point geometry (synthetic chains, and
    real chains quoted on a moneyness grid) go through one batched solve;
    anything else falls back to per-minute fits with identical results.
    """
    sigma, ok = implied_vol_arrays(dq.mid, dq.spot, dq.strike, rate, dq.tau, dq.is_call)
    failed = int((~ok).sum())
    moneyness = dq.strike / dq.spot
    blocks: dict[float, SmileBlock] = {}
    dropped = {t: 0 for t in extractor.taus}
    seen = fitted = degenerate = 0

    c = _uniform_geometry(dq, moneyness) if failed == 0 else 0
    if c >= 3:
        minutes = dq.minute.reshape(-1, c)[:, 0]
        seen = len(minutes)
        try:
            per_tau = extractor.batch(moneyness[:c], dq.tau[:c], sigma.reshape(-1, c))
            fitted = seen
            for t in extractor.taus:
                if t in per_tau:
                    blocks[t] = SmileBlock(day=dq.day, tau=t, minutes=minutes.copy(),
                                           values=per_tau[t])
                else:
                    dropped[t] += seen
            return ({t: [b] for t, b in blocks.items()}, seen, fitted, dropped, 0, failed)
        except (DegenerateGeometry, IllConditioned, ValueError):
            pass  # fall through to the per-minute path

    acc: dict[float, tuple[list[int], list[np.ndarray]]] = {t: ([], []) for t in extractor.taus}
    seen = fitted = 0
    for minute in np.unique(dq.minute):
        sel = (dq.minute == minute) & ok
        seen += 1
        if sel.sum() < 3:
            degenerate += 1
            for t in extractor.taus:
                dropped[t] += 1
            continue
        try:
            per_tau = extractor.extract(
                moneyness[sel], dq.tau[sel], sigma[sel], day=dq.day, minute=int(minute)
            )
        except (DegenerateGeometry, IllConditioned):
            degenerate += 1
            for t in extractor.taus:
                dropped[t] += 1
            continue
        fitted += 1
        for t in extractor.taus:
            if t in per_tau:
                acc[t][0].append(int(minute))
                acc[t][1].append(np.asarray(per_tau[t].iv_bins))
            else:
                dropped[t] += 1
    out = {
        t: [SmileBlock(day=dq.day, tau=t, minutes=np.asarray(mins, dtype=int),
                       values=np.vstack(vals))]
        for t, (mins, vals) in acc.items()
        if mins
    }
    return out, seen, fitted, dropped, degenerate, failed


def build_smiles(day_quotes: Iterable[DayQuotes], config: RunConfig) -> SurfaceStageResult:
    """Fit every minute's surface and collect the fixed-maturity smiles."""
    extractor = SmileGridExtractor(
        config.grid, config.maturities, config.spline_lambda, config.hull_margin
    )
    result = SurfaceStageResult(smiles={t: [] for t in extractor.taus})

    def merge(parts) -> None:
        smiles, seen, fitted, dropped, degenerate, failed = parts
        for t in extractor.taus:
            result.smiles[t].extend(smiles.get(t, []))
            result.dropped_slices[t] = result.dropped_slices.get(t, 0) + dropped[t]
        result.minutes_seen += seen
        result.minutes_fitted += fitted
        result.degenerate_minutes += degenerate
        result.failed_inversions += failed

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            for parts in pool.map(
                lambda dq: _day_smiles(dq, extractor, config.rate), day_quotes
            ):
                merge(parts)
    else:
        for dq in day_quotes:
            merge(_day_smiles(dq, extractor, config.rate))
    return result


def detect_and_partition(series: PriceSeries, config: RunConfig) -> DetectionStageResult:
    """Run detection at every configured sampling and label the days."""
    events: dict[int, list[JumpEvent]] = {}
    incomplete: set[dt.date] = set()
    for sampling in config.jump_samplings:
        test = JumpTest(alpha=config.alpha, sampling_minutes=sampling,
                        window_k=config.window_k_for(sampling))
        events[sampling] = detect_jumps(series, test)
        for day, (evaluated, expected) in detection_coverage(series, test).items():
            if evaluated < expected:
                incomplete.add(day)
    partition = classify_mornings(events, series.days, config.jump_sampling, incomplete)
    return DetectionStageResult(events, partition, incomplete)


def panel_from_blocks(blocks: list[SmileBlock], tau: float) -> DeltaIvPanel:
    """Consecutive-minute differences from smile blocks; same semantics as
    smilepca.build_panel on the equivalent per-sample list."""
    rows: list[tuple[dt.date, int]] = []
    chunks: list[np.ndarray] = []
    for block in sorted(blocks, key=lambda b: b.day):
        if len(block) < 2:
            continue
        consec = np.diff(block.minutes) == 1
        if not consec.any():
            continue
        mins = block.minutes[1:][consec]
        chunks.append(block.values[1:][consec] - block.values[:-1][consec])
        rows.extend((block.day, int(m)) for m in mins)
    if not rows:
        raise EmptyPanel(f"no consecutive-minute smile pairs for tau={tau}")
    return DeltaIvPanel(tau=tau, rows=tuple(rows), values=np.vstack(chunks))


def analyze_smiles(
    smiles_by_tau: Mapping[float, list[SmileBlock]],
    partition: DayPartition,
    config: RunConfig,
) -> tuple[dict[float, PcaModel], dict[float, ScorePanel], TestReport]:
    """PCA, scores, deseasonalization and the full test battery."""
    models: dict[float, PcaModel] = {}
    panels: dict[float, ScorePanel] = {}
    signs: dict[tuple[float, int], int] = {}
    labels: dict[float, tuple[str, ...]] = {}
    explained: dict[float, tuple[float, ...]] = {}
    centers = config.grid.centers
    for tau in sorted(smiles_by_tau):
        panel = panel_from_blocks(smiles_by_tau[tau], tau)
        model = fit_pca(panel, k=3)
        models[tau] = model
        panels[tau] = deseasonalize(compute_scores(panel, model))
        for j, s in enumerate(model.loading_signs(), start=1):
            signs[(tau, j)] = s
        labels[tau] = component_regions(model, centers)
        explained[tau] = tuple(float(x) for x in model.explained_fractions)

    summary = day_summaries(panels, partition, min_minutes=config.min_minutes)
    report = run_study(
        summary.summaries,
        signs,
        level=config.grid_level,
        familywise=config.grid_familywise,
        trim_lo=config.trim_lo,
        trim_hi=config.trim_hi,
        skipped_days=summary.skipped_days,
        component_labels=labels,
        explained=explained,
    )
    return models, panels, report


def run_market_study(market: SyntheticMarket, config: RunConfig):
    """In-memory end-to-end run on a synthetic market (no CSV round trip)."""
    detection = detect_and_partition(market.series, config)
    surf = build_smiles((chain_to_day_quotes(cd) for cd in market.chain_days()), config)
    models, panels, report = analyze_smiles(surf.smiles, detection.partition, config)
    return report, detection, surf, models, panels


# ---------------------------------------------------------------------------
# Artifact writers / readers used by the CLI stages.
# ---------------------------------------------------------------------------

def _tau_name(tau: float) -> str:
    return repr(float(tau))


def write_jumps_csv(path: Path, events: list[JumpEvent]) -> None:
    write_rows(
        path,
        ["timestamp", "L", "beta_star", "return", "local_sigma"],
        (
            [e.timestamp.isoformat(), e.l_statistic, e.beta_star, e.ret, e.local_sigma]
            for e in events
        ),
    )


def write_partition_csv(path: Path, partition: DayPartition) -> None:
    rows = []
    for d in partition.jump_days:
        rows.append([d.isoformat(), "jump", ""])
    for d in partition.nojump_days:
        rows.append([d.isoformat(), "nojump", ""])
    for d, reason in sorted(partition.excluded.items()):
        rows.append([d.isoformat(), "excluded", reason])
    rows.sort()
    write_rows(path, ["day", "group", "reason"], rows)


def read_partition_csv(path: Path) -> DayPartition:
    import csv as _csv

    jump, nojump, excluded = [], [], {}
    with open(path) as fh:
        reader = _csv.reader(fh)
        next(reader)
        for day_s, group, reason in reader:
            day = dt.date.fromisoformat(day_s)
            if group == "jump":
                jump.append(day)
            elif group == "nojump":
                nojump.append(day)
            else:
                excluded[day] = reason
    return DayPartition(tuple(jump), tuple(nojump), excluded)


def write_smiles_csv(path: Path, blocks: list[SmileBlock], centers) -> None:
    header = ["day", "minute"] + [f"bin_{c:g}" for c in centers]

    def rows():
        for block in sorted(blocks, key=lambda b: b.day):
            iso = block.day.isoformat()
            for i, minute in enumerate(block.minutes):
                yield [iso, int(minute), *(float(x) for x in block.values[i])]

    write_rows(path, header, rows())


def read_smiles_csv(path: Path, tau: float) -> list[SmileBlock]:
    import csv as _csv

    per_day: dict[dt.date, tuple[list[int], list[list[float]]]] = {}
    with open(path) as fh:
        reader = _csv.reader(fh)
        next(reader)
        for row in reader:
            day = dt.date.fromisoformat(row[0])
            mins, vals = per_day.setdefault(day, ([], []))
            mins.append(int(row[1]))
            vals.append([float(x) for x in row[2:]])
    return [
        SmileBlock(day=day, tau=tau, minutes=np.asarray(mins, dtype=int),
                   values=np.asarray(vals))
        for day, (mins, vals) in sorted(per_day.items())
    ]


def write_scores_csv(path: Path, panel: ScorePanel) -> None:
    header = ["day", "minute"] + [f"pc{j + 1}" for j in range(panel.scores.shape[1])]
    write_rows(
        path,
        header,
        (
            [day.isoformat(), minute, *panel.scores[i]]
            for i, (day, minute) in enumerate(panel.rows)
        ),
    )


def write_loadings_csv(path: Path, model: PcaModel, centers) -> None:
    header = ["bin_center"] + [f"pc{j + 1}" for j in range(model.n_components)] + [
        f"pc{j + 1}_unrotated" for j in range(model.n_components)
    ]
    rows = []
    for i, c in enumerate(centers):
        rows.append([float(c), *model.loadings[i], *model.loadings_unrotated[i]])
    write_rows(path, header, rows)


def write_explained_csv(path: Path, model: PcaModel) -> None:
    rows = [
        [f"pc{j + 1}", float(model.eigenvalues[j]), float(model.explained_fractions[j])]
        for j in range(model.n_components)
    ]
    rows.append(["total", float(model.eigenvalues.sum()), model.total_explained])
    write_rows(path, ["component", "variance", "fraction"], rows)


def write_report(outdir: Path, report: TestReport) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "report.json", "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_rows(outdir / "report.csv", report.csv_header(), report.csv_rows())


def run_pipeline(config: RunConfig) -> TestReport:
    """CSV inputs to full artifact set; every stage also persists its output."""
    from .marketdata import ingest_options, ingest_underlying

    config.validate(need_inputs=True)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    stage = "ingest"
    try:
        series, und_report = ingest_underlying(config.underlying_csv)
        quotes, opt_report = ingest_options(config.options_csv, config)
        with open(out / "ingest_report.json", "w") as fh:
            json.dump(
                {"underlying": und_report.to_json_dict(), "options": opt_report.to_json_dict()},
                fh, indent=2, sort_keys=True,
            )
            fh.write("\n")

        stage = "detect-jumps"
        detection = detect_and_partition(series, config)
        write_jumps_csv(out / "jumps.csv", detection.events_by_sampling[config.jump_sampling])
        for sampling in config.jump_samplings:
            if sampling != config.jump_sampling:
                write_jumps_csv(out / f"jumps_{sampling}min.csv", detection.events_by_sampling[sampling])
        write_partition_csv(out / "day_partition.csv", detection.partition)

        stage = "surfaces"
        surf = build_smiles((quotes[d] for d in sorted(quotes)), config)
        for tau in config.maturities:
            write_smiles_csv(out / f"smiles_{_tau_name(tau)}.csv", surf.smiles[tau], config.grid.centers)

        stage = "pca"
        models, panels, report = analyze_smiles(surf.smiles, detection.partition, config)
        for tau in sorted(models):
            write_loadings_csv(out / f"loadings_{_tau_name(tau)}.csv", models[tau], config.grid.centers)
            write_explained_csv(out / f"explained_{_tau_name(tau)}.csv", models[tau])
            write_scores_csv(out / f"scores_{_tau_name(tau)}.csv", panels[tau])

        stage = "study"
        write_report(out, report)
        if config.figures:
            from .figures import render_report_figures

            render_report_figures(out, models, panels, report, detection.partition, config)
    except Exception as exc:
        raise RuntimeError(f"pipeline stage '{stage}' failed: {exc}") from exc
    return report
