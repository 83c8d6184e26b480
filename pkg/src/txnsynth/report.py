"""Text and CSV renderings of utility reports, single and combined."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .metrics import MetricBlock, UtilityReport

COMBINED_COLUMNS = ("sparsity", "wasserstein_distance", "cosine_distance")


def _num(x) -> str:
    # repr keeps every bit, so CSVs from identical runs are identical bytes
    if isinstance(x, (bool, np.bool_)):
        return "yes" if x else "no"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _yn(b) -> str:
    return "yes" if b else "no"


def _block_rows(prefix: str, b: MetricBlock, report: UtilityReport | None = None):
    rows = [
        (f"{prefix}.sparsity_verdict", _num(bool(b.sparsity_verdict))),
        (f"{prefix}.avg_wasserstein", _num(b.avg_wasserstein)),
        (f"{prefix}.avg_cosine_distance", _num(b.avg_cosine_distance)),
        (f"{prefix}.mean_angle_degrees", _num(b.mean_angle_degrees)),
        (f"{prefix}.excluded_pairs", _num(b.excluded_pairs)),
        (f"{prefix}.real_row_sparsity", _num(b.real_row_sparsity)),
        (f"{prefix}.syn_row_sparsity", _num(b.syn_row_sparsity)),
    ]
    for j, c in enumerate(b.categories):
        rows.append((f"{prefix}.real_column_sparsity.{c}", _num(b.real_column_sparsity[j])))
        rows.append((f"{prefix}.syn_column_sparsity.{c}", _num(b.syn_column_sparsity[j])))
        rows.append((f"{prefix}.wasserstein.{c}", _num(b.feature_wasserstein[j])))
    return rows


def report_rows(report: UtilityReport) -> list[tuple[str, str]]:
    rows = [
        ("model", report.model_name),
        ("pairing", report.pairing.mode),
        ("pairing_note", report.pairing.description),
        ("wasserstein_space", report.wasserstein_space),
    ]
    rows += _block_rows("full", report.full)
    rows += _block_rows("common", report.restricted)
    for r in report.insights:
        rows.append((f"insight.{r.spec.name}.real_proportion", _num(r.real_proportion)))
        rows.append((f"insight.{r.spec.name}.syn_proportion", _num(r.syn_proportion)))
        rows.append((f"insight.{r.spec.name}.delta", _num(r.delta)))
    if report.real_column_max is not None:
        for c, rm, sm in zip(report.full.categories, report.real_column_max, report.syn_column_max):
            rows.append((f"max_dollars.real.{c}", _num(rm)))
            rows.append((f"max_dollars.syn.{c}", _num(sm)))
    return rows


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_report_csv(report: UtilityReport, path) -> None:
    _write_csv(path, ("metric", "value"), report_rows(report))


def _fmt(x, digits=4) -> str:
    return "nan" if not np.isfinite(x) else f"{x:.{digits}f}"


def render_text(report: UtilityReport) -> str:
    f, r = report.full, report.restricted
    pairing = report.pairing.mode
    if report.pairing.description:
        pairing += f" ({report.pairing.description})"
    space = "log1p dollars" if report.wasserstein_space == "log" else "dollars"
    lines = [
        f"Utility report: {report.model_name}",
        f"pairing: {pairing}",
        f"wasserstein space: {space}; cosine space: log1p dollars",
        "",
        f"{'':26s}{'all categories':>18s}{f'{len(r.categories)} most common':>18s}",
        f"{'sparsity':26s}{_yn(f.sparsity_verdict):>18s}{_yn(r.sparsity_verdict):>18s}",
        f"{'avg wasserstein':26s}{_fmt(f.avg_wasserstein):>18s}{_fmt(r.avg_wasserstein):>18s}",
        f"{'avg cosine distance':26s}{_fmt(f.avg_cosine_distance):>18s}{_fmt(r.avg_cosine_distance):>18s}",
        f"{'mean angle (degrees)':26s}{_fmt(f.mean_angle_degrees, 1):>18s}{_fmt(r.mean_angle_degrees, 1):>18s}",
        f"{'excluded pairs':26s}{f.excluded_pairs:>18d}{r.excluded_pairs:>18d}",
        f"{'row sparsity real':26s}{_fmt(f.real_row_sparsity):>18s}{_fmt(r.real_row_sparsity):>18s}",
        f"{'row sparsity synthetic':26s}{_fmt(f.syn_row_sparsity):>18s}{_fmt(r.syn_row_sparsity):>18s}",
    ]
    if report.insights:
        lines += ["", f"{'insight':34s}{'real':>10s}{'synthetic':>12s}{'delta':>10s}"]
        for ins in report.insights:
            lines.append(f"{ins.spec.name:34s}{_fmt(ins.real_proportion):>10s}"
                         f"{_fmt(ins.syn_proportion):>12s}{_fmt(ins.delta):>10s}")
    lines += ["", f"{'category':24s}{'zero real':>10s}{'zero syn':>10s}{'W':>9s}{'max real $':>14s}{'max syn $':>14s}"]
    for j, c in enumerate(f.categories):
        rm = report.real_column_max[j] if report.real_column_max is not None else float("nan")
        sm = report.syn_column_max[j] if report.syn_column_max is not None else float("nan")
        lines.append(f"{c:24s}{_fmt(f.real_column_sparsity[j], 3):>10s}{_fmt(f.syn_column_sparsity[j], 3):>10s}"
                     f"{_fmt(f.feature_wasserstein[j], 3):>9s}{rm:>14.2f}{sm:>14.2f}")
    return "\n".join(lines) + "\n"


def combined_rows(reports) -> list[tuple[str, str, str, str]]:
    """One row per setting: model, sparsity verdict, avg Wasserstein, avg cosine distance."""
    return [(rep.model_name, _yn(rep.sparsity_verdict), _num(rep.avg_wasserstein), _num(rep.avg_cosine_distance))
            for rep in reports]


def write_combined_csv(reports, path) -> None:
    _write_csv(path, ("model",) + COMBINED_COLUMNS, combined_rows(reports))


def render_combined(reports) -> str:
    lines = [f"{'model':22s}{'sparsity':>10s}{'wasserstein':>14s}{'cosine':>10s}"]
    for rep in reports:
        lines.append(f"{rep.model_name:22s}{_yn(rep.sparsity_verdict):>10s}"
                     f"{_fmt(rep.avg_wasserstein):>14s}{_fmt(rep.avg_cosine_distance):>10s}")
    return "\n".join(lines) + "\n"
