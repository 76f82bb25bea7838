import csv
import os
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
from loguru import logger

from config import Config
from design.io.results import dump_json, write_input_csv
from design.models import GAMMA_CONVENTION, DesignResult
from diagnosis.models import ExperimentRecord
from systems.io.signals import write_signal_csv
from systems.logic.realization import frequency_grid, sample_entry
from systems.models import ModelSet, SampleMode, UnstableModelError


def format_table(records: Sequence[ExperimentRecord], labels: Sequence[str]) -> str:
    """
    One row per experiment with the residual norm of every candidate; the
    smallest norm of each row is marked with '*'.
    """
    if not records:
        raise ValueError("No experiments to report")
    header = ['Experiment', 'Assumption'] + [f"||v_{j}||" for j in range(len(labels))] + ['j*']
    rows = []
    for n, record in enumerate(records, start=1):
        cells = []
        for j, value in enumerate(record.result.residual_norms):
            mark = '*' if j == record.result.j_star else ' '
            cells.append(f"{value:.4f}{mark}")
        rows.append([str(n), f"{record.truth_label} {record.sample}"] + cells + [labels[record.result.j_star]])
    widths = [max(len(r[c]) for r in [header] + rows) for c in range(len(header))]
    lines = [' | '.join(cell.ljust(widths[c]) for c, cell in enumerate(header)).rstrip()]
    lines.append('-+-'.join('-' * w for w in widths))
    for row in rows:
        lines.append(' | '.join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip())
    return '\n'.join(lines) + '\n'


def report_to_dict(ms: ModelSet, dr: DesignResult, records: Sequence[ExperimentRecord]) -> Dict:
    return {
        'labels': list(ms.labels),
        't_minus': ms.t_minus,
        't_plus': ms.t_plus,
        'sample_rate_hz': ms.sample_rate,
        'gamma_norm': dr.gamma_norm,
        'gamma_energy': dr.gamma_energy,
        'gamma_convention': GAMMA_CONVENTION,
        'worst_case_grid_points': Config.WORST_CASE_GRID_POINTS,
        'margin_report': dr.margin_report.to_dict() if dr.margin_report else None,
        'experiments': [r.to_dict() for r in records],
        'correct': sum(r.correct for r in records),
    }


def magnitude_db(response: np.ndarray) -> np.ndarray:
    return 20 * np.log10(np.maximum(np.abs(response), np.finfo(float).tiny))


def write_bode_csv(path: Union[str, Path], ms: ModelSet, i: int, points: int = Config.BODE_GRID_POINTS):
    """Magnitude of the nominal and worst-case responses of model i"""
    entry = ms[i]
    omegas = frequency_grid(points)
    nominal = magnitude_db(entry.tf.frequency_response(omegas))
    try:
        worst = magnitude_db(sample_entry(entry, SampleMode.worst_case()).tf.frequency_response(omegas))
    except UnstableModelError as e:
        logger.warning(f"No worst-case response for {entry.label}: {e.message}")
        worst = nominal
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['omega', 'frequency_hz', 'nominal_db', 'worst_case_db'])
        for omega, a, b in zip(omegas, nominal, worst):
            hz = omega / (2 * np.pi) * ms.sample_rate
            writer.writerow([repr(float(omega)), repr(float(hz)), repr(float(a)), repr(float(b))])


def write_report(out_dir: Union[str, Path], ms: ModelSet, dr: DesignResult,
                 records: Sequence[ExperimentRecord]) -> List[Path]:
    """
    table.txt, report.json, input.csv, residual_<n>_<truth>_<j>.csv for every
    experiment n and candidate j, measurement_<n>_<truth>.csv and
    bode_<i>.csv for every model.
    """
    if not records:
        raise ValueError("No experiments to report")
    out_dir = Path(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    written = []

    table = out_dir / 'table.txt'
    with open(table, 'w', encoding='utf-8') as f:
        f.write(format_table(records, ms.labels))
    written.append(table)

    report = out_dir / 'report.json'
    dump_json(report, report_to_dict(ms, dr, records))
    written.append(report)

    input_csv = out_dir / 'input.csv'
    write_input_csv(input_csv, dr)
    written.append(input_csv)

    for n, record in enumerate(records):
        if record.result.residuals is None:
            continue
        for j, v in enumerate(record.result.residuals):
            path = out_dir / f"residual_{n}_{record.truth_index}_{j}.csv"
            write_signal_csv(path, v)
            written.append(path)
        path = out_dir / f"measurement_{n}_{record.truth_index}.csv"
        write_signal_csv(path, record.y)
        written.append(path)

    for i in ms.indices:
        path = out_dir / f"bode_{i}.csv"
        write_bode_csv(path, ms, i)
        written.append(path)

    logger.info(f"Wrote {len(written)} report files to {out_dir}")
    return written
