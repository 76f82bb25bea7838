import csv
import os
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from systems.models import Signal


def signal_header(channels: int) -> List[str]:
    if channels == 1:
        return ['k', 'value']
    return ['k'] + [f"value_{c}" for c in range(channels)]


def write_signal_csv(path: Union[str, Path], signal: Signal):
    """
    Rows are `k,value` with k the sample time relative to the window origin
    (negative on the excitation window). Values use the shortest round-trip
    float representation.
    """
    dirname = os.path.dirname(str(path))
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(signal_header(signal.channels))
        for k, row in zip(signal.times, signal.values):
            writer.writerow([int(k)] + [repr(float(v)) for v in row])


def read_signal_csv(path: Union[str, Path], expected_length: Optional[int] = None,
                    expected_start: Optional[int] = None) -> Signal:
    with open(path, 'r', newline='', encoding='utf-8') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[0].strip() != 'k':
            raise ValueError(f"{path}: expected a 'k,value' header")
        times, rows = [], []
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{line_number}: expected {len(header)} columns, got {len(row)}")
            times.append(int(row[0]))
            rows.append([float(v) for v in row[1:]])

    if not rows:
        raise ValueError(f"{path}: no samples")
    times = np.array(times)
    if np.any(np.diff(times) != 1):
        raise ValueError(f"{path}: sample times must be consecutive")
    signal = Signal(np.array(rows), start=int(times[0]))
    if expected_length is not None and len(signal) != expected_length:
        raise ValueError(f"{path}: expected {expected_length} samples, got {len(signal)}")
    if expected_start is not None and signal.start != expected_start:
        raise ValueError(f"{path}: expected first sample at k={expected_start}, got {signal.start}")
    return signal
