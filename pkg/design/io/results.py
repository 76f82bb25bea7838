import json
import os
from pathlib import Path
from typing import Dict, Union

import numpy as np

from design.models import GAMMA_CONVENTION, DesignResult, MarginReport, OptimizerTrace
from systems.io.signals import write_signal_csv
from systems.models import Signal


def design_to_dict(dr: DesignResult) -> Dict:
    return {
        'scope': dr.scope,
        'model_index': dr.model_index,
        'labels': list(dr.labels),
        't_minus': dr.t_minus,
        't_plus': dr.t_plus,
        'feasible': dr.feasible,
        'gamma_energy': dr.gamma_energy,
        'gamma_norm': dr.gamma_norm,
        'gamma_convention': GAMMA_CONVENTION,
        'u_star': {
            'start': dr.u_star.start,
            'values': [float(v) for v in dr.u_star.values[:, 0]],
        },
        'zeta0_star': [float(v) for v in dr.zeta0_star],
        'blocks': [
            {
                'block': l,
                'source': dr.block_index[l][0],
                'candidate': dr.block_index[l][1],
                'scale': dr.block_scales[l],
                'value': dr.per_block_values[l],
            }
            for l in sorted(dr.block_index)
        ],
        'optimizer_trace': dr.optimizer_trace.to_dict(),
        'margin_report': dr.margin_report.to_dict() if dr.margin_report else None,
    }


def design_from_dict(data: Dict) -> DesignResult:
    blocks = sorted(data['blocks'], key=lambda b: b['block'])
    u = data['u_star']
    return DesignResult(
        scope=data['scope'],
        model_index=data['model_index'],
        labels=tuple(data['labels']),
        t_minus=data['t_minus'],
        t_plus=data['t_plus'],
        u_star=Signal(np.array(u['values']), start=u['start']),
        zeta0_star=np.array(data['zeta0_star']),
        gamma_energy=data['gamma_energy'],
        gamma_norm=data['gamma_norm'],
        per_block_values=tuple(b['value'] for b in blocks),
        block_index={b['block']: (b['source'], b['candidate']) for b in blocks},
        block_scales=tuple(b['scale'] for b in blocks),
        optimizer_trace=OptimizerTrace.from_dict(data['optimizer_trace']),
        feasible=data['feasible'],
        margin_report=MarginReport.from_dict(data['margin_report']) if data['margin_report'] else None,
    )


def dump_json(path: Union[str, Path], data: Dict):
    dirname = os.path.dirname(str(path))
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, allow_nan=True)
        f.write('\n')


def dump_design(path: Union[str, Path], dr: DesignResult):
    dump_json(path, design_to_dict(dr))


def load_design(path: Union[str, Path]) -> DesignResult:
    with open(path, 'r', encoding='utf-8') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: invalid JSON ({e})")
    try:
        return design_from_dict(data)
    except KeyError as e:
        raise ValueError(f"{path}: missing field {e}")


def write_input_csv(path: Union[str, Path], dr: DesignResult):
    write_signal_csv(path, dr.u_star)
