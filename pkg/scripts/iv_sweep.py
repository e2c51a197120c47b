#!/usr/bin/env python3
"""
IV / PV 曲线扫描
- 电压扫描: 0 → v_max 等间距，热启动 (上一个点的解作为初值)
- 冷启动: 每个点独立求解，可用 joblib 并行
- 阻抗扫描: Z_Load 对数间隔，映射为工作点
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

import settings
from pv_errors import ParameterError, SolverError, SweepError
from pv_model import Drive
from pv_solver import estimate_open_circuit_voltage, solve_operating_point

logger = logging.getLogger(__name__)

MODEL_SDM = 'SDM_A'
MODEL_PPDM = 'PPDM_A'


@dataclass(frozen=True, eq=False)
class IVCurve:
    """(v, i, p) 采样，v 严格递增，p = v·i"""
    v: np.ndarray
    i: np.ndarray
    model_tag: str
    scenario_id: str = ''
    p: Optional[np.ndarray] = None
    iterations: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.array(self.v, dtype=float)
        i = np.array(self.i, dtype=float)
        if v.ndim != 1 or v.shape != i.shape:
            raise ParameterError(f"IVCurve 尺寸不一致: v {v.shape}, i {i.shape}")
        if v.size > 1 and not np.all(np.diff(v) > 0):
            raise ParameterError("IVCurve 电压必须严格递增")
        object.__setattr__(self, 'v', v)
        object.__setattr__(self, 'i', i)
        object.__setattr__(self, 'p', v * i)

    def __len__(self):
        return self.v.size

    def to_frame(self):
        return pd.DataFrame({'v': self.v, 'i': self.i, 'p': self.p})


@dataclass(frozen=True)
class Peak:
    index: int
    v: float
    p: float


@dataclass(frozen=True)
class PeakSet:
    peaks: tuple = ()

    def __len__(self):
        return len(self.peaks)

    def __iter__(self):
        return iter(self.peaks)

    def global_peak(self):
        return max(self.peaks, key=lambda peak: peak.p) if self.peaks else None


def _solve_cold(model, v, options):
    # 进程间只传回结果或错误文本
    try:
        return solve_operating_point(model.with_drive(Drive.voltage(v)), options=options), None
    except SolverError as exc:
        return None, str(exc)


def solve_voltages(model, voltages, options=None, cold_start=False, n_jobs=1, progress=False):
    """逐个电压求解工作点；热启动时按给定顺序延续"""
    voltages = np.asarray(voltages, dtype=float)
    if cold_start:
        results = Parallel(n_jobs=n_jobs)(delayed(_solve_cold)(model, v, options) for v in voltages)
        points = []
        for v, (point, error) in zip(voltages, results):
            if error is not None:
                raise SweepError(f"扫描点求解失败: {error}", v)
            points.append(point)
        return points

    points = []
    state = None
    for v in tqdm(voltages, desc='IV 扫描', unit='点', disable=not progress, leave=False):
        try:
            point = solve_operating_point(model.with_drive(Drive.voltage(v)), options=options, init=state)
        except SolverError as exc:
            raise SweepError(f"扫描点求解失败: {exc}", v) from exc
        points.append(point)
        state = point.state
    return points


def trace_iv(model, v_max=None, n_points=settings.DEFAULT_N_POINTS, *, model_tag=MODEL_PPDM,
             scenario_id='', options=None, cold_start=False, n_jobs=1, progress=False):
    """电压驱动扫描 IV 曲线"""
    if n_points < 2:
        raise ParameterError(f"n_points 必须 ≥ 2, 实际 {n_points}")
    if v_max is None:
        v_max = settings.V_MAX_MARGIN * estimate_open_circuit_voltage(model)
    if not v_max > 0:
        raise ParameterError(f"v_max 必须 > 0, 实际 {v_max}")

    voltages = np.linspace(0.0, v_max, n_points)
    points = solve_voltages(model, voltages, options, cold_start=cold_start, n_jobs=n_jobs, progress=progress)
    curve = IVCurve(
        v=voltages,
        i=np.array([point.current for point in points]),
        model_tag=model_tag,
        scenario_id=scenario_id,
        iterations=np.array([point.iterations for point in points]),
    )
    logger.info("%s 扫描完成: %d 点, 平均 %.1f 次迭代", model_tag, n_points, curve.iterations.mean())
    return curve


def trace_impedance(model, z_min=None, z_max=None, n_points=settings.DEFAULT_N_POINTS, *,
                    model_tag=MODEL_PPDM, scenario_id='', options=None, progress=False):
    """Z_Load 扫描: 从大阻抗 (近开路) 到小阻抗 (近短路)，结果按电压排序"""
    z_lo, z_hi = settings.Z_SWEEP_RANGE
    z_min = z_lo if z_min is None else z_min
    z_max = z_hi if z_max is None else z_max
    if not 0 < z_min < z_max:
        raise ParameterError(f"阻抗范围非法: [{z_min}, {z_max}]")
    if n_points < 2:
        raise ParameterError(f"n_points 必须 ≥ 2, 实际 {n_points}")

    samples = {}
    state = None
    for z in tqdm(np.geomspace(z_max, z_min, n_points), desc='Z 扫描', disable=not progress, leave=False):
        try:
            point = solve_operating_point(model.with_drive(Drive.impedance(z)), options=options, init=state)
        except SolverError as exc:
            raise SweepError(f"Z_Load={z:.4g} Ω 求解失败: {exc}", state.varr if state is not None else 0.0) from exc
        state = point.state
        samples.setdefault(round(point.voltage, 12), point.current)

    v = np.array(sorted(samples))
    return IVCurve(v=v, i=np.array([samples[key] for key in v]), model_tag=model_tag, scenario_id=scenario_id)


def find_peaks(curve):
    """三点比较找功率局部极大；平台取低电压一侧"""
    if len(curve) < 3:
        raise ParameterError(f"曲线至少需要 3 个采样点, 实际 {len(curve)}")
    p = curve.p
    k = np.arange(1, len(p) - 1)
    hits = k[(p[k] > p[k - 1]) & (p[k] >= p[k + 1])]
    return PeakSet(tuple(Peak(index=int(idx), v=float(curve.v[idx]), p=float(p[idx])) for idx in hits))


def curve_metrics(curve):
    """I_sc, V_oc (零电流线性插值), 采样 MPP, 填充因子"""
    v, i, p = curve.v, curve.i, curve.p
    isc = float(np.interp(0.0, v, i)) if v[0] <= 0.0 else float(i[0])
    crossing = np.flatnonzero(i <= 0.0)
    if crossing.size and crossing[0] > 0:
        k = crossing[0]
        voc = float(v[k - 1] + (v[k] - v[k - 1]) * i[k - 1] / (i[k - 1] - i[k]))
    elif crossing.size:
        voc = float(v[0])
    else:
        voc = float('nan')
    best = int(np.argmax(p))
    denom = isc * voc
    return {
        'isc': isc,
        'voc': voc,
        'p_max': float(p[best]),
        'v_mp': float(v[best]),
        'i_mp': float(i[best]),
        'fill_factor': float(p[best] / denom) if denom > 0 else float('nan'),
    }
