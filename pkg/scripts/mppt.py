#!/usr/bin/env python3
"""
最大功率点 (MPP)

- SDM_A: 对二极管电压做标量求根 (dP/dV_D = 0)，等价于解析条件
      I = V (I_0 R_SH χ + α) / (I_0 R_S R_SH χ + α (R_S + R_SH)),  χ = exp((V + I R_S)/α)
- PPDM_A: 粗扫描找全局最好的采样点，再在相邻两个采样之间做黄金分割细化
- 对比: 相对误差 100·(SDM - PPDM)/PPDM
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

import settings
from iv_sweep import MODEL_PPDM, MODEL_SDM, IVCurve, solve_voltages
from pv_errors import DegenerateParametersError, ParameterError, RefinementError, SolverError
from pv_model import Drive, open_circuit_voltage
from pv_solver import estimate_open_circuit_voltage, shockley_current, solve_operating_point

logger = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
BYPASS_ON_CURRENT = 1e-3   # A


@dataclass(frozen=True)
class MppResult:
    p: float
    v: float
    i: float
    model_tag: str
    refinement_iters: int = 0
    string_currents: tuple = ()
    bypass_active: tuple = ()      # ((row, col), ...) 0-based


@dataclass(frozen=True)
class ModelComparison:
    sdm: MppResult
    ppdm: MppResult

    def __post_init__(self):
        for name in ('p', 'v', 'i'):
            if getattr(self.ppdm, name) == 0:
                raise ParameterError(f"PPDM 基准 {name} 为 0，无法计算相对误差")

    @property
    def err_p(self):
        return relative_error(self.sdm.p, self.ppdm.p)

    @property
    def err_v(self):
        return relative_error(self.sdm.v, self.ppdm.v)

    @property
    def err_i(self):
        return relative_error(self.sdm.i, self.ppdm.i)

    def as_row(self):
        return {
            'p_sdm': self.sdm.p, 'v_sdm': self.sdm.v, 'i_sdm': self.sdm.i,
            'p_ppdm': self.ppdm.p, 'v_ppdm': self.ppdm.v, 'i_ppdm': self.ppdm.i,
            'err_p': self.err_p, 'err_v': self.err_v, 'err_i': self.err_i,
        }


def relative_error(sdm_value, ppdm_value):
    """百分比误差，以 PPDM 为基准"""
    if ppdm_value == 0:
        raise ParameterError("PPDM 基准值为 0，无法计算相对误差")
    return 100.0 * (sdm_value - ppdm_value) / ppdm_value


def sdm_mpp(params_a):
    """聚合 SDM 的 MPP"""
    iph, i0, alpha, rs, rsh = params_a.iph, params_a.i0, params_a.alpha, params_a.rs, params_a.rsh
    if iph <= 0:
        raise DegenerateParametersError(f"I_PH={iph} ≤ 0，没有正功率区间")
    vd_oc = open_circuit_voltage(params_a)

    def branch(vd):
        current = iph - i0 * math.expm1(vd / alpha) - vd / rsh
        return vd - current * rs, current

    def dp_dvd(vd):
        v, current = branch(vd)
        g = i0 / alpha * math.exp(vd / alpha) + 1.0 / rsh
        return current * (1.0 + rs * g) - v * g

    if not (vd_oc > 0 and dp_dvd(0.0) > 0 > dp_dvd(vd_oc)):
        raise DegenerateParametersError(f"(0, {vd_oc:.4g}) V 内找不到 MPP")
    vd, info = brentq(dp_dvd, 0.0, vd_oc, xtol=1e-13, rtol=1e-15, full_output=True)
    v, current = branch(vd)
    if v <= 0:
        raise DegenerateParametersError(f"MPP 端电压 {v:.4g} V ≤ 0")
    logger.debug("SDM MPP: V=%.4f I=%.4f (%d 次迭代)", v, current, info.iterations)
    return MppResult(p=v * current, v=v, i=current, model_tag=MODEL_SDM, refinement_iters=info.iterations)


def _bypass_active(model, point):
    if model.bypass is None:
        return ()
    vpv = point.state.vpv.copy()
    vpv[0] = np.where(point.state.blocked, vpv[0], point.state.varr)
    vpv[-1] = 0.0
    i_b = shockley_current(model.bypass, vpv[1:] - vpv[:-1])
    return tuple((int(r), int(c)) for r, c in zip(*np.nonzero(i_b > BYPASS_ON_CURRENT)))


def golden_section_max(f, lo, hi, tol):
    """区间 [lo, hi] 上单峰函数的最大值，返回 (x, f(x), 迭代次数)"""
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    iterations = 0
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
        iterations += 1
    return (c, fc, iterations) if fc > fd else (d, fd, iterations)


def ppdm_mpp(model, coarse_points=settings.MPP_COARSE_POINTS, v_tol=settings.MPP_V_TOL, options=None):
    """阵列全局 MPP: 粗扫描 + 黄金分割细化"""
    if coarse_points < 3:
        raise ParameterError(f"coarse_points 必须 ≥ 3, 实际 {coarse_points}")
    v_max = settings.V_MAX_MARGIN * estimate_open_circuit_voltage(model)
    voltages = np.linspace(0.0, v_max, coarse_points)
    points = solve_voltages(model, voltages, options)
    coarse = IVCurve(v=voltages, i=[p.current for p in points], model_tag=MODEL_PPDM)
    k = int(np.argmax(coarse.p))
    lo, hi = voltages[max(k - 1, 0)], voltages[min(k + 1, coarse_points - 1)]

    solved = {float(voltages[k]): points[k]}

    def power(v):
        nearest = solved[min(solved, key=lambda known: abs(known - v))]
        point = solve_operating_point(model.with_drive(Drive.voltage(v)), options=options, init=nearest.state)
        solved[float(v)] = point
        return point.power

    try:
        v_best, p_best, iterations = golden_section_max(power, lo, hi, v_tol)
    except SolverError as exc:
        raise RefinementError(f"MPP 细化失败: {exc}", (lo, hi)) from exc

    if p_best < coarse.p[k]:
        v_best = float(voltages[k])
    point = solved[float(v_best)]
    logger.info("PPDM MPP: V=%.4f I=%.4f P=%.2f (粗扫描 #%d, 细化 %d 次)",
                point.voltage, point.current, point.power, k, iterations)
    return MppResult(
        p=point.power,
        v=point.voltage,
        i=point.current,
        model_tag=MODEL_PPDM,
        refinement_iters=iterations,
        string_currents=tuple(float(c) for c in point.state.iout),
        bypass_active=_bypass_active(model, point),
    )


def compare_models(sdm, ppdm):
    """两个 MppResult 的相对误差 (只做算术，不求解)"""
    return ModelComparison(sdm=sdm, ppdm=ppdm)
