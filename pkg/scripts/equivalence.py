#!/usr/bin/env python3
"""
SDM_A ↔ PPDM_A 等效性检查

聚合模型与逐组件模型在同一端电压下电流相等，当且仅当每一行组件满足
五个加和关系 (光电流、二极管指数项、饱和电流、并联电阻电流、串联电阻电流)。
任何一行组件参数不一致都会破坏二极管指数项的对齐。
"""
import logging
from dataclasses import dataclass, field

import numpy as np

import settings
from pv_errors import ParameterError
from pv_model import Drive, aggregate_panels_to_array, resolve_panel
from pv_solver import assemble_residual, solve_sdm_array

logger = logging.getLogger(__name__)

CONDITIONS = ('photocurrent_sum', 'diode_exponential', 'saturation_sum', 'shunt_current', 'series_current')


@dataclass(frozen=True)
class ConditionResult:
    name: str
    passed: bool
    max_violation: float        # 相对量 (电流类按 I_PH^a, 饱和电流按 I_0^a 归一)
    row_violations: tuple = ()


@dataclass(frozen=True)
class EquivalenceReport:
    uniform: bool
    voltage: float
    conditions: dict = field(default_factory=dict)

    @property
    def all_passed(self):
        return all(result.passed for result in self.conditions.values())

    def to_dict(self):
        return {
            'uniform': self.uniform,
            'voltage': self.voltage,
            'all_passed': self.all_passed,
            'conditions': {
                name: {
                    'passed': result.passed,
                    'max_violation': result.max_violation,
                    'row_violations': list(result.row_violations),
                }
                for name, result in self.conditions.items()
            },
        }


def is_uniform(model, rel_tol=settings.UNIFORM_REL_TOL):
    """所有组件的五参数与 (1,1) 组件在 rel_tol 内一致"""
    return all(
        np.allclose(values, values[0, 0], rtol=rel_tol, atol=0.0)
        for values in model.grid
    )


def build_aggregate_input(env_map, panel):
    """阵列平均辐照/温度 + 聚合参数 → (PanelParams, EnvCondition)"""
    m_p, n_p = env_map.shape
    if env_map.g.size == 0:
        raise ParameterError("EnvMap 为空")
    return aggregate_panels_to_array(panel, m_p, n_p), env_map.mean()


def resolve_aggregate(env_map, panel):
    """SDM_A 在平均条件下的工作参数"""
    params_a, env = build_aggregate_input(env_map, panel)
    return resolve_panel(params_a, env)


def audit_subequalities(model, aggregated, point, rel_tol=settings.AUDIT_REL_TOL):
    """在 PPDM 工作点的端电压下逐行检查五个加和关系

    aggregated: 环境修正后的 SDM_A 参数 (ResolvedPanel)
    """
    if point.state.shape != (model.m_p, model.n_p):
        raise ParameterError(f"工作点尺寸 {point.state.shape} 与阵列 {model.m_p}×{model.n_p} 不符")
    norm = assemble_residual(model, point.state).norm
    if norm > settings.NEWTON_TOL:
        raise ParameterError(f"工作点未收敛 (|r|∞={norm:.3e} A)")

    sdm = solve_sdm_array(aggregated, Drive.voltage(point.voltage), block_diodes=model.block_diodes)
    vd_a = float(sdm.state.vd[0, 0])
    v_a = sdm.voltage
    a = aggregated

    grid = model.grid
    state = point.state
    vpv = state.vpv.copy()
    vpv[0] = np.where(state.blocked, vpv[0], state.varr)
    vpv[-1] = 0.0
    u = state.vd - vpv[1:]
    w = state.vd - vpv[:-1]

    pairs = {
        'photocurrent_sum': (a.iph, grid.iph.sum(axis=1), a.iph),
        'diode_exponential': (a.i0 * np.exp(vd_a / a.alpha), (grid.i0 * np.exp(u / grid.alpha)).sum(axis=1), a.iph),
        'saturation_sum': (a.i0, grid.i0.sum(axis=1), a.i0),
        'shunt_current': (vd_a / a.rsh, (u / grid.rsh).sum(axis=1), a.iph),
        'series_current': ((vd_a - v_a) / a.rs, (w / grid.rs).sum(axis=1), a.iph),
    }
    conditions = {}
    for name in CONDITIONS:
        lhs, rhs, scale = pairs[name]
        rows = np.abs(rhs - lhs) / scale
        worst = float(rows.max())
        conditions[name] = ConditionResult(
            name=name,
            passed=worst <= rel_tol,
            max_violation=worst,
            row_violations=tuple(float(r) for r in rows),
        )
        logger.debug("%s: max=%.3e", name, worst)

    return EquivalenceReport(uniform=is_uniform(model), voltage=point.voltage, conditions=conditions)
