#!/usr/bin/env python3
"""
光伏单二极管模型 (SDM) - 参数与环境修正

层级聚合: 电池 → 组件 (m_c 串 × n_c 并) → 阵列 (m_p 串 × n_p 并)
- 电流类参数 (I_PH, I_0) × 并联数
- 热电压 α 通过串联数 m_c 缩放
- 电阻 (R_S, R_SH) × 串联数 / 并联数

环境修正: I_PH 随辐照/温度线性变化, I_0 随温度 (含带隙), R_SH 随辐照线性变化,
R_S 与环境无关。所有类型构造后不可变，函数均为纯函数。
"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq

from pv_errors import ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhysConstants:
    q: float = 1.602176634e-19   # 元电荷 (C)
    k: float = 1.380649e-23      # 玻尔兹曼常数 (J/K)

    @property
    def k_ev(self):
        """玻尔兹曼常数 (eV/K)"""
        return self.k / self.q


PHYS = PhysConstants()

G_MIN = 1.0            # W/m², 全遮挡时并联电阻的辐照下限
EXP_LIMIT = 700.0      # saturation_current 指数保护
T_GAP_POLE = 1108.0    # band_gap 分母奇点 (K)


def band_gap(t):
    """带隙能量 E_g(T) (eV)"""
    if t <= 0:
        raise ParameterError(f"温度必须 > 0 K, 实际 {t}")
    if math.isclose(t, T_GAP_POLE, rel_tol=0.0, abs_tol=1e-9):
        raise ParameterError("band_gap 在 T=1108 K 处奇异")
    return 1.16 - 7.02e-4 * (t * t / (t - T_GAP_POLE))


@dataclass(frozen=True)
class PanelParams:
    """五参数 SDM + 参考条件 + 结构计数"""
    iph_ref: float
    i0_ref: float
    ideality: float
    rs: float
    rsh_ref: float
    m_c: int = 72
    n_c: int = 1
    gamma_t: float = 5e-4
    g_ref: float = 1000.0
    t_ref: float = 298.15
    eg_ref: Optional[float] = None

    def __post_init__(self):
        if not self.iph_ref > 0:
            raise ParameterError(f"iph_ref 必须 > 0, 实际 {self.iph_ref}")
        if not self.i0_ref > 0:
            raise ParameterError(f"i0_ref 必须 > 0, 实际 {self.i0_ref}")
        if not 0.5 <= self.ideality <= 2.5:
            raise ParameterError(f"理想因子 η 必须在 [0.5, 2.5], 实际 {self.ideality}")
        if not (self.rs > 0 and self.rsh_ref > 0):
            raise ParameterError(f"电阻必须 > 0 (rs={self.rs}, rsh_ref={self.rsh_ref})")
        if self.m_c < 1 or self.n_c < 1:
            raise ParameterError(f"m_c, n_c 必须 ≥ 1 (m_c={self.m_c}, n_c={self.n_c})")
        if not (self.g_ref > 0 and self.t_ref > 0):
            raise ParameterError(f"参考条件必须 > 0 (g_ref={self.g_ref}, t_ref={self.t_ref})")
        if self.eg_ref is None:
            object.__setattr__(self, 'eg_ref', band_gap(self.t_ref))


@dataclass(frozen=True)
class EnvCondition:
    g: float    # 辐照度 (W/m²)
    t: float    # 电池温度 (K)

    def __post_init__(self):
        if not self.g >= 0:
            raise ParameterError(f"辐照度必须 ≥ 0, 实际 {self.g}")
        if not self.t > 0:
            raise ParameterError(f"温度必须 > 0 K, 实际 {self.t}")


STC = EnvCondition(g=1000.0, t=298.15)


@dataclass(frozen=True)
class ResolvedPanel:
    """工作条件下的五参数"""
    iph: float
    i0: float
    alpha: float
    rs: float
    rsh: float

    def __post_init__(self):
        if self.iph < 0 or not (self.i0 > 0 and self.alpha > 0 and self.rs > 0 and self.rsh > 0):
            raise ParameterError(f"工作参数非法: {self}")


@dataclass(frozen=True)
class DiodeParams:
    i0: float
    alpha: float

    def __post_init__(self):
        if not (self.i0 > 0 and self.alpha > 0):
            raise ParameterError(f"二极管参数必须 > 0 (i0={self.i0}, alpha={self.alpha})")


@dataclass(frozen=True)
class Drive:
    """负载驱动: 阻抗 Z_Load (Ω) 或固定端电压 (V)"""
    mode: str
    value: float

    def __post_init__(self):
        if self.mode not in ('impedance', 'voltage'):
            raise ParameterError(f"未知驱动模式: {self.mode}")
        if self.mode == 'impedance' and not self.value > 0:
            raise ParameterError(f"Z_Load 必须 > 0, 实际 {self.value}")

    @classmethod
    def voltage(cls, v):
        return cls('voltage', float(v))

    @classmethod
    def impedance(cls, z):
        return cls('impedance', float(z))


class PanelGrid(NamedTuple):
    iph: np.ndarray
    i0: np.ndarray
    alpha: np.ndarray
    rs: np.ndarray
    rsh: np.ndarray


@dataclass(frozen=True, eq=False)
class EnvMap:
    """m_p × n_p 网格上每块组件的辐照与温度"""
    g: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        t = np.array(self.t, dtype=float)
        if g.ndim != 2 or g.shape != t.shape or g.size == 0:
            raise ParameterError(f"EnvMap 必须是非空矩形网格 (g {g.shape}, t {t.shape})")
        if not (np.all(g >= 0) and np.all(t > 0)):
            raise ParameterError("EnvMap 含非法辐照或温度")
        g.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, 'g', g)
        object.__setattr__(self, 't', t)

    @classmethod
    def uniform(cls, m_p, n_p, env):
        return cls(np.full((m_p, n_p), env.g), np.full((m_p, n_p), env.t))

    @property
    def shape(self):
        return self.g.shape

    def with_override(self, row, col, g=None, t=None):
        """返回覆盖 (row, col) 后的新网格 (0-based)"""
        gg, tt = self.g.copy(), self.t.copy()
        if g is not None:
            gg[row, col] = g
        if t is not None:
            tt[row, col] = t
        return EnvMap(gg, tt)

    def condition(self, row, col):
        return EnvCondition(g=float(self.g[row, col]), t=float(self.t[row, col]))

    def mean(self):
        return EnvCondition(g=float(self.g.mean()), t=float(self.t.mean()))


@dataclass(frozen=True)
class ArrayModel:
    """阵列拓扑 + 每块组件的工作参数 + 二极管设置 + 驱动"""
    m_p: int
    n_p: int
    panels: tuple
    bypass: Optional[DiodeParams] = None
    block_diodes: bool = True
    drive: Drive = field(default_factory=lambda: Drive.voltage(0.0))

    def __post_init__(self):
        if self.m_p < 1 or self.n_p < 1:
            raise ParameterError(f"阵列尺寸必须 ≥ 1 (m_p={self.m_p}, n_p={self.n_p})")
        panels = tuple(tuple(row) for row in self.panels)
        if len(panels) != self.m_p or any(len(row) != self.n_p for row in panels):
            raise ParameterError(f"组件网格尺寸与 {self.m_p}×{self.n_p} 不符")
        object.__setattr__(self, 'panels', panels)

    @cached_property
    def grid(self):
        """(m_p, n_p) 参数数组，供向量化残差使用"""
        def collect(name):
            return np.array([[getattr(p, name) for p in row] for row in self.panels], dtype=float)
        return PanelGrid(*(collect(name) for name in PanelGrid._fields))

    def with_drive(self, drive):
        return dataclasses.replace(self, drive=drive)


def _scale(params, series, parallel):
    if series < 1 or parallel < 1:
        raise ParameterError(f"串/并联数必须 ≥ 1 (series={series}, parallel={parallel})")
    ratio = series / parallel
    return dataclasses.replace(
        params,
        iph_ref=params.iph_ref * parallel,
        i0_ref=params.i0_ref * parallel,
        rs=params.rs * ratio,
        rsh_ref=params.rsh_ref * ratio,
        m_c=params.m_c * series,
        n_c=params.n_c * parallel,
    )


def aggregate_cells_to_panel(cell, m_c, n_c):
    """单体电池参数 → 组件参数

    I_0 按物理方向聚合: I_0^p = n_c · I_0^c (印刷公式方向相反，见 DESIGN.md)
    """
    if cell.m_c != 1 or cell.n_c != 1:
        raise ParameterError(f"电池参数必须是 m_c=n_c=1 (实际 {cell.m_c}×{cell.n_c})")
    return _scale(cell, m_c, n_c)


def aggregate_panels_to_array(panel, m_p, n_p):
    """组件参数 → 阵列聚合参数 (SDM_A)，假设所有组件一致"""
    return _scale(panel, m_p, n_p)


def photocurrent(params, env):
    """I_PH = I_PH,ref · (G/G_ref) · [1 + γ_T (T - T_ref)]"""
    return params.iph_ref * (env.g / params.g_ref) * (1.0 + params.gamma_t * (env.t - params.t_ref))


def saturation_current(params, t):
    """I_0(T) = I_0,ref · (T/T_ref)^3 · exp(E_g,ref/(k T_ref) - E_g(T)/(k T))"""
    if not t > 0:
        raise ParameterError(f"温度必须 > 0 K, 实际 {t}")
    k_ev = PHYS.k_ev
    exponent = params.eg_ref / (k_ev * params.t_ref) - band_gap(t) / (k_ev * t)
    if abs(exponent) > EXP_LIMIT:
        raise ParameterError(f"I_0 温度修正指数溢出 ({exponent:.1f}), T={t} K")
    return params.i0_ref * (t / params.t_ref) ** 3 * math.exp(exponent)


def shunt_resistance(params, g):
    """R_SH = R_SH,ref · G/G_ref"""
    if not g > 0:
        raise ParameterError(f"shunt_resistance 需要 G > 0 (实际 {g})，全遮挡请先钳位到 G_MIN")
    return params.rsh_ref * (g / params.g_ref)


def thermal_voltage(params, t):
    """α = η k T m_c / q"""
    return params.ideality * PHYS.k * t * params.m_c / PHYS.q


def resolve_panel(params, env):
    """组合环境修正，得到工作条件下的 ResolvedPanel"""
    return ResolvedPanel(
        iph=photocurrent(params, env),
        i0=saturation_current(params, env.t),
        alpha=thermal_voltage(params, env.t),
        rs=params.rs,
        rsh=shunt_resistance(params, max(env.g, G_MIN)),
    )


def open_circuit_voltage(panel):
    """单个 ResolvedPanel 的开路电压 (标量求根)"""
    if panel.iph <= 0:
        return 0.0

    def net_current(v):
        return panel.iph - panel.i0 * math.expm1(v / panel.alpha) - v / panel.rsh

    v_hi = panel.alpha * math.log1p(panel.iph / panel.i0)
    return brentq(net_current, 0.0, v_hi, xtol=1e-12)


def bypass_from_threshold(threshold=0.7, t=300.0, ideality=1.0, i_on=1.0):
    """由阈值电压构造旁路二极管: α = η k T / q，I_0 使得阈值处导通 i_on"""
    if not (threshold > 0 and i_on > 0):
        raise ParameterError(f"旁路二极管阈值/导通电流必须 > 0 ({threshold}, {i_on})")
    alpha = ideality * PHYS.k * t / PHYS.q
    return DiodeParams(i0=i_on / math.expm1(threshold / alpha), alpha=alpha)


def build_array_model(panel, env_map, bypass=None, block_diodes=True, drive=None):
    """按 EnvMap 逐块修正参数，组装 PPDM_A 阵列模型"""
    m_p, n_p = env_map.shape
    panels = tuple(
        tuple(resolve_panel(panel, env_map.condition(i, j)) for j in range(n_p))
        for i in range(m_p)
    )
    model = ArrayModel(
        m_p=m_p,
        n_p=n_p,
        panels=panels,
        bypass=bypass,
        block_diodes=block_diodes,
        drive=drive or Drive.voltage(0.0),
    )
    logger.debug("阵列模型 %d×%d, 旁路=%s, 阻断=%s", m_p, n_p, bypass is not None, block_diodes)
    return model


def et_m672395_panel(**overrides):
    """ET-M672395 组件 (STC 参数)"""
    values = dict(iph_ref=10.4, i0_ref=2.4416e-11, ideality=1.02, rs=0.3719, rsh_ref=807.2)
    values.update(overrides)
    return PanelParams(**values)
