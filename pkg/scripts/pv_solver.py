#!/usr/bin/env python3
"""
PPDM_A / SDM_A 直流工作点求解

未知量 (每串 2·m_p 个 + 阵列端电压):
    [V_D(0..m-1), V_PV(1..m-1), I_out 或 V_top] × n_p 串, V_arr
V_PV 顶行直接替换为 V_arr (阻断的串除外)，底行替换为 0，不保留绑定方程。

方程顺序与未知量相同: 每串 [N_D(0..m-1), N_P(0..m-1)]，最后一行为阵列方程
(阻抗驱动 Σ I_out - V_arr/Z = 0, 电压驱动 V_arr - V_set = 0)。

阻断二极管 (理想) 用有效集合处理: I_out < 0 的串被断开，
其顶端节点变为自由未知量；顶端电压高于 V_arr 时重新接入。
"""
import logging
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import MatrixRankWarning, spsolve

import settings
from pv_errors import (
    ActiveSetError,
    MaxIterationsError,
    ParameterError,
    SingularJacobianError,
)
from pv_model import ArrayModel, Drive, open_circuit_voltage

logger = logging.getLogger(__name__)

EXP_CLAMP = 60.0
RELEASE_TOL = 1e-9


@dataclass(frozen=True)
class NewtonOptions:
    max_iters: int = settings.NEWTON_MAX_ITERS
    tol: float = settings.NEWTON_TOL
    damping: int = settings.NEWTON_DAMPING
    vd_limit: Optional[float] = None          # None → 2·max(α)
    active_set_rounds: Optional[int] = None   # None → 2·n_p + 2

    def __post_init__(self):
        if self.max_iters < 1:
            raise ParameterError(f"max_iters 必须 ≥ 1, 实际 {self.max_iters}")
        if not self.tol > 0:
            raise ParameterError(f"tol 必须 > 0, 实际 {self.tol}")
        if self.damping < 0:
            raise ParameterError(f"damping 必须 ≥ 0, 实际 {self.damping}")
        if self.vd_limit is not None and not self.vd_limit > 0:
            raise ParameterError(f"vd_limit 必须 > 0, 实际 {self.vd_limit}")


@dataclass(frozen=True, eq=False)
class SolverState:
    """完整未知量: vd (m,n), vpv (m+1,n) 底行接地, iout (n,), varr"""
    vd: np.ndarray
    vpv: np.ndarray
    iout: np.ndarray
    varr: float
    blocked: Optional[np.ndarray] = None

    def __post_init__(self):
        vd = np.array(self.vd, dtype=float)
        vpv = np.array(self.vpv, dtype=float)
        iout = np.array(self.iout, dtype=float)
        m, n = vd.shape
        if vpv.shape != (m + 1, n) or iout.shape != (n,):
            raise ParameterError(f"SolverState 尺寸不一致: vd {vd.shape}, vpv {vpv.shape}, iout {iout.shape}")
        blocked = np.zeros(n, dtype=bool) if self.blocked is None else np.array(self.blocked, dtype=bool)
        values = np.concatenate([vd.ravel(), vpv.ravel(), iout, [self.varr]])
        if not np.all(np.isfinite(values)):
            raise ParameterError("SolverState 含非有限值")
        object.__setattr__(self, 'vd', vd)
        object.__setattr__(self, 'vpv', vpv)
        object.__setattr__(self, 'iout', iout)
        object.__setattr__(self, 'varr', float(self.varr))
        object.__setattr__(self, 'blocked', blocked)

    @property
    def shape(self):
        return self.vd.shape

    @property
    def array_current(self):
        return float(self.iout.sum())


@dataclass(frozen=True, eq=False)
class Residual:
    values: np.ndarray
    n_clamped: int = 0

    @property
    def norm(self):
        return float(np.max(np.abs(self.values)))

    @property
    def worst_index(self):
        return int(np.argmax(np.abs(self.values)))


@dataclass(frozen=True, eq=False)
class OperatingPoint:
    state: SolverState
    residual_norm: float
    iterations: int
    active_blocks: np.ndarray   # True = 阻断二极管导通

    @property
    def voltage(self):
        return self.state.varr

    @property
    def current(self):
        return self.state.array_current

    @property
    def power(self):
        return self.voltage * self.current


def _diode_eval(i0, alpha, v):
    """Shockley 电流、电导与钳位标记；指数 > EXP_CLAMP 时线性外推"""
    x = np.asarray(v, dtype=float) / alpha
    clamped = x > EXP_CLAMP
    e = np.exp(np.minimum(x, EXP_CLAMP))
    overshoot = np.where(clamped, x - EXP_CLAMP, 0.0)
    current = i0 * (e * (1.0 + overshoot) - 1.0)
    conductance = (i0 / alpha) * e
    return current, conductance, clamped


def shockley_current(diode, v):
    """I = I_0 (exp(v/α) - 1)，指数参数钳位在 60"""
    current, _, clamped = _diode_eval(diode.i0, diode.alpha, v)
    if np.any(clamped):
        logger.debug("Shockley 指数钳位: %d 个点", int(np.count_nonzero(clamped)))
    return float(current) if np.ndim(current) == 0 else current


def _check_dims(model, state):
    if state.shape != (model.m_p, model.n_p):
        raise ParameterError(f"状态尺寸 {state.shape} 与阵列 {model.m_p}×{model.n_p} 不符")


def _terminal_voltages(state):
    """按消元规则修正 vpv: 导通串顶行 = varr, 底行 = 0"""
    vpv = state.vpv.copy()
    vpv[0] = np.where(state.blocked, state.vpv[0], state.varr)
    vpv[-1] = 0.0
    return vpv


def assemble_residual(model, state):
    """PPDM_A 的 KCL 残差 (A)"""
    _check_dims(model, state)
    grid = model.grid
    vpv = _terminal_voltages(state)
    u = state.vd - vpv[1:]     # 二极管/并联电阻两端
    w = state.vd - vpv[:-1]    # 串联电阻两端
    iout = np.where(state.blocked, 0.0, state.iout)

    i_d, _, clamp_d = _diode_eval(grid.i0, grid.alpha, u)
    node_d = grid.iph - i_d - u / grid.rsh - w / grid.rs
    node_p = w / grid.rs - iout[None, :]
    n_clamped = int(np.count_nonzero(clamp_d))
    if model.bypass is not None:
        i_b, _, clamp_b = _diode_eval(model.bypass.i0, model.bypass.alpha, vpv[1:] - vpv[:-1])
        node_p = node_p + i_b
        n_clamped += int(np.count_nonzero(clamp_b))

    if model.drive.mode == 'impedance':
        array_eq = iout.sum() - state.varr / model.drive.value
    else:
        array_eq = state.varr - model.drive.value

    values = np.append(np.concatenate([node_d, node_p]).T.ravel(), array_eq)
    return Residual(values=values, n_clamped=n_clamped)


def assemble_jacobian(model, state):
    """解析 Jacobian (CSR)，每串带状 + 一行阵列耦合"""
    _check_dims(model, state)
    m, n = state.shape
    size = 2 * m * n + 1
    grid = model.grid
    vpv = _terminal_voltages(state)
    u = state.vd - vpv[1:]
    _, g_d, _ = _diode_eval(grid.i0, grid.alpha, u)
    if model.bypass is not None:
        _, g_b, _ = _diode_eval(model.bypass.i0, model.bypass.alpha, vpv[1:] - vpv[:-1])
    else:
        g_b = np.zeros((m, n))

    base = 2 * m * np.arange(n)
    i = np.arange(m)[:, None]
    row_d = base + i
    row_p = row_d + m
    x_col = base + 2 * m - 1
    col_top = np.where(i == 0, np.where(state.blocked, x_col, size - 1)[None, :], base + m + i - 1)
    col_next = np.where(i == m - 1, -1, base + m + i)
    inv_rs = 1.0 / grid.rs
    inv_rsh = 1.0 / grid.rsh

    entries = [
        (row_d, row_d, -g_d - inv_rsh - inv_rs),
        (row_d, col_top, inv_rs),
        (row_d, col_next, g_d + inv_rsh),
        (row_p, row_d, inv_rs),
        (row_p, col_top, -inv_rs - g_b),
        (row_p, col_next, g_b),
    ]
    conducting = ~state.blocked
    iout_cols = x_col[conducting]
    entries.append((row_p[:, conducting], np.broadcast_to(iout_cols, (m, iout_cols.size)), -1.0))
    if model.drive.mode == 'impedance':
        entries.append((size - 1, iout_cols, 1.0))
        entries.append((size - 1, size - 1, -1.0 / model.drive.value))
    else:
        entries.append((size - 1, size - 1, 1.0))

    rows, cols, vals = [], [], []
    for r, c, v in entries:
        r, c, v = (np.ravel(a) for a in np.broadcast_arrays(r, c, v))
        keep = c >= 0
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(v[keep])
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    )


def pack_state(state):
    m, n = state.shape
    block = np.empty((2 * m, n))
    block[:m] = state.vd
    block[m:2 * m - 1] = state.vpv[1:m]
    block[2 * m - 1] = np.where(state.blocked, state.vpv[0], state.iout)
    return np.append(block.T.ravel(), state.varr)


def unpack_state(x, m, n, blocked):
    block = np.asarray(x[:-1]).reshape(n, 2 * m).T
    varr = float(x[-1])
    vpv = np.zeros((m + 1, n))
    vpv[1:m] = block[m:2 * m - 1]
    top = block[2 * m - 1]
    vpv[0] = np.where(blocked, top, varr)
    return SolverState(
        vd=block[:m],
        vpv=vpv,
        iout=np.where(blocked, 0.0, top),
        varr=varr,
        blocked=blocked,
    )


def _voltage_mask(m, n, blocked):
    """受步长限制的电压未知量 (不含 I_out 与 V_arr)"""
    mask = np.ones((2 * m, n), dtype=bool)
    mask[2 * m - 1] = blocked
    return np.append(mask.T.ravel(), False)


def _linear_solve(jacobian, rhs):
    with warnings.catch_warnings():
        warnings.simplefilter('error', MatrixRankWarning)
        try:
            step = spsolve(jacobian.tocsc(), rhs)
        except (MatrixRankWarning, RuntimeError) as exc:
            raise SingularJacobianError(f"Jacobian 奇异，检查参数是否退化: {exc}") from exc
    step = np.atleast_1d(step)
    if not np.all(np.isfinite(step)):
        raise SingularJacobianError("Newton 步含非有限值，Jacobian 可能奇异")
    return step


def _finite_norm(residual):
    norm = residual.norm
    return norm if np.isfinite(norm) else np.inf


def newton_solve(residual_fn, jacobian_fn, x0, options, voltage_mask, vd_limit):
    """阻尼 Newton: 全步 → 残差不降则步长减半; 电压步长整体缩放到 ≤ vd_limit"""
    x = np.array(x0, dtype=float)
    residual = residual_fn(x)
    norm = _finite_norm(residual)
    for iteration in range(options.max_iters):
        if norm <= options.tol:
            return x, residual, iteration
        step = _linear_solve(jacobian_fn(x), -residual.values)
        if voltage_mask.any():
            largest = np.max(np.abs(step[voltage_mask]))
            if largest > vd_limit:
                step *= vd_limit / largest
        lam = 1.0
        best = None
        for _ in range(options.damping + 1):
            trial = x + lam * step
            trial_residual = residual_fn(trial)
            trial_norm = _finite_norm(trial_residual)
            if best is None or trial_norm < best[2]:
                best = (trial, trial_residual, trial_norm)
            if trial_norm < norm:
                break
            lam *= 0.5
        x, residual, norm = best
        logger.debug("Newton #%d |r|∞=%.3e λ=%.3g 钳位=%d", iteration + 1, norm, lam, residual.n_clamped)
    if norm <= options.tol:
        return x, residual, options.max_iters
    raise MaxIterationsError("Newton 未收敛", norm, residual.worst_index, options.max_iters)


@lru_cache(maxsize=128)
def _panel_vocs(panels):
    return np.array([[open_circuit_voltage(p) for p in row] for row in panels])


def panel_open_circuit_voltages(model):
    return _panel_vocs(model.panels)


def estimate_open_circuit_voltage(model):
    """阵列开路电压上界: 各串组件开路电压之和的最大值"""
    return float(panel_open_circuit_voltages(model).sum(axis=0).max())


def initial_state(model):
    """线性电压梯形初值: 组件二极管电压按行位置分配，I_out = 0.9·串内最小光电流"""
    m, n = model.m_p, model.n_p
    grid = model.grid
    vocs = panel_open_circuit_voltages(model)
    iout = 0.9 * grid.iph.min(axis=0)
    if model.drive.mode == 'voltage':
        v0 = model.drive.value
    else:
        v0 = min(model.drive.value * iout.sum() / 0.9, 0.8 * estimate_open_circuit_voltage(model))
    v0 = max(v0, 0.0)
    ladder = (m - np.arange(m + 1)) / m
    vpv = np.outer(ladder, np.ones(n)) * v0
    diode = np.clip(v0 / m + iout[None, :] * grid.rs, 0.0, np.maximum(vocs, 0.0))
    return SolverState(vd=vpv[1:] + diode, vpv=vpv, iout=iout, varr=v0)


def _rebind(state, blocked):
    """切换有效集合: 新断开的串顶端取 V_arr，新接入的串电流从 0 开始"""
    vpv = state.vpv.copy()
    vpv[0] = np.where(blocked & state.blocked, state.vpv[0], state.varr)
    iout = np.where(blocked | state.blocked, 0.0, state.iout)
    return SolverState(vd=state.vd, vpv=vpv, iout=iout, varr=state.varr, blocked=blocked)


def solve_operating_point(model, options=None, init=None):
    """阻尼 Newton + 阻断二极管有效集合，返回收敛的 OperatingPoint"""
    options = options or NewtonOptions()
    m, n = model.m_p, model.n_p
    state = init if init is not None else initial_state(model)
    _check_dims(model, state)
    blocked = state.blocked.copy() if model.block_diodes else np.zeros(n, dtype=bool)
    state = _rebind(state, blocked) if model.block_diodes else SolverState(
        vd=state.vd, vpv=state.vpv, iout=state.iout, varr=state.varr)
    vd_limit = options.vd_limit or 2.0 * float(model.grid.alpha.max())
    rounds = options.active_set_rounds or 2 * n + 2

    total = 0
    for _ in range(rounds):
        def residual_fn(x, blocked=blocked):
            return assemble_residual(model, unpack_state(x, m, n, blocked))

        def jacobian_fn(x, blocked=blocked):
            return assemble_jacobian(model, unpack_state(x, m, n, blocked))

        x, residual, iterations = newton_solve(
            residual_fn, jacobian_fn, pack_state(state), options, _voltage_mask(m, n, blocked), vd_limit)
        total += iterations
        state = unpack_state(x, m, n, blocked)
        if not model.block_diodes:
            break
        release = blocked & (state.vpv[0] > state.varr + RELEASE_TOL * max(1.0, abs(state.varr)))
        new_blocked = (blocked | (state.iout < 0)) & ~release
        if np.array_equal(new_blocked, blocked):
            break
        logger.debug("阻断二极管切换: %s → %s", blocked.astype(int), new_blocked.astype(int))
        blocked = new_blocked
        state = _rebind(state, blocked)
    else:
        raise ActiveSetError(f"阻断二极管有效集合 {rounds} 轮内未稳定 (V_arr={state.varr:.4f} V)")

    return OperatingPoint(state=state, residual_norm=residual.norm, iterations=total, active_blocks=~blocked)


def sdm_array_model(params_a, drive=None, block_diodes=True):
    """SDM_A = 聚合参数的 1×1 阵列 (无旁路二极管)"""
    return ArrayModel(
        m_p=1,
        n_p=1,
        panels=((params_a,),),
        bypass=None,
        block_diodes=block_diodes,
        drive=drive or Drive.voltage(0.0),
    )


def solve_sdm_array(params_a, drive, options=None, init=None, block_diodes=True):
    """求解聚合阵列模型 (V_D^a, V_PV^a, I_out^a)"""
    return solve_operating_point(sdm_array_model(params_a, drive, block_diodes), options=options, init=init)
