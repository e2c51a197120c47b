#!/usr/bin/env python3
"""
异常类型
CLI 退出码: ConfigError → 2, SolverError → 3
"""


class PvLatticeError(Exception):
    """所有项目异常的基类"""


class ParameterError(PvLatticeError, ValueError):
    """物理参数非法或前置条件不满足"""


class ConfigError(PvLatticeError):
    """场景配置文件错误"""


class SolverError(PvLatticeError):
    """非线性求解失败"""


class MaxIterationsError(SolverError):
    def __init__(self, message, last_norm, worst_index, iterations):
        super().__init__(f"{message} (|r|∞={last_norm:.3e} A, 最差方程 #{worst_index}, {iterations} 次迭代)")
        self.last_norm = last_norm
        self.worst_index = worst_index
        self.iterations = iterations


class SingularJacobianError(SolverError):
    """Jacobian 奇异，通常是参数退化（例如 rs 或 rsh 接近 0）"""


class ActiveSetError(SolverError):
    """阻断二极管的有效集合没有稳定下来"""


class DegenerateParametersError(SolverError):
    """参数退化，(0, V_oc) 内找不到 MPP"""


class SweepError(SolverError):
    def __init__(self, message, voltage):
        super().__init__(f"{message} (V={voltage:.4f} V)")
        self.voltage = voltage


class RefinementError(SolverError):
    def __init__(self, message, bracket):
        lo, hi = bracket
        super().__init__(f"{message} (区间 [{lo:.4f}, {hi:.4f}] V)")
        self.bracket = bracket
