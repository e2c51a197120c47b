#!/usr/bin/env python3
"""
项目路径、默认参数与日志配置
"""
import logging
import os
from pathlib import Path

PROJECT_ROOT = Path(__file__).parent.parent
DATA_DIR = PROJECT_ROOT / 'data'
SCENARIOS_DIR = DATA_DIR / 'scenarios'
RESULTS_DIR = DATA_DIR / 'results'
SCHEMA_PATH = DATA_DIR / 'schema' / 'manifest.schema.json'

LOG_ENV_VAR = 'PV_LATTICE_LOG'
LOG_FORMAT = '%(levelname)s %(name)s: %(message)s'

# 扫描
DEFAULT_N_POINTS = 500
V_MAX_MARGIN = 1.05
Z_SWEEP_RANGE = (0.5, 1.0e4)

# MPPT
MPP_COARSE_POINTS = 200
MPP_V_TOL = 1e-4

# Newton
NEWTON_MAX_ITERS = 100
NEWTON_TOL = 1e-9          # A, 残差无穷范数
NEWTON_DAMPING = 20        # 回溯减半次数上限

# 等效性审计
UNIFORM_REL_TOL = 1e-9
AUDIT_REL_TOL = 1e-8


def configure_logging(level=None):
    """按 PV_LATTICE_LOG 设置日志级别（默认 WARNING）"""
    name = (level or os.environ.get(LOG_ENV_VAR) or 'WARNING').upper()
    numeric = getattr(logging, name, None)
    if not isinstance(numeric, int):
        numeric = logging.WARNING
    logging.basicConfig(level=numeric, format=LOG_FORMAT, force=True)
    return numeric
