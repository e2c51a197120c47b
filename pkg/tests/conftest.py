"""pytest 公共夹具: scripts/ 加入 sys.path，按脚本间相同的方式导入模块"""
import sys
from pathlib import Path

import pytest

SCRIPTS_DIR = Path(__file__).parent.parent / 'scripts'
sys.path.insert(0, str(SCRIPTS_DIR))

import settings  # noqa: E402
from pv_model import EnvCondition, EnvMap, bypass_from_threshold, build_array_model, et_m672395_panel  # noqa: E402
from scenario_config import load_scenario  # noqa: E402


@pytest.fixture(scope='session')
def panel():
    return et_m672395_panel()


@pytest.fixture(scope='session')
def bypass():
    return bypass_from_threshold(0.7)


@pytest.fixture(scope='session')
def small_model(panel, bypass):
    """3×2 阵列，一块组件遮挡，带旁路/阻断二极管"""
    env_map = EnvMap.uniform(3, 2, EnvCondition(g=1000.0, t=298.0)).with_override(0, 0, g=400.0)
    return build_array_model(panel, env_map, bypass=bypass)


@pytest.fixture(scope='session')
def uniform_config():
    return load_scenario(settings.SCENARIOS_DIR / 'uniform.toml')


@pytest.fixture(scope='session')
def psc_config():
    return load_scenario(settings.SCENARIOS_DIR / 'psc.toml')


@pytest.fixture(scope='session')
def hotspot_config():
    return load_scenario(settings.SCENARIOS_DIR / 'hotspot.toml')
