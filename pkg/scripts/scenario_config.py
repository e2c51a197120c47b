#!/usr/bin/env python3
"""
场景配置 (TOML)

一个文件描述一个场景: 组件参数、阵列尺寸、环境 (默认值 + 稀疏覆盖)、
旁路/阻断二极管、负载驱动、扫描设置、输出目录、已发表的参考值。
覆盖项的 row/col 从 1 开始计数。
"""
import hashlib
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import settings
from equivalence import resolve_aggregate
from pv_errors import ConfigError, ParameterError
from pv_model import (
    Drive,
    EnvCondition,
    EnvMap,
    PanelParams,
    aggregate_cells_to_panel,
    build_array_model,
    bypass_from_threshold,
)

logger = logging.getLogger(__name__)

SECTIONS = {'scenario', 'panel', 'cell', 'array', 'env', 'bypass', 'drive', 'sweep', 'outputs', 'reference'}
PANEL_FIELDS = {'iph_ref', 'i0_ref', 'ideality', 'rs', 'rsh_ref', 'm_c', 'n_c', 'gamma_t', 'g_ref', 't_ref', 'eg_ref'}
OUTPUT_FORMATS = {'csv', 'json'}


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str
    panel: PanelParams
    env_map: EnvMap
    description: str = ''
    bypass_enabled: bool = True
    bypass_threshold: float = 0.7
    block_diodes: bool = True
    drive: Drive = field(default_factory=lambda: Drive.voltage(0.0))
    n_points: int = settings.DEFAULT_N_POINTS
    v_max: Optional[float] = None
    z_min: float = settings.Z_SWEEP_RANGE[0]
    z_max: float = settings.Z_SWEEP_RANGE[1]
    out_dir: Path = settings.RESULTS_DIR
    formats: tuple = ('csv', 'json')
    reference: dict = field(default_factory=dict)
    sha256: str = ''

    @property
    def bypass(self):
        return bypass_from_threshold(self.bypass_threshold) if self.bypass_enabled else None

    def build_model(self, drive=None):
        """PPDM_A 阵列模型"""
        return build_array_model(
            self.panel,
            self.env_map,
            bypass=self.bypass,
            block_diodes=self.block_diodes,
            drive=drive or self.drive,
        )

    def aggregated(self):
        """SDM_A 工作参数 (平均辐照/温度)"""
        return resolve_aggregate(self.env_map, self.panel)


def _table(doc, name, required=False):
    value = doc.get(name)
    if value is None:
        if required:
            raise ConfigError(f"缺少 [{name}] 配置段")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] 必须是表")
    return value


def _panel_params(doc):
    if 'panel' in doc and 'cell' in doc:
        raise ConfigError("[panel] 与 [cell] 只能二选一")
    if 'cell' in doc:
        cell = dict(_table(doc, 'cell'))
        m_c, n_c = cell.pop('m_c', None), cell.pop('n_c', None)
        if m_c is None or n_c is None:
            raise ConfigError("[cell] 需要 m_c 与 n_c")
        _check_fields('cell', cell)
        return aggregate_cells_to_panel(PanelParams(**cell, m_c=1, n_c=1), m_c, n_c)
    panel = _table(doc, 'panel', required=True)
    _check_fields('panel', panel)
    return PanelParams(**panel)


def _check_fields(section, values):
    unknown = set(values) - PANEL_FIELDS
    if unknown:
        raise ConfigError(f"[{section}] 未知字段: {sorted(unknown)}")


def _env_map(doc, m_p, n_p):
    env = _table(doc, 'env')
    base = EnvCondition(g=float(env.get('g', 1000.0)), t=float(env.get('t', 298.15)))
    env_map = EnvMap.uniform(m_p, n_p, base)
    for entry in env.get('override', []):
        try:
            row, col = int(entry['row']), int(entry['col'])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"[[env.override]] 需要整数 row/col: {entry}") from exc
        if not (1 <= row <= m_p and 1 <= col <= n_p):
            raise ConfigError(f"覆盖位置 ({row}, {col}) 超出 {m_p}×{n_p} 阵列")
        env_map = env_map.with_override(row - 1, col - 1, g=entry.get('g'), t=entry.get('t'))
    return env_map


def _drive(doc):
    drive = _table(doc, 'drive')
    modes = [mode for mode in ('voltage', 'impedance') if mode in drive]
    if len(modes) > 1:
        raise ConfigError("[drive] 只能指定 voltage 或 impedance 其中之一")
    if not modes:
        return Drive.voltage(0.0)
    mode = modes[0]
    return Drive(mode, float(drive[mode]))


def parse_scenario(doc, base_dir=None, sha256=''):
    """把解析后的 TOML 字典转换为 ScenarioConfig"""
    unknown = set(doc) - SECTIONS
    if unknown:
        raise ConfigError(f"未知配置段: {sorted(unknown)}")
    try:
        meta = _table(doc, 'scenario', required=True)
        scenario_id = str(meta.get('id', '')).strip()
        if not scenario_id:
            raise ConfigError("[scenario] 需要 id")
        array = _table(doc, 'array', required=True)
        m_p, n_p = int(array['m_p']), int(array['n_p'])
        if m_p < 1 or n_p < 1:
            raise ConfigError(f"阵列尺寸必须 ≥ 1 (m_p={m_p}, n_p={n_p})")
        bypass = _table(doc, 'bypass')
        sweep = _table(doc, 'sweep')
        outputs = _table(doc, 'outputs')

        formats = tuple(outputs.get('formats', ('csv', 'json')))
        if not set(formats) <= OUTPUT_FORMATS:
            raise ConfigError(f"未知输出格式: {sorted(set(formats) - OUTPUT_FORMATS)}")
        out_dir = Path(outputs.get('dir', settings.RESULTS_DIR / scenario_id))
        if not out_dir.is_absolute():
            out_dir = (base_dir or settings.PROJECT_ROOT) / out_dir

        config = ScenarioConfig(
            scenario_id=scenario_id,
            description=str(meta.get('description', '')),
            panel=_panel_params(doc),
            env_map=_env_map(doc, m_p, n_p),
            bypass_enabled=bool(bypass.get('enabled', True)),
            bypass_threshold=float(bypass.get('threshold', 0.7)),
            block_diodes=bool(array.get('block_diodes', True)),
            drive=_drive(doc),
            n_points=int(sweep.get('n_points', settings.DEFAULT_N_POINTS)),
            v_max=None if sweep.get('v_max') is None else float(sweep['v_max']),
            z_min=float(sweep.get('z_min', settings.Z_SWEEP_RANGE[0])),
            z_max=float(sweep.get('z_max', settings.Z_SWEEP_RANGE[1])),
            out_dir=out_dir,
            formats=formats,
            reference=dict(_table(doc, 'reference')),
            sha256=sha256,
        )
    except KeyError as exc:
        raise ConfigError(f"缺少必需字段: {exc}") from exc
    except (ParameterError, TypeError, ValueError) as exc:
        raise ConfigError(f"配置参数非法: {exc}") from exc

    if config.n_points < 2:
        raise ConfigError(f"[sweep] n_points 必须 ≥ 2, 实际 {config.n_points}")
    if config.v_max is not None and not config.v_max > 0:
        raise ConfigError(f"[sweep] v_max 必须 > 0, 实际 {config.v_max}")
    if config.bypass_enabled and not config.bypass_threshold > 0:
        raise ConfigError(f"[bypass] threshold 必须 > 0, 实际 {config.bypass_threshold}")
    return config


def load_scenario(path):
    """读取并校验场景文件"""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"无法读取场景文件 {path}: {exc}") from exc
    try:
        doc = tomllib.loads(raw.decode('utf-8'))
    except (UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path.name} 解析失败: {exc}") from exc

    config = parse_scenario(doc, base_dir=settings.PROJECT_ROOT, sha256=hashlib.sha256(raw).hexdigest())
    logger.info("场景 %s: %d×%d, 驱动=%s %.4g", config.scenario_id, *config.env_map.shape,
                config.drive.mode, config.drive.value)
    return config
