#!/usr/bin/env python3
"""
pv-lattice 命令行

子命令:
    sweep  --config <toml>   IV/PV 曲线 → 每个模型一个 CSV (v,i,p) + JSON 清单
    mpp    --config <toml>   SDM_A vs PPDM_A 最大功率点与相对误差
    audit  --config <toml>   等效性条件检查

退出码: 0 成功, 2 配置错误 (不写任何文件), 3 求解失败
日志级别: 环境变量 PV_LATTICE_LOG (默认 WARNING)
"""
import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

import settings
from equivalence import audit_subequalities
from iv_sweep import MODEL_PPDM, MODEL_SDM, find_peaks, trace_impedance, trace_iv
from mppt import compare_models, ppdm_mpp, sdm_mpp
from pv_errors import ConfigError, ParameterError, SolverError
from pv_solver import NewtonOptions, estimate_open_circuit_voltage, sdm_array_model, solve_operating_point
from scenario_config import load_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _atomic_write(path, write):
    """先写临时文件再 rename"""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as handle:
            write(handle)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def write_curve_csv(curve, path):
    return _atomic_write(
        path,
        lambda handle: curve.to_frame().to_csv(handle, index=False, lineterminator='\n', float_format='%.15g'),
    )


def write_json(payload, path):
    def dump(handle):
        json.dump(payload, handle, indent=2, ensure_ascii=False)
        handle.write('\n')
    return _atomic_write(path, dump)


def _manifest(config, command, models):
    options = NewtonOptions()
    return {
        'scenario_id': config.scenario_id,
        'scenario_sha256': config.sha256,
        'command': command,
        'models': list(models),
        'array': {
            'm_p': config.env_map.shape[0],
            'n_p': config.env_map.shape[1],
            'bypass': config.bypass_enabled,
            'block_diodes': config.block_diodes,
        },
        'solver': {'tol': options.tol, 'max_iters': options.max_iters, 'damping': options.damping},
    }


def _selected(model_flag):
    return {'sdm': (MODEL_SDM,), 'ppdm': (MODEL_PPDM,), 'both': (MODEL_SDM, MODEL_PPDM)}[model_flag]


def _banner(title):
    print("\n" + "=" * 70)
    print(title)
    print("=" * 70)


def run_sweep(config, out_dir=None, model_flag='both', n_points=None, cold_start=False, n_jobs=1,
              drive_sweep='voltage'):
    """扫描 IV 曲线并写出 CSV + 清单，返回写出的文件列表"""
    out_dir = Path(out_dir or config.out_dir)
    n_points = n_points or config.n_points
    if n_points < 2:
        raise ConfigError(f"--points 必须 ≥ 2, 实际 {n_points}")
    tags = _selected(model_flag)
    ppdm_model = config.build_model()
    sdm_model = sdm_array_model(config.aggregated(), block_diodes=config.block_diodes)
    models = {MODEL_SDM: sdm_model, MODEL_PPDM: ppdm_model}
    # 两个模型共用同一电压网格
    v_max = config.v_max or settings.V_MAX_MARGIN * estimate_open_circuit_voltage(ppdm_model)

    _banner(f"📈 IV 扫描: {config.scenario_id} ({drive_sweep}, {n_points} 点)")
    curves = {}
    for tag in tags:
        if drive_sweep == 'impedance':
            curves[tag] = trace_impedance(models[tag], config.z_min, config.z_max, n_points,
                                          model_tag=tag, scenario_id=config.scenario_id, progress=True)
        else:
            curves[tag] = trace_iv(models[tag], v_max, n_points, model_tag=tag, scenario_id=config.scenario_id,
                                   cold_start=cold_start, n_jobs=n_jobs, progress=True)

    written = []
    manifest = _manifest(config, 'sweep', tags)
    manifest['curves'] = []
    for tag, curve in curves.items():
        peaks = find_peaks(curve) if len(curve) >= 3 else ()
        best = int(np.argmax(curve.p))
        entry = {
            'model_tag': tag,
            'drive_sweep': drive_sweep,
            'n_points': len(curve),
            'v_min': float(curve.v[0]),
            'v_max': float(curve.v[-1]),
            'n_peaks': len(peaks),
            'p_max_sampled': float(curve.p[best]),
        }
        if 'csv' in config.formats:
            path = write_curve_csv(curve, out_dir / f"{config.scenario_id}_{tag.lower()}.csv")
            entry['file'] = path.name
            written.append(path)
        if curve.iterations is not None:
            entry['mean_iterations'] = float(curve.iterations.mean())
            entry['max_iterations'] = int(curve.iterations.max())
        manifest['curves'].append(entry)
        print(f"   {tag:<8s} {len(curve):>5d} 点  峰值数 {len(peaks):>2d}  P_max(采样) {entry['p_max_sampled']:>10.2f} W")

    if 'json' in config.formats:
        written.append(write_json(manifest, out_dir / f"{config.scenario_id}_sweep.json"))
    for path in written:
        print(f"💾 {path}")
    return written


def _mpp_dict(result):
    return {
        'model_tag': result.model_tag,
        'p': result.p,
        'v': result.v,
        'i': result.i,
        'refinement_iters': result.refinement_iters,
        'string_currents': list(result.string_currents),
        'bypass_active': [[row + 1, col + 1] for row, col in result.bypass_active],
    }


def run_mpp(config, out_dir=None, model_flag='both'):
    """两种模型的 MPP + 相对误差，返回报告字典"""
    out_dir = Path(out_dir or config.out_dir)
    tags = _selected(model_flag)
    results = {}
    if MODEL_SDM in tags:
        results[MODEL_SDM] = sdm_mpp(config.aggregated())
    if MODEL_PPDM in tags:
        results[MODEL_PPDM] = ppdm_mpp(config.build_model())

    report = _manifest(config, 'mpp', tags)
    report['mpp'] = {tag: _mpp_dict(result) for tag, result in results.items()}
    comparison = None
    if len(results) == 2:
        comparison = compare_models(results[MODEL_SDM], results[MODEL_PPDM])
        report['errors'] = {'p': comparison.err_p, 'v': comparison.err_v, 'i': comparison.err_i}
    if config.reference:
        report['reference'] = config.reference

    _banner(f"⚡ 最大功率点: {config.scenario_id}")
    print(f"{'模型':<8s} {'P (W)':>12s} {'V (V)':>10s} {'I (A)':>10s}")
    print("-" * 44)
    for tag, result in results.items():
        print(f"{tag:<8s} {result.p:>12.2f} {result.v:>10.2f} {result.i:>10.3f}")
    if comparison is not None:
        print("-" * 44)
        print(f"{'误差 %':<8s} {comparison.err_p:>12.2f} {comparison.err_v:>10.2f} {comparison.err_i:>10.2f}")
        if comparison.sdm.p > comparison.ppdm.p:
            print("\n⚠️  SDM_A 高估阵列输出功率")
    ppdm = results.get(MODEL_PPDM)
    if ppdm is not None and ppdm.bypass_active:
        cells = ', '.join(f"({r + 1},{c + 1})" for r, c in ppdm.bypass_active)
        print(f"🔧 MPP 处旁路二极管导通: {cells}")

    if 'json' in config.formats:
        print(f"💾 {write_json(report, out_dir / f'{config.scenario_id}_mpp.json')}")
    return report


def run_audit(config, out_dir=None):
    """在配置的驱动工作点上检查等效性条件"""
    out_dir = Path(out_dir or config.out_dir)
    model = config.build_model()
    point = solve_operating_point(model)
    audit = audit_subequalities(model, config.aggregated(), point)

    report = _manifest(config, 'audit', (MODEL_SDM, MODEL_PPDM))
    report['audit'] = audit.to_dict()

    _banner(f"🔍 等效性检查: {config.scenario_id} (V={point.voltage:.3f} V, I={point.current:.3f} A)")
    print(f"   组件一致: {'✅' if audit.uniform else '❌'}")
    for name, result in audit.conditions.items():
        mark = '✅' if result.passed else '❌'
        print(f"   {mark} {name:<20s} 最大偏差 {result.max_violation:.3e}")

    if 'json' in config.formats:
        print(f"💾 {write_json(report, out_dir / f'{config.scenario_id}_audit.json')}")
    return report


def build_parser():
    parser = argparse.ArgumentParser(prog='pv_lattice', description='光伏阵列 SDM_A / PPDM_A 仿真')
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p):
        p.add_argument('--config', required=True, help='场景 TOML 文件 (例如 data/scenarios/psc.toml)')
        p.add_argument('--out', help='输出目录 (默认取配置 [outputs] dir)')

    sweep = sub.add_parser('sweep', help='IV/PV 曲线扫描')
    common(sweep)
    sweep.add_argument('--model', choices=['sdm', 'ppdm', 'both'], default='both')
    sweep.add_argument('--points', type=int, help='扫描点数 (默认取配置 [sweep] n_points)')
    sweep.add_argument('--cold-start', action='store_true', help='每个点独立求解')
    sweep.add_argument('--jobs', type=int, default=1, help='冷启动并行进程数')
    sweep.add_argument('--drive-sweep', choices=['voltage', 'impedance'], default='voltage')

    mpp = sub.add_parser('mpp', help='最大功率点对比')
    common(mpp)
    mpp.add_argument('--model', choices=['sdm', 'ppdm', 'both'], default='both')

    audit = sub.add_parser('audit', help='等效性条件检查')
    common(audit)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    settings.configure_logging()
    try:
        config = load_scenario(args.config)
        if args.command == 'sweep':
            run_sweep(config, args.out, args.model, args.points, args.cold_start, args.jobs, args.drive_sweep)
        elif args.command == 'mpp':
            run_mpp(config, args.out, args.model)
        else:
            run_audit(config, args.out)
    except ConfigError as exc:
        print(f"❌ 配置错误: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"❌ 求解失败: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ParameterError as exc:
        print(f"❌ 参数错误: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
