#!/usr/bin/env python3
"""
批量对比所有场景的 MPP: SDM_A vs PPDM_A
输出误差表 (与已发表的数值并列) 并保存 data/results/comparison.csv
"""
import argparse
import sys
from pathlib import Path

import pandas as pd

import settings
from mppt import compare_models, ppdm_mpp, sdm_mpp
from pv_errors import ConfigError, SolverError
from scenario_config import load_scenario


def compare_scenario(config, coarse_points=settings.MPP_COARSE_POINTS):
    """单个场景的对比结果 (一行)"""
    sdm = sdm_mpp(config.aggregated())
    ppdm = ppdm_mpp(config.build_model(), coarse_points)
    comparison = compare_models(sdm, ppdm)
    row = {'scenario': config.scenario_id, **comparison.as_row()}
    for key in ('err_p', 'err_v', 'err_i'):
        row[f'{key}_ref'] = config.reference.get(key)
    return row


def print_table(df):
    print("\n" + "=" * 70)
    print("📊 SDM_A vs PPDM_A 最大功率点对比:")
    print("=" * 70)
    print(f"\n{'场景':<10s} {'P_SDM':>10s} {'P_PPDM':>10s} {'P误差':>8s} {'V误差':>8s} {'I误差':>8s} {'P误差(参考)':>12s}")
    print("-" * 70)
    for _, row in df.iterrows():
        ref = f"{row['err_p_ref']:.1f}%" if pd.notna(row['err_p_ref']) else '-'
        print(f"{row['scenario']:<10s} {row['p_sdm']:>10.1f} {row['p_ppdm']:>10.1f} "
              f"{row['err_p']:>7.2f}% {row['err_v']:>7.2f}% {row['err_i']:>7.2f}% {ref:>12s}")

    overestimated = df[df['p_sdm'] > df['p_ppdm'] * (1 + 1e-6)]
    if len(overestimated):
        print(f"\n⚠️  SDM_A 高估输出功率: {', '.join(overestimated['scenario'])}")


def main(argv=None):
    parser = argparse.ArgumentParser(description='批量对比场景的 MPP')
    parser.add_argument('--scenarios', type=Path, default=settings.SCENARIOS_DIR, help='场景目录')
    parser.add_argument('--out', type=Path, default=settings.RESULTS_DIR / 'comparison.csv')
    parser.add_argument('--coarse-points', type=int, default=settings.MPP_COARSE_POINTS)
    args = parser.parse_args(argv)
    settings.configure_logging()

    paths = sorted(args.scenarios.glob('*.toml'))
    if not paths:
        print(f"❌ {args.scenarios} 中没有场景文件", file=sys.stderr)
        return 2

    rows = []
    for path in paths:
        print(f"🔧 {path.name} ...")
        try:
            rows.append(compare_scenario(load_scenario(path), args.coarse_points))
        except ConfigError as exc:
            print(f"❌ 配置错误: {exc}", file=sys.stderr)
            return 2
        except SolverError as exc:
            print(f"❌ 求解失败: {exc}", file=sys.stderr)
            return 3

    df = pd.DataFrame(rows)
    print_table(df)

    args.out.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(args.out, index=False, lineterminator='\n', float_format='%.6f')
    print(f"\n💾 对比结果已保存: {args.out}")
    print("=" * 70 + "\n")
    return 0


if __name__ == '__main__':
    sys.exit(main())
