"""
绘制实验 CSV

python scripts/plot_results.py output/analytic-vs-sim.csv [--out fig.png]

按列名识别实验类型；不属于验收范围，仅用于查看结果
"""
import argparse
from pathlib import Path

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def _plot_time_curves(ax, df: pd.DataFrame, theory: str, empirical: str, label: str = ''):
    ax.plot(df['t'], df[theory], '-', lw=1.5, label=f"theory {label}".strip())
    if empirical in df:
        ax.errorbar(df['t'], df[empirical], yerr=3 * df['stderr'], fmt='o', ms=3, capsize=2,
                    label=f"simulation {label}".strip())


def plot(df: pd.DataFrame, ax):
    columns = set(df.columns)
    if {'eta', 'mse_asymptotic'} <= columns:
        for eta, group in df.groupby('eta'):
            line, = ax.plot(group['t'], group['mse_theory'], label=f"eta={eta:g}")
            ax.axhline(group['mse_asymptotic'].iloc[0], ls=':', color=line.get_color())
        ax.axhline(df['mse_mmse'].iloc[0], ls='--', color='k', label='MSE_mmse')
    elif 'mse_tode_theory' in columns:
        _plot_time_curves(ax, df, 'mse_tode_theory', 'mse_tode_empirical', 'tODE')
        ax.plot(df['t'], df['mse_ode_theory'], '--', label='ODE (constant eta)')
    elif 'delta' in columns:
        for delta, group in df.groupby('delta'):
            ax.plot(group['t'], group['mse_empirical'], label=f"delta={delta:g}")
        ax.plot(df['t'], df['mse_theory'], 'k--', label='theory')
    elif 'T_k' in columns:
        ax.plot(df['T_k'], df['mse_theory'], '-', label='theory MSE(T_k)')
        ax.errorbar(df['T_k'], df['mse_empirical'], yerr=3 * df['stderr'], fmt='o', ms=3, label='RKCD')
        ax.set_xlabel('T_k')
    elif 'iteration' in columns:
        for solver, group in df.groupby('solver', sort=False):
            ax.plot(group['iteration'], group['mse'], label=solver)
        ax.set_xlabel('iteration')
    elif 'snr_db' in columns:
        for solver, group in df.groupby('solver', sort=False):
            ax.plot(group['snr_db'], group['ser'], '-o', label=solver)
        ax.set_xlabel('SNR [dB]')
        ax.set_ylabel('SER')
        return
    elif 'F' in columns:
        ax.bar(df['candidate'], df['F'], color=['C1' if b else 'C0' for b in df['is_best']])
        ax.set_ylabel('F')
        return
    else:
        _plot_time_curves(ax, df, 'mse_theory', 'mse_empirical')
    if ax.get_xlabel() == '':
        ax.set_xlabel('t')
    ax.set_ylabel('MSE')
    ax.set_yscale('log')


def main():
    parser = argparse.ArgumentParser(description='绘制实验 CSV')
    parser.add_argument('csv', type=Path)
    parser.add_argument('--out', type=Path, help='输出图片路径，默认与 CSV 同名 .png')
    args = parser.parse_args()

    df = pd.read_csv(args.csv)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    plot(df, ax)
    ax.grid(True, which='both', alpha=0.3)
    ax.legend()
    fig.tight_layout()
    out = args.out or args.csv.with_suffix('.png')
    fig.savefig(out, dpi=150)
    print(out)


if __name__ == '__main__':
    main()
