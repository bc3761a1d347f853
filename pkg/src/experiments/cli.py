"""
命令行入口

python -m experiments <子命令> [--config recipes/ode_vs_sim_qpsk.env] [--seed 7] [--trials 200] [--<字段名> 值 ...]

子命令与实验类型的对应见 config.constants.EXPERIMENT_KINDS；
除公共选项外，ExperimentSpec 的每个字段都有同名选项（下划线写作连字符）。
"""
import argparse
import sys
from typing import Optional

from config.constants import EXIT_CONFIG_ERROR, EXIT_NUMERICAL_ERROR, EXIT_OK, EXPERIMENT_KINDS
from detection.errors import ConfigError, NumericalError, QuadratureError
from experiments.experiment_config import FIELD_NAMES, load_spec
from experiments.runner import run_detector_race, run_experiment
from utils.logging import setup_logger

logger = setup_logger(__name__)

COMMON_FIELDS = ('seed', 'out', 'trials', 'threads')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='experiments', description='ODE-MMSE / RKCD 检测实验')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for command, kind in EXPERIMENT_KINDS.items():
        sub = subparsers.add_parser(command, help=f"实验类型 {kind}")
        common = sub.add_argument_group('公共选项')
        common.add_argument('--config', help='KEY=VALUE 配置文件')
        common.add_argument('--seed', help='随机种子（u64）')
        common.add_argument('--out', help='输出 CSV 路径')
        common.add_argument('--trials', help='蒙特卡洛试验次数')
        common.add_argument('--threads', help='并行线程数')
        params = sub.add_argument_group('实验参数')
        for name in FIELD_NAMES:
            if name == 'kind' or name in COMMON_FIELDS:
                continue
            params.add_argument(f"--{name.replace('_', '-')}", dest=name, metavar='VALUE')
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    kind = EXPERIMENT_KINDS[args.command]
    overrides = {name: getattr(args, name) for name in FIELD_NAMES if hasattr(args, name)}

    try:
        spec = load_spec(kind, args.config, overrides)
        if kind == 'detector-race':
            result = run_detector_race(spec)
        else:
            result = run_experiment(spec)
    except ConfigError as e:
        logger.error(f"配置错误: {e}")
        return EXIT_CONFIG_ERROR
    except QuadratureError as e:
        logger.error(f"数值积分失败: {e}")
        return EXIT_NUMERICAL_ERROR
    except NumericalError as e:
        logger.error(f"数值发散: {e}")
        return EXIT_NUMERICAL_ERROR

    for path in result.csv_paths:
        print(path)
    print(result.summary_path)
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
