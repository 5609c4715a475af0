"""
命令行入口

coughgan {preprocess|featurize|train-gan|synth|train-clf|eval|plot|stats} --config <path> [选项]

退出码：0 成功，2 配置错误，3 数据错误，4 训练发散，5 文件读写错误，1 其他
"""

import argparse
import sys
from typing import List, Optional

from app.commands import COMMANDS
from app.utils.error_handler import CoughGanError, ErrorCategory, EXIT_CODES, get_error_handler, handle_exception
from app.utils.logger import AppLogger, get_logger
from config.loader import load_config
from utils.paths import resolve_path

logger = get_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coughgan", description="咳嗽音频 ACGAN 数据扩充流水线")
    parser.add_argument("command", choices=list(COMMANDS), help="子命令")
    parser.add_argument("--config", default=None, help="配置文件路径（默认 config/config.json）")
    parser.add_argument("--seed", type=int, default=None, help="覆盖配置中的根种子")
    parser.add_argument("--log-level", dest="log_level", default=None, help="日志级别")
    parser.add_argument("--augment", default=None, help="train-clf：合成记录文件")
    parser.add_argument("--count", type=int, default=None, help="synth：每类合成数量")
    parser.add_argument("--class", dest="class_label", default=None, help="synth：只合成该类别（名称或索引）")
    parser.add_argument("--checkpoint", default=None,
                        help="synth/eval：检查点文件；train-gan：从该生成器检查点继续训练")
    parser.add_argument("--input", default=None, help="plot：历史 CSV 或谱图记录文件")
    parser.add_argument("--compare", default=None, help="plot：与 --input 并排对比的谱图记录文件")
    parser.add_argument("--output", default=None, help="输出目录")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """解析参数、加载配置并执行子命令，返回退出码"""
    args = build_parser().parse_args(argv)
    get_error_handler().clear()
    AppLogger.setup_logging(args.log_level, force=True)
    try:
        config = load_config(args.config, seed=args.seed)
        AppLogger.setup_logging(args.log_level, force=True, default_level=config.logging.level,
                                default_file=resolve_path(config.base_dir, config.logging.file))
        command = COMMANDS[args.command](config, args)
        logger.info(f"执行命令: {args.command}")
        return command.execute()
    except CoughGanError as e:
        get_error_handler().handle_error(e)
        print(f"错误 [{e.error_id}]: {e.user_message}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        logger.warning("用户中断")
        return 130
    except Exception as e:
        error = handle_exception(e, operation=args.command, component="cli")
        print(f"错误 [{error.error_id}]: {error.user_message}", file=sys.stderr)
        return EXIT_CODES[ErrorCategory.UNKNOWN]


if __name__ == "__main__":
    sys.exit(main())
