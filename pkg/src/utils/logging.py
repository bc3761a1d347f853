"""日志配置工具"""
import logging
from logging.handlers import RotatingFileHandler
from typing import Optional

from config.settings import settings


def setup_logger(name: str, log_file: Optional[str] = None, level: Optional[int | str] = None) -> logging.Logger:
    """配置logger，默认参数取自 settings

    Args:
        name: logger 名称，一般传 __name__
        log_file: 日志文件路径，None 时取 MIMO_LOG_FILE，仍为空则只输出到控制台
        level: 日志级别，None 时取 MIMO_LOG_LEVEL
    """
    logger = logging.getLogger(name)
    if logger.handlers:
        return logger

    logger.setLevel(level or settings.logging['level'])
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    # 控制台
    logger.addHandler(logging.StreamHandler())
    # 文件（10MB轮转）
    log_file = log_file or settings.logging['log_file']
    if log_file:
        logger.addHandler(RotatingFileHandler(log_file, maxBytes=10 * 1024 * 1024, backupCount=5))

    for h in logger.handlers:
        h.setFormatter(formatter)

    return logger
