"""报告输出：CSV 与文本摘要"""
from pathlib import Path
from typing import Optional

import pandas as pd

FLOAT_FORMAT = '%.17g'


def export_to_csv(df: pd.DataFrame, filename, columns: Optional[list[str]] = None) -> Path:
    """
    按固定列顺序导出 CSV（UTF-8、LF 换行、浮点 17 位有效数字、无索引）

    Parameters:
    df: 待导出的 DataFrame
    filename: 输出路径，父目录不存在时自动创建
    columns: 列顺序；给定时缺列报错
    """
    path = Path(filename)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is not None:
        missing = [c for c in columns if c not in df.columns]
        if missing:
            raise KeyError(f"输出缺少列: {missing}")
        df = df[columns]
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n', encoding='utf-8')
    return path


def summary_path(csv_path) -> Path:
    """<stem>.csv → <stem>.summary.txt"""
    path = Path(csv_path)
    return path.with_name(f"{path.stem}.summary.txt")


def write_summary(filename, sections: dict[str, dict], notes: Optional[list[str]] = None) -> Path:
    """
    写出人读摘要：每个分组一段 key = value

    Parameters:
    filename: 输出路径
    sections: {分组名: {参数名: 值}}
    notes: 附加说明，逐行写在末尾
    """
    path = Path(filename)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for title, items in sections.items():
        lines.append(f"[{title}]")
        width = max((len(str(k)) for k in items), default=0)
        lines.extend(f"{str(k).ljust(width)} = {_format_value(v)}" for k, v in items.items())
        lines.append('')
    if notes:
        lines.append('[notes]')
        lines.extend(notes)
        lines.append('')
    path.write_text('\n'.join(lines), encoding='utf-8', newline='\n')
    return path


def _format_value(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    if isinstance(value, (list, tuple)):
        return ','.join(_format_value(v) for v in value)
    return str(value)
