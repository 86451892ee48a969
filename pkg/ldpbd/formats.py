"""
文件格式

设计 JSON、矩阵 CSV、分布文件与试验结果 CSV 的读写。
浮点数一律使用最短可往返表示 (repr)，不受 locale 影响。
"""

import csv
import io
import json
from pathlib import Path
from typing import Iterable, List, Optional, TextIO, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from ldpbd.exceptions import InvalidIncidence, MalformedInput, PointOutOfRange
from ldpbd.models import DenseDesignDocument, DesignDocument, DesignParams, DesignSource, TrialRecord
from ldpbd.services.design_service import IncidenceMatrix, design_service
from ldpbd.services.mechanism_service import as_distribution, uniform


PathLike = Union[str, Path]


def dump_json(data) -> str:
    """序列化为 JSON 文本，pydantic 模型按别名导出"""
    if isinstance(data, BaseModel):
        data = data.model_dump(mode="json", by_alias=True)
    return json.dumps(data, ensure_ascii=False, indent=2)


def format_number(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def design_document(A: IncidenceMatrix, params: DesignParams, dense: bool = False) -> dict:
    """设计的 JSON 结构"""
    if dense:
        return DenseDesignDocument(incidence=np.asarray(A).astype(int).tolist()).model_dump()
    document = DesignDocument(
        v=params.v,
        b=params.b,
        r=params.r,
        k=params.k,
        lambda_=params.lambda_,
        blocks=design_service.blocks_from_incidence(A),
    )
    return document.model_dump(by_alias=True)


def read_design_file(path: PathLike) -> Tuple[IncidenceMatrix, Optional[DesignParams]]:
    """
    读取设计 JSON（区组形式或稠密形式）

    Returns:
        (A, declared): 关联矩阵与文件中声明的参数（如有）
    """
    raw = _load_json(path)
    try:
        if isinstance(raw, dict) and "incidence" in raw:
            document = DenseDesignDocument.model_validate(raw)
            widths = {len(row) for row in document.incidence}
            if len(widths) != 1:
                raise MalformedInput(f"{path}: incidence 的各行长度不一致")
            A = np.array(document.incidence)
            if not np.isin(A, (0, 1)).all():
                raise MalformedInput(f"{path}: incidence 只能包含 0 和 1")
            return A, None
        document = DesignDocument.model_validate(raw)
    except ValidationError as exc:
        raise MalformedInput(f"{path}: 设计文件格式错误", detail=str(exc))
    try:
        A = design_service.incidence_from_blocks(document.blocks, document.v)
    except (PointOutOfRange, InvalidIncidence) as exc:
        raise MalformedInput(f"{path}: {exc.message}", detail=exc.error)
    return A, document.declared_params()


def resolve_design(source: DesignSource) -> IncidenceMatrix:
    """由设计名称或设计文件得到关联矩阵"""
    if source.file is not None:
        A, _ = read_design_file(source.file)
        return A
    return design_service.build_design(
        source.name,
        v=source.v,
        k=source.k,
        t=source.t,
        p=source.p,
        polarity=source.polarity,
        base=source.base,
    )


def write_matrix_csv(matrix, stream: TextIO):
    """按行写出矩阵"""
    writer = csv.writer(stream, lineterminator="\n")
    for row in np.asarray(matrix):
        writer.writerow([format_number(value) for value in row.tolist()])


def matrix_to_csv(matrix) -> str:
    buffer = io.StringIO()
    write_matrix_csv(matrix, buffer)
    return buffer.getvalue()


def read_matrix_csv(path: PathLike) -> np.ndarray:
    """读取数值矩阵，行长度不一致或含非数值时报错"""
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = [row for row in csv.reader(f) if row]
    except OSError as exc:
        raise MalformedInput(f"无法读取 {path}", detail=str(exc))
    if not rows:
        raise MalformedInput(f"{path}: 文件为空")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise MalformedInput(f"{path}: 第 {i + 1} 行有 {len(row)} 列，期望 {width} 列")
    try:
        return np.array([[float(cell) for cell in row] for row in rows], dtype=np.float64)
    except ValueError as exc:
        raise MalformedInput(f"{path}: 含有非数值元素", detail=str(exc))


def read_distribution(spec: str, v: int) -> np.ndarray:
    """'uniform' 或 JSON 数组 / CSV 数值文件"""
    if spec == "uniform":
        return uniform(v)
    text = _read_text(spec)
    try:
        values = json.loads(text)
    except json.JSONDecodeError:
        values = [cell for row in csv.reader(io.StringIO(text)) for cell in row if cell.strip()]
    try:
        mu = np.array([float(x) for x in values], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise MalformedInput(f"{spec}: 分布文件格式错误", detail=str(exc))
    return as_distribution(mu, v)


def write_records_csv(records: Iterable[TrialRecord], stream: TextIO):
    """试验结果 CSV: trial,l2sq_error,seed"""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["trial", "l2sq_error", "seed"])
    for record in records:
        writer.writerow([record.trial_index, format_number(record.l2sq_error), record.seed_used])


def write_rows_csv(rows: List[BaseModel], stream: TextIO):
    """任意同类 pydantic 模型列表写成表格，None 写为空"""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(list(type(rows[0]).model_fields))
    for row in rows:
        writer.writerow(
            ["" if value is None else format_number(value) if isinstance(value, float) else value for value in row.model_dump().values()]
        )


def read_records_csv(path: PathLike) -> List[TrialRecord]:
    with open(path, newline="", encoding="utf-8") as f:
        return [
            TrialRecord(trial_index=int(row["trial"]), l2sq_error=float(row["l2sq_error"]), seed_used=int(row["seed"]))
            for row in csv.DictReader(f)
        ]


def _read_text(path: PathLike) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedInput(f"无法读取 {path}", detail=str(exc))


def _load_json(path: PathLike):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"{path}: JSON 解析失败", detail=str(exc))
