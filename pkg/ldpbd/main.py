"""
命令行入口

    python -m ldpbd.main design build --design projective --p 2 --t 3
    python -m ldpbd.main verify --tpm fano.csv --epsilon 0.28768

退出码: 0 成功/最优，1 领域层失败（校验为否），2 用法或输入格式错误。
"""

import argparse
import sys
from datetime import datetime
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from ldpbd.config import settings
from ldpbd.logger import logger, setup_logger
from ldpbd.models import DChoice, DesignName, DesignSource, ErrorResponse, Polarity, PrivacyParam, SimConfig
from ldpbd.exceptions import DesignError, InvalidParameter, LdpbdError, MalformedInput
from ldpbd import formats
from ldpbd.services.design_service import design_service
from ldpbd.services.mechanism_service import comm_bits, mechanism_service
from ldpbd.services.estimation_service import estimation_service
from ldpbd.services.optimality_service import optimality_service
from ldpbd.services.simulation_service import simulation_service


def emit(data):
    """结果写到标准输出"""
    sys.stdout.write(formats.dump_json(data) + "\n")


def write_text(path: str, text: str):
    Path(path).write_text(text, encoding="utf-8")


def parse_base(text: str) -> List[int]:
    try:
        return [int(x) for x in text.replace("-", ",").split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"无法解析基区组: {text}")


def parse_protocol(text: str) -> DesignSource:
    """'complete:v=7,k=3'、'fano' 或 'file:path.json'"""
    name, _, rest = text.partition(":")
    if name == "file":
        return DesignSource(file=rest)
    values = {}
    for item in filter(None, rest.split(",")):
        key, _, value = item.partition("=")
        try:
            if key in ("v", "k", "t", "p"):
                values[key] = int(value)
            elif key == "polarity":
                values[key] = Polarity(value)
            elif key == "base":
                values[key] = parse_base(value)
            else:
                raise InvalidParameter(f"协议 {text} 含有未知参数 {key}")
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise InvalidParameter(f"协议 {text} 的参数 {key} 取值无效", detail=str(exc))
    try:
        return DesignSource(name=DesignName(name), **values)
    except ValueError as exc:
        raise InvalidParameter(f"无法解析协议 {text}", detail=str(exc))


def design_source(args) -> DesignSource:
    return DesignSource(
        name=args.design,
        file=args.design_file,
        v=args.v,
        k=args.k,
        t=args.t,
        p=args.p,
        polarity=args.polarity,
        base=args.base,
    )


def privacy(args) -> PrivacyParam:
    return PrivacyParam(epsilon=args.epsilon)


# design

def cmd_design_build(args) -> int:
    A = formats.resolve_design(design_source(args))
    params = design_service.verify_design(A)
    document = formats.design_document(A, params, dense=args.dense)
    if args.out:
        write_text(args.out, formats.dump_json(document) + "\n")
    emit(document)
    return 0


def cmd_design_verify(args) -> int:
    try:
        A, declared = formats.read_design_file(args.input)
        params = design_service.verify_design(A)
    except DesignError as exc:
        emit({"ok": False, "error": exc.error, "message": exc.message, "detail": exc.detail})
        return 1
    if declared is not None and declared != params:
        emit(
            {
                "ok": False,
                "error": "DeclaredParamsMismatch",
                "message": f"声明的参数 {declared.as_tuple()} 与实际 {params.as_tuple()} 不符",
                "detail": None,
            }
        )
        return 1
    emit(params)
    return 0


def cmd_design_info(args) -> int:
    A = formats.resolve_design(design_source(args))
    params = design_service.verify_design(A)
    info = params.model_dump(by_alias=True)
    info.update(is_sbibd=params.is_symmetric, comm_bits=comm_bits(params.b))
    emit(info)
    return 0


# mech / optimal-k / risk

def cmd_mech_build(args) -> int:
    A = formats.resolve_design(design_source(args))
    Q, spec = mechanism_service.build_mechanism(A, privacy(args))
    if args.out:
        write_text(args.out, formats.matrix_to_csv(Q))
    if args.debias_out:
        write_text(args.debias_out, formats.matrix_to_csv(estimation_service.debias_matrix(Q)))
    if args.format == "csv":
        sys.stdout.write(formats.matrix_to_csv(Q))
    else:
        emit(spec)
    return 0


def cmd_optimal_k(args) -> int:
    q = mechanism_service.optimal_subset_size(args.v, privacy(args))
    emit({"v": args.v, "epsilon": args.epsilon, "q": q})
    return 0


def cmd_risk(args) -> int:
    eps = privacy(args)
    k = args.k if args.k is not None else mechanism_service.optimal_subset_size(args.v, eps)
    constants = estimation_service.risk_constants(args.v, k, eps)
    mu = formats.read_distribution(args.mu, args.v)
    constants.minimax_n_risk = estimation_service.minimax_bound(args.v, k, eps, mu)
    emit(constants)
    return 0


# verify

def cmd_verify(args) -> int:
    if args.epsilon is None and not args.infer_epsilon:
        raise InvalidParameter("需要 --epsilon 或 --infer-epsilon")
    Q = formats.read_matrix_csv(args.tpm)
    eps = privacy(args) if args.epsilon is not None else None
    report = optimality_service.verify_optimal(Q, eps, infer_epsilon=args.infer_epsilon)
    emit(report)
    return 0 if report.is_minimax_optimal else 1


# simulate / compare

def sim_config(args, source: DesignSource) -> SimConfig:
    mu = "uniform"
    if args.mu != "uniform":
        v = design_service.verify_design(formats.resolve_design(source)).v
        mu = formats.read_distribution(args.mu, v).tolist()
    return SimConfig(
        design=source,
        epsilon=args.epsilon,
        mu=mu,
        n=args.n,
        trials=args.trials,
        master_seed=args.seed,
        d_choice=args.d_choice,
        workers=args.workers,
    )


def cmd_simulate(args) -> int:
    summary, records = simulation_service.run_experiment(sim_config(args, design_source(args)))
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as f:
            formats.write_records_csv(records, f)
    emit(summary)
    return 0


def cmd_compare(args) -> int:
    configs = [sim_config(args, parse_protocol(text)) for text in args.protocol]
    rows = simulation_service.compare_protocols(configs)
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as f:
            formats.write_rows_csv(rows, f)
    emit({"rows": [row.model_dump() for row in rows]})
    return 0


def add_design_source(parser: argparse.ArgumentParser):
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--design", type=DesignName, choices=list(DesignName), help="设计构造器名称")
    group.add_argument("--design-file", dest="design_file", help="设计 JSON 文件")
    parser.add_argument("--v", type=int, help="点数")
    parser.add_argument("--k", type=int, help="区组大小")
    parser.add_argument("--t", type=int, help="Hadamard 阶 2^t / 射影空间维数")
    parser.add_argument("--p", type=int, help="素数域大小")
    parser.add_argument("--polarity", type=Polarity, choices=list(Polarity), default=Polarity.MINUS)
    parser.add_argument("--base", type=parse_base, help="循环设计的基区组，例如 1,2,4")


def add_simulation_args(parser: argparse.ArgumentParser):
    parser.add_argument("--epsilon", type=float, required=True)
    parser.add_argument("--mu", default="uniform", help="uniform 或分布文件")
    parser.add_argument("--n", type=int, required=True, help="每次试验的用户数")
    parser.add_argument("--trials", type=int, required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=settings.max_workers)
    parser.add_argument("--d-choice", dest="d_choice", type=DChoice, choices=list(DChoice), default=DChoice.UNIFORM_INDUCED)
    parser.add_argument("--out", help="结果 CSV 路径")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldpbd", description="区组设计随机响应：构造、风险计算与最优性校验")
    parser.add_argument("--log-level", dest="log_level", help="覆盖 LDPBD_LOG_LEVEL")
    parser.add_argument("--version", action="version", version=f"{settings.app_name} {settings.app_version}")
    commands = parser.add_subparsers(dest="command", required=True)

    design = commands.add_parser("design", help="构造与校验区组设计").add_subparsers(dest="action", required=True)
    build = design.add_parser("build")
    add_design_source(build)
    build.add_argument("--dense", action="store_true", help="输出稠密关联矩阵")
    build.add_argument("--out")
    build.set_defaults(handler=cmd_design_build)
    verify = design.add_parser("verify")
    verify.add_argument("--in", dest="input", required=True)
    verify.set_defaults(handler=cmd_design_verify)
    info = design.add_parser("info")
    add_design_source(info)
    info.set_defaults(handler=cmd_design_info)

    mech = commands.add_parser("mech", help="构造机制").add_subparsers(dest="action", required=True)
    mech_build = mech.add_parser("build")
    add_design_source(mech_build)
    mech_build.add_argument("--epsilon", type=float, required=True)
    mech_build.add_argument("--format", choices=("json", "csv"), default="json")
    mech_build.add_argument("--out", help="TPM CSV 路径")
    mech_build.add_argument("--debias-out", dest="debias_out", help="去偏矩阵 CSV 路径")
    mech_build.set_defaults(handler=cmd_mech_build)

    optimal_k = commands.add_parser("optimal-k", help="最优子集大小")
    optimal_k.add_argument("--v", type=int, required=True)
    optimal_k.add_argument("--epsilon", type=float, required=True)
    optimal_k.set_defaults(handler=cmd_optimal_k)

    risk = commands.add_parser("risk", help="风险常数与极小极大下界")
    risk.add_argument("--v", type=int, required=True)
    risk.add_argument("--k", type=int, help="默认取最优子集大小")
    risk.add_argument("--epsilon", type=float, required=True)
    risk.add_argument("--mu", default="uniform")
    risk.set_defaults(handler=cmd_risk)

    verify_tpm = commands.add_parser("verify", help="校验 TPM 是否极小极大最优")
    verify_tpm.add_argument("--tpm", required=True)
    verify_tpm.add_argument("--epsilon", type=float)
    verify_tpm.add_argument("--infer-epsilon", dest="infer_epsilon", action="store_true")
    verify_tpm.set_defaults(handler=cmd_verify)

    simulate = commands.add_parser("simulate", help="蒙特卡洛风险模拟")
    add_design_source(simulate)
    add_simulation_args(simulate)
    simulate.set_defaults(handler=cmd_simulate)

    compare = commands.add_parser("compare", help="比较多个协议")
    compare.add_argument("--protocol", action="append", required=True, help="例如 complete:v=7,k=3，可重复")
    add_simulation_args(compare)
    compare.set_defaults(handler=cmd_compare)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level:
        setup_logger(level=args.log_level)

    try:
        return args.handler(args)
    except LdpbdError as exc:
        logger.warning(f"命令失败: {exc.error} - {exc.message}", extra={"command": args.command})
        sys.stderr.write(formats.dump_json(exc.to_response()) + "\n")
        return exc.exit_code
    except ValidationError as exc:
        error = MalformedInput("参数校验失败", detail=str(exc))
        logger.warning(f"参数校验失败: {exc}", extra={"command": args.command})
        sys.stderr.write(formats.dump_json(error.to_response()) + "\n")
        return error.exit_code
    except Exception as exc:
        logger.error(f"未处理的异常: {str(exc)}", exc_info=True, extra={"command": args.command})
        response = ErrorResponse(error="InternalError", message="内部错误", detail=str(exc), timestamp=datetime.now())
        sys.stderr.write(formats.dump_json(response) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
