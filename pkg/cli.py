#!/usr/bin/env python3
"""
コマンドラインインターフェース
solve / asymptotics / simulate / verify / report の各サブコマンド
"""
import argparse
import sys
from typing import List, Optional, Tuple

from asymptotics import analyze
from config_manager import RunConfig, load_run_config
from errors import AssumptionError, ConfigError, SolverError
from export import render_report, summary_table
from logger import get_logger, log_exception
from mc_oracle import estimate_psi, estimates_from_records
from model import check_assumptions
from storage import ResultStore
from survival import SurvivalCurve, assemble
from verifier import (build_report, compare_mc, decay_check, fixed_point_residual, ide_residual,
                      inject_phi0_error, smoothness_check)
from volterra_solver import SolutionGrid, solve_g1

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1


def _load(args) -> RunConfig:
    return load_run_config(args.config, out=args.out, seed=args.seed, paths=args.paths,
                           grid=args.grid, umax=args.umax, workers=args.workers)


def _solve(run: RunConfig) -> Tuple[SolutionGrid, SurvivalCurve]:
    grid = solve_g1(run.model, run.claims, run.solver)
    curve = assemble(grid)
    return grid, curve


def build_summary(run: RunConfig, grid: SolutionGrid, curve: SurvivalCurve) -> dict:
    """summary.json の内容（json/summary.schema.json に従う）"""
    summary = {}
    summary.update(grid.summary())
    summary.update(curve.summary())
    summary['u0_used'] = grid.u0_used
    summary['assumptions'] = check_assumptions(run.model, run.claims).to_dict()
    summary['model'] = {
        'a': run.model.a, 'r': run.model.r, 'kappa': run.model.kappa,
        'sigma': run.model.sigma, 'c': run.model.c, 'lambda': run.model.lam,
    }
    summary['claims'] = run.claims.to_spec()
    return summary


def _write_solution(run: RunConfig, store: ResultStore, grid: SolutionGrid, curve: SurvivalCurve):
    if 'csv' in run.formats:
        store.write_csv('g1.csv', ('u', 'g1', 'H', 'Bg'), grid.to_rows())
        store.write_csv('survival.csv', ('u', 'phi', 'psi'), curve.to_rows())
    store.write_json('summary.json', build_summary(run, grid, curve))


def cmd_solve(args) -> int:
    """g₁ と生存確率を計算して g1.csv, survival.csv, summary.json を書く"""
    run = _load(args)
    store = ResultStore(run.output_dir)
    grid, curve = _solve(run)
    _write_solution(run, store, grid, curve)

    print(f"✓ 求解完了: phi0 = {curve.phi0:.10g}, I1 = {curve.I1:.10g}")
    print(f"  u0 = {grid.u0_used:.6g}, 裾指数 = {curve.tail_exponent}")
    print(f"  出力先: {store.out_dir}")
    return EXIT_OK


def cmd_asymptotics(args) -> int:
    """漸近解析を行い asymptotics.json を書く"""
    run = _load(args)
    store = ResultStore(run.output_dir)
    grid, curve = _solve(run)
    report = analyze(run.model, run.claims, grid, curve)
    store.write_json('asymptotics.json', report.to_dict())

    print(f"✓ 領域: {report.regime}")
    print(f"  L = {report.L_estimate}, C_infinity = {report.C_infinity}")
    return EXIT_OK


def _simulation_tag(run: RunConfig) -> dict:
    """mc.jsonl の各レコードに残すシミュレーション設定"""
    sim = run.simulation
    return {'seed': sim.seed, 'horizon': sim.horizon, 'dt_max': sim.dt_max,
            'survival_barrier': sim.survival_barrier}


def _simulate(run: RunConfig, store: ResultStore):
    estimates = estimate_psi(run.model, run.claims, run.simulation)
    tag = _simulation_tag(run)
    store.write_jsonl('mc.jsonl', [{**e.to_dict(), **tag} for e in estimates])
    return estimates


def _matches_run(records: List[dict], run: RunConfig) -> bool:
    """既存の mc.jsonl が現在の u_values, n_paths, seed などで作られたものか"""
    sim = run.simulation
    if [r.get('u') for r in records] != [float(u) for u in sim.u_values]:
        return False
    tag = _simulation_tag(run)
    return all(r.get('n_paths') == sim.n_paths and all(r.get(k) == v for k, v in tag.items())
               for r in records)


def cmd_simulate(args) -> int:
    """モンテカルロで Ψ(u) を推定し mc.jsonl を書く"""
    run = _load(args)
    store = ResultStore(run.output_dir)
    estimates = _simulate(run, store)

    rows = [(f"{e.u:g}", f"{e.psi_hat:.5f}", f"{e.ci_half_width:.5f}",
             f"[{e.lower:.5f}, {e.upper:.5f}]", f"{e.censored_fraction:.2%}") for e in estimates]
    print(summary_table(rows, ('u', 'psi_hat', 'ci', 'bracket', 'censored')))
    return EXIT_OK


def cmd_verify(args) -> int:
    """
    検証を行い verify.json を書く

    mc.jsonl が無いか現在の設定と合わなければシミュレーションも実行する。終了コードは合否を表す。
    """
    run = _load(args)
    store = ResultStore(run.output_dir)
    grid, curve = _solve(run)
    if args.inject_phi0_error:
        logger.warning("陰性対照: phi0 を半分に壊して比較します")
        curve = inject_phi0_error(curve)

    records = store.read_jsonl('mc.jsonl') if store.exists('mc.jsonl') else None
    if records is not None and _matches_run(records, run):
        logger.info(f"既存の {store.path('mc.jsonl')} を再利用します")
        estimates = estimates_from_records(records)
    else:
        if records is not None:
            logger.warning("mc.jsonl の設定が現在の設定と異なるためシミュレーションをやり直します")
        estimates = _simulate(run, store)

    residual = ide_residual(grid, curve, run.model, run.claims)
    smoothness = smoothness_check(grid, run.claims)
    decay = decay_check(grid, check_assumptions(run.model, run.claims))
    comparison = compare_mc(curve, estimates)
    fixed_point = fixed_point_residual(grid, run.claims)
    result, passed = build_report(residual, smoothness, decay, comparison, run.residual_tol,
                                  fixed_point=fixed_point)
    result['phi0_injected'] = bool(args.inject_phi0_error)
    store.write_json('verify.json', result)

    rows = [(f"{r.u:g}", f"{r.analytic:.5f}", f"{r.psi_hat:.5f}", f"{r.ci_half_width:.5f}",
             'PASS' if r.passed else 'FAIL') for r in comparison]
    print(summary_table(rows, ('u', 'analytic', 'psi_hat', 'ci', 'result')))
    print(f"IDE残差: {residual.max_norm:.3e}（許容 {run.residual_tol:g}）")
    if residual.atom_locations:
        print(f"原子の近傍を除外: {residual.atom_locations}（{residual.excluded_count} ノード）")
    print("✓ 検証成功" if passed else "✗ 検証失敗")
    return EXIT_OK if passed else EXIT_VERIFY_FAILED


def cmd_report(args) -> int:
    """report.svg を書く"""
    run = _load(args)
    store = ResultStore(run.output_dir)
    grid, curve = _solve(run)
    report = analyze(run.model, run.claims, grid, curve)
    path = store.write_text('report.svg', render_report(curve, report))
    print(f"✓ レポートを出力しました: {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', required=True, help='設定ファイル (TOML)')
    common.add_argument('--out', help='出力ディレクトリ（設定ファイルの output.directory を上書き）')
    common.add_argument('--seed', type=int, help='乱数シード（環境変数 RUIN_SEED より優先）')
    common.add_argument('--paths', type=int, help='モンテカルロのパス数')
    common.add_argument('--grid', type=int, help='グリッド点数')
    common.add_argument('--umax', type=float, help='準備金の打ち切り点')
    common.add_argument('--workers', type=int, help='並列プロセス数')

    parser = argparse.ArgumentParser(
        prog='ruinprob',
        description='投資つき保険会社の破産確率 - ボルテラ方程式ソルバーとモンテカルロ検証',
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    subparsers = parser.add_subparsers(dest='command', help='コマンド')

    parser_solve = subparsers.add_parser('solve', parents=[common], help='g1 と生存確率を計算')
    parser_solve.set_defaults(func=cmd_solve)

    parser_asym = subparsers.add_parser('asymptotics', parents=[common], help='漸近定数 C_infinity')
    parser_asym.set_defaults(func=cmd_asymptotics)

    parser_sim = subparsers.add_parser('simulate', parents=[common], help='モンテカルロ推定')
    parser_sim.set_defaults(func=cmd_simulate)

    parser_verify = subparsers.add_parser('verify', parents=[common], help='解の検証')
    parser_verify.add_argument('--inject-phi0-error', action='store_true',
                               help='phi0 を半分に壊して比較（陰性対照）')
    parser_verify.set_defaults(func=cmd_verify)

    parser_report = subparsers.add_parser('report', parents=[common], help='SVG レポート')
    parser_report.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if not getattr(args, 'func', None):
        parser.print_help()
        return ConfigError.exit_code

    if not hasattr(args, 'inject_phi0_error'):
        args.inject_phi0_error = False

    try:
        return args.func(args)
    except (ConfigError, AssumptionError, SolverError) as e:
        log_exception(logger, f"{args.command} に失敗", e)
        print(f"error: {e.code}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        log_exception(logger, f"{args.command} の入出力に失敗", e)
        print(f"error: io: {e}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == '__main__':
    sys.exit(main())
