"""
ESNNet 命令列入口
synth / train / eval / loso / report / ablation / probe / serve

    python cli.py train --config run.json --set esn.alpha=0.2 --set train.seeds=[0,1]
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from config import Config
from data.dataset import save_dataset
from data.synth import synth_generate
from evaluation.acceptance import check_ablation, check_within_subject, enforce
from evaluation.experiments import evaluate_checkpoint, prepare_data, run_ablation, run_experiment
from evaluation.probe import linear_probe
from evaluation.report import render_ablation, render_report
from exceptions import ConfigError, EsnNetError
from models import load_checkpoint
from schemas.config import RunConfig, apply_override, build_run_config
from schemas.report import AcceptanceCheck, EvalReport
from utils.artifacts import (
    CONFIG_FILE,
    DATASET_DIR,
    REPORT_FILE,
    REPORT_TEXT_FILE,
    read_json,
    write_json,
    write_text,
)

logger = logging.getLogger('esnnet')

ACCEPTANCE_FILE = 'acceptance.json'

COMMANDS = ('synth', 'train', 'eval', 'loso', 'report', 'ablation', 'probe', 'serve')


def parse_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> RunConfig:
    """
    讀取 JSON 設定檔並套用點號覆寫；缺少的鍵使用預設值

    Args:
        path: 設定檔路徑（None 或空檔案表示全部使用預設值）
        overrides: "key=value" 形式的覆寫，例如 "esn.alpha=0.5"

    Raises:
        ConfigError: 檔案格式錯誤、未知鍵、型別不符或違反限制（訊息帶鍵路徑）
    """
    document = {}
    if path:
        try:
            text = Path(path).read_text(encoding='utf-8')
        except OSError as e:
            raise ConfigError(f"無法讀取設定檔 {path}: {e}") from e
        if text.strip():
            try:
                document = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}:{e.lineno}: JSON 格式錯誤: {e.msg}") from e
            if not isinstance(document, dict):
                raise ConfigError(f"{path}: 設定檔的最上層必須是物件")

    for item in overrides:
        key, sep, value = item.partition('=')
        if not sep:
            raise ConfigError(f"覆寫格式必須是 KEY=VALUE: {item!r}")
        apply_override(document, key, value)
    return build_run_config(document)


def _write_report(output_dir: Path, report: EvalReport, stem: str = 'report') -> None:
    write_text(output_dir / f'{stem}.json', report.to_json())
    text = render_report(report)
    write_text(output_dir / f'{stem}.txt', text)
    print(text)


def _check(output_dir: Path, checks: List[AcceptanceCheck]) -> None:
    write_json(output_dir / ACCEPTANCE_FILE, [c.model_dump() for c in checks])
    enforce(checks)


def _synth(config: RunConfig, output_dir: Path, args) -> None:
    synth = config.data.synth
    trials = synth_generate(synth.n_per_class, synth.subjects, synth.seed, synth)
    manifest = save_dataset(trials, output_dir / DATASET_DIR)
    print(f"合成資料集已寫入 {manifest}")


def _train(config: RunConfig, output_dir: Path, args) -> None:
    config = config.model_copy(update={'protocol': 'within-subject'})
    report = run_experiment(config, jobs=args.jobs)
    _write_report(output_dir, report)
    if args.check:
        _check(output_dir, check_within_subject(report))


def _loso(config: RunConfig, output_dir: Path, args) -> None:
    config = config.model_copy(update={'protocol': 'loso'})
    _write_report(output_dir, run_experiment(config, jobs=args.jobs))


def _eval(config: RunConfig, output_dir: Path, args) -> None:
    if not args.checkpoint:
        raise ConfigError("eval 需要 --checkpoint")
    model = load_checkpoint(args.checkpoint)
    if (model.config.C, model.config.T) != (config.C, config.T):
        raise ConfigError(f"檢查點的輸入形狀 [{model.config.C}, {model.config.T}] 與設定 [{config.C}, {config.T}] 不符")
    _write_report(output_dir, evaluate_checkpoint(model, config), stem='eval_report')


def _report(config: RunConfig, output_dir: Path, args) -> None:
    path = Path(args.report) if args.report else output_dir / REPORT_FILE
    try:
        report = EvalReport.model_validate(read_json(path))
    except ValueError as e:
        raise ConfigError(f"{path}: 不是合法的評估報告: {e}") from e
    text = render_report(report)
    write_text(path.with_suffix('.txt') if args.report else output_dir / REPORT_TEXT_FILE, text)
    print(text)


def _ablation(config: RunConfig, output_dir: Path, args) -> None:
    full, conv_only = run_ablation(config, jobs=args.jobs)
    write_text(output_dir / 'ablation_full.json', full.to_json())
    write_text(output_dir / 'ablation_conv-only.json', conv_only.to_json())
    text = render_ablation(full, conv_only)
    write_text(output_dir / 'ablation.txt', text)
    print(text)
    if args.check:
        _check(output_dir, check_ablation(full, conv_only))


def _probe(config: RunConfig, output_dir: Path, args) -> None:
    data = prepare_data(config)
    seed = config.train.seeds[0]
    results = {}
    for subject in data.subject_ids():
        X, y = data.select(np.flatnonzero(data.subjects == subject))
        result = linear_probe(X, y, seed, config.train.eval_fraction, subject)
        results[subject] = {'accuracy': result.metrics.accuracy, 'macro_f1': result.metrics.macro_f1,
                            'passed': result.passed, 'n_train': result.n_train, 'n_eval': result.n_eval}
        print(f"{subject}: 線性探測準確率 {100 * result.metrics.accuracy:.1f}% {'通過' if result.passed else '未達門檻'}")
    write_json(output_dir / 'probe.json', results)


def _serve(config: RunConfig, output_dir: Path, args) -> None:
    import uvicorn

    uvicorn.run('main:app', host=Config.API_HOST, port=Config.API_PORT)


HANDLERS: Dict[str, Callable] = {
    'synth': _synth,
    'train': _train,
    'eval': _eval,
    'loso': _loso,
    'report': _report,
    'ablation': _ablation,
    'probe': _probe,
    'serve': _serve,
}


def run(command: str, config: RunConfig, args: Optional[argparse.Namespace] = None) -> int:
    """
    執行子命令並回傳結束代碼

    除了 serve 之外，每個命令都先把生效設定寫到 <output_dir>/config.json。
    0 成功；2 設定錯誤；3 資料錯誤；4 數值錯誤；5 I/O 錯誤；6 驗收未通過（--check）；1 其他錯誤。
    """
    if command not in HANDLERS:
        logger.error(f"未知命令: {command}")
        return Config.EXIT_CONFIG
    args = args or argparse.Namespace(checkpoint=None, report=None, jobs=None, check=False)
    output_dir = Path(config.output_dir)
    try:
        if command != 'serve':
            write_text(output_dir / CONFIG_FILE, config.to_json())
        HANDLERS[command](config, output_dir, args)
    except EsnNetError as e:
        logger.error(f"[{e.category}] {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"[io] {e}")
        return Config.EXIT_IO
    except Exception as e:
        logger.exception(f"未預期的錯誤: {e}")
        return Config.EXIT_FAILURE
    logger.info(f"{command} 完成，輸出位於 {output_dir}")
    return Config.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='esnnet', description='ESNNet：卷積 + 回聲狀態網路的 EEG 動作解碼')
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--config', help='JSON 設定檔')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='以點號鍵覆寫設定，例如 esn.alpha=0.5（可重複）')
    parser.add_argument('--checkpoint', help='eval 使用的檢查點')
    parser.add_argument('--report', help='report 使用的 report.json（預設為 <output_dir>/report.json）')
    parser.add_argument('--jobs', type=int, default=None, help='平行執行數（覆寫 train.jobs）')
    parser.add_argument('--check', action='store_true',
                        help='train / ablation 完成後檢查驗收門檻，未通過時以代碼 6 結束')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=Config.LOG_LEVEL, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        config = parse_config(args.config, args.overrides)
    except ConfigError as e:
        logger.error(f"[config] {e}")
        return e.exit_code
    return run(args.command, config, args)


if __name__ == '__main__':
    sys.exit(main())
