"""
CLI entry point for acq-pipeline

Commands:
  acq-pipeline pretrain --spec tiny-resnet --data shapes --epochs 20 --out runs/teacher
  acq-pipeline quantize --model runs/teacher --bits 4w4a --data shapes --out runs/acq
  acq-pipeline audit --model runs/teacher --samples runs/acq/generator --report audit.json
  acq-pipeline eval --model runs/acq/student --data shapes
  acq-pipeline gen-samples --generator runs/acq/generator --count 16 --out-dir samples --model runs/teacher
  acq-pipeline sweep --model runs/teacher --param gamma --values 0,0.1,0.5,1
  acq-pipeline ablate --model runs/teacher --components cacm,ad,penalty
  acq-pipeline run --name desk --to quantize                # incremental phase pipeline under $DATA_DIR/runs
  acq-pipeline phases                                       # list phases

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from acq_core.config import resolve_train_config
from acq_core.config.settings import TrainConfig, get_run_workdir, load_config_file, load_env_file
from acq_core.events import EventEmitter, LogListener
from acq_core.utils.logger import error, info, success, warning
from acq_pipeline.errors import UsageError
from acq_pipeline.phases import ALL_PHASES, PHASE_NAMES

PROFILES = ("full", "desk", "smoke")
LOSS_PROFILES = ("cifar10", "cifar100", "imagenet", "mobilenetv2")


# ── argument types ──


def _bits(text: str):
    from acq_pipeline.processors.quantizer import parse_bits
    try:
        return parse_bits(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _float_list(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def _int_list(text: str) -> List[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def _override(text: str):
    """key=value; value is parsed as JSON when possible (numbers, booleans), else kept as a string."""
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _data_descriptor(text: str) -> Dict[str, Any]:
    """'shapes' → procedural shapes; anything else is a CIFAR-10 binary directory."""
    from acq_pipeline.processors.data import dataset_descriptor
    if text == "shapes":
        return dataset_descriptor("shapes")
    return dataset_descriptor("cifar10", path=text)


# ── helpers ──


def _emitter(every: int = 50) -> EventEmitter:
    emitter = EventEmitter()
    emitter.on(LogListener(every=every))
    return emitter


def _train_config(args) -> TrainConfig:
    overrides: Dict[str, Any] = dict(getattr(args, "set", None) or [])
    bits = getattr(args, "bits", None)
    if bits is not None:
        overrides["n_w"], overrides["n_a"] = bits
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        return resolve_train_config(args.profile, args.loss, args.config, overrides)
    except (KeyError, ValueError) as e:
        raise UsageError(str(e)) from e


def _print_json(data: Any) -> None:
    from acq_pipeline.schema.reports import dumps_report
    sys.stdout.write(dumps_report(data))


def _eval_data(text: Optional[str]):
    from acq_pipeline.processors.data import load_dataset
    return load_dataset(_data_descriptor(text), "test") if text else None


# ── commands ──


def _cmd_pretrain(args) -> None:
    from acq_pipeline.processors.data import PretrainOptions, run_pretrain

    opts = PretrainOptions(
        spec=args.spec,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        width=args.width,
        seed=args.seed or 0,
    )
    result = run_pretrain(_data_descriptor(args.data), opts, model_dir=Path(args.out), emitter=_emitter())
    success(f"Teacher saved to {args.out}")
    _print_json(result.metrics)


def _cmd_quantize(args) -> None:
    from acq_pipeline.archive import load_model
    from acq_pipeline.processors.training import run as training_run

    cfg = _train_config(args)
    teacher = load_model(args.model)
    out = Path(args.out)
    result = training_run(
        cfg,
        teacher,
        student_dir=out / "student",
        generator_dir=out / "generator",
        report_path=Path(args.report) if args.report else out / "report.json",
        metrics_path=out / "metrics.jsonl",
        eval_data=_eval_data(args.data),
        emitter=_emitter(cfg.log_every),
        run_id=out.name or "acq",
        checkpoint_dir=out / "checkpoints" if cfg.checkpoint_every else None,
        diagnostic_count=args.diagnostic_count,
    )
    for message in result.warnings:
        warning(message)
    success(f"Student and generator saved under {out}")
    _print_json(result.metrics)


def _cmd_audit(args) -> None:
    from acq_pipeline.archive import load_model, read_manifest
    from acq_pipeline.processors.data import load_dataset
    from acq_pipeline.processors.metrics import run_audit

    teacher = load_model(args.model)
    samples = Path(args.samples)
    generator = dataset = None
    if (samples / "model.json").exists():
        if read_manifest(samples)["arch"].get("kind") != "generator":
            raise ValueError(f"{samples} is a model archive but not a generator")
        generator = load_model(samples)
    else:
        dataset = load_dataset(_data_descriptor(args.samples), "test")
    result = run_audit(
        teacher,
        report_path=Path(args.report),
        generator=generator,
        dataset=dataset,
        count=args.count,
        batch_size=args.batch_size,
        seed=args.seed or 0,
    )
    _print_json(result.metrics)


def _cmd_eval(args) -> None:
    from acq_pipeline.archive import load_model
    from acq_pipeline.processors.data import evaluate_accuracy, load_dataset
    from acq_pipeline.schema.reports import write_report

    graph = load_model(args.model)
    data = load_dataset(_data_descriptor(args.data), args.split)
    report = {"accuracy": evaluate_accuracy(graph, data), "count": len(data)}
    if args.report:
        write_report(args.report, "eval", report)
    _print_json(report)


def _cmd_gen_samples(args) -> None:
    import numpy as np

    from acq_core.autodiff.rng import SeededRng
    from acq_core.autodiff.tensor import no_grad
    from acq_pipeline.archive import load_model
    from acq_pipeline.processors.attention import attention_matrix, export_heatmap, export_mode_pair, position_index
    from acq_pipeline.processors.generator import ConditionSampler, GeneratorNet
    from acq_pipeline.utils.pnm import image_to_ppm

    gen = load_model(args.generator)
    if not isinstance(gen, GeneratorNet):
        raise ValueError(f"{args.generator} is not a generator archive")
    if args.count < 2:
        raise ValueError("gen-samples: --count must be >= 2 (generator BN uses batch statistics)")
    teacher = load_model(args.model) if args.model else None
    out = Path(args.out_dir)
    sampler = ConditionSampler(SeededRng(args.seed or 0).child("samples"))
    with no_grad():
        x, y, p, _ = sampler.batch(gen, args.count)
    written = 0
    for i in range(args.count):
        image_to_ppm(out / f"sample_{i:04d}_y{int(y[i])}_p{int(p[i])}.ppm", x.data[i])
        written += 1
    if teacher is not None:
        with no_grad():
            backbone = {m: teacher.forward(x, mode=m, record_stats=False).backbone for m in ("eval", "train")}
        size = int(x.shape[-1])
        eval_maps = attention_matrix(backbone["eval"], mode="eval")
        train_maps = attention_matrix(backbone["train"], mode="train")
        for i in range(args.count):
            export_heatmap(eval_maps[i], size, size, out / f"attention_{i:04d}.pgm")
            export_mode_pair(eval_maps[i], train_maps[i], size, size, out / f"modes_{i:04d}.pgm")
            written += 2
        centers = np.array([position_index(m.center, m.M.shape[1], h=m.M.shape[0]) for m in eval_maps])
        info(f"gen-samples: attention center == p for {int(np.sum(centers == p))}/{args.count} samples")
    success(f"Wrote {written} files to {out}")


def _cmd_sweep(args) -> None:
    from acq_pipeline.archive import load_model
    from acq_pipeline.processors.harness import sweep
    from acq_pipeline.schema.reports import write_report

    cfg = _train_config(args)
    result = sweep(
        cfg,
        load_model(args.model),
        args.param,
        args.values,
        seeds=args.seeds,
        eval_data=_eval_data(args.data),
        workers=args.workers,
    )
    if args.report:
        write_report(args.report, "sweep", result)
    _print_json(result)


def _cmd_ablate(args) -> None:
    from acq_pipeline.archive import load_model
    from acq_pipeline.processors.harness import ablation_harness, parse_components
    from acq_pipeline.schema.reports import write_report

    cfg = _train_config(args)
    result = ablation_harness(
        cfg,
        load_model(args.model),
        components=parse_components(args.components),
        seeds=args.seeds,
        eval_data=_eval_data(args.data),
        workers=args.workers,
    )
    if args.report:
        write_report(args.report, "ablation", result)
    _print_json(result)


def _cmd_run(args) -> None:
    from acq_pipeline.manifest import JsonManifest
    from acq_pipeline.runner import PhaseRunner
    from acq_pipeline.types import RunContext

    if args.workdir:
        workdir = Path(args.workdir)
        workdir.mkdir(parents=True, exist_ok=True)
    else:
        workdir = get_run_workdir(args.name)
    config: Dict[str, Any] = load_config_file(args.config) if args.config else {}
    config.setdefault("phases", {})
    if args.seed is not None:
        config["seed"] = args.seed
    config.setdefault("seed", 0)

    ctx = RunContext(job_id=workdir.name, workspace=str(workdir), config=config, emitter=_emitter())
    runner = PhaseRunner(JsonManifest(workdir), workdir)
    done = runner.run_pipeline(ALL_PHASES, ctx, from_phase=args.from_phase, to_phase=args.to, force=args.force)
    success(f"Pipeline finished: {', '.join(done)}")


def _cmd_phases() -> None:

    print(f"\nPipeline ({len(ALL_PHASES)} phases):\n")
    print(f"  {'Phase':<10}{'Version':<9}{'Requires':<34}{'Provides':<70}Label")
    print(f"  {'─────':<10}{'───────':<9}{'────────':<34}{'────────':<70}─────")
    for phase in ALL_PHASES:
        requires = ", ".join(phase.requires()) or "-"
        print(f"  {phase.name:<10}{phase.version:<9}{requires:<34}{', '.join(phase.provides()):<70}{phase.label}")
    print()


# ── parser ──


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acq-pipeline",
        description="Data-free quantization with attention-center-conditioned synthetic samples",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Exit codes: 0 success, 1 runtime failure, 2 usage error.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Random seed")

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--profile", choices=PROFILES, default="desk", help="Schedule profile (default: desk)")
    training.add_argument("--loss", choices=LOSS_PROFILES, default="cifar10", help="Loss-weight profile")
    training.add_argument("--config", type=str, default=None, help="JSON document mirroring TrainConfig")
    training.add_argument("--bits", type=_bits, default=None, help="Bit widths, e.g. 4w4a")
    training.add_argument("--set", type=_override, action="append", metavar="KEY=VALUE",
                          help="Override a config key (dotted, e.g. weights.gamma=0.5); repeatable")

    subparsers = parser.add_subparsers(dest="command", help="Command")

    p = subparsers.add_parser("pretrain", parents=[common], help="Train the full-precision teacher")
    p.add_argument("--spec", default="tiny-resnet", help="Architecture spec (tiny-resnet / tiny-plain)")
    p.add_argument("--data", default="shapes", help="'shapes' or a CIFAR-10 binary directory")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--out", required=True, help="Archive directory for the teacher")

    p = subparsers.add_parser("quantize", parents=[common, training], help="Run ACQ on a pretrained teacher")
    p.add_argument("--model", required=True, help="Teacher archive directory")
    p.add_argument("--out", required=True, help="Output directory (student/, generator/, metrics.jsonl)")
    p.add_argument("--report", default=None, help="Report path (default: <out>/report.json)")
    p.add_argument("--data", default=None, help="Evaluation data: 'shapes' or a CIFAR-10 directory")
    p.add_argument("--diagnostic-count", type=int, default=256)

    p = subparsers.add_parser("audit", parents=[common], help="Eval / train mode consistency report")
    p.add_argument("--model", required=True, help="Teacher archive directory")
    p.add_argument("--samples", required=True, help="Generator archive, 'shapes', or a CIFAR-10 directory")
    p.add_argument("--report", required=True)
    p.add_argument("--count", type=int, default=960)
    p.add_argument("--batch-size", type=int, default=16)

    p = subparsers.add_parser("eval", parents=[common], help="Top-1 accuracy of an archive")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="'shapes' or a CIFAR-10 directory")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--report", default=None)

    p = subparsers.add_parser("gen-samples", parents=[common], help="Write generated images (and attention maps)")
    p.add_argument("--generator", required=True)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--model", default=None, help="Teacher archive; adds PGM attention maps")

    p = subparsers.add_parser("sweep", parents=[common, training], help="Accuracy over values of one parameter")
    p.add_argument("--model", required=True)
    p.add_argument("--param", required=True, help="Loss weight (gamma, beta, ...) or dotted config key")
    p.add_argument("--values", type=_float_list, required=True)
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--data", default="shapes")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--report", default=None)

    p = subparsers.add_parser("ablate", parents=[common, training], help="Component ablation table")
    p.add_argument("--model", required=True)
    p.add_argument("--components", default="cacm,ad,penalty")
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2])
    p.add_argument("--data", default="shapes")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--report", default=None)

    p = subparsers.add_parser("run", parents=[common], help="Run the phase pipeline in a workspace")
    p.add_argument("--workdir", default=None, help="Workspace directory (default: $DATA_DIR/runs/<name>)")
    p.add_argument("--name", default="default", help="Run name under $DATA_DIR/runs when --workdir is omitted")
    p.add_argument("--from", dest="from_phase", default=None, choices=PHASE_NAMES, help="Force rerun from this phase (inclusive)")
    p.add_argument("--to", default=None, choices=PHASE_NAMES, help="Stop after this phase")
    p.add_argument("--config", default=None, help='Pipeline config JSON: {"seed": 0, "phases": {...}}')
    p.add_argument("--force", action="store_true")

    subparsers.add_parser("phases", help="List pipeline phases")
    return parser


_COMMANDS = {
    "pretrain": _cmd_pretrain,
    "quantize": _cmd_quantize,
    "audit": _cmd_audit,
    "eval": _cmd_eval,
    "gen-samples": _cmd_gen_samples,
    "sweep": _cmd_sweep,
    "ablate": _cmd_ablate,
    "run": _cmd_run,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    if not args.command:
        parser.print_usage(sys.stderr)
        return 2

    load_env_file()

    if args.command == "phases":
        _cmd_phases()
        return 0

    try:
        _COMMANDS[args.command](args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        error(f"{args.command}: {e}")
        return 2
    except Exception as e:
        error(f"{args.command} failed: {type(e).__name__}: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
