"""Command-line entry point: ``demoplan {synth,segment,ground,analyze,plan,exec,eval}``.

Stages talk to each other only through files. Errors exit with status 1 and a
JSON object ``{"stage", "error", "message"}`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

from .analyzer import (
    GROUPS,
    AnalysisTrace,
    DemoRecord,
    DemoTaskPlan,
    RemoteBackend,
    RemoteConfig,
    TranscriptBackend,
    analyze_demo,
    options_for_group,
    plan_from_transcript,
)
from .ftsig import ground_skill, read_wrench_csv
from .pddl import emit
from .planner import ExecutionPolicy, SceneConfig, TaskPlan, execute_with_feedback, extract_template, plan_new_task
from .sim.config import SimConfig
from .sim.demo import synthesize_demo
from .sim.evaluate import TASK_KEYS, reports_to_csv, run_config
from .sim.executor import SimExecutor
from .sim.scenes import demo_scene, ground_truth_script, library_for, random_scene, task_name
from .tactile import Segment, segment_sequence


class Timer:
    def __init__(self, verbose: bool, stream=None):
        self.verbose = verbose
        self.stream = stream or sys.stderr
        self.last = time.perf_counter()

    def __call__(self, stage: str) -> None:
        now = time.perf_counter()
        if self.verbose:
            print(f"[{stage}] {1000 * (now - self.last):.1f} ms", file=self.stream)
        self.last = now


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _bundled(name: str) -> str:
    return resources.files("demoplan").joinpath(f"data/{name}").read_text(encoding="utf-8")


def cmd_synth(args, config: SimConfig, timer: Timer) -> list[Path]:
    task = task_name(args.task)
    if args.scene:
        scene = SceneConfig.from_dict(json.loads(Path(args.scene).read_text(encoding="utf-8")))
    else:
        scene = demo_scene(task, args.seed, config)
    lib = library_for(scene.task)
    demo = synthesize_demo(scene, ground_truth_script(scene, lib), args.seed, config, lib)
    timer("synth")
    out = Path(args.out)
    path = demo.save(out, args.stem)
    timer("write")
    return [path, out / f"{args.stem}_tactile.jsonl", out / f"{args.stem}_wrench.csv"]


def cmd_segment(args, config: SimConfig, timer: Timer) -> list[Path]:
    demo = DemoRecord.load(args.demo)
    timer("load")
    segments = segment_sequence(demo.tactile, min_duration=args.min_dur)
    timer("segment")
    doc = {"segments": [{"status": s.status.value, "t_start": round(s.t_start, 6), "t_end": round(s.t_end, 6)}
                        for s in segments]}
    return [_write(Path(args.out) / "segments.json", _dump(doc))]


def cmd_analyze(args, config: SimConfig, timer: Timer) -> list[Path]:
    task = task_name(args.task)
    lib = library_for(task)
    text = Path(args.transcript).read_text(encoding="utf-8") if args.transcript else None
    if args.backend == "mock" and not args.demo:
        plan = plan_from_transcript(text or _bundled("reference_transcript.txt"), lib, task)
        timer("reason")
    else:
        if not args.demo:
            raise ValueError("--demo is required unless --backend mock is used")
        demo = DemoRecord.load(args.demo)
        lib = library_for(demo.task)
        timer("load")
        backend = None
        if args.backend == "mock":
            backend = TranscriptBackend(text or _bundled("reference_transcript.txt"), lib)
        elif args.backend == "remote":
            backend = RemoteBackend(RemoteConfig.from_env(), lib)
        plan = analyze_demo(demo, lib, options_for_group(args.group), backend, trace=AnalysisTrace(), timer=timer)
    out = Path(args.out)
    domain_path = Path(args.domain_out) if args.domain_out else out / "domain.pddl"
    return [_write(out / "demo_plan.json", plan.dumps()), _write(domain_path, emit(plan.domain))]


def cmd_ground(args, config: SimConfig, timer: Timer) -> list[Path]:
    lib = library_for(task_name(args.task))
    skill = lib.resolve(args.skill)
    trace = read_wrench_csv(args.trace).resistance()
    doc = json.loads(Path(args.segments).read_text(encoding="utf-8"))
    matching = [s for s in doc["segments"] if s["status"] == skill.status_signature.value]
    if len(matching) <= args.index:
        raise ValueError(f"segments file has {len(matching)} {skill.status_signature.value} segment(s); "
                         f"--index {args.index} is out of range")
    chosen = matching[args.index]
    segment = Segment(skill.status_signature, float(chosen["t_start"]), float(chosen["t_end"]))
    theta = ground_skill(trace, segment, skill)
    timer("ground")
    result = {"skill": skill.name, "threshold": round(theta, 6),
              "segment": {"t_start": segment.t_start, "t_end": segment.t_end}}
    sys.stdout.write(_dump(result))
    return [_write(Path(args.out) / "grounding.json", _dump(result))]


def cmd_plan(args, config: SimConfig, timer: Timer) -> list[Path]:
    demo_plan = DemoTaskPlan.from_dict(json.loads(Path(args.demo_plan).read_text(encoding="utf-8")))
    timer("load")
    if args.scene:
        scene = SceneConfig.from_dict(json.loads(Path(args.scene).read_text(encoding="utf-8")))
    else:
        scene = random_scene(demo_plan.task or "cable", args.seed, config)
    plan = plan_new_task(extract_template(demo_plan, Path(args.demo_plan).stem), scene)
    timer("plan")
    return [_write(Path(args.out) / "task_plan.json", plan.dumps())]


def cmd_exec(args, config: SimConfig, timer: Timer) -> list[Path]:
    plan = TaskPlan.from_dict(json.loads(Path(args.plan).read_text(encoding="utf-8")))
    base = config.policy
    policy = ExecutionPolicy(args.policy or base.on_error, base.relax_factor, base.max_retries)
    result = execute_with_feedback(plan, SimExecutor.for_scene(plan.scene, args.seed, config), policy)
    timer("exec")
    return [_write(Path(args.out) / "exec_result.json", result.dumps())]


def cmd_eval(args, config: SimConfig, timer: Timer) -> list[Path]:
    groups = GROUPS if args.group == "all" else (args.group,)
    tasks = TASK_KEYS if args.task == "all" else (args.task,)
    n = args.n if args.n is not None else int(config.eval["n_scenes"])
    reports = []
    for g in groups:
        for t in tasks:
            reports.append(run_config(g, t, n, args.seed, config))
            timer(f"eval {g}/{t}")
    text = reports_to_csv(reports)
    sys.stdout.write(text)
    return [_write(Path(args.out) / "eval.csv", text)]


COMMANDS: dict[str, Callable] = {
    "synth": cmd_synth, "segment": cmd_segment, "analyze": cmd_analyze,
    "ground": cmd_ground, "plan": cmd_plan, "exec": cmd_exec, "eval": cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file overriding the bundled simulator configuration")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--verbose", action="store_true", help="print per-stage timing to stderr")

    parser = argparse.ArgumentParser(prog="demoplan", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="synthesize a demonstration")
    p.add_argument("--task", default="cable", choices=["cable", "cap"])
    p.add_argument("--scene", help="scene JSON (default: the built-in demo layout)")
    p.add_argument("--stem", default="demo")

    p = sub.add_parser("segment", parents=[common], help="segment a demonstration by object status")
    p.add_argument("--demo", required=True)
    p.add_argument("--min-dur", type=float, default=0.3, help="shortest kept segment, seconds")

    p = sub.add_parser("ground", parents=[common], help="ground one skill threshold from a wrench trace")
    p.add_argument("--trace", required=True, help="wrench CSV")
    p.add_argument("--segments", required=True, help="segments JSON written by 'segment'")
    p.add_argument("--skill", required=True)
    p.add_argument("--task", default="cable", choices=["cable", "cap"])
    p.add_argument("--index", type=int, default=0, help="which matching segment to use (0 = first)")

    p = sub.add_parser("analyze", parents=[common], help="build a demonstration task plan")
    p.add_argument("--demo")
    p.add_argument("--task", default="cable", choices=["cable", "cap"])
    p.add_argument("--group", default="ours", choices=[g for g in GROUPS if g != "D"])
    p.add_argument("--backend", default="rule", choices=["rule", "mock", "remote"])
    p.add_argument("--transcript", help="transcript replayed by the mock backend (default: bundled)")
    p.add_argument("--domain-out", help="where to write the PDDL domain (default: <out>/domain.pddl)")

    p = sub.add_parser("plan", parents=[common], help="plan a new scene from a demonstration task plan")
    p.add_argument("--demo-plan", required=True)
    p.add_argument("--scene", help="scene JSON (default: random scene from --seed)")

    p = sub.add_parser("exec", parents=[common], help="execute a task plan in the simulator")
    p.add_argument("--plan", required=True)
    p.add_argument("--policy", choices=["retry_relaxed", "skip", "abort"])

    p = sub.add_parser("eval", parents=[common], help="evaluate ablation groups")
    p.add_argument("--group", default="all", choices=list(GROUPS) + ["all"])
    p.add_argument("--task", default="all", choices=list(TASK_KEYS) + ["all"])
    p.add_argument("--n", type=int, help="scenes per cell (default from config)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    timer = Timer(args.verbose)
    try:
        config = SimConfig.load(args.config)
        paths = COMMANDS[args.command](args, config, timer)
    except Exception as exc:  # every failure becomes a machine-readable error
        doc = {"stage": args.command, "error": type(exc).__name__, "message": str(exc)}
        report = getattr(exc, "report", None)
        if report is not None and hasattr(report, "to_dict"):
            doc["validation"] = report.to_dict()
        print(json.dumps(doc, sort_keys=True), file=sys.stderr)
        return 1
    if args.verbose:
        for path in paths:
            print(f"wrote {path}", file=sys.stderr)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
