"""Command-line entry point: ``hybrid-manip {train,run,bench,plan}``.

Settings come from three layers, highest first: command-line flags, a YAML
file given with ``--config``, then the defaults in :class:`Config`. The LLM
API key is only ever read from the environment variable named by
``planner.api_key_env``.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
import time
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from hybrid_manip.bench.report import render_markdown, run_benchmark, write_report
from hybrid_manip.bench.runner import Condition, hybrid_llm, hybrid_rule_based, rl_only
from hybrid_manip.env.scenario_io import load_scenario
from hybrid_manip.env.sim import Env
from hybrid_manip.errors import (
    ConfigError,
    HybridManipError,
    InvalidScenario,
    ParseError,
    PlannerFailure,
    SkillMissing,
    TransportError,
)
from hybrid_manip.integration.executor import ExecutionConfig, execute_task, write_trace
from hybrid_manip.integration.skills import SkillLibrary
from hybrid_manip.planner.llm import DEFAULT_API_KEY_ENV, LlmClient, LlmExchange, LlmPlanner, plan_llm
from hybrid_manip.planner.plan import LLM, RULE_BASED, RuleBasedPlanner, TaskPlan, plan_to_json
from hybrid_manip.rl.checkpoint import PolicyCheckpoint
from hybrid_manip.rl.ppo import PpoConfig
from hybrid_manip.rl.sac import SacConfig
from hybrid_manip.rl.skills import FLAT, SKILLS
from hybrid_manip.rl.train import ALGOS, SKILL_PPO, SKILL_SAC, WINDOW, train_flat, train_skill

log = logging.getLogger("hybrid_manip")

EXIT_OK, EXIT_TASK_FAILED, EXIT_CONFIG, EXIT_TRANSPORT = 0, 1, 2, 3
TRAINABLE = (*SKILLS, FLAT)
ORACLE = "oracle"


# Configuration ------------------------------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PlannerSettings(_Strict):
    backend: Literal["rule_based", "llm"] = RULE_BASED
    url: Optional[str] = None
    model: str = "gpt-4o-mini"
    timeout: float = Field(30.0, gt=0)
    max_retries: int = Field(2, ge=0)
    max_tokens: int = Field(1024, gt=0)
    api_key_env: str = DEFAULT_API_KEY_ENV


class PpoSettings(_Strict):
    clip: Optional[float] = Field(None, gt=0)
    gamma: Optional[float] = Field(None, gt=0, le=1)
    lam: Optional[float] = Field(None, ge=0, le=1)
    epochs: Optional[int] = Field(None, gt=0)
    minibatch: Optional[int] = Field(None, gt=0)
    horizon: Optional[int] = Field(None, gt=0)
    vf_coef: Optional[float] = None
    ent_coef: Optional[float] = None
    max_grad_norm: Optional[float] = Field(None, gt=0)
    lr: Optional[float] = Field(None, gt=0)
    init_log_std: Optional[float] = None


class SacSettings(_Strict):
    gamma: Optional[float] = Field(None, gt=0, le=1)
    tau: Optional[float] = Field(None, gt=0, le=1)
    batch: Optional[int] = Field(None, gt=0)
    capacity: Optional[int] = Field(None, gt=0)
    alpha: Optional[float] = Field(None, gt=0)
    auto_alpha: Optional[bool] = None
    target_entropy: Optional[float] = None
    lr: Optional[float] = Field(None, gt=0)
    warmup: Optional[int] = Field(None, ge=0)
    reward_scale: Optional[float] = Field(None, gt=0)
    updates_per_step: Optional[int] = Field(None, gt=0)


def _overridden(base, settings: _Strict):
    return dataclasses.replace(base, **{k: v for k, v in settings.model_dump().items() if v is not None})


class TrainSettings(_Strict):
    algo: Literal["ppo", "sac"] = "ppo"
    episodes: int = Field(100, ge=0)
    ppo: PpoSettings = PpoSettings()
    sac: SacSettings = SacSettings()

    def algo_config(self) -> PpoConfig | SacConfig:
        return _overridden(SKILL_PPO, self.ppo) if self.algo == "ppo" else _overridden(SKILL_SAC, self.sac)


class ExecutionSettings(_Strict):
    max_steps_per_subtask: int = Field(100, gt=0)
    max_replans: int = Field(3, ge=0)
    monitor_pose_tol: float = Field(0.02, gt=0)
    collision_burst: int = Field(3, gt=0)

    def to_config(self) -> ExecutionConfig:
        return ExecutionConfig(**self.model_dump())


class BenchSettings(_Strict):
    scenarios: list[str] = ["pick_place"]
    episodes: int = Field(10, gt=0)
    conditions: list[Condition] = [Condition.RL_ONLY, Condition.HYBRID_RULE_BASED]
    init_noise: float = Field(0.03, ge=0)
    # RL-only baseline: a saved flat checkpoint, else train one per scenario, else random weights
    flat_checkpoint: Optional[str] = None
    flat_episodes: int = Field(0, ge=0)


class Config(_Strict):
    seed: int = 0
    out: str = "runs"
    scenario: str = "pick_place"
    skills: str = ORACLE
    init_noise: float = Field(0.0, ge=0)
    planner: PlannerSettings = PlannerSettings()
    train: TrainSettings = TrainSettings()
    execution: ExecutionSettings = ExecutionSettings()
    bench: BenchSettings = BenchSettings()

    def digest(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode()).hexdigest()[:10]


# flag dest -> dotted config key
FLAG_KEYS = {
    "seed": "seed",
    "out": "out",
    "scenario": "scenario",
    "skills": "skills",
    "planner": "planner.backend",
    "llm_url": "planner.url",
    "llm_model": "planner.model",
    "algo": "train.algo",
    "episodes": "train.episodes",
    "bench_scenarios": "bench.scenarios",
    "bench_episodes": "bench.episodes",
    "conditions": "bench.conditions",
    "flat_checkpoint": "bench.flat_checkpoint",
    "flat_episodes": "bench.flat_episodes",
}


def _set_dotted(data: dict, key: str, value) -> None:
    *parents, leaf = key.split(".")
    for p in parents:
        node = data.get(p)
        if node is None:
            node = data[p] = {}
        elif not isinstance(node, dict):
            raise ConfigError(f"config key {p!r} must be a mapping")
        data = node
    data[leaf] = value


def read_config_file(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a mapping")
    return data


def resolve_config(file_data: dict, flags: dict) -> Config:
    """Merge flag values over file values over defaults, then validate everything at once."""
    data = json.loads(json.dumps(file_data))  # deep copy
    for dest, key in FLAG_KEYS.items():
        value = flags.get(dest)
        if value is not None:
            _set_dotted(data, key, value)
    try:
        return Config.model_validate(data)
    except ValidationError as exc:
        lines = [f"  {'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()]
        raise ConfigError("invalid configuration:\n" + "\n".join(lines)) from None


def make_run_dir(config: Config, command: str) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = Path(config.out) / f"{stamp}-{command}-{config.digest()}"
    path, n = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}.{n}")
        n += 1
    path.mkdir(parents=True)
    (path / "config.json").write_text(json.dumps(config.model_dump(mode="json"), sort_keys=True, indent=2) + "\n")
    return path


# Shared helpers -----------------------------------------------------------------------------


def make_llm_client(settings: PlannerSettings) -> LlmClient:
    if not settings.url:
        raise ConfigError("the llm planner needs planner.url (config file) or --llm-url")
    return LlmClient(
        settings.url, settings.model, settings.api_key_env, settings.timeout, settings.max_retries, settings.max_tokens
    )


def make_planner(settings: PlannerSettings):
    if settings.backend == LLM:
        return LlmPlanner(make_llm_client(settings))
    return RuleBasedPlanner()


def load_skills(spec: str) -> SkillLibrary:
    if spec == ORACLE:
        return SkillLibrary.oracle()
    if not Path(spec).is_dir():
        raise ConfigError(f"skills must be {ORACLE!r} or a directory of checkpoints, got {spec!r}")
    return SkillLibrary.load(spec)


def _scenario(name: str):
    try:
        return load_scenario(name)
    except (InvalidScenario, OSError) as exc:
        raise ConfigError(f"cannot load scenario {name!r}: {exc}") from None


def _instruction(text: str) -> str:
    if not text.strip():
        raise ConfigError("instruction must not be empty")
    return text


def plan_json(plan: TaskPlan) -> str:
    return json.dumps(json.loads(plan_to_json(plan.subtasks)), separators=(",", ":"), sort_keys=True)


def exchange_json(exchange: LlmExchange) -> str:
    """Deterministic view of one LLM exchange; latency goes to stderr."""
    resp = exchange.response
    data = {
        "request": dataclasses.asdict(exchange.request),
        "response": {
            "raw_text": resp.raw_text,
            "plan": None if resp.plan is None else json.loads(plan_to_json(resp.plan.subtasks)),
            "error": resp.error,
            "retries_used": resp.retries_used,
        },
    }
    return json.dumps(data, sort_keys=True, indent=2)


def _transport_cause(exc: BaseException) -> bool:
    while exc is not None:
        if isinstance(exc, TransportError):
            return True
        exc = exc.__cause__
    return False


def _error_chain(exc: BaseException) -> str:
    parts = []
    while exc is not None:
        parts.append(f"{type(exc).__name__}: {exc}")
        exc = exc.__cause__
    return "\n  caused by ".join(parts)


# Commands -----------------------------------------------------------------------------------


def cmd_train(config: Config, args) -> int:
    skill, settings = args.skill, config.train
    run_dir = make_run_dir(config, "train")
    if skill == FLAT:
        if settings.algo != "ppo":
            raise ConfigError("the flat baseline policy is trained with ppo only")
        ckpt, curve = train_flat(_scenario(config.scenario), settings.episodes, config.seed, settings.algo_config())
    else:
        ckpt, curve = train_skill(None, skill, settings.algo, settings.episodes, config.seed, settings.algo_config())
    ckpt_path = ckpt.save(run_dir / f"{skill}.ckpt")
    curve_path = run_dir / f"{skill}_{settings.algo}_seed{config.seed}_curve.csv"
    curve_path.write_text(curve.to_csv())
    print(f"checkpoint: {ckpt_path}")
    print(f"learning curve: {curve_path} ({len(curve)} episodes)")
    if len(curve):
        n = min(WINDOW, len(curve))
        print(f"final-window mean reward (last {n} episodes): {curve.window_mean(-n, None):.4f}")
    else:
        print("final-window mean reward: n/a (no episodes)")
    return EXIT_OK


def cmd_run(config: Config, args) -> int:
    instr = _instruction(args.instruction)
    scenario = _scenario(config.scenario)
    planner = make_planner(config.planner)  # config errors surface before any simulation
    skills = load_skills(config.skills)
    env = Env(scenario, seed=config.seed, init_noise=config.init_noise)
    run_dir = make_run_dir(config, "run")
    try:
        result = execute_task(instr, env, planner, skills, config.execution.to_config())
    except PlannerFailure as exc:
        path = write_trace(exc.result.trace, run_dir / "trace.jsonl")
        print(f"status: failed (planner_error)\ntrace: {path}")
        print(_error_chain(exc), file=sys.stderr)
        if _transport_cause(exc):
            return EXIT_TRANSPORT
        return EXIT_CONFIG if isinstance(exc.__cause__, ParseError) else EXIT_TASK_FAILED
    trace_path = write_trace(result.trace, run_dir / "trace.jsonl")
    print(f"status: {result.status} ({result.reason})")
    print(f"steps: {result.total_steps}  sim time: {result.wall_seconds:.2f} s  replans: {result.replans_used}")
    print(f"cumulative reward: {result.cumulative_reward:.4f}")
    print(f"trace: {trace_path}")
    if result.llm_latency_ms:
        print(f"llm latency: {result.llm_latency_ms:.1f} ms", file=sys.stderr)
    if result.error:
        print(result.error, file=sys.stderr)
    return EXIT_OK if result.succeeded else EXIT_TASK_FAILED


def _flat_policies(config: Config, suite) -> PolicyCheckpoint | dict | None:
    bench = config.bench
    if bench.flat_checkpoint:
        try:
            return PolicyCheckpoint.load(bench.flat_checkpoint)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load flat checkpoint {bench.flat_checkpoint}: {exc}") from None
    if bench.flat_episodes:
        return {s.name: train_flat(s, bench.flat_episodes, config.seed)[0] for s in suite}
    return None


def cmd_bench(config: Config, args) -> int:
    bench = config.bench
    if not bench.scenarios:
        raise ConfigError("the benchmark battery has zero scenarios")
    if not bench.conditions:
        raise ConfigError("the benchmark battery has zero conditions")
    suite = [_scenario(s) for s in bench.scenarios]
    conditions = []
    for cond in dict.fromkeys(bench.conditions):
        if cond is Condition.RL_ONLY:
            conditions.append(rl_only(_flat_policies(config, suite)))
        elif cond is Condition.HYBRID_RULE_BASED:
            conditions.append(hybrid_rule_based(load_skills(config.skills)))
        else:
            make_llm_client(config.planner).close()  # fail fast on a missing endpoint
            settings = config.planner
            conditions.append(hybrid_llm(lambda: LlmPlanner(make_llm_client(settings)), load_skills(config.skills)))
    run_dir = make_run_dir(config, "bench")
    report = run_benchmark(
        suite, conditions, bench.episodes, config.seed,
        init_noise=bench.init_noise, execution=config.execution.to_config(),
    )
    paths = write_report(report, run_dir)
    sys.stdout.write(render_markdown(report))
    print(f"\nreport files: {run_dir}")
    log.info("wrote %d report files", len(paths))
    return EXIT_OK


def cmd_plan(config: Config, args) -> int:
    instr = _instruction(args.instruction)
    env = Env(_scenario(config.scenario), seed=config.seed, init_noise=config.init_noise)
    world = env.world_summary()
    if config.planner.backend == LLM:
        client = make_llm_client(config.planner)
        try:
            try:
                plan, exchange = plan_llm(instr, world, client)
            except HybridManipError as exc:
                if getattr(exc, "exchange", None) is not None:
                    print(exchange_json(exc.exchange))
                raise
        finally:
            client.close()
        print(plan_json(plan))
        print(exchange_json(exchange))
        print(f"llm latency: {exchange.response.latency_ms:.1f} ms", file=sys.stderr)
    else:
        print(plan_json(RuleBasedPlanner().plan(instr, world)))
    return EXIT_OK


# Argument parsing ---------------------------------------------------------------------------


def _csv_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _global_flags(parser: argparse.ArgumentParser, default) -> None:
    parser.add_argument("--config", metavar="PATH", default=default, help="YAML config file (flags override it)")
    parser.add_argument("--seed", type=int, metavar="N", default=default, help="global seed (default 0)")
    parser.add_argument("--out", metavar="DIR", default=default, help="root for run directories (default runs)")


def _planner_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--planner", choices=(RULE_BASED, LLM), help="planner backend (default rule_based)")
    parser.add_argument("--llm-url", metavar="URL", help="chat-completions endpoint for the llm backend")
    parser.add_argument("--llm-model", metavar="NAME", help="model name sent to the endpoint")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybrid-manip",
        description="Language-planned, skill-executed tabletop manipulation.",
        epilog=f"The LLM API key is read from ${DEFAULT_API_KEY_ENV} (or the variable named by planner.api_key_env).",
    )
    _global_flags(parser, None)
    # subcommands accept the global flags too; SUPPRESS keeps them from clobbering earlier values
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train", parents=[common], help="train one skill policy", description="Train one skill policy.")
    p.add_argument("skill", choices=TRAINABLE, help="skill to train (flat = whole-task baseline)")
    p.add_argument("--algo", choices=ALGOS, help="learning algorithm (default ppo)")
    p.add_argument("--episodes", type=int, metavar="N", help="training episodes (default 100)")
    p.add_argument("--scenario", metavar="NAME|PATH", help="scenario for the flat baseline")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", parents=[common], help="execute one instruction", description="Execute one instruction.")
    p.add_argument("instruction", help="instruction text")
    p.add_argument("--scenario", metavar="NAME|PATH", help="bundled scenario name or YAML path (default pick_place)")
    _planner_flags(p)
    p.add_argument("--skills", metavar="oracle|DIR", help="oracle controllers or a checkpoint directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", parents=[common], help="run a benchmark battery", description="Run a benchmark battery.")
    p.add_argument("--scenarios", dest="bench_scenarios", type=_csv_list, metavar="A,B", help="comma-separated scenarios")
    p.add_argument("--episodes", dest="bench_episodes", type=int, metavar="N", help="episodes per condition (default 10)")
    p.add_argument("--conditions", type=_csv_list, metavar="A,B", help="comma-separated conditions: "
                   + ", ".join(c.value for c in Condition))
    p.add_argument("--skills", metavar="oracle|DIR", help="skills for the hybrid conditions")
    p.add_argument("--flat-checkpoint", metavar="PATH", help="flat policy checkpoint for rl_only")
    p.add_argument("--flat-episodes", type=int, metavar="N", help="train the rl_only policy for N episodes per scenario")
    p.add_argument("--llm-url", metavar="URL", help="chat-completions endpoint for hybrid_llm")
    p.add_argument("--llm-model", metavar="NAME", help="model name sent to the endpoint")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plan", parents=[common], help="print a plan without executing", description="Print a plan without executing it.")
    p.add_argument("instruction", help="instruction text")
    p.add_argument("--scenario", metavar="NAME|PATH", help="bundled scenario name or YAML path (default pick_place)")
    _planner_flags(p)
    p.set_defaults(func=cmd_plan)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(read_config_file(args.config), vars(args))
        return args.func(config, args)
    except ParseError as exc:
        print(exc.render(), file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, SkillMissing) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TransportError as exc:
        print(f"error: {_error_chain(exc)}", file=sys.stderr)
        return EXIT_TRANSPORT
    except HybridManipError as exc:
        print(f"error: {_error_chain(exc)}", file=sys.stderr)
        return EXIT_TASK_FAILED


if __name__ == "__main__":
    sys.exit(main())
