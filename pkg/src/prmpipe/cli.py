"""Command-line surface tying the pipeline stages into reproducible runs.

Each stage reads its declared JSONL inputs, writes one JSONL (or JSON) output
plus a run manifest, and fails loudly with a line-addressed diagnostic on
malformed records. Outputs are replaced atomically, never partially.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

from . import evaluation, labels as labels_mod, rationale as rationale_mod, rewards as rewards_mod, tts as tts_mod
from .config import PipelineConfig
from .core import Problem, Step, StepSolution, answer_matches_gold
from .gateway import ModelGateway, OpenAIBackend, ReplayCache, derive_seed
from .mockworld import MockBackend, MockWorld
from .sampler import SamplingPlan, SampleStats, sample_solutions, triage_problem
from .sandbox import CodeSandbox, SandboxLimits
from .store import RecordError, RunManifest, StageTimer, read_manifest, write_manifest, write_records, read_records

log = logging.getLogger(__name__)

COMMANDS = (
    "sample",
    "mc",
    "label",
    "rationalize",
    "filter",
    "dataset",
    "verify",
    "bon",
    "critic",
    "eval",
    "report",
)

STAGE_ROLES = {
    "sample": ("policy",),
    "mc": ("completer",),
    "rationalize": ("verifier",),
    "verify": ("verifier",),
    "critic": ("policy", "verifier"),
    "eval": ("verifier",),
}


class StageContext:
    """Everything a stage needs, built once per invocation."""

    def __init__(self, config: PipelineConfig) -> None:
        self.config = config
        self.problems = self._load_problems()
        self.by_id = {p.id: p for p in self.problems}
        cache = ReplayCache(config.cache_dir) if config.cache_dir else None
        if config.mock:
            self.world: MockWorld | None = MockWorld.generate(
                self.problems, config.seed or 0, config.world
            )
            backends = {"*": MockBackend(self.world)}
        else:
            self.world = None
            backends = {
                role: OpenAIBackend(settings, endpoint_id=f"{role}:{settings.model}")
                for role, settings in config.endpoints.items()
            }
        self.gateway = ModelGateway(backends, cache=cache, max_in_flight=config.concurrency)
        self._sandbox: CodeSandbox | None = None

    def _load_problems(self) -> list[Problem]:
        path = self.config.path_for("problems")
        problems = []
        for number, record in enumerate(read_records(path), start=1):
            statement = record.get("problem") or record.get("statement") or record.get("question")
            answer = record.get("answer") or record.get("gold_answer")
            pid = record.get("id")
            if not (pid and statement and answer):
                raise RecordError(path, number, "need fields id, problem, answer")
            problems.append(Problem(id=str(pid), statement=str(statement), gold_answer=str(answer)))
        return problems

    @property
    def sandbox(self) -> CodeSandbox:
        if self._sandbox is None:
            sbx = self.config.sandbox
            self._sandbox = CodeSandbox(
                limits=SandboxLimits(
                    wall_clock_seconds=sbx.wall_clock_seconds,
                    output_byte_cap=sbx.output_byte_cap,
                    network_allowed=sbx.network_allowed,
                ),
                interpreter=sbx.interpreter,
            )
        return self._sandbox

    def seed(self) -> int:
        return self.config.seed or 0

    def limited(self, records: list) -> list:
        if self.config.limit is not None:
            return records[: self.config.limit]
        return records

    def load_solutions(self) -> list[dict]:
        return self.limited(read_records(self.config.path_for("solutions")))

    def solution_from_record(self, record: dict) -> StepSolution:
        steps = [Step(index=i, text=t) for i, t in enumerate(record["steps"], start=1)]
        return StepSolution(
            problem_id=record["problem_id"], steps=steps, final_answer=record.get("final_answer")
        )

    def ordered_parallel(self, fn: Callable, items: Sequence) -> list:
        """Run ``fn`` over items with bounded workers, results in input order."""
        if not items:
            return []
        workers = min(self.config.concurrency, len(items))
        if workers <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))


def _finish(
    ctx: StageContext,
    stage: str,
    output_name: str,
    records: list[dict],
    *,
    input_count: int,
    discarded: int = 0,
    output_count: int | None = None,
    stats: dict | None = None,
    timer: StageTimer | None = None,
) -> None:
    """Write records + manifest. Counts conserve in the stage's unit of
    account: input_count == output_count + discarded; stages that fan out or
    aggregate pass an explicit output_count and the file record count lands in
    stats as records_written."""
    path = ctx.config.path_for(output_name)
    write_records(path, records)
    stats = dict(stats or {})
    stats.setdefault("records_written", len(records))
    manifest = RunManifest(
        stage=stage,
        config_hash=ctx.config.snapshot_hash(),
        input_count=input_count,
        output_count=len(records) if output_count is None else output_count,
        discarded=discarded,
        stats=stats,
        wall_time_s=round(timer.elapsed, 3) if timer else 0.0,
    )
    write_manifest(path, manifest)
    print(f"[{stage}] {len(records)} records -> {path} (discarded {discarded})")


# --------------------------------------------------------------------- stages


def stage_sample(ctx: StageContext) -> None:
    cfg = ctx.config
    plan = SamplingPlan(
        max_paths=cfg.sampling.max_paths,
        batch_size=cfg.sampling.batch_size,
        early_stop=cfg.sampling.early_stop,
        temperature=cfg.sampling.temperature,
        max_tokens=cfg.sampling.max_tokens,
    )
    problems = ctx.limited(ctx.problems)
    records: list[dict] = []
    kept = discarded_problems = 0
    with StageTimer() as timer:
        for problem in problems:
            stats = SampleStats()
            solutions = sample_solutions(
                problem, plan, ctx.gateway, seed=ctx.seed(), stats=stats
            )
            triage = triage_problem(problem, solutions)
            if not triage.kept:
                discarded_problems += 1
                continue
            kept += 1
            pass1 = triage.pass1_estimate
            # Retained paths in draw order, capped per problem; which paths the
            # upstream protocol retains is unspecified, so draw order it is.
            for draw_index, solution in enumerate(solutions[: cfg.sampling.paths_per_problem]):
                records.append(
                    {
                        "solution_id": f"{problem.id}#{draw_index}",
                        "problem_id": problem.id,
                        "draw_index": draw_index,
                        "seed": ctx.seed(),
                        "steps": solution.step_texts(),
                        "final_answer": solution.final_answer,
                        "is_correct": answer_matches_gold(
                            solution.final_answer, problem.gold_answer
                        ),
                        "pass1": pass1,
                    }
                )
    _finish(
        ctx,
        "sample",
        "solutions",
        records,
        input_count=len(problems),
        discarded=discarded_problems,
        output_count=kept,
        stats={"problems_kept": kept},
        timer=timer,
    )


def stage_mc(ctx: StageContext) -> None:
    cfg = ctx.config
    solution_records = ctx.load_solutions()
    settings = labels_mod.CompletionSettings(
        temperature=cfg.mc.temperature,
        max_tokens=cfg.mc.max_tokens,
        instruction=cfg.mc.instruction,
    )
    failures = 0
    records: list[dict] = []

    def _profile(record: dict) -> dict | None:
        problem = ctx.by_id[record["problem_id"]]
        solution = ctx.solution_from_record(record)
        try:
            profile = labels_mod.build_mc_profile(
                problem,
                solution,
                ctx.gateway,
                solution_id=record["solution_id"],
                global_seed=ctx.seed(),
                pass1_hint=record.get("pass1"),
                initial_k=cfg.mc.initial_k,
                settings=settings,
            )
        except labels_mod.EstimationError as exc:
            log.warning("mc estimation skipped %s: %s", record["solution_id"], exc)
            return None
        return {
            "solution_id": profile.solution_id,
            "problem_id": record["problem_id"],
            "mc_scores": profile.state_scores,
            "rollout_counts": profile.rollout_counts,
            "k": labels_mod.choose_k(profile.state_scores[0]),
            "zero_cut": profile.zero_cut,
        }

    with StageTimer() as timer:
        for result in ctx.ordered_parallel(_profile, solution_records):
            if result is None:
                failures += 1
            else:
                records.append(result)
    _finish(
        ctx,
        "mc",
        "profiles",
        records,
        input_count=len(solution_records),
        discarded=failures,
        timer=timer,
    )


def stage_label(ctx: StageContext) -> None:
    cfg = ctx.config
    profile_records = ctx.limited(read_records(ctx.config.path_for("profiles")))
    records: list[dict] = []
    with StageTimer() as timer:
        for record in profile_records:
            profile = labels_mod.MCProfile(
                solution_id=record["solution_id"],
                state_scores=record["mc_scores"],
                rollout_counts=record["rollout_counts"],
                zero_cut=record.get("zero_cut"),
            )
            progress = labels_mod.compute_progress(profile, cfg.labels.method, cfg.labels.epsilon)
            records.append(
                {
                    "solution_id": record["solution_id"],
                    "method": progress.method,
                    "epsilon": progress.epsilon,
                    "mc_scores": profile.state_scores,
                    "progress": progress.progress,
                    "labels": progress.labels,
                    "first_error": labels_mod.first_error_index(progress),
                }
            )
    _finish(
        ctx, "label", "labels", records, input_count=len(profile_records), timer=timer
    )


def stage_rationalize(ctx: StageContext) -> None:
    cfg = ctx.config
    solution_records = ctx.load_solutions()
    invalid = 0
    records: list[dict] = []

    def _session(record: dict) -> dict | None:
        problem = ctx.by_id[record["problem_id"]]
        solution = ctx.solution_from_record(record)
        try:
            result = rationale_mod.run_rationale_session(
                problem,
                solution.steps,
                ctx.gateway,
                ctx.sandbox,
                solution_id=record["solution_id"],
                seed=derive_seed(ctx.seed(), "rationale", record["solution_id"]),
                temperature=cfg.rationale.temperature,
                max_tokens=cfg.rationale.max_tokens,
                extra_segments=cfg.rationale.extra_segments,
            )
        except rationale_mod.RationaleSessionError as exc:
            log.warning("rationale session invalid for %s: %s", record["solution_id"], exc.reason)
            return None
        return {
            "solution_id": record["solution_id"],
            "problem_id": record["problem_id"],
            "judged_first_error": result.judged_first_error,
            "transcript": result.raw_transcript,
            "num_blocks": len(result.blocks),
        }

    with StageTimer() as timer:
        for result in ctx.ordered_parallel(_session, solution_records):
            if result is None:
                invalid += 1
            else:
                records.append(result)
    _finish(
        ctx,
        "rationalize",
        "rationales",
        records,
        input_count=len(solution_records),
        discarded=invalid,
        timer=timer,
    )


def stage_filter(ctx: StageContext) -> None:
    label_records = {r["solution_id"]: r for r in read_records(ctx.config.path_for("labels"))}
    rationale_records = ctx.limited(read_records(ctx.config.path_for("rationales")))
    records: list[dict] = []
    missing = 0
    retained = 0
    with StageTimer() as timer:
        for record in rationale_records:
            sid = record["solution_id"]
            label_record = label_records.get(sid)
            if label_record is None:
                missing += 1
                continue
            progress = labels_mod.ProgressLabels(
                method=label_record["method"],
                epsilon=label_record["epsilon"],
                progress=label_record["progress"],
                labels=label_record["labels"],
            )
            parsed = rationale_mod.Rationale(
                solution_id=sid,
                blocks=[],
                judged_first_error=record["judged_first_error"],
                raw_transcript=record["transcript"],
            )
            decision = rationale_mod.consensus_filter(progress, parsed)
            retained += int(decision.retained)
            records.append(
                {
                    "solution_id": sid,
                    "retained": decision.retained,
                    "mismatch_positions": decision.mismatch_positions,
                }
            )
    stats = {
        "retained": retained,
        "retention_rate": retained / len(records) if records else 0.0,
    }
    _finish(
        ctx,
        "filter",
        "filters",
        records,
        input_count=len(rationale_records),
        discarded=missing,
        stats=stats,
        timer=timer,
    )


def stage_dataset(ctx: StageContext) -> None:
    solutions = {r["solution_id"]: r for r in read_records(ctx.config.path_for("solutions"))}
    label_records = {r["solution_id"]: r for r in read_records(ctx.config.path_for("labels"))}
    rationales = {r["solution_id"]: r for r in read_records(ctx.config.path_for("rationales"))}
    filter_records = ctx.limited(read_records(ctx.config.path_for("filters")))
    records: list[dict] = []
    dropped = 0
    with StageTimer() as timer:
        for record in filter_records:
            sid = record["solution_id"]
            solution = solutions.get(sid)
            label_record = label_records.get(sid)
            rationale_record = rationales.get(sid)
            if not (solution and label_record and rationale_record):
                dropped += 1
                continue
            problem = ctx.by_id[solution["problem_id"]]
            records.append(
                {
                    "solution_id": sid,
                    "problem": problem.statement,
                    "steps": solution["steps"],
                    "labels": label_record["labels"],
                    "rationale_transcript": rationale_record["transcript"],
                    "judged_first_error": rationale_record["judged_first_error"],
                    "retained": record["retained"],
                }
            )
    _finish(
        ctx,
        "dataset",
        "dataset",
        records,
        input_count=len(filter_records),
        discarded=dropped,
        timer=timer,
    )


def stage_verify(ctx: StageContext) -> None:
    cfg = ctx.config
    solution_records = ctx.load_solutions()
    failures = 0
    records: list[dict] = []

    def _verify(record: dict) -> dict | None:
        problem = ctx.by_id[record["problem_id"]]
        solution = ctx.solution_from_record(record)
        try:
            result = rewards_mod.verify_solution(
                problem,
                solution,
                ctx.gateway,
                ctx.sandbox if cfg.rewards.code_exec else None,
                n_paths=cfg.rewards.n_paths,
                threshold=cfg.rewards.threshold,
                renormalize=cfg.rewards.renormalize,
                seed=derive_seed(ctx.seed(), "reward", record["solution_id"]),
                temperature=cfg.rewards.temperature,
                max_tokens=cfg.rewards.max_tokens,
                solution_id=record["solution_id"],
            )
        except rewards_mod.VerdictExtractionError as exc:
            log.warning("verification failed for %s: %s", record["solution_id"], exc)
            return None
        vector = result.reward_vector
        return {
            "solution_id": record["solution_id"],
            "problem_id": record["problem_id"],
            "N": vector.paths_used,
            "rewards": vector.rewards,
            "per_path": vector.per_path_rewards,
            "verdicts": result.verdicts,
            "first_error_pred": rewards_mod.predicted_first_error(vector, cfg.rewards.threshold),
        }

    with StageTimer() as timer:
        for result in ctx.ordered_parallel(_verify, solution_records):
            if result is None:
                failures += 1
            else:
                records.append(result)
    _finish(
        ctx,
        "verify",
        "rewards",
        records,
        input_count=len(solution_records),
        discarded=failures,
        timer=timer,
    )


def stage_bon(ctx: StageContext) -> None:
    cfg = ctx.config
    solutions = read_records(ctx.config.path_for("solutions"))
    reward_records = {r["solution_id"]: r for r in read_records(ctx.config.path_for("rewards"))}
    grouped: dict[str, list[tuple[dict, dict]]] = {}
    missing_rewards = 0
    for record in solutions:
        reward = reward_records.get(record["solution_id"])
        if reward is None:
            missing_rewards += 1
            continue
        grouped.setdefault(record["problem_id"], []).append((record, reward))
    records: list[dict] = []
    correct = 0
    with StageTimer() as timer:
        for problem_id in sorted(grouped):
            problem = ctx.by_id[problem_id]
            candidates = []
            for sol_record, reward_record in grouped[problem_id]:
                vector = rewards_mod.RewardVector(
                    solution_id=sol_record["solution_id"],
                    rewards=reward_record["rewards"],
                    paths_used=reward_record["N"],
                )
                candidates.append((ctx.solution_from_record(sol_record), vector))
            candidate_set = tts_mod.CandidateSet(problem_id=problem_id, candidates=candidates)
            chosen = tts_mod.best_of_n(candidate_set, cfg.tts.bon_method)
            chosen_idx = next(
                i for i, (sol, _) in enumerate(candidates) if sol is chosen
            )
            scores = [
                tts_mod.score_candidate(vector, cfg.tts.bon_method) for _, vector in candidates
            ]
            is_correct = answer_matches_gold(chosen.final_answer, problem.gold_answer)
            correct += int(is_correct)
            records.append(
                {
                    "problem_id": problem_id,
                    "method": cfg.tts.bon_method,
                    "chosen_candidate": chosen_idx,
                    "scores": scores,
                    "chosen_answer": chosen.final_answer,
                    "answer_correct": is_correct,
                }
            )
    stats = {"bon_accuracy": correct / len(records) if records else 0.0}
    _finish(
        ctx,
        "bon",
        "bon",
        records,
        input_count=len(solutions),
        discarded=missing_rewards,
        output_count=len(solutions) - missing_rewards,
        stats=stats,
        timer=timer,
    )


def stage_critic(ctx: StageContext) -> None:
    cfg = ctx.config
    solutions = ctx.load_solutions()
    first_by_problem: dict[str, dict] = {}
    for record in solutions:
        current = first_by_problem.get(record["problem_id"])
        # Prefer an incorrect starting solution: that is where refinement acts.
        if current is None or (not record["is_correct"] and current["is_correct"]):
            first_by_problem[record["problem_id"]] = record
    records: list[dict] = []
    turn_correct: dict[int, int] = {t: 0 for t in range(1, cfg.tts.max_turns + 1)}
    zero_shot = 0
    failures = 0
    with StageTimer() as timer:
        for problem_id in sorted(first_by_problem):
            record = first_by_problem[problem_id]
            problem = ctx.by_id[problem_id]
            solution = ctx.solution_from_record(record)
            zero_shot += int(record["is_correct"])
            try:
                initial = rewards_mod.verify_solution(
                    problem,
                    solution,
                    ctx.gateway,
                    ctx.sandbox if cfg.rewards.code_exec else None,
                    n_paths=cfg.rewards.n_paths,
                    threshold=cfg.rewards.threshold,
                    seed=derive_seed(ctx.seed(), "critic-init", record["solution_id"]),
                    solution_id=record["solution_id"],
                )
                turns = tts_mod.critic_refine(
                    problem,
                    solution,
                    initial,
                    ctx.gateway,
                    ctx.sandbox if cfg.rewards.code_exec else None,
                    max_turns=cfg.tts.max_turns,
                    n_paths=cfg.rewards.n_paths,
                    threshold=cfg.rewards.threshold,
                    seed=derive_seed(ctx.seed(), "critic", record["solution_id"]),
                )
            except rewards_mod.VerdictExtractionError as exc:
                log.warning("critic failed for %s: %s", problem_id, exc)
                failures += 1
                continue
            state_correct = record["is_correct"]
            by_turn = {t.turn: t for t in turns}
            for turn_number in range(1, cfg.tts.max_turns + 1):
                turn = by_turn.get(turn_number)
                if turn is not None and turn.refined_solution is not None:
                    state_correct = answer_matches_gold(
                        turn.refined_solution.final_answer, problem.gold_answer
                    )
                    records.append(
                        {
                            "problem_id": problem_id,
                            "turn": turn_number,
                            "flagged_steps": sorted(turn.critique_payload),
                            "critiques": {str(t): turn.critique_payload[t] for t in sorted(turn.critique_payload)},
                            "refined_steps": turn.refined_solution.step_texts(),
                            "refined_answer": turn.refined_solution.final_answer,
                            "answer_correct": state_correct,
                            "verdicts": turn.verdicts,
                        }
                    )
                turn_correct[turn_number] += int(state_correct)
    total = len(first_by_problem) - failures
    stats = {
        "problems": total,
        "zero_shot_accuracy": zero_shot / total if total else 0.0,
        "turn_accuracy": {
            str(t): turn_correct[t] / total if total else 0.0 for t in turn_correct
        },
    }
    _finish(
        ctx,
        "critic",
        "critic",
        records,
        input_count=len(first_by_problem),
        discarded=failures,
        output_count=total,
        stats=stats,
        timer=timer,
    )


def stage_eval(ctx: StageContext) -> None:
    cfg = ctx.config
    eval_records = ctx.limited(read_records(ctx.config.path_for("eval_input")))
    samples = [evaluation.sample_from_record(r) for r in eval_records]

    def driver(sample: evaluation.EvalSample, path: int) -> list[float]:
        problem = Problem(
            id=sample.sample_id or "sample",
            statement=sample.problem_statement,
            gold_answer="unused",
        )
        solution = StepSolution(
            problem_id=problem.id,
            steps=[Step(index=i, text=t) for i, t in enumerate(sample.step_texts, start=1)],
        )
        result = rewards_mod.verify_solution(
            problem,
            solution,
            ctx.gateway,
            ctx.sandbox if cfg.rewards.code_exec else None,
            n_paths=1,
            threshold=cfg.rewards.threshold,
            renormalize=cfg.rewards.renormalize,
            seed=derive_seed(ctx.seed(), "eval", sample.sample_id, path),
            solution_id=sample.sample_id,
        )
        return result.reward_vector.rewards

    with StageTimer() as timer:
        report = evaluation.run_protocol(
            samples,
            driver,
            mode=cfg.eval.mode,
            n=cfg.eval.n,
            threshold=cfg.rewards.threshold,
        )
    report_path = ctx.config.path_for("eval_report")
    report_path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "mode": cfg.eval.mode,
        "n": cfg.eval.n if cfg.eval.mode == "maj_n" else 1,
        "average_f1": round(report.average_f1, 1),
        "subsets": {
            name: {
                "err_acc": round(m.err_acc, 1),
                "corr_acc": round(m.corr_acc, 1),
                "f1": round(m.f1, 1),
                "err_total": m.err_total,
                "corr_total": m.corr_total,
            }
            for name, m in report.per_subset.items()
        },
        "total_samples": report.total_samples,
        "failures": report.failures,
    }
    tmp = report_path.with_name(report_path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(report_path)
    manifest = RunManifest(
        stage="eval",
        config_hash=ctx.config.snapshot_hash(),
        input_count=len(samples),
        output_count=report.total_samples,
        discarded=0,
        stats={"average_f1": round(report.average_f1, 1), "failures": report.failures},
        wall_time_s=round(timer.elapsed, 3),
    )
    write_manifest(report_path, manifest)
    print(evaluation.format_report_table(report))
    print(f"[eval] report -> {report_path}")


def stage_report(ctx: StageContext) -> None:
    lines = ["run report", "=========="]
    for name in ("solutions", "profiles", "labels", "rationales", "filters", "dataset", "rewards", "bon", "critic", "eval_report"):
        path = ctx.config.path_for(name)
        try:
            manifest = read_manifest(path)
        except FileNotFoundError:
            continue
        conserved = manifest["input_count"] == manifest["output_count"] + manifest["discarded"]
        lines.append(
            f"{manifest['stage']:<12} in={manifest['input_count']:<6} out={manifest['output_count']:<6} "
            f"discarded={manifest['discarded']:<6} conserved={'yes' if conserved else 'NO'}"
        )
        for key, value in sorted(manifest.get("stats", {}).items()):
            lines.append(f"{'':<12}   {key}: {value}")
    text = "\n".join(lines) + "\n"
    report_path = ctx.config.path_for("run_report")
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(text, encoding="utf-8")
    print(text, end="")


STAGES: dict[str, Callable[[StageContext], None]] = {
    "sample": stage_sample,
    "mc": stage_mc,
    "label": stage_label,
    "rationalize": stage_rationalize,
    "filter": stage_filter,
    "dataset": stage_dataset,
    "verify": stage_verify,
    "bon": stage_bon,
    "critic": stage_critic,
    "eval": stage_eval,
    "report": stage_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prmpipe", description="Process-supervision pipeline stages."
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="path to a JSON or YAML config document")
    parser.add_argument("--workdir", help="artifact directory (overrides config)")
    parser.add_argument("--seed", type=int, help="global seed (overrides config)")
    parser.add_argument("--limit", type=int, help="subsample the stage input to N records")
    parser.add_argument("--mock", action="store_true", help="force the deterministic mock backend")
    parser.add_argument("--cache-dir", help="record/replay cache directory")
    for role in ("policy", "completer", "verifier", "judge"):
        parser.add_argument(
            f"--endpoint.{role}.url",
            dest=f"endpoint_{role}_url",
            help=f"base URL for the {role} endpoint",
        )
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(command: str, config: PipelineConfig) -> int:
    """Execute one stage; returns a process exit status."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    config.validate_for_run(STAGE_ROLES.get(command, ()))
    ctx = StageContext(config)
    STAGES[command](ctx)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = (
            PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
        )
        endpoint_urls = {
            role: getattr(args, f"endpoint_{role}_url")
            for role in ("policy", "completer", "verifier", "judge")
            if getattr(args, f"endpoint_{role}_url")
        }
        config = config.with_overrides(
            seed=args.seed,
            mock=True if args.mock else None,
            cache_dir=args.cache_dir,
            limit=args.limit,
            workdir=args.workdir,
            endpoint_urls=endpoint_urls or None,
        )
        return run(args.command, config)
    except (RecordError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
