"""prmpipe: a process-supervision pipeline around external LLM endpoints.

Step-forced solution sampling, Monte Carlo step-label estimation with a
dynamic rollout budget, relative-progress labeling, rationale synthesis with
sandboxed code verification and consensus filtering, generative reward
extraction with test-time scaling, Best-of-N and critic orchestration, and
first-error evaluation.
"""

from .core import (
    CanonicalAnswer,
    Problem,
    Step,
    StepSolution,
    answers_equivalent,
    canonicalize_answer,
    extract_final_answer,
)
from .gateway import (
    GenerationOutcome,
    GenerationRequest,
    ModelGateway,
    OpenAIBackend,
    ReplayCache,
    TokenLogprob,
    derive_seed,
)
from .labels import (
    MCProfile,
    ProgressLabels,
    build_mc_profile,
    choose_k,
    compute_progress,
    estimate_state_mc,
    first_error_index,
)
from .mockworld import BranchingProblem, MockBackend, MockWorld, ScriptedBackend, TableProblem, WorldSettings
from .rationale import (
    FilterDecision,
    Rationale,
    RationaleBlock,
    build_rationale_prompt,
    consensus_filter,
    parse_rationale,
    run_rationale_session,
)
from .rewards import (
    RewardVector,
    VerdictExtraction,
    aggregate_paths,
    binarize,
    extract_step_reward,
    predicted_first_error,
    verify_solution,
)
from .sampler import SamplingPlan, TriageOutcome, parse_steps, sample_solutions, triage_problem
from .sandbox import CodeSandbox, SandboxLimits, SandboxResult, format_feedback
from .tts import CandidateSet, RefinementTurn, best_of_n, critic_refine, majority_vote, score_candidate
from .evaluation import EvalRecord, MetricsReport, compute_f1, judge_sample, run_protocol

__version__ = "0.1.0"

__all__ = [
    "CanonicalAnswer",
    "Problem",
    "Step",
    "StepSolution",
    "answers_equivalent",
    "canonicalize_answer",
    "extract_final_answer",
    "GenerationOutcome",
    "GenerationRequest",
    "ModelGateway",
    "OpenAIBackend",
    "ReplayCache",
    "TokenLogprob",
    "derive_seed",
    "MCProfile",
    "ProgressLabels",
    "build_mc_profile",
    "choose_k",
    "compute_progress",
    "estimate_state_mc",
    "first_error_index",
    "BranchingProblem",
    "MockBackend",
    "MockWorld",
    "ScriptedBackend",
    "TableProblem",
    "WorldSettings",
    "FilterDecision",
    "Rationale",
    "RationaleBlock",
    "build_rationale_prompt",
    "consensus_filter",
    "parse_rationale",
    "run_rationale_session",
    "RewardVector",
    "VerdictExtraction",
    "aggregate_paths",
    "binarize",
    "extract_step_reward",
    "predicted_first_error",
    "verify_solution",
    "SamplingPlan",
    "TriageOutcome",
    "parse_steps",
    "sample_solutions",
    "triage_problem",
    "CodeSandbox",
    "SandboxLimits",
    "SandboxResult",
    "format_feedback",
    "CandidateSet",
    "RefinementTurn",
    "best_of_n",
    "critic_refine",
    "majority_vote",
    "score_candidate",
    "EvalRecord",
    "MetricsReport",
    "compute_f1",
    "judge_sample",
    "run_protocol",
]
