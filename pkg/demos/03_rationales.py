"""Rationale synthesis with real code execution and consensus filtering.

Generation stops at every closing </verify>, the fenced code runs in the
sandbox, and the formatted feedback is spliced into the transcript before the
verifier continues. The final boxed index is then cross-checked against the
progress labels: disagree anywhere in the compared range and the solution is
dropped from the training corpus.
"""

from prmpipe import CodeSandbox, ModelGateway, MockBackend, MockWorld, Problem, TableProblem
from prmpipe.labels import ProgressLabels
from prmpipe.rationale import build_rationale_prompt, consensus_filter, run_rationale_session

problem = Problem(
    id="demo",
    statement="Compute the canonical value for the demo task.",
    gold_answer="42",
)
world = MockWorld(seed=11)
world.add(
    TableProblem(
        problem=problem,
        depth=3,
        correct_steps=["expand the square", "collect terms", "solve for n"],
        wrong_steps=["drop a term", "flip a sign", "divide by zero"],
    )
)
gateway = ModelGateway({"*": MockBackend(world)}, max_in_flight=4)
sandbox = CodeSandbox()

solution = world.table_solution("demo", [True, False, True])

print("== the verifier prompt (first 400 chars) ==")
print(build_rationale_prompt(problem, solution.steps)[:400], "...\n")

rationale = run_rationale_session(
    problem, solution.steps, gateway, sandbox, solution_id="demo#0", seed=3
)
print("== transcript with spliced execution feedback ==")
print(rationale.raw_transcript)
print("\njudged first error:", rationale.judged_first_error)

print("\n== consensus filtering against two label sets ==")
agreeing = ProgressLabels(method="ratio", epsilon=0.8, progress=[1.0, 0.0, 0.0], labels=[1, 0, 0])
clashing = ProgressLabels(method="ratio", epsilon=0.8, progress=[1.0, 1.0, 1.0], labels=[1, 1, 1])
print("labels agree with judge  ->", consensus_filter(agreeing, rationale))
print("labels clash with judge  ->", consensus_filter(clashing, rationale))
