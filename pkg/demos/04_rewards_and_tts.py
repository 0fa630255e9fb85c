"""Generative rewards and the three test-time-scaling moves.

Per-step rewards are Yes-token probabilities read from the verifier's boxed
verdicts; averaging them over N verification paths is the verifier's own
test-time scaling. On top of that sit majority voting, Best-of-N reranking,
and the sequential critic-refinement loop.
"""

from prmpipe import CodeSandbox, ModelGateway, MockBackend, MockWorld, Problem, TableProblem
from prmpipe.core import canonicalize_answer
from prmpipe.rewards import predicted_first_error, verify_solution
from prmpipe.tts import CandidateSet, best_of_n, critic_refine, majority_vote, score_candidate

problem = Problem(
    id="demo",
    statement="Compute the canonical value for the demo task.",
    gold_answer="42",
)
world = MockWorld(seed=13)
world.add(
    TableProblem(
        problem=problem,
        depth=3,
        correct_steps=[f"transform {k}A" for k in (1, 2, 3)],
        wrong_steps=[f"transform {k}B" for k in (1, 2, 3)],
    )
)
gateway = ModelGateway({"*": MockBackend(world)}, max_in_flight=4)
sandbox = CodeSandbox()

print("== Maj@4 rewards for a solution with a wrong step 2 ==")
flawed = world.table_solution("demo", [True, False, True])
result = verify_solution(problem, flawed, gateway, sandbox, n_paths=4, seed=1, solution_id="x")
print("averaged rewards :", [round(r, 3) for r in result.reward_vector.rewards])
print("verdicts         :", result.verdicts)
print("first error pred :", predicted_first_error(result.reward_vector))

print("\n== majority voting pools equivalent answers ==")
votes = [canonicalize_answer(a) for a in ("1/2", "0.5", "3", "3", "0.5")]
print("winner:", majority_vote(votes).normalized_text)

print("\n== Best-of-N under the three scoring rules ==")
clean = world.table_solution("demo", [True, True, True])
clean_scores = verify_solution(problem, clean, gateway, sandbox, seed=2, solution_id="clean")
candidates = CandidateSet(
    problem_id="demo",
    candidates=[
        (flawed, result.reward_vector),
        (clean, clean_scores.reward_vector),
    ],
)
for method in ("min", "avg", "last"):
    chosen = best_of_n(candidates, method)
    scores = [round(score_candidate(v, method), 3) for _, v in candidates.candidates]
    print(f"  {method:4} scores={scores} -> answer {chosen.final_answer}")

print("\n== critic refinement: one error fixed per turn ==")
broken = world.table_solution("demo", [False, False, True])
initial = verify_solution(problem, broken, gateway, sandbox, seed=3, solution_id="broken")
for turn in critic_refine(problem, broken, initial, gateway, sandbox, seed=4):
    print(
        f"  turn {turn.turn}: critiqued steps {sorted(turn.critique_payload)} "
        f"-> answer {turn.refined_solution.final_answer} verdicts {turn.verdicts}"
    )
