"""Monte Carlo step labels against the deterministic mock world.

A mock problem has a truth table per step level; completions from a prefix
reach the gold answer with a configurable probability that collapses to zero
once a wrong step enters the prefix. That is exactly the structure the MC
estimator and the progress-label methods are built to detect.
"""

from prmpipe import ModelGateway, MockBackend, MockWorld, Problem, TableProblem
from prmpipe.labels import build_mc_profile, choose_k, compute_progress, first_error_index

problem = Problem(
    id="demo",
    statement="Compute the canonical value for the demo task.",
    gold_answer="42",
)
world = MockWorld(seed=7)
world.add(
    TableProblem(
        problem=problem,
        depth=4,
        correct_steps=[f"apply rule {k}A" for k in (1, 2, 3, 4)],
        wrong_steps=[f"apply rule {k}B" for k in (1, 2, 3, 4)],
        completion_success_ok=0.8,
        completion_success_bad=0.0,
    )
)
gateway = ModelGateway({"*": MockBackend(world)}, max_in_flight=8)

print("== dynamic rollout budget from the estimated Pass@1 ==")
for pass1 in (0.05, 0.3, 0.95):
    print(f"  Pass@1 {pass1:4} -> K = {choose_k(pass1)}")

# A solution that goes wrong at step 3: states s_4 and s_5 are dead.
solution = world.table_solution("demo", [True, True, False, True])
profile = build_mc_profile(
    problem, solution, gateway, solution_id="demo#0", global_seed=1, pass1_hint=0.4
)
print("\n== MC profile (zero propagation after the poisoned step) ==")
print("state scores :", [round(s, 3) for s in profile.state_scores])
print("rollouts     :", profile.rollout_counts)
print("zero cut     :", profile.zero_cut)

print("\n== the three labeling methods over the same profile ==")
for method, epsilon in (("hard", None), ("ratio", 0.8), ("diff", -0.3)):
    labels = compute_progress(profile, method, epsilon)
    print(
        f"  {method:6} eps={labels.epsilon:+.1f} "
        f"progress={[round(p, 2) for p in labels.progress]} "
        f"labels={labels.labels} first_error={first_error_index(labels)}"
    )
