"""The whole pipeline as reproducible CLI stages in a scratch directory.

sample -> mc -> label -> rationalize -> filter -> dataset builds the training
corpus; verify -> bon and critic exercise test-time scaling; eval scores
first-error predictions on a benchmark fixture. Run twice with the same seed
and every artifact is byte-identical.
"""

import json
import tempfile
from pathlib import Path

from prmpipe.cli import main

workdir = Path(tempfile.mkdtemp(prefix="prmpipe-demo-"))
problems_path = workdir / "problems.jsonl"
with open(problems_path, "w") as fh:
    for i, answer in enumerate(("42", "7", "1/2")):
        fh.write(
            json.dumps(
                {
                    "id": f"p{i}",
                    "problem": f"Compute the canonical value for task p{i}.",
                    "answer": answer,
                }
            )
            + "\n"
        )

config = {
    "workdir": str(workdir / "run"),
    "seed": 7,
    "mock": True,
    "concurrency": 8,
    "world": {"depth_min": 2, "depth_max": 3, "step_ok_rate": 0.6, "judge_accuracy": 0.9},
    "sampling": {"max_paths": 12, "batch_size": 6, "paths_per_problem": 3},
    "labels": {"method": "ratio", "epsilon": 0.8},
    "rewards": {"n_paths": 2},
    "paths": {"problems": str(problems_path)},
}
config_path = workdir / "config.json"
config_path.write_text(json.dumps(config, indent=2))

for stage in ("sample", "mc", "label", "rationalize", "filter", "dataset", "verify", "bon", "critic"):
    assert main([stage, "--config", str(config_path)]) == 0

print("\n== one dataset record ==")
first = json.loads((workdir / "run" / "dataset.jsonl").read_text().splitlines()[0])
print(json.dumps({k: first[k] for k in ("solution_id", "labels", "judged_first_error", "retained")}, indent=2))

print("\n== run report ==")
assert main(["report", "--config", str(config_path)]) == 0
print("artifacts in:", workdir / "run")
