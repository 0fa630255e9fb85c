"""Answer canonicalization, exact equivalence, and step-forced parsing.

Everything downstream (triage, MC indicators, majority voting) reduces to the
question "are these two answers the same?", so this is worth a close look.
"""

from prmpipe import answers_equivalent, canonicalize_answer, extract_final_answer, parse_steps

RAW_ANSWERS = [
    "The answer is $\\boxed{42}$",
    "  1/2 ",
    "\\boxed{\\frac{1}{2}}",
    "0.5",
    "1,000",
    "2x+1",
]

print("== canonicalization ==")
for raw in RAW_ANSWERS:
    answer = canonicalize_answer(raw)
    print(f"{raw!r:45} -> text={answer.normalized_text!r:12} numeric={answer.numeric_value}")

print("\n== equivalence is exact rational arithmetic, not tolerance ==")
pairs = [("1/2", "0.5"), ("1/2", "2/4"), ("42", "41"), ("3.14", "157/50")]
for a, b in pairs:
    same = answers_equivalent(canonicalize_answer(a), canonicalize_answer(b))
    print(f"{a!r} ~ {b!r}: {same}")

print("\n== step-forced solutions parse on line-anchored markers ==")
generation = (
    "Step 1: Let the number be n, so 6n = 252.\n\n"
    "Step 2: Divide both sides by 6 to get n = 42.\n\n"
    "The answer is $\\boxed{42}$"
)
steps = parse_steps(generation)
for step in steps:
    print(f"  step {step.index}: {step.text[:60]}")
print("final answer:", extract_final_answer(generation))

print("\n== broken numbering is the failure signal ==")
print("parse of gapped text:", parse_steps("Step 1: fine\nStep 3: gap"))
