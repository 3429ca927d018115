"""Comment-aware fake news detection with adversarial training.

A self-contained pipeline: attack-comment generation (LLM-backed or
deterministic templates), a fusion classifier over news plus comment
branches with hand-written gradients, group-adaptive comment allocation
driven by per-category validation vulnerability, and a metrics harness
for clean, comprehensive, and targeted-attack regimes.
"""

__version__ = "0.1.0"
