from ._core import (
    canonical_program,
    normalize_config,
    pareto_front,
    parse,
    reward,
    run_canonical,
    run_config,
    softmax,
    sub_rewards,
    uncertainty_sigma,
)

__all__ = [
    "canonical_program",
    "normalize_config",
    "pareto_front",
    "parse",
    "reward",
    "run_canonical",
    "run_config",
    "softmax",
    "sub_rewards",
    "uncertainty_sigma",
]
