"""Shared helpers: assemble small synthetic cohorts for pipeline tests."""

from faceaudit.cohort import build_cohort
from faceaudit.schema import default_schema
from faceaudit.synth import SynthConfig, generate
from faceaudit.trials import TrialPolicy, generate_trials, score_trials


def synth_cohort(config, schema=None):
    """Generate a cohort and return (cohort, synth_result)."""
    schema = schema or default_schema()
    result = generate(config, schema)
    return build_cohort(result.records, result.attributes), result


def scored_trials(cohort, seed=0, policy=None):
    trials = generate_trials(cohort, policy or TrialPolicy(), seed=seed)
    return trials, score_trials(cohort, trials)


def small_config(seed=0, n=12, dim=24, **overrides):
    """A fast two-cell cohort for tests that only need plumbing."""
    base = dict(
        identities_per_group={("man", "asian"): n, ("woman", "caucasian"): n},
        dim=dim,
        seed=seed,
    )
    base.update(overrides)
    return SynthConfig(**base)
