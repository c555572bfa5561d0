"""Shared fixtures: fully trained chains are expensive enough to build
once per session and reuse across the chain, format, and acceptance
tests."""

from types import SimpleNamespace

import pytest

from stagechain import (RunConfig, fit_estimator, generate_process,
                        make_linear_chain_spec, make_shared_middle_spec,
                        pooled_labels, run_chain)


def build_bundle(spec, cfg):
    train = generate_process(spec, cfg.seed, "synth")
    est = generate_process(spec.with_samples(512), cfg.seed, "synth.estimator")
    val = generate_process(spec.with_samples(512), cfg.seed, "synth.validation")
    X, y = pooled_labels(est)
    gamma = fit_estimator(X, y, ridge=cfg.ridge, seed=cfg.seed)
    chain = run_chain(train.sequence, gamma, cfg)
    return SimpleNamespace(spec=spec, train=train, validation=val.sequence,
                           gamma=gamma, cfg=cfg, chain=chain)


@pytest.fixture(scope="session")
def shared_middle_bundle():
    """The compression demo: stages 2..5 generated by one repeated map."""
    spec = make_shared_middle_spec(seed=0)
    cfg = RunConfig(n_stages=spec.n_stages, target_means=spec.target_means,
                    lambda_cycle=2.0)
    return build_bundle(spec, cfg)


@pytest.fixture(scope="session")
def linear_bundle():
    """Per-stage-distinct process run with reuse disabled (epsilon 0)."""
    spec = make_linear_chain_spec(seed=0)
    cfg = RunConfig(epsilon=0.0, decision_mode="two_sided")
    return build_bundle(spec, cfg)
