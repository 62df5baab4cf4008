"""Experiment harness: configuration, runners and the command-line interface."""

from .config import ConfigError, ExperimentConfig, ModelHyper, build_config, load_config
from .experiments import (DataError, aggregate, evaluate_episode, evaluate_episodes,
                          run_compare_behavior, run_evaluate, run_rank_features, run_simulate,
                          run_train_gap)
