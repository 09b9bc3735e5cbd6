"""Experiment configs, suites and the command line interface."""

from .catalog import PROBLEMS, build_problem, describe_catalog
from .config import ExperimentConfig, presets
from .suites import (CheckResult, StageError, SuiteReport, certificate_suite,
                     comparison_suite, convergence_study, run_experiment)
