import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qlbn import loanlog
from qlbn.eventlog import write_csv
from qlbn.harness import ExperimentConfig, PipelineArtifacts, build_pipeline
from qlbn.procmine import merge_rules_to_json


@pytest.fixture(scope="session")
def loan_log():
    return loanlog.generate_loan_log()


@pytest.fixture(scope="session")
def loan_csv_path(tmp_path_factory, loan_log) -> Path:
    path = tmp_path_factory.mktemp("data") / "loan_log.csv"
    path.write_bytes(write_csv(loan_log))
    return path


@pytest.fixture(scope="session")
def merge_rules_path(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("rules") / "merges.json"
    path.write_text(merge_rules_to_json(loanlog.DEFAULT_MERGE_RULES))
    return path


@pytest.fixture(scope="session")
def loan_config(loan_csv_path, merge_rules_path) -> ExperimentConfig:
    return ExperimentConfig(
        log_path=str(loan_csv_path), merge_rules_path=str(merge_rules_path)
    )


@pytest.fixture(scope="session")
def artifacts(loan_config) -> PipelineArtifacts:
    """The full mined-and-learned pipeline over the benchmark log."""
    return build_pipeline(loan_config)
