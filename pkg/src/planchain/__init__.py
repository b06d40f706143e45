"""Byzantine-tolerant aggregation of LLM-generated robot task plans.

An order-sensitive LCS similarity metric plus reputation weighting selects
the most trusted plan from an ensemble of (simulated or live) LLM oracles;
a hash-chained ledger with two contract state machines records the whole
request-to-execution workflow.
"""

from .aggregation import (ReputationTable, RoundRecord, build_matrix,
                          consensus_scores, run_round, select_plan,
                          update_reputation)
from .benchmark import BenchmarkCase, generate_benchmark, load_benchmark
from .oracles import NetworkConfig, OracleProfile, gather_responses, respond
from .plans import (Plan, RobotRegistry, SubTask, format_plan, parse_plan,
                    scenario_registry)
from .reports import ExperimentConfig, ExperimentResult, run_experiment
from .similarity import (embedding_similarity, get_metric, lcs_length,
                         lcs_similarity, tfidf_similarity)
from .workflow import SimEnvironment, run_workflow

__version__ = "0.1.0"

__all__ = [
    "BenchmarkCase", "ExperimentConfig", "ExperimentResult",
    "NetworkConfig", "OracleProfile", "Plan",
    "ReputationTable", "RobotRegistry", "RoundRecord", "SimEnvironment",
    "SubTask", "build_matrix", "consensus_scores", "embedding_similarity",
    "format_plan", "gather_responses", "generate_benchmark", "get_metric",
    "lcs_length", "lcs_similarity", "load_benchmark", "parse_plan",
    "respond", "run_experiment", "run_round", "run_workflow", "scenario_registry",
    "select_plan", "tfidf_similarity", "update_reputation",
]
