"""costlens: a debugging workbench for learned query-cost models.

Train a graph-based runtime predictor on synthetic plan workloads, compute
per-node importance with four explainer algorithms, score the explanations
(fidelity, characterization, runtime correlation), and serve the whole loop
over HTTP for the interactive UI.
"""

from .errors import (
    ContractError,
    CostLensError,
    DimensionError,
    FeaturizationError,
    FormatError,
    NumericalError,
    ParameterError,
    SchemaError,
    StructuralError,
)
from .explain import (
    ALGORITHMS,
    Explanation,
    GnnExplainerConfig,
    explain,
    explain_diff_mask,
    explain_gnn_explainer,
    explain_guided_backprop,
    explain_sensitivity,
    normalize_scores,
    relative_loss,
    stable_seed,
)
from .metrics import (
    ExplanationReport,
    FidelityConfig,
    build_report,
    cardinality_correlation,
    characterization_score,
    fidelity,
    node_ranking,
    q_error,
    runtime_correlation,
    spearman,
)
from .model import CostModel, ForwardTrace, load_model, save_model, split_workload, train
from .plans import (
    DEFAULT_SCHEMA,
    OPERATOR_VOCAB,
    PREDICATE_VOCAB,
    FeatureSchema,
    IsolatedRuntimes,
    PlanGraph,
    PlanNode,
    featurize,
    isolate_runtimes,
    parse_plan,
    serialize_plan,
)
from .synth import (
    DEFAULT_PARAMS,
    Complexity,
    OracleCostParams,
    Workload,
    generate_workload,
    load_workload,
    oracle_runtime,
    save_workload,
)

__version__ = "0.1.0"
