"""Deterministic single-source warehouse view-maintenance simulator.

Library surface: the bag algebra (:mod:`vmsim.relational`), view
definitions and delta rules (:mod:`vmsim.views`), the maintenance
strategies (:mod:`vmsim.strategies`), the event-driven simulator
(:mod:`vmsim.simulation`), measured-versus-analytic costs
(:mod:`vmsim.costs`), and the workload generator plus scenario file
format (:mod:`vmsim.generator`, :mod:`vmsim.scenario_io`).
"""

from .costs import (
    ComparisonTable,
    CostReport,
    RowsPrediction,
    SingleUpdateProfile,
    analytic_rows,
    analytic_space,
    compare,
    measure,
    single_update_profile,
)
from .errors import (
    AnalyticError,
    CatalogError,
    ConfigurationError,
    IntegrityError,
    ProtocolError,
    ScenarioError,
    SchemaError,
    VmsimError,
)
from .generator import (
    GeneratorSpec,
    anomaly_scenario,
    benchmark_scenario,
    benchmark_view,
    generate,
    worst_case_schedule,
)
from .relational import (
    SOURCE,
    TRUE,
    WAREHOUSE,
    AccessCounter,
    Attr,
    Comparison,
    DeltaRelation,
    Predicate,
    Relation,
    Schema,
    apply_delta,
    delta_minus,
    delta_union,
    nested_loop_join,
    project,
    scan,
    select,
)
from .scenario_io import dumps, load_scenario, save_scenario, scenario_from_dict, scenario_to_dict
from .simulation import LatencyModel, RunResult, Scenario, Simulator, SourceUpdate, oracle_view, run
from .strategies import Maintainer, MaintainerKind, make_maintainer
from .views import (
    Diagnostic,
    ViewDef,
    ViewHierarchy,
    affected_order,
    delta_insert,
    evaluate,
    evaluate_hierarchy,
)

__version__ = "0.1.0"
