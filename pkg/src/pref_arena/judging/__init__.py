"""Automated preference judging: backends, templates, strategies, ensembling."""

from .backends import (
    BackendError,
    BackendKind,
    ChatRequest,
    HttpEndpointBackend,
    JudgeBackend,
    MediaNotSupportedError,
    RecordingBackend,
    ReplayBackend,
    ReplayMissError,
    RetryPolicy,
    StaticBackend,
    SubprocessBackend,
    backend_from_config,
)
from .ensemble import EnsembleConfig, EnsembleError, ensemble_vote, filter_judges, select_optimal_strategy
from .simulate import (
    PlantedWorld,
    SimulateError,
    SimulatedBackend,
    SimulatedJudge,
    SimulatedJudgeParams,
    hash_uniform,
    truth_from_map,
)
from .strategy import (
    STEP_PLANS,
    Strategy,
    StrategyConfig,
    StrategyError,
    StrategyTrace,
    combine_forward_reverse,
    default_templates_for,
    parse_preference,
    run_strategy,
    scan_markers,
)
from .templates import (
    PromptTemplate,
    TemplateError,
    TemplateRole,
    default_templates,
    templates_from_config,
)

__all__ = [
    "BackendError",
    "BackendKind",
    "ChatRequest",
    "EnsembleConfig",
    "EnsembleError",
    "HttpEndpointBackend",
    "JudgeBackend",
    "MediaNotSupportedError",
    "PlantedWorld",
    "PromptTemplate",
    "RecordingBackend",
    "ReplayBackend",
    "ReplayMissError",
    "RetryPolicy",
    "STEP_PLANS",
    "SimulateError",
    "SimulatedBackend",
    "SimulatedJudge",
    "SimulatedJudgeParams",
    "StaticBackend",
    "Strategy",
    "StrategyConfig",
    "StrategyError",
    "StrategyTrace",
    "SubprocessBackend",
    "TemplateError",
    "TemplateRole",
    "backend_from_config",
    "combine_forward_reverse",
    "default_templates",
    "default_templates_for",
    "ensemble_vote",
    "filter_judges",
    "hash_uniform",
    "parse_preference",
    "run_strategy",
    "scan_markers",
    "select_optimal_strategy",
    "templates_from_config",
    "truth_from_map",
]
