"""pref-arena: pairwise preference ranking for emotion description models.

Turns "which description is better" judgments, from human annotators or
orchestrated automated judges, into model rankings via Bradley-Terry
maximum likelihood, with judge-quality metrics, crowdsourced ensembling,
tournament cost accounting, and an annotation HTTP service.
"""

from .aggregate import (
    PairTally,
    PreferenceMatrix,
    SampleVerdict,
    TallySet,
    binarize,
    build_matrix,
    majority_label,
    tallies_from_verdicts,
    tally,
    vote_per_sample,
)
from .btrank import (
    DisconnectedGraphError,
    DivergenceError,
    FitConfig,
    FitError,
    FitMode,
    RankResult,
    StrengthVector,
    fit,
    grad_nll,
    nll,
    rank,
    win_prob,
)
from .corpus import (
    CampaignManifest,
    CorpusError,
    DescriptionPair,
    Direction,
    DuplicateRecordError,
    JudgmentRecord,
    PreferenceLabel,
    RecordStore,
    UnanimityReport,
    canonicalize,
    flip_presentation,
    latest_run_per_judge,
    load_pairs,
    load_records,
    save_pairs,
    save_records,
    unanimity_filter,
)
from .metrics import (
    ConsistencyReport,
    FlipReport,
    MetricReport,
    accuracy,
    flip_consistency,
    inter_annotator_consistency,
    multi_run_consistency,
    recognition_report,
    two_class_view,
    waf,
)
from .tournament import (
    ComparisonSchedule,
    CostReport,
    HierarchicalPlan,
    PipelineResult,
    SimulatedVerdicts,
    StoreVerdicts,
    Task,
    TournamentError,
    hierarchical,
    round_robin,
    run_pipeline,
)

__version__ = "0.1.0"
