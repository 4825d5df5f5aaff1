"""Cross-tokenizer preference distillation toolkit.

Aligns two tokenizations of the same text into minimal shared byte spans,
computes span-level importance weights from a contrastive model pair,
evaluates weighted preference losses with exact gradients, and verifies the
framework's concentration bound, reweighting relation, and importance-
sampling identity at desk scale.
"""

from .align import AlignedPartition, AlignedSpan, boundary_set, partition_aligned_spans, span_count_stats
from .errors import (
    CtpdError,
    DegenerateRewards,
    LengthMismatch,
    MissingTrack,
    ParseError,
    SeedRequired,
    SpecInvalid,
    TargetOutsideSupport,
    TextMismatch,
    TilingViolation,
    TokenizerSideUnknown,
    TrackLengthMismatch,
)
from .objective import (
    LossOutput,
    ObjectiveConfig,
    ctpd_gradient,
    ctpd_loss,
    dpo_lambda,
    dpo_loss,
    rm_pair_loss,
    sequence_reward,
    tis_dpo_token_loss,
)
from .signals import SpanSignal, build_span_signals, span_logprob, span_reward
from .theory import (
    DiscreteReward,
    HoeffdingBound,
    ImportanceCheck,
    McEstimate,
    ReweightSolution,
    SpanRewardModel,
    ToySpanDistribution,
    UniformReward,
    hoeffding_noise_bound,
    importance_sampling_check,
    mc_noise_probability,
    solve_optimal_reweight,
)
from .trace import (
    LogProbTrack,
    PreferenceExample,
    ResponseBundle,
    TokenizationTrace,
    Utf8Doc,
    WeightConfig,
    load_examples,
    validate_example,
)
from .weighting import SpanWeights, compute_span_weights, contrastive_span_weight

__version__ = "0.1.0"
