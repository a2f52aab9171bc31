"""User-owned hash chains and the time order that emerges from their associations."""

from .chain import (
    AssociationRef,
    Block,
    Chain,
    NetworkSnapshot,
    PendingAssociation,
    Violation,
    ZERO_DIGEST,
    accept_pending,
    append_block,
    drop_pending,
    encode_block,
    forget_payload,
    hash_block,
    payload_digest,
    send_association,
    verify_chain,
    verify_snapshot,
)
from .errors import *  # noqa: F401,F403
from .order import (
    EventId,
    GranularityReport,
    HappensBeforeDag,
    OrderRelation,
    build_dag,
    canonical_order,
    comparability_ratio,
    count_linear_extensions,
    granularity,
    linear_extensions,
    mainstream_score,
    order_certificate,
    precedes,
)
from .sim import SimConfig, SimTrace, ground_truth_order, replay, run

__version__ = "0.1.0"
