"""Post-processing engine for chunk-wise egocentric reconstruction outputs:
interaction-activated dynamic priors, token-level attention masking
utilities, overlap Sim(3) stitching with fused static clouds, and the
accompanying evaluation metrics.
"""

from .geometry import (
    BinaryMask,
    ChunkPlan,
    DepthFrame,
    Intrinsics,
    PointCloud,
    Pose,
    Sim3,
    apply_sim3,
    compose_sim3_pose,
)
from .prior import NearHandParams, activated_set, dilate, dynamic_prior, near_hand_pass, object_prior
from .stitching import (
    ChunkStitcher,
    StitchResult,
    back_project,
    camera_center,
    fuse,
    plan_chunks,
    stitch,
    umeyama,
)
from .tokens import TokenGate, TokenMask, attention_bias, masked_softmax, pool_to_tokens, transfer_mask

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "ChunkPlan",
    "ChunkStitcher",
    "DepthFrame",
    "Intrinsics",
    "NearHandParams",
    "PointCloud",
    "Pose",
    "Sim3",
    "StitchResult",
    "TokenGate",
    "TokenMask",
    "activated_set",
    "apply_sim3",
    "attention_bias",
    "back_project",
    "camera_center",
    "compose_sim3_pose",
    "dilate",
    "dynamic_prior",
    "fuse",
    "masked_softmax",
    "near_hand_pass",
    "object_prior",
    "plan_chunks",
    "pool_to_tokens",
    "stitch",
    "transfer_mask",
    "umeyama",
]
