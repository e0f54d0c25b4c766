"""Concrete LLL instances built from graphs, and the coloring pipelines."""

from .coloring import (
    ColoringState,
    Partition,
    PipelineResult,
    SlackReport,
    color_sparse,
    color_triangle_free,
    greedy_d1lc,
    partition_vertices,
    slack_gen_two_sets,
    slack_generation,
    try_color,
    try_color_round,
)
from .instances import (
    build_splitting_lll,
    degree_bounded_lll,
    dss_instance,
    dss_sample,
    euler_split,
    orientation_from_assignment,
    sampled_set,
    sinkless_orientation_lll,
)

__all__ = [
    "ColoringState",
    "Partition",
    "PipelineResult",
    "SlackReport",
    "build_splitting_lll",
    "color_sparse",
    "color_triangle_free",
    "degree_bounded_lll",
    "dss_instance",
    "dss_sample",
    "euler_split",
    "greedy_d1lc",
    "orientation_from_assignment",
    "partition_vertices",
    "sampled_set",
    "sinkless_orientation_lll",
    "slack_gen_two_sets",
    "slack_generation",
    "try_color",
    "try_color_round",
]
