"""Bias and retention metrics: SEAT, perplexity, stereotype scores, embedding geometry."""
from .geometry import GeometryReport, gender_subspace, projection_neighbor_curve, word_vector
from .perplexity import corpus_nll, perplexity
from .plots import projection_neighbor_svg, projection_plane_svg
from .seat import (
    SeatResult,
    SeatSpec,
    associations,
    effect_size_from_vectors,
    encode,
    load_seat_spec,
    permutation_p_value,
    run_seat,
    seat_effect_size,
)
from .stereo import (
    StereoItem,
    StereoScores,
    continuation_score,
    icat_score,
    load_stereo_fixture,
    parse_stereo_fixture,
    stereo_metrics,
)
