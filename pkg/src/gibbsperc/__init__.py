"""Gibbs point process simulation and continuum percolation toolkit."""

from .geometry import (
    Ball,
    Configuration,
    Window,
    dilated_volume,
    disc_union_area,
    dist_point_set,
    unit_ball_volume,
)
from .models import (
    AreaModel,
    ConditionP,
    GibbsModel,
    PairwiseModel,
    PoissonModel,
    RadialStep,
    area_interaction,
    attractive_tail,
    check_condition_p,
    compute_beta_minus,
    conditional_intensity,
    compute_beta_plus,
    derive_condition_p,
    hard_core,
    local_stability_constant,
    poisson,
    strauss_hard_core,
    weight,
)
from .percolation import (
    BooleanModel,
    crossing,
    estimate_beta_c,
    label_clusters,
    perc_probability,
)
from .sampler import (
    DominatedRun,
    cftp_sample,
    estimate_partition,
    mcmc_sample,
    sample_poisson,
)
from .contour import (
    CubeLattice,
    check_key_lemma,
    choose_m,
    enumerate_loops,
    greedy_separated,
    loop_tail_sum,
    separating_chain,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
