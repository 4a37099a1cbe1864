"""Joint limit distributions of summing, long-block, short-block and quadratic test statistics."""

from .catalog import (
    eval_T_SO,
    g_bits,
    gf2_rank,
    gf2_rank_probabilities,
    instantiate_test,
    serial_over_counts,
    serial_over_quadratic,
)
from .config import config_from_dict, config_to_dict, load_config
from .errors import *  # noqa: F401,F403
from .joint import (
    alpha_set,
    build_layout,
    check_independence,
    compute_block_sums,
    compute_G,
    estimate_phi,
    eval_f_star,
    sample_limit,
)
from .model import (
    BatteryConfig,
    LongBlockSpec,
    NullModel,
    QuadSpec,
    SampleSpace,
    ShortBlockSpec,
    SumSpec,
    Triple,
    compute_lb_moments,
    compute_sb_cells,
    compute_sum_moments,
    validate_battery,
)
from .simulate import (
    Generator,
    compare_joint,
    convergence_rate,
    divergence_probe,
    generate,
    gof_marginals,
    run_monte_carlo,
)
from .statistics import Sequence, eval_battery, eval_long_block, eval_quadratic, eval_short_block, eval_sum
from .streams import ingest_stream, write_stream

__version__ = "0.1.0"
