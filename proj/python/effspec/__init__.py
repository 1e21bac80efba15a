"""Python interface to the effspec spectral predictions."""

from ._core import (
    ConfigError,
    DomainError,
    ProfileKind,
    Summary,
    Task,
    compute_G,
    density,
    drift,
    empirical_spectrum,
    f_matrix,
    find_outliers,
    gaussian_init_summary,
    integrate,
    ks_distance,
    load_scenario,
    make_logistic_task,
    mp_edges,
    mp_reference,
    stieltjes,
    support,
    zero_init_oracles,
    zero_init_summary,
)

__all__ = [name for name in dir() if not name.startswith("_")]
