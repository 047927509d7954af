"""Coverage-guided neuroevolution of binary MLP classifiers."""

from ._ncevo import (
    ConfigError,
    ConstructionError,
    DataError,
    Dataset,
    DatasetSplit,
    Descriptor,
    NcevoError,
    Network,
    ShapeError,
    TrainingError,
    balanced_accuracy,
    blend,
    build_network,
    cert,
    evaluate_fitness,
    evolve,
    find_dataset,
    kmn,
    load_pmlb,
    make_split,
    mutate,
    nbc,
    nc,
    predict_proba,
    profile_bounds,
    random_descriptor,
    run_experiment,
    snac,
    summarize,
    tknc,
    trace,
    train,
    validate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
