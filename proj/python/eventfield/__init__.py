"""Python bindings for the eventfield C++ core."""

from ._evf import (
    DecayAccumulator,
    DivergenceError,
    EventStream,
    InvalidInput,
    IoError,
    OutOfRange,
    Thresholds,
    ValidationError,
    __version__,
    blend_at,
    cli,
    crf_fit,
    desk_toy_config,
    edi_deblur,
    edi_reblur,
    expectation_decay,
    expectation_no_decay,
    make_schedule,
    monte_carlo_noise,
    naive_accumulate,
    psnr,
    read_evt1,
    run_toy,
    ssim,
    variance_decay,
    variance_decay_limit,
    variance_no_decay,
    variance_no_decay_exact,
    write_evt1,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
