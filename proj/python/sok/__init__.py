from ._core import (
    Error,
    FnoModel,
    FormatError,
    IntegrityError,
    LayoutError,
    NumericalError,
    NyquistError,
    ShapeError,
    cli,
    fft,
    generate_dataset,
    ifft,
    load_checkpoint,
    power_spectrum,
    predict,
    read_dataset,
    sample_grf,
    spectral_resample,
)

__all__ = [name for name in dir() if not name.startswith("_")]
