"""Natural-vs-GAN image classification from Benford-law statistics of
quantized block-DCT coefficients.

The pipeline: partition an image into 8x8 blocks, transform each block with
the 2D DCT, quantize selected AC frequencies with JPEG luminance tables,
histogram the first digits of the quantized coefficients in several bases,
fit the generalized Benford curve to each histogram, and concatenate the
divergences between histogram and fit into a feature vector for a Random
Forest classifier.
"""

from ._version import __version__
from .imageio import (
    RgbImage,
    GrayImage,
    BlockGrid,
    DecodeError,
    EncodeError,
    TooSmallError,
    load_image,
    to_luma,
    partition_blocks,
    recompress_jpeg,
)
from .spectral import (
    QuantTable,
    dct2_block,
    dct2_blocks,
    zigzag_index,
    quant_table,
    quantize_frequency,
)
from .benford import (
    DigitPmf,
    BenfordParams,
    DivergenceTriple,
    ZeroValueError,
    FitDivergedError,
    LengthMismatchError,
    AlphaOneError,
    NonFiniteError,
    first_digit,
    first_digits,
    digit_pmf,
    benford_pmf,
    fit_benford,
    kl_divergence,
    js_divergence,
    s_alpha,
    renyi_divergence,
    tsallis_divergence,
    divergence_triple,
)
from .features import (
    FeatureConfig,
    FeatureVector,
    enumerate_configs,
    extract_features,
    feature_names,
)
from .forest import (
    LabeledSample,
    ForestHyperparams,
    ForestModel,
    SingleClassError,
    DimensionMismatchError,
    FingerprintMismatchError,
    gini_impurity,
    train_forest,
    predict,
    save_model,
    load_model,
)
from .evaluate import (
    DatasetManifest,
    EvalReport,
    TooFewGroupsError,
    EmptyStratumError,
    MissingCacheError,
    logo_folds,
    evaluate_logo,
    evaluate_split,
    random_split,
    sweep,
    jpeg_scenario,
)
