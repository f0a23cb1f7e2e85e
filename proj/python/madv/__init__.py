"""Manifold-space adversarial attacks on fake-image detectors.

The heavy lifting lives in the compiled ``_core`` extension; this package
re-exports its surface.
"""

from ._core import (  # noqa: F401
    ConfigError,
    DataError,
    Detector,
    FeatureNet,
    Generator,
    GeneratorConfig,
    IoError,
    ShapeError,
    bce_loss,
    build_fake_corpus,
    build_real_corpus,
    evaluate_accuracy,
    fgsm_attack,
    latent_step,
    manifold_attack,
    mse,
    noise_step,
    perceptual_distance,
    pgd_attack,
    psnr,
    render_face,
    sample_latent,
    sample_noise,
    sign,
    ssim,
    train_detector,
    train_feature_net,
    train_generator,
)

__version__ = "0.1.0"
