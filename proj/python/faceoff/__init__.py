"""Unpaired face-to-face video translation with CycleGAN variants.

The heavy lifting happens in the compiled ``_faceoff`` extension; images are
numpy arrays shaped (C, H, W) or (N, C, H, W).
"""

from ._faceoff import (
    ConfigError,
    FaceoffError,
    assemble_video,
    config_keys,
    cycle_l1,
    dual_disc_gan_loss,
    extract_frames,
    generate_masks,
    infer,
    landmarks_to_mask,
    lsgan_loss,
    main,
    masked_cycle_loss,
    ms_ssim,
    parse_config_text,
    patch_map_size,
    plot_losses,
    run_training,
    serialize_config,
    validate_config,
    wgan_losses,
)

__all__ = [
    "ConfigError",
    "FaceoffError",
    "assemble_video",
    "config_keys",
    "cycle_l1",
    "dual_disc_gan_loss",
    "extract_frames",
    "generate_masks",
    "infer",
    "landmarks_to_mask",
    "lsgan_loss",
    "main",
    "masked_cycle_loss",
    "ms_ssim",
    "parse_config_text",
    "patch_map_size",
    "plot_losses",
    "run_training",
    "serialize_config",
    "validate_config",
    "wgan_losses",
]
