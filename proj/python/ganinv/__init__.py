"""GAN inversion, projection-based adversarial defense, and attack toolkit."""

from ._core import (  # noqa: F401
    AttackError,
    DataError,
    IntegrityError,
    LabeledImageSet,
    Model,
    ProjectionError,
    SpecError,
    SpecMismatchError,
    __version__,
    analytic_bound,
    adversarial_loss,
    blackbox_substitute,
    bpda_attack,
    build_model,
    classifier_features,
    conv_classifier_spec,
    cw_l2,
    dcgan_discriminator_spec,
    dcgan_generator_spec,
    defend_classify,
    detection_auc,
    detection_scores,
    direct_invert,
    empirical_inversion_prob,
    encoder_project,
    estimate_lipschitz,
    eval_metrics,
    fgsm,
    frechet_distance,
    latent_loss,
    load_checkpoint,
    load_idx,
    mirror_inverter_spec,
    mlp_classifier_spec,
    mlp_discriminator_spec,
    mlp_generator_spec,
    reparam_attack,
    save_checkpoint,
    save_idx,
    semantic_loss,
    synth_gaussians,
    synth_glyphs,
    train_classifier,
    train_error_epsilon,
    train_gan,
    train_inverter,
    validate_theorem,
)
