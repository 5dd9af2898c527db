"""Variational-autoencoder detectors for DoS/DDoS network flows, in plain numpy."""

from flowvae.classifiers import (
    LbdDetector,
    LlcHead,
    TrainedModel,
    lbd_classify,
    lbd_stage1_train,
    lbd_stage2_train,
    llc_predict,
    softmax_xent,
    total_loss,
    train_lbd,
    train_llc,
)
from flowvae.checkpoint import load_model, save_model
from flowvae.presets import LBD_PRESETS, LLC_PRESETS, PRESETS, Preset, get_preset
from flowvae.rng import RngStream
from flowvae.vae import VaeModel, build_vae, build_vae_for_preset

__version__ = "0.1.0"

__all__ = [
    "LBD_PRESETS", "LLC_PRESETS", "LbdDetector", "LlcHead", "PRESETS", "Preset", "RngStream",
    "TrainedModel", "VaeModel", "build_vae", "build_vae_for_preset", "get_preset", "lbd_classify",
    "lbd_stage1_train", "lbd_stage2_train", "llc_predict", "load_model", "save_model", "softmax_xent",
    "total_loss", "train_lbd", "train_llc",
]
