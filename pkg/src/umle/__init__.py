"""Unsupervised low-light enhancement with a shared-encoder, multi-branch GAN."""

from umle.attention import CPA, CPAM, global_avg_pool
from umle.config import TrainConfig, load_config, parse_config
from umle.data import (Checkpoint, DomainDataset, DomainTag, extract_local_patch, load_checkpoint, load_dataset,
                       load_unpaired, make_toy_corpus, sample_unpaired, save_checkpoint)
from umle.errors import *  # noqa: F401,F403
from umle.filters import KernelSpec, build_gaussian_kernel, build_pyramid, highpass, lowpass
from umle.losses import LossWeights, total_loss
from umle.networks import ArchConfig, UMLE, count_params
from umle.optim import AdamGC, centralize_gradient
from umle.training import Trainer, train

__version__ = "0.1.0"
