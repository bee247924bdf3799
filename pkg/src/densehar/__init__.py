"""densehar: dense multi-label activity recognition from wearable streams.

A chain of 1-D UNet classifiers where each label's dense prediction is
conditioned on sampled, embedded predictions of the labels before it,
plus the training, data, and evaluation machinery around it.
"""

from .chain import (ChainConfig, LabelSpec, MultiHeadUNet, TrainOptions,
                    UNetChain, build_baseline, build_chain, chain_loss,
                    predict_dense, train)
from .conditioning import (EmbeddingTable, GeneratorMode, TemperatureSchedule,
                           anneal, embed, generate_gumbel_max,
                           generate_naive_max, merge)
from .data import (Dataset, SampleSequence, SynthConfig, fit_normalizer,
                   generate_synthetic, load_dataset, save_dataset, split,
                   window)
from .engine import BACKEND, Adam, SeededRng, Tape, Tensor, backward, ops
from .metrics import (ConfusionMatrix, MetricsReport, accuracy, confusion,
                      evaluate, macro_f1)
from .unet import UNet1D, UNetConfig, build_unet, unet_forward

__version__ = "0.1.0"
