"""Spammer detection from multi-relational activity sequences.

A recurrent encoder turns each user's relation sequence into embeddings,
an LSTM captures long-range behaviour and a residual attention stack over
the most recent hidden states captures the short-range pattern. The
resulting vectors feed a logistic-regression head. Bigram counts and
per-relation graph metrics are provided as baseline feature families.
"""

from .checkpoint import load as load_checkpoint, save as save_checkpoint
from .classify import LrConfig, LrModel, Metrics, evaluate, f_measure, lr_fit, split
from .embed import train_embeddings
from .experiment import DESK_SCALE, ExperimentConfig, run_protocol
from .ingest import Corpus, Event, UserSequence, load_corpus, parse_events, parse_labels
from .mdm import MdmConfig, MdmParams, extract_features, init_params, score
from .synth import SynthConfig, synth_generate
from .train import TrainConfig, train_mdm

__version__ = "0.1.0"
