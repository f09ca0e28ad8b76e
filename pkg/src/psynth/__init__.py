"""Feature-conditioned percussive one-shot synthesizer.

Maps seven semantic timbral controls plus a time-domain energy envelope to
a one-second 16 kHz waveform through a convolutional encoder-decoder, with
waveform + spectral training objectives and an objective feature-coherence
evaluation harness.
"""

from .audio_io import (
    AudioFileMeta,
    Waveform,
    decode_wav,
    encode_wav,
    load_wav,
    pad_to_length,
    resample,
    trim_silence,
    write_wav,
)
from .features import (
    FEATURE_NAMES,
    Envelope,
    FeatureNormalizer,
    TimbralVector,
    denormalize,
    envelope_follow,
    extract_timbral,
    fit_normalizer,
    normalize,
    parametric_envelope,
    spectral_centroid,
)
from .dataset import (
    DatasetManifest,
    OracleParams,
    PreprocessParams,
    TrainingRecord,
    build_oracle_dataset,
    ingest,
    load_dataset,
    split,
    synth_oracle,
)
from .losses import LossConfig, Spectrogram, l1_recon, stft_loss, stft_mag, total_loss
from .net import (
    Checkpoint,
    ConditioningInput,
    ModelConfig,
    Parameters,
    build,
    conv1d,
    desk_config,
    forward,
    forward_batch,
    gradient_check,
    linear_upsample_x2,
    load_checkpoint,
    make_conditioning,
    paper_config,
    save_checkpoint,
    smoke_config,
    tiny_config,
)
from .train import AdamState, TrainConfig, TrainReport, adam_step, resume, train
from .coherence import (
    CheckpointBackend,
    CoherenceReport,
    ConstantBackend,
    MonotoneOracleBackend,
    SweepLevels,
    evaluate,
    fit_backend_normalizer,
    score,
    sweep_one,
)

__version__ = "0.1.0"
