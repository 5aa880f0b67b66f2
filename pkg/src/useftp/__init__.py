"""Joint target-speaker extraction and personal VAD with a scene-aware loss."""

from .audio import AudioClip, ComplexSpectrogram, StftConfig, istft, load_wav, stft, write_wav
from .errors import (
    DegenerateProjectionError,
    InfeasibleOverlapError,
    InvalidInputError,
    SceneViolationError,
    UndefinedMetricError,
)
from .losses import LossBreakdown, LossWeights, pvad_bce, power_loss, scene_aware_tse_loss, si_sdr, total_loss
from .model import USEFTP, ModelConfig, ModelOutput
from .timeline import TA, TS, ActivityTimeline, SceneSegmentation, rasterize_vad, segment_scenes

__version__ = "0.1.0"
