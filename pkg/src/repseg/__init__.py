"""Repetition parsing for clinical time series: landmark and self-similarity engines."""

from .core import LOWER_FACE_LANDMARKS, compute_roi, stride_series
from .errors import (EmptyInputError, InputTooShortError, NoRepetitionsError, ParseError,
                     RepsegError, ValidationError)
from .evaluation import (DurationStats, IouReport, UTestResult, compare_groups, duration_stats,
                         mann_whitney_u, match_and_score, per_repetition_iou, segment_iou)
from .landmark import (IirFilter, MinimaConfig, butterworth_lowpass, filtfilt, find_minima,
                       lip_distance, parse_landmark, parse_landmark_signal)
from .synth import synth_generate, synth_landmarks
from .tsm import (EmbeddingSequence, PeriodEstimate, SelfSimilarityMatrix, TsmConfig, build_tsm,
                  embed_frames, estimate_period, parse_tsm, stride_search)
from .types import FeatureSignal, FrameSample, FrameSeries, Parsing, RoiBox, RunManifest, Segment, SynthSpec

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
