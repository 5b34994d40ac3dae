"""pixkit: joint speaker diarization and source separation toolkit.

Small, dependency-light reference implementation of a jointly trained
separation + diarization objective (permutation-invariant diarization loss
plus mixture-invariant separation loss), a sliding-window long-form
inference pipeline with embedding-based stitching and leakage removal,
diarization/transcription metrics, hyperparameter grid search, and a
deterministic synthetic corpus generator.
"""

from .annotations import (
    ActivationMatrix,
    Annotation,
    Segment,
    Word,
    WordChannel,
    parse_ctm,
    parse_rttm,
    rasterize,
    write_ctm,
    write_rttm,
)
from .assignment import solve_assignment
from .corpus import Corpus, Recording, load_manifest, read_wav, write_wav
from .embeddings import TOY_EMBEDDING_DIM, ToyEmbedder
from .errors import PixkitError, RuntimeFailure, ValidationError
from .inference import (
    GlobalResult,
    LocalSpeaker,
    OracleWindowModel,
    PipelineParams,
    WindowOutput,
    binarize,
    binarize_row,
    cluster,
    cosine_distance_matrix,
    diarize_and_separate,
    embed,
    remove_leakage,
    run_windows,
    stitch,
)
from .losses import (
    LossBreakdown,
    MixingMatrix,
    Permutation,
    bce,
    mixit_loss,
    pit_loss,
    pixit_loss,
    si_sdr,
    si_sdr_grad,
)
from .metrics import (
    CpWerReport,
    DerReport,
    Utterance,
    attribute_utterances,
    channels_from_words,
    cpwer,
    der,
    normalize_text,
    utterances_from_ctm,
    word_edit,
)
from .model import (
    ToyModel,
    ToyModelConfig,
    gradient_check,
    load_checkpoint,
    save_checkpoint,
)
from .sampling import Chunk, MoMSample, MomSampler, build_mom, extract_chunk
from .synth import (
    SynthScenario,
    SynthSpeakerProfile,
    generate_corpus,
    generate_session,
    make_profiles,
    overlap_ratio,
    silence_ratio,
)
from .training import TrainConfig, train
from .tuning import Grid, evaluate_point, grid_search, read_tuning, write_tuning

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
