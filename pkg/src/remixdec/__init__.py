"""Three-state parallel decoding engine for masked diffusion language
models, verified against exact enumeration oracles."""

from .core import (
    EmbeddingTable,
    Vocabulary,
    adaptive_top_p,
    js_divergence,
    make_embedding_table,
    mixing_embedding,
)
from .engine import (
    DecodeResult,
    DecoderConfig,
    StepRecord,
    confidence_parallel_decode,
    fixed_k_parallel_decode,
    remix_decode,
    sequential_greedy_decode,
)
from .model import (
    JointTableModel,
    LinearScorerModel,
    Masked,
    ModelOutput,
    SequenceState,
    Soft,
    TiledJointTableModel,
    Token,
    is_valid_completion,
    joint_argmax,
    make_linear_scorer,
    score,
    tile_model,
)
from .corpus import (
    CorpusError,
    CorpusParams,
    TaskSpec,
    generate_corpus,
    load_corpus,
    save_corpus,
)

__all__ = [
    "CorpusError", "CorpusParams", "DecodeResult", "DecoderConfig",
    "EmbeddingTable", "JointTableModel", "LinearScorerModel", "Masked",
    "ModelOutput", "SequenceState", "Soft", "StepRecord", "TaskSpec",
    "TiledJointTableModel", "Token", "Vocabulary", "adaptive_top_p",
    "confidence_parallel_decode", "fixed_k_parallel_decode",
    "generate_corpus", "is_valid_completion", "joint_argmax",
    "js_divergence", "load_corpus", "make_embedding_table",
    "make_linear_scorer", "mixing_embedding", "remix_decode", "save_corpus",
    "score", "sequential_greedy_decode", "tile_model",
]
