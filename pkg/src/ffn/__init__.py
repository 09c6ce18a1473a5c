"""Fine-grained (6-way) fake news classification with text and text+image models."""

from .data import (
    ClassDistribution,
    DataError,
    DatasetSchema,
    LabeledSample,
    class_distribution,
    fetch_images,
    generate_synthetic,
    load_dataset,
    write_synthetic_dataset,
)
from .embeddings import EmbeddingConfig, EmbeddingMatrix, init_embedding_matrix, lookup
from .labels import FAKE_CLASSES, NUM_CLASSES, Label
from .metrics import MetricsReport, accuracy, confusion_matrix, per_class_prf, subset_micro_macro
from .text import (
    CleaningConfig,
    TextPipeline,
    TokenSequence,
    Vocabulary,
    build_vocabulary,
    clean_text,
    encode,
    length_percentiles,
)
from .models import BertClassifier, BiLstmCNN, MultimodalCNN, StubEncoder, TextCNN, build_model, predict
from .trainer import (
    FingerprintMismatch,
    ModelCheckpoint,
    TrainConfig,
    TrainHistory,
    TrainingError,
    evaluate,
    prepare_bert,
    prepare_multimodal,
    prepare_text,
    train,
)

__version__ = "0.1.0"
