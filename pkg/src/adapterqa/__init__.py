"""Adapter-based cross-lingual transfer for extractive QA, desk scale.

A miniature transformer encoder with hand-written reverse-mode autodiff,
pluggable bottleneck and invertible adapters (stacking, freezing,
hot-swapping), four training setups, and a four-metric evaluation
pipeline over SQuAD-format data.
"""

from .adapters import (
    AdapterStackSpec,
    BottleneckAdapter,
    FreezePolicy,
    InvertibleAdapter,
    LanguageAdapter,
    PlacementConfig,
    TaskAdapter,
    apply_freeze,
    attach,
    bottleneck_forward,
    count_params,
    invertible_forward,
    invertible_inverse,
    load_adapter,
    save_adapter,
    swap_language_adapter,
)
from .data import (
    DatasetSplit,
    QAExample,
    TokenizedFeature,
    Vocab,
    align_answer_span,
    build_split,
    compare_split_sizes,
    featurize,
    mlm_mask,
    parse_squad_json,
    segment,
    serialize_squad,
    tokenize,
)
from .encoder import EncoderConfig, EncoderModel
from .errors import (
    AdapterQAError,
    ConfigError,
    ContractError,
    DataError,
    ManifestError,
)
from .experiments import (
    ExperimentConfig,
    RunManifest,
    mlm_train_language_adapter,
    pretrain_backbone,
    run_experiment,
    run_setup_a,
    run_setup_b,
    run_setup_c,
    run_setup_d,
    transfer,
)
from .metrics import (
    EvalReport,
    ExampleScore,
    aggregate,
    exact_match,
    jaccard,
    normalize_answer,
    score_example,
    token_f1,
    wer,
)
from .modelio import load_model, save_model
from .optim import Adam, finite_diff_check
from .params import ParamStore, entry_hash, hash_entries, load_params, save_params
from .qa import (
    SpanPrediction,
    decode_span,
    extract_answer_text,
    init_qa_head,
    predict_answer,
    qa_logits,
    span_loss,
)
from .reporting import render_tables
from .rng import Rng
from .synth import (
    SynthSpec,
    apply_bijection,
    cross_bijection,
    generate_corpus,
    language_bijection,
    translate_example,
    write_corpus,
)
from .tensor import Tensor, no_grad
from .train import TrainConfig, evaluate_qa, train_mlm, train_qa

__version__ = "0.1.0"
