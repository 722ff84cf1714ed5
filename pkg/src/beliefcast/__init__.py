"""Belief-augmented social graph response forecasting.

Predicts the sentiment polarity and intensity of user responses to news
headlines by propagating information over a heterogeneous graph of users,
media messages, and belief-value nodes, with an LLM-driven zero-shot path
that simulates the same propagation through social prompts.
"""

from .data import (
    Dataset,
    DatasetError,
    NewsItem,
    Polarity,
    ResponseRecord,
    UserRecord,
    load_dataset,
    load_dataset_dir,
    lurker_split,
    signed_intensity,
    unseen_user_split,
    write_dataset,
)
from .embed import (
    EmbeddingTable,
    FileProvider,
    HashProvider,
    build_table,
    hash_featurize,
    init_belief_embeddings,
    read_embeddings,
    write_embeddings,
)
from .graph import (
    Ablation,
    GraphError,
    HeteroGraph,
    NodeRef,
    apply_ablation,
    build_graph,
    distant_shared_belief_ratio,
    graph_stats,
    neighbors,
    read_graph_json,
    select_influencers,
    write_graph_json,
)
from .hgt import (
    HgtConfig,
    backward,
    check_gradients,
    compile_graph,
    hgt_layer_forward,
    init_params,
    load_checkpoint,
    model_forward,
    save_checkpoint,
)
from .llm import LlmError, MockLlmClient, RemoteChatClient, RemoteConfig, ReplayCacheClient
from .metrics import EvalReport, evaluate, macro_f1, micro_f1, pearson, spearman
from .persona import (
    LatentPersona,
    PersonaCache,
    PersonaParseError,
    extract_latent_persona,
    parse_persona_response,
    read_personas,
    render_persona_prompt,
    write_personas,
)
from .synth import SynthConfig, generate_world, world_statistics, write_world
from .train import TrainConfig, cross_entropy, lr_schedule, radam_step, train
from .values import BELIEF_VOCABULARY, MORAL_FOUNDATION_POLES, SCHWARTZ_VALUES
from .zeroshot import (
    SocialContext,
    ZeroShotPrediction,
    aggregate_social_context,
    filter_neighbors,
    predict_zero_shot,
    run_zero_shot_eval,
)

__version__ = "0.1.0"
